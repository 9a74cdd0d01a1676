#include "trialloc/commands.hpp"

#include "trialloc/error.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace trialloc {

namespace {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Design make_design(const DesignInput& in, int P, int configured_J) {
    if (in.counts.has_value() == in.weights.has_value()) {
        throw ValidationError("give the design either as counts or as weights");
    }
    if (in.counts) {
        if (static_cast<int>(in.counts->size()) != P) {
            throw ValidationError("design has " + std::to_string(in.counts->size()) + " entries but P = " +
                                  std::to_string(P));
        }
        int sum = 0;
        for (int c : *in.counts) sum += c;
        if (sum != configured_J) {
            throw ValidationError("design counts sum to " + std::to_string(sum) + " but J = " +
                                  std::to_string(configured_J));
        }
        return Design::exact(*in.counts, configured_J);
    }
    if (static_cast<int>(in.weights->size()) != P) {
        throw ValidationError("weights have " + std::to_string(in.weights->size()) + " entries but P = " +
                              std::to_string(P));
    }
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(in.weights->data(), P);
    return Design::approximate(w, configured_J);
}

json design_json(const Design& d, const ConstraintSet* cs) {
    json j;
    j["kind"] = d.kind() == DesignKind::Exact ? "exact" : "approximate";
    j["J"] = d.total();
    j["weights"] = to_json(d.weights());
    if (d.kind() == DesignKind::Exact) {
        j["counts"] = d.counts();
        if (cs && cs->costs) j["cost"] = cs->cost(d.counts());
    } else if (cs && cs->costs) {
        j["cost"] = Eigen::Map<const Eigen::VectorXd>(cs->costs->data(), d.P()).dot(d.weights()) * d.total();
    }
    return j;
}

json criterion_json(const CriterionEvaluator& ev) {
    return {{"target", to_string(ev.problem().criterion.target)},
            {"weighting", to_string(ev.problem().criterion.weighting)},
            {"path_used", to_string(ev.path())}};
}

json evaluation(const CriterionEvaluator& ev, const Design& d, const ConstraintSet* cs) {
    const CriterionValue v = ev.evaluate(d, true);
    json j = design_json(d, cs);
    j.update(criterion_json(ev));
    j["phi"] = v.phi;
    j["full_value"] = v.full_value;
    j["mse_trace"] = *v.mse_trace;
    j["gradient"] = to_json(*v.gradient);
    return j;
}

ConstraintSet constraints_for(const Scenario& s, int J) { return s.constraints.instantiate(s.profile.P(), J); }

json scenario_header(const Scenario& s) {
    json j;
    j["scenario"] = s.name;
    if (!s.reference.is_null()) j["reference"] = s.reference;
    return j;
}

}  // namespace

void apply_overrides(ProblemConfig& cfg, const CommandOverrides& o) {
    for (auto& s : cfg.scenarios) {
        if (o.seed) s.solver.seed = *o.seed;
        if (o.tol) {
            if (!(*o.tol > 0.0)) throw ValidationError("--tol must be positive");
            s.solver.tol = *o.tol;
        }
        if (o.restarts) {
            if (*o.restarts < 0) throw ValidationError("--restarts must be >= 0");
            s.solver.restarts = *o.restarts;
        }
        if (o.threads) {
            if (*o.threads < 1) throw ValidationError("--threads must be >= 1");
            s.solver.threads = *o.threads;
        }
        if (o.jitter) {
            s.kinship.jitter = *o.jitter;
            s.kinship.validate();
        }
        if (o.J) {
            if (*o.J < 1) throw ValidationError("--J must be >= 1");
            s.J_grid = {*o.J};
        }
    }
}

json cmd_eval(const ProblemConfig& cfg, const DesignInput& design) {
    json reports = json::array();
    for (const auto& s : cfg.scenarios) {
        const int J = s.J_grid.front();
        const CriterionEvaluator ev(s.problem(J));
        const Design d = make_design(design, s.profile.P(), J);
        const ConstraintSet cs = constraints_for(s, J);
        json r = scenario_header(s);
        r.update(evaluation(ev, d, &cs));
        if (d.kind() == DesignKind::Exact) r["feasible"] = cs.admits(d.counts());
        reports.push_back(std::move(r));
    }
    return {{"command", "eval"}, {"reports", reports}};
}

json cmd_design(const ProblemConfig& cfg, DesignMode mode) {
    json reports = json::array();
    for (const auto& s : cfg.scenarios) {
        for (int J : s.J_grid) {
            const CriterionEvaluator ev(s.problem(J));
            const ConstraintSet cs = constraints_for(s, J);
            ApproximateOptions ao{s.solver.tol, s.solver.max_iter};
            OptimizerReport rep;
            if (mode == DesignMode::Approximate) {
                rep = solve_approximate(ev, cs, ao);
            } else {
                rep = solve_exact(ev, cs, ExactOptions{s.solver.seed, s.solver.restarts, s.solver.threads, ao});
            }
            json r = scenario_header(s);
            r["mode"] = mode == DesignMode::Approximate ? "approx" : "exact";
            r.update(design_json(rep.design, &cs));
            r.update(criterion_json(ev));
            r["phi"] = rep.phi;
            r["full_value"] = rep.full_value;
            r["mse_trace"] = rep.mse_trace;
            r["optimality_gap"] = rep.optimality_gap;
            r["iterations"] = rep.iterations;
            if (mode == DesignMode::Exact) {
                r["restarts_used"] = rep.restarts_used;
                r["seed"] = rep.seed;
                r["feasible"] = cs.admits(rep.design.counts());
            }
            reports.push_back(std::move(r));
        }
    }
    return {{"command", "design"}, {"reports", reports}};
}

json cmd_efficiency(const ProblemConfig& cfg, const DesignInput& a, const DesignInput& b) {
    json reports = json::array();
    for (const auto& s : cfg.scenarios) {
        const int J = s.J_grid.front();
        const CriterionEvaluator ev(s.problem(J));
        const Design da = make_design(a, s.profile.P(), J);
        const Design db = make_design(b, s.profile.P(), J);
        json r = scenario_header(s);
        r.update(criterion_json(ev));
        r["design_a"] = design_json(da, nullptr);
        r["design_b"] = design_json(db, nullptr);
        r["full_value_a"] = ev.evaluate(da).full_value;
        r["full_value_b"] = ev.evaluate(db).full_value;
        r["phi_a"] = ev.phi(da.weights());
        r["phi_b"] = ev.phi(db.weights());
        r["efficiency"] = efficiency(da, db, ev);
        reports.push_back(std::move(r));
    }
    return {{"command", "efficiency"}, {"reports", reports}};
}

json cmd_selftest() {
    json checks = json::array();
    bool ok = true;
    auto record = [&](const std::string& name, bool pass, double value) {
        checks.push_back({{"check", name}, {"pass", pass}, {"value", value}});
        ok = ok && pass;
    };

    Eigen::MatrixXd V(5, 5);
    V << 567, 254, 239, 485, 328, 254, 155, 118, 240, 162, 239, 118, 155, 226, 153, 485, 240, 226, 488, 310, 328, 162,
        153, 310, 215;
    VarianceComponents vc;
    vc.sigma2_omega = 31;
    vc.sigma2_tau = 18;
    vc.sigma2_gamma = 160;
    vc.sigma2_phi_plus_err_over_L = 333;
    vc.H = 3;
    const KinshipSpec kin{BlockCompoundSymmetryKinship{6, 5, sigma2_alpha_for_unit_asv(30, 5, 0.5), 0.5}, 0.0};
    const Design d = Design::exact({13, 6, 7, 13, 1}, 40);

    double reference = 0.0;
    for (auto path : {CriterionPath::KBayesBlockCS, CriterionPath::CbrcBlockCS, CriterionPath::FullGeneral}) {
        const CriterionEvaluator ev(
            DesignProblem{vc, SubRegionProfile::make(V), kin, 40.0, {Target::GenotypeEffects, Weighting::Standard, path}});
        const double mse = *ev.evaluate(d).mse_trace;
        if (path == CriterionPath::KBayesBlockCS) {
            reference = mse;
            record("block-CS reference row (1/2, 6, 5) mse_trace ~ 8752", std::abs(mse / 8752.0 - 1.0) <= 1e-3, mse);
        } else {
            record(std::string(to_string(path)) + " agrees with kbayes_block_cs",
                   std::abs(mse - reference) <= 1e-8 * reference, mse);
        }
        Eigen::VectorXd g;
        const Eigen::VectorXd w = d.weights();
        ev.phi(w, g);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            Eigen::VectorXd hi = w, lo = w;
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            const double fd = (ev.phi(hi) - ev.phi(lo)) / 2e-6;
            worst = std::max(worst, std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-12));
        }
        record(std::string(to_string(path)) + " gradient vs finite differences", worst <= 1e-5, worst);
    }
    return {{"command", "selftest"}, {"ok", ok}, {"checks", checks}};
}

void print_pretty(const nlohmann::json& report, std::ostream& os) {
    const auto fmt_list = [](const json& a, int precision) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(precision);
        for (std::size_t i = 0; i < a.size(); ++i) s << (i ? " " : "") << a[i].get<double>();
        return s.str();
    };
    if (report.value("command", "") == "selftest") {
        for (const auto& c : report.at("checks")) {
            os << (c.at("pass").get<bool>() ? "PASS  " : "FAIL  ") << c.at("check").get<std::string>() << "  ("
               << c.at("value").get<double>() << ")\n";
        }
        return;
    }
    for (const auto& r : report.at("reports")) {
        os << r.value("scenario", "") << "\n";
        if (r.contains("efficiency")) {
            os << "  Eff = " << std::setprecision(6) << r.at("efficiency").get<double>() << "   (full values "
               << r.at("full_value_a").get<double>() << " / " << r.at("full_value_b").get<double>() << ")\n";
            continue;
        }
        os << std::setprecision(6) << "  J = " << r.at("J").get<double>() << "   " << r.at("target").get<std::string>() << ", "
           << r.at("weighting").get<std::string>() << ", path " << r.at("path_used").get<std::string>() << "\n";
        if (r.contains("counts")) os << "  counts   " << fmt_list(r.at("counts"), 0) << "\n";
        os << "  weights  " << fmt_list(r.at("weights"), 4) << "\n";
        os << "  MSE_Tr   " << std::fixed << std::setprecision(1) << r.at("mse_trace").get<double>()
           << std::defaultfloat << "\n";
        if (r.contains("cost")) os << "  cost     " << r.at("cost").get<double>() << "\n";
        if (r.contains("optimality_gap")) os << "  gap      " << r.at("optimality_gap").get<double>() << "\n";
    }
}

}  // namespace trialloc
