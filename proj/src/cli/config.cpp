#include "trialloc/config.hpp"

#include "trialloc/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace trialloc {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ValidationError(where + ": missing \"" + key + "\"");
    return obj.at(key);
}

template <class T>
T get_as(const json& v, const std::string& what) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ValidationError(what + ": wrong type");
    }
}

template <class T>
T number(const json& obj, const char* key, const std::string& where) {
    return get_as<T>(require(obj, key, where), where + "." + key);
}

template <class T>
T number_or(const json& obj, const char* key, T fallback, const std::string& where) {
    return obj.contains(key) ? get_as<T>(obj.at(key), where + "." + key) : fallback;
}

Eigen::MatrixXd matrix(const json& v, const std::string& what) {
    if (!v.is_array() || v.empty()) throw ValidationError(what + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = v.at(static_cast<std::size_t>(i));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError(what + ": rows must have equal length");
        }
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get_as<double>(row.at(static_cast<std::size_t>(j)), what);
    }
    return m;
}

template <class T>
std::vector<T> vec(const json& v, const std::string& what) {
    if (!v.is_array()) throw ValidationError(what + ": expected an array");
    std::vector<T> out;
    for (const auto& x : v) out.push_back(get_as<T>(x, what));
    return out;
}

std::vector<int> per_region(const json& v, int P, const std::string& what) {
    if (v.is_number_integer()) return std::vector<int>(static_cast<std::size_t>(P), v.get<int>());
    auto out = vec<int>(v, what);
    if (static_cast<int>(out.size()) != P) throw ValidationError(what + ": expected " + std::to_string(P) + " entries");
    return out;
}

VarianceComponents parse_variance(const json& v) {
    const std::string w = "variance";
    const int H = number<int>(v, "H", w);
    const int L = number_or<int>(v, "L", 1, w);
    const std::string model = number_or<std::string>(v, "model", "cross", w);
    ModelVariant variant;
    if (model == "cross") variant = ModelVariant::CrossClassified;
    else if (model == "nested") variant = ModelVariant::Nested;
    else throw ValidationError("variance.model: expected \"cross\" or \"nested\"");
    const double omega = number<double>(v, "sigma2_omega", w);
    const double tau = number<double>(v, "sigma2_tau", w);
    const double gamma = number_or<double>(v, "sigma2_gamma", 0.0, w);
    if (v.contains("composite")) {
        if (v.contains("sigma2_phi") || v.contains("sigma2_error")) {
            throw ValidationError("variance: give either composite or sigma2_phi/sigma2_error");
        }
        VarianceComponents vc;
        vc.sigma2_omega = omega;
        vc.sigma2_tau = tau;
        vc.sigma2_gamma = gamma;
        vc.sigma2_phi_plus_err_over_L = number<double>(v, "composite", w);
        vc.H = H;
        vc.L = L;
        vc.model_variant = variant;
        vc.validate();
        return vc;
    }
    return VarianceComponents::from_separate(omega, tau, gamma, number<double>(v, "sigma2_phi", w),
                                             number<double>(v, "sigma2_error", w), H, L, variant);
}

KinshipSpec parse_kinship(const json& k, const std::filesystem::path& base_dir) {
    const std::string w = "kinship";
    const std::string type = number<std::string>(k, "type", w);
    KinshipSpec spec;
    spec.jitter = number_or<double>(k, "jitter", 0.0, w);
    if (type == "identity") {
        spec.variant = IdentityKinship{number<int>(k, "K", w)};
    } else if (type == "cs") {
        const int K = number<int>(k, "K", w);
        const double r = number<double>(k, "r", w);
        const double s = k.contains("sigma2_alpha") ? number<double>(k, "sigma2_alpha", w)
                                                    : sigma2_alpha_for_unit_asv(K, K, r);
        spec.variant = CompoundSymmetryKinship{K, s, r};
    } else if (type == "block_cs") {
        const int f = number<int>(k, "f", w);
        const int m = number<int>(k, "m", w);
        const double r = number<double>(k, "r", w);
        if (f < 1 || m < 1) throw ValidationError("kinship: f and m must be >= 1");
        if (k.contains("K") && number<int>(k, "K", w) != f * m) {
            throw ValidationError("kinship: K must equal f * m for block-CS kinship");
        }
        const double s = k.contains("sigma2_alpha") ? number<double>(k, "sigma2_alpha", w)
                                                    : sigma2_alpha_for_unit_asv(f * m, m, r);
        spec.variant = BlockCompoundSymmetryKinship{f, m, s, r};
    } else if (type == "dense") {
        if (k.contains("csv")) {
            std::filesystem::path p = number<std::string>(k, "csv", w);
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            spec.variant = DenseKinship{read_kinship_csv(p)};
        } else {
            spec.variant = DenseKinship{matrix(require(k, "matrix", w), "kinship.matrix")};
        }
    } else {
        throw ValidationError("kinship.type: expected identity, cs, block_cs or dense");
    }
    spec.validate();
    return spec;
}

ConstraintTemplate parse_constraints(const json& c, int P) {
    const std::string w = "constraints";
    ConstraintTemplate t;
    if (c.contains("min")) t.min = per_region(c.at("min"), P, "constraints.min");
    if (c.contains("max")) t.max = per_region(c.at("max"), P, "constraints.max");
    if (c.contains("max_fraction")) {
        if (t.max) throw ValidationError("constraints: give either max or max_fraction");
        t.max_fraction = number<double>(c, "max_fraction", w);
        if (!(*t.max_fraction > 0.0 && *t.max_fraction <= 1.0)) {
            throw ValidationError("constraints.max_fraction must lie in (0, 1]");
        }
    }
    if (c.contains("costs")) {
        t.costs = vec<double>(c.at("costs"), "constraints.costs");
        if (static_cast<int>(t.costs->size()) != P) throw ValidationError("constraints.costs: expected P entries");
    }
    if (c.contains("budget")) t.budget = number<double>(c, "budget", w);
    if (c.contains("budget_per_trial")) {
        if (t.budget) throw ValidationError("constraints: give either budget or budget_per_trial");
        t.budget_per_trial = number<double>(c, "budget_per_trial", w);
    }
    if (t.costs.has_value() != (t.budget || t.budget_per_trial)) {
        throw ValidationError("constraints: costs and a budget must be given together");
    }
    return t;
}

Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
    Scenario s;
    s.name = number_or<std::string>(doc, "name", "", "config");
    s.vc = parse_variance(require(doc, "variance", "config"));

    const json& sub = require(doc, "subregions", "config");
    std::optional<Eigen::VectorXd> ell;
    if (sub.contains("ell")) {
        auto e = vec<double>(sub.at("ell"), "subregions.ell");
        ell = Eigen::Map<Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
    }
    s.profile = SubRegionProfile::make(matrix(require(sub, "V", "subregions"), "subregions.V"), ell);
    const int P = s.profile.P();

    s.kinship = parse_kinship(require(doc, "kinship", "config"), base_dir);

    if (doc.contains("J") == doc.contains("J_grid")) throw ValidationError("config: give exactly one of J and J_grid");
    s.J_grid = doc.contains("J") ? std::vector<int>{number<int>(doc, "J", "config")} : vec<int>(doc.at("J_grid"), "J_grid");
    if (s.J_grid.empty()) throw ValidationError("J_grid must not be empty");
    for (int J : s.J_grid)
        if (J < 1) throw ValidationError("J must be >= 1");

    s.constraints = parse_constraints(doc.value("constraints", json::object()), P);

    const json crit = doc.value("criterion", json::object());
    s.criterion.target = parse_target(number_or<std::string>(crit, "target", "effects", "criterion"));
    s.criterion.weighting = parse_weighting(number_or<std::string>(crit, "weighting", "standard", "criterion"));
    s.criterion.path = parse_path(number_or<std::string>(crit, "path", "auto", "criterion"));
    resolve_path(s.kinship, s.criterion.path);
    if (s.criterion.weighting == Weighting::Weighted && !s.profile.ell) {
        throw ValidationError("criterion: weighted criterion requires subregions.ell");
    }

    const json sol = doc.value("solver", json::object());
    s.solver.tol = number_or<double>(sol, "tol", s.solver.tol, "solver");
    s.solver.restarts = number_or<int>(sol, "restarts", s.solver.restarts, "solver");
    s.solver.seed = number_or<std::uint64_t>(sol, "seed", s.solver.seed, "solver");
    s.solver.threads = number_or<int>(sol, "threads", s.solver.threads, "solver");
    s.solver.max_iter = number_or<int>(sol, "max_iter", s.solver.max_iter, "solver");
    if (!(s.solver.tol > 0.0)) throw ValidationError("solver.tol must be positive");
    if (s.solver.restarts < 0 || s.solver.threads < 1 || s.solver.max_iter < 1) {
        throw ValidationError("solver: restarts >= 0, threads >= 1 and max_iter >= 1 required");
    }

    if (doc.contains("reference")) s.reference = doc.at("reference");
    return s;
}

}  // namespace

ConstraintSet ConstraintTemplate::instantiate(int P, int J) const {
    ConstraintSet cs;
    cs.J = J;
    cs.min_per_region = min.empty() ? std::vector<int>(static_cast<std::size_t>(P), 1) : min;
    if (max) cs.max_per_region = max;
    if (max_fraction) {
        cs.max_per_region = std::vector<int>(static_cast<std::size_t>(P), static_cast<int>(std::floor(*max_fraction * J + 1e-9)));
    }
    if (costs) {
        cs.costs = costs;
        cs.budget = budget ? *budget : *budget_per_trial * J;
    }
    cs.validate(P);
    return cs;
}

DesignProblem Scenario::problem(int J) const {
    return DesignProblem{vc, profile, kinship, static_cast<double>(J), criterion};
}

ProblemConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ValidationError("config: expected a JSON object");
    ProblemConfig cfg;
    if (!doc.contains("scenarios")) {
        cfg.scenarios.push_back(parse_scenario(doc, base_dir));
        return cfg;
    }
    json base = doc;
    base.erase("scenarios");
    const json& list = doc.at("scenarios");
    if (!list.is_array() || list.empty()) throw ValidationError("scenarios: expected a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
        json merged = base;
        merged.merge_patch(list[i]);
        try {
            cfg.scenarios.push_back(parse_scenario(merged, base_dir));
        } catch (const ValidationError& e) {
            throw ValidationError("scenarios[" + std::to_string(i) + "]: " + e.what());
        }
        if (cfg.scenarios.back().name.empty()) cfg.scenarios.back().name = "scenario " + std::to_string(i + 1);
    }
    return cfg;
}

ProblemConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

Target parse_target(const std::string& s) {
    if (s == "effects") return Target::GenotypeEffects;
    if (s == "contrasts") return Target::PairwiseContrasts;
    throw ValidationError("criterion.target: expected effects or contrasts, got \"" + s + "\"");
}

Weighting parse_weighting(const std::string& s) {
    if (s == "standard") return Weighting::Standard;
    if (s == "weighted") return Weighting::Weighted;
    throw ValidationError("criterion.weighting: expected standard or weighted, got \"" + s + "\"");
}

CriterionPath parse_path(const std::string& s) {
    for (auto p : {CriterionPath::Auto, CriterionPath::FullGeneral, CriterionPath::BayesCS, CriterionPath::CbrcBlockCS,
                   CriterionPath::KBayesBlockCS})
        if (to_string(p) == s) return p;
    throw ValidationError("criterion.path: unknown path \"" + s + "\"");
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int v = 0;
        const auto first = item.find_first_not_of(' ');
        const auto last = item.find_last_not_of(' ');
        if (first == std::string::npos) throw ValidationError("empty entry in list \"" + s + "\"");
        const char* b = item.data() + first;
        const char* e = item.data() + last + 1;
        auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc{} || ptr != e) throw ValidationError("not an integer: \"" + item + "\"");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("not a number: \"" + item + "\"");
        }
    }
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

}  // namespace trialloc
