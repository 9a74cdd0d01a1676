#include "trialloc/optimizer.hpp"

#include "trialloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>

namespace trialloc {

namespace {

constexpr double kBudgetSlack = 1e-9;

/// Cheapest cost of placing `n` more locations on top of `counts`, or +inf
/// when the capacities do not allow it.
double min_completion_cost(const ConstraintSet& cs, const std::vector<int>& counts, int n) {
    if (n <= 0) return 0.0;
    const auto P = counts.size();
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return (*cs.costs)[a] < (*cs.costs)[b]; });
    double total = 0.0;
    for (auto i : order) {
        const int room = cs.upper(static_cast<int>(i)) - counts[i];
        const int take = std::min(room, n);
        if (take > 0) {
            total += take * (*cs.costs)[i];
            n -= take;
        }
        if (n == 0) return total;
    }
    return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Approximate designs

struct Polytope {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::optional<Eigen::VectorXd> costs;
    double budget = 0.0;  // scaled by 1/J
};

Polytope make_polytope(const ConstraintSet& cs, int P) {
    Polytope poly;
    poly.lower.resize(P);
    poly.upper.resize(P);
    for (int i = 0; i < P; ++i) {
        poly.lower[i] = static_cast<double>(cs.min_per_region[static_cast<std::size_t>(i)]) / cs.J;
        poly.upper[i] = std::min(1.0, static_cast<double>(cs.upper(i)) / cs.J);
    }
    if (cs.costs && cs.budget) {
        poly.costs = Eigen::Map<const Eigen::VectorXd>(cs.costs->data(), P);
        poly.budget = *cs.budget / cs.J;
    }
    return poly;
}

/// Fill from the lower bounds in order of increasing score (ties: cost, index).
Eigen::VectorXd greedy_fill(const Polytope& poly, const Eigen::VectorXd& score) {
    const auto P = score.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(P));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (score[a] != score[b]) return score[a] < score[b];
        if (poly.costs && (*poly.costs)[a] != (*poly.costs)[b]) return (*poly.costs)[a] < (*poly.costs)[b];
        return a < b;
    });
    Eigen::VectorXd s = poly.lower;
    double remaining = 1.0 - s.sum();
    for (auto i : order) {
        if (remaining <= 0.0) break;
        const double take = std::min(remaining, poly.upper[i] - s[i]);
        s[i] += take;
        remaining -= take;
    }
    return s;
}

Eigen::VectorXd lmo(const Polytope& poly, const Eigen::VectorXd& g) {
    Eigen::VectorXd s = greedy_fill(poly, g);
    if (!poly.costs) return s;
    const Eigen::VectorXd& c = *poly.costs;
    auto cost = [&](const Eigen::VectorXd& v) { return c.dot(v); };
    if (cost(s) <= poly.budget + kBudgetSlack) return s;

    // Lagrangian relaxation of the budget: the greedy order of g + mu c only
    // changes at the pairwise breakpoints mu_ij.
    std::vector<double> breaks;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        for (Eigen::Index j = 0; j < g.size(); ++j)
            if (c[i] > c[j]) {
                const double mu = (g[j] - g[i]) / (c[i] - c[j]);
                if (mu > 0.0) breaks.push_back(mu);
            }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    Eigen::VectorXd s_lo = s;
    for (std::size_t k = 0; k < breaks.size(); ++k) {
        const double mu = k + 1 < breaks.size() ? 0.5 * (breaks[k] + breaks[k + 1]) : 2.0 * breaks[k] + 1.0;
        Eigen::VectorXd s_hi = greedy_fill(poly, g + mu * c);
        if (cost(s_hi) <= poly.budget + kBudgetSlack) {
            // Both fills are optimal for the Lagrangian at breaks[k]; mix to meet the budget.
            const double theta = (cost(s_lo) - poly.budget) / (cost(s_lo) - cost(s_hi));
            return (1.0 - theta) * s_lo + std::clamp(theta, 0.0, 1.0) * s_hi;
        }
        s_lo = std::move(s_hi);
    }
    throw InfeasibleError("approximate design polytope is empty: minimum cost " +
                          std::to_string(cost(greedy_fill(poly, c)) * 1.0) + " exceeds scaled budget " +
                          std::to_string(poly.budget));
}

struct Atom {
    Eigen::VectorXd point;
    double weight;
};

/// Minimizes t -> phi(x + t d) on [0, t_max] using the directional derivative.
double line_search(const CriterionEvaluator& crit, const Eigen::VectorXd& x, const Eigen::VectorXd& d,
                   double slope0, double t_max) {
    Eigen::VectorXd g;
    auto slope = [&](double t) {
        crit.phi(x + t * d, g);
        return g.dot(d);
    };
    if (!(slope0 < 0.0)) return 0.0;
    const double s_max = slope(t_max);
    if (s_max <= 0.0) return t_max;
    // Illinois variant of regula falsi on the increasing derivative.
    double a = 0.0, fa = slope0, b = t_max, fb = s_max;
    int side = 0;
    for (int it = 0; it < 100; ++it) {
        const double t = (a * fb - b * fa) / (fb - fa);
        const double ft = slope(t);
        if (ft == 0.0 || b - a <= 1e-15 * t_max) return t;
        if (ft < 0.0) {
            a = t;
            fa = ft;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = t;
            fb = ft;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        if (std::abs(ft) <= 1e-14 * std::abs(slope0)) return t;
    }
    return 0.5 * (a + b);
}

}  // namespace

ConstraintSet ConstraintSet::at_least_one(int P, int J) {
    ConstraintSet cs;
    cs.J = J;
    cs.min_per_region.assign(static_cast<std::size_t>(P), 1);
    return cs;
}

double ConstraintSet::cost(const std::vector<int>& counts) const {
    if (!costs) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) total += counts[i] * (*costs)[i];
    return total;
}

void ConstraintSet::validate(int P) const {
    const auto n = static_cast<std::size_t>(P);
    if (J < 1) throw ValidationError("J must be >= 1");
    if (min_per_region.size() != n) throw ValidationError("min_per_region must have P entries");
    for (int m : min_per_region)
        if (m < 0) throw ValidationError("min_per_region entries must be >= 0");
    if (max_per_region) {
        if (max_per_region->size() != n) throw ValidationError("max_per_region must have P entries");
        for (std::size_t i = 0; i < n; ++i)
            if ((*max_per_region)[i] < min_per_region[i]) {
                throw InfeasibleError("sub-region " + std::to_string(i + 1) + ": max " +
                                      std::to_string((*max_per_region)[i]) + " < min " +
                                      std::to_string(min_per_region[i]));
            }
    }
    if (costs.has_value() != budget.has_value()) throw ValidationError("costs and budget must be given together");
    if (costs) {
        if (costs->size() != n) throw ValidationError("costs must have P entries");
        for (double c : *costs)
            if (!(c > 0.0)) throw ValidationError("costs must be positive");
        if (!(*budget > 0.0)) throw ValidationError("budget must be positive");
    }
}

void ConstraintSet::check_feasible(int P) const {
    validate(P);
    const long sum_min = std::accumulate(min_per_region.begin(), min_per_region.end(), 0L);
    if (sum_min > J) {
        throw InfeasibleError("sum of minimum counts " + std::to_string(sum_min) + " exceeds J = " + std::to_string(J));
    }
    if (max_per_region) {
        const long sum_max = std::accumulate(max_per_region->begin(), max_per_region->end(), 0L);
        if (sum_max < J) {
            throw InfeasibleError("sum of maximum counts " + std::to_string(sum_max) + " is below J = " +
                                  std::to_string(J));
        }
    }
    if (costs) {
        const double cheapest = cost(min_per_region) + min_completion_cost(*this, min_per_region, J - static_cast<int>(sum_min));
        if (cheapest > *budget + kBudgetSlack) {
            throw InfeasibleError("minimum achievable cost " + std::to_string(cheapest) + " exceeds budget " +
                                  std::to_string(*budget));
        }
    }
}

bool ConstraintSet::admits(const std::vector<int>& counts) const {
    if (counts.size() != min_per_region.size()) return false;
    long sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < min_per_region[i] || counts[i] > upper(static_cast<int>(i))) return false;
        sum += counts[i];
    }
    if (sum != J) return false;
    return !budget || cost(counts) <= *budget + kBudgetSlack;
}

Eigen::VectorXd linear_minimization_oracle(const Eigen::VectorXd& g, const ConstraintSet& constraints) {
    constraints.validate(static_cast<int>(g.size()));
    return lmo(make_polytope(constraints, static_cast<int>(g.size())), g);
}

OptimizerReport solve_approximate(const CriterionEvaluator& criterion, const ConstraintSet& constraints,
                                  const ApproximateOptions& options) {
    const int P = criterion.P();
    constraints.validate(P);
    if (std::abs(constraints.J - criterion.J()) > 1e-9 * criterion.J()) {
        throw ValidationError("constraint J differs from the criterion's J");
    }
    const Polytope poly = make_polytope(constraints, P);
    if (poly.lower.sum() > 1.0 + 1e-12) {
        throw InfeasibleError("sum of minimum weights " + std::to_string(poly.lower.sum()) + " exceeds 1");
    }
    if (poly.upper.sum() < 1.0 - 1e-12) {
        throw InfeasibleError("sum of maximum weights " + std::to_string(poly.upper.sum()) + " is below 1");
    }

    // Start from the average of the points maximizing each coordinate.
    std::vector<Atom> atoms;
    for (int i = 0; i < P; ++i) {
        Eigen::VectorXd v = lmo(poly, -Eigen::VectorXd::Unit(P, i));
        auto same = std::find_if(atoms.begin(), atoms.end(),
                                 [&](const Atom& a) { return (a.point - v).cwiseAbs().maxCoeff() <= 1e-15; });
        if (same == atoms.end()) atoms.push_back({std::move(v), 0.0});
    }
    for (auto& a : atoms) a.weight = 1.0 / static_cast<double>(atoms.size());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(P);
    for (const auto& a : atoms) x += a.weight * a.point;

    Eigen::VectorXd g;
    double phi = criterion.phi(x, g);
    double gap = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        const Eigen::VectorXd s = lmo(poly, g);
        gap = g.dot(x - s);
        if (gap <= options.tol * std::abs(phi)) break;

        std::size_t away = 0;
        for (std::size_t k = 1; k < atoms.size(); ++k)
            if (g.dot(atoms[k].point) > g.dot(atoms[away].point)) away = k;
        const Eigen::VectorXd d_fw = s - x;
        const Eigen::VectorXd d_away = x - atoms[away].point;

        const bool toward = g.dot(d_fw) <= g.dot(d_away) || atoms.size() == 1;
        const Eigen::VectorXd& d = toward ? d_fw : d_away;
        const double alpha_away = atoms[away].weight;
        const double t_max = toward ? 1.0 : alpha_away / (1.0 - alpha_away);
        const double t = line_search(criterion, x, d, g.dot(d), t_max);

        Eigen::VectorXd x_new = x + t * d;
        Eigen::VectorXd g_new;
        const double phi_new = criterion.phi(x_new, g_new);
        // The derivative-based step is a descent step; phi itself may not resolve the decrease.
        if (t <= 0.0 || !(phi_new <= phi + 1e-13 * std::abs(phi))) break;

        if (toward) {
            for (auto& a : atoms) a.weight *= (1.0 - t);
            auto same = std::find_if(atoms.begin(), atoms.end(),
                                     [&](const Atom& a) { return (a.point - s).cwiseAbs().maxCoeff() <= 1e-15; });
            if (t >= 1.0) {
                atoms.clear();
                atoms.push_back({s, 1.0});
            } else if (same != atoms.end()) {
                same->weight += t;
            } else {
                atoms.push_back({s, t});
            }
        } else {
            for (auto& a : atoms) a.weight *= (1.0 + t);
            atoms[away].weight -= t;
            if (t >= t_max) atoms.erase(atoms.begin() + static_cast<std::ptrdiff_t>(away));
        }
        atoms.erase(std::remove_if(atoms.begin(), atoms.end(), [](const Atom& a) { return a.weight <= 0.0; }),
                    atoms.end());
        x = std::move(x_new);
        g = std::move(g_new);
        phi = phi_new;
    }

    x = x.cwiseMax(0.0);
    Design design = Design::approximate(x / x.sum(), criterion.J());
    OptimizerReport report;
    const CriterionValue value = criterion.evaluate(design, true);
    report.phi = value.phi;
    report.full_value = value.full_value;
    report.mse_trace = *value.mse_trace;
    report.optimality_gap =
        std::max(0.0, value.gradient->dot(design.weights() - lmo(poly, *value.gradient)));
    report.design = std::move(design);
    report.iterations = iter;
    return report;
}

Design round_to_exact(const Eigen::VectorXd& weights, const ConstraintSet& constraints) {
    const int P = static_cast<int>(weights.size());
    constraints.check_feasible(P);
    const auto n = static_cast<std::size_t>(P);
    std::vector<double> target(n);
    std::vector<int> counts(n);
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = weights[static_cast<Eigen::Index>(i)] * constraints.J;
        const int fl = static_cast<int>(std::floor(target[i] + 1e-9));
        counts[i] = std::clamp(fl, constraints.min_per_region[i], constraints.upper(static_cast<int>(i)));
    }
    long diff = constraints.J - std::accumulate(counts.begin(), counts.end(), 0L);
    while (diff != 0) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            const double rem = target[i] - counts[i];
            if (diff > 0 && counts[i] < constraints.upper(static_cast<int>(i)) &&
                (pick == n || rem > target[pick] - counts[pick]))
                pick = i;
            if (diff < 0 && counts[i] > constraints.min_per_region[i] &&
                (pick == n || rem < target[pick] - counts[pick]))
                pick = i;
        }
        if (pick == n) throw InfeasibleError("bounds leave no room to apportion J");
        counts[pick] += diff > 0 ? 1 : -1;
        diff += diff > 0 ? -1 : 1;
    }
    // Cost repair: cheapest-deviation transfers toward cheaper sub-regions.
    while (constraints.budget && constraints.cost(counts) > *constraints.budget + kBudgetSlack) {
        const auto& c = *constraints.costs;
        std::size_t from = n, to = n;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (counts[i] <= constraints.min_per_region[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (c[j] >= c[i] || counts[j] >= constraints.upper(static_cast<int>(j))) continue;
                const double dev = std::pow(counts[i] - 1 - target[i], 2) - std::pow(counts[i] - target[i], 2) +
                                   std::pow(counts[j] + 1 - target[j], 2) - std::pow(counts[j] - target[j], 2);
                if (dev < best) {
                    best = dev;
                    from = i;
                    to = j;
                }
            }
        }
        if (from == n) throw InfeasibleError("no rounding satisfies the budget");
        --counts[from];
        ++counts[to];
    }
    return Design::exact(std::move(counts), constraints.J);
}

namespace {

struct LocalResult {
    std::vector<int> counts;
    double phi = std::numeric_limits<double>::infinity();
    int moves = 0;
};

double phi_of(const CriterionEvaluator& crit, const std::vector<int>& counts, int J) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) w[static_cast<Eigen::Index>(i)] = static_cast<double>(counts[i]) / J;
    return crit.phi(w);
}

bool improves(double candidate, double current) {
    return candidate < current - 1e-13 * std::abs(current);
}

LocalResult local_search(const CriterionEvaluator& crit, const ConstraintSet& cs, std::vector<int> counts) {
    const int P = static_cast<int>(counts.size());
    LocalResult res;
    double phi = phi_of(crit, counts, cs.J);

    std::vector<std::pair<int, int>> transfers;
    for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j)
            if (i != j) transfers.emplace_back(i, j);

    while (true) {
        std::vector<int> best_counts;
        double best_phi = phi;
        // Steepest single transfer; strict improvement keeps the lowest (i, j) on ties.
        for (auto [i, j] : transfers) {
            std::vector<int> trial = counts;
            --trial[static_cast<std::size_t>(i)];
            ++trial[static_cast<std::size_t>(j)];
            if (!cs.admits(trial)) continue;
            const double v = phi_of(crit, trial, cs.J);
            if (improves(v, best_phi)) {
                best_phi = v;
                best_counts = std::move(trial);
            }
        }
        if (best_counts.empty()) {
            // Paired transfers reach designs that single moves cannot under a budget.
            for (std::size_t a = 0; a < transfers.size(); ++a) {
                for (std::size_t b = a; b < transfers.size(); ++b) {
                    std::vector<int> trial = counts;
                    --trial[static_cast<std::size_t>(transfers[a].first)];
                    ++trial[static_cast<std::size_t>(transfers[a].second)];
                    --trial[static_cast<std::size_t>(transfers[b].first)];
                    ++trial[static_cast<std::size_t>(transfers[b].second)];
                    if (trial == counts || !cs.admits(trial)) continue;
                    const double v = phi_of(crit, trial, cs.J);
                    if (improves(v, best_phi)) {
                        best_phi = v;
                        best_counts = std::move(trial);
                    }
                }
            }
        }
        if (best_counts.empty()) break;
        counts = std::move(best_counts);
        phi = best_phi;
        ++res.moves;
    }
    res.counts = std::move(counts);
    res.phi = phi;
    return res;
}

std::vector<int> random_feasible_start(const ConstraintSet& cs, int P, std::mt19937_64& rng) {
    std::vector<int> counts = cs.min_per_region;
    int remaining = cs.J - std::accumulate(counts.begin(), counts.end(), 0);
    std::vector<int> candidates;
    while (remaining > 0) {
        candidates.clear();
        for (int i = 0; i < P; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (counts[k] >= cs.upper(i)) continue;
            if (cs.costs) {
                ++counts[k];
                const double cost = cs.cost(counts) + min_completion_cost(cs, counts, remaining - 1);
                --counts[k];
                if (cost > *cs.budget + kBudgetSlack) continue;
            }
            candidates.push_back(i);
        }
        if (candidates.empty()) throw InfeasibleError("no feasible completion of a random start");
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        ++counts[static_cast<std::size_t>(candidates[pick(rng)])];
        --remaining;
    }
    return counts;
}

bool better(const LocalResult& a, const LocalResult& b) {
    if (a.phi != b.phi) return a.phi < b.phi;
    return a.counts < b.counts;
}

}  // namespace

OptimizerReport solve_exact(const CriterionEvaluator& criterion, const ConstraintSet& constraints,
                            const ExactOptions& options) {
    const int P = criterion.P();
    constraints.check_feasible(P);
    if (std::abs(constraints.J - criterion.J()) > 1e-9 * criterion.J()) {
        throw ValidationError("constraint J differs from the criterion's J");
    }
    if (options.restarts < 0) throw ValidationError("restarts must be >= 0");

    const OptimizerReport relaxed = solve_approximate(criterion, constraints, options.warm_start);
    const double lower_bound = relaxed.phi - relaxed.optimality_gap;

    // Run 0 is the rounded warm start; runs 1..R start from seeded random designs.
    const int runs = options.restarts + 1;
    std::vector<LocalResult> results(static_cast<std::size_t>(runs));
    auto run = [&](int r) {
        std::vector<int> start;
        if (r == 0) {
            start = round_to_exact(relaxed.design.weights(), constraints).counts();
        } else {
            std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                              static_cast<std::uint32_t>(r)};
            std::mt19937_64 rng(seq);
            start = random_feasible_start(constraints, P, rng);
        }
        results[static_cast<std::size_t>(r)] = local_search(criterion, constraints, std::move(start));
    };

    const int threads = std::max(1, std::min(options.threads, runs));
    if (threads == 1) {
        for (int r = 0; r < runs; ++r) run(r);
    } else {
        std::vector<std::jthread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (int r = t; r < runs; r += threads) run(r);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                }
            });
        }
        pool.clear();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    const LocalResult* best = &results.front();
    for (const auto& r : results)
        if (better(r, *best)) best = &r;

    OptimizerReport report;
    report.design = Design::exact(best->counts, constraints.J);
    const CriterionValue value = criterion.evaluate(report.design);
    report.phi = value.phi;
    report.full_value = value.full_value;
    report.mse_trace = *value.mse_trace;
    report.optimality_gap = report.phi - lower_bound;
    report.iterations = best->moves;
    report.restarts_used = options.restarts;
    report.seed = options.seed;
    return report;
}

double efficiency(const Design& reference, const Design& candidate, const CriterionEvaluator& criterion) {
    return criterion.evaluate(reference).full_value / criterion.evaluate(candidate).full_value;
}

}  // namespace trialloc
