#pragma once

// Optimal approximate designs over the constrained weight simplex and
// highly efficient exact designs under linear constraints.

#include "trialloc/criteria.hpp"
#include "trialloc/lmm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace trialloc {

/// Linear constraints on an exact design (J_1, ..., J_P):
///   sum J_i = J,  min_i <= J_i <= max_i,  sum c_i J_i <= budget.
struct ConstraintSet {
    int J = 0;
    std::vector<int> min_per_region;                 // defaults to 1 per region
    std::optional<std::vector<int>> max_per_region;
    std::optional<std::vector<double>> costs;
    std::optional<double> budget;

    /// Total J with at least one location per sub-region.
    static ConstraintSet at_least_one(int P, int J);

    int upper(int i) const { return max_per_region ? (*max_per_region)[static_cast<std::size_t>(i)] : J; }
    double cost(const std::vector<int>& counts) const;

    /// Dimension and range checks (ValidationError).
    void validate(int P) const;
    /// validate() plus feasibility of the integer problem; InfeasibleError
    /// names the violated aggregate.
    void check_feasible(int P) const;
    /// True when `counts` satisfies every constraint exactly (budget with 1e-9 slack).
    bool admits(const std::vector<int>& counts) const;
};

struct OptimizerReport {
    Design design;
    double phi = 0.0;
    double full_value = 0.0;
    double mse_trace = 0.0;
    /// Approximate: Frank-Wolfe duality gap at the returned weights.
    /// Exact: phi minus the continuous-relaxation lower bound.
    double optimality_gap = 0.0;
    int iterations = 0;
    int restarts_used = 0;
    std::uint64_t seed = 0;
};

struct ApproximateOptions {
    double tol = 1e-9;  // stop when the duality gap is <= tol * |phi|
    int max_iter = 20000;
};

struct ExactOptions {
    std::uint64_t seed = 1;
    int restarts = 20;
    int threads = 1;
    ApproximateOptions warm_start;
};

/// Minimizes phi over {l <= w <= u, sum w = 1, c^T w <= budget/J} with
/// l = min/J and u = max/J, by Frank-Wolfe with away steps and exact line
/// search. Deterministic; the iterate sequence does not depend on `tol`.
OptimizerReport solve_approximate(const CriterionEvaluator& criterion, const ConstraintSet& constraints,
                                  const ApproximateOptions& options = {});

/// Rounded warm start plus `restarts` seeded random feasible starts, each
/// improved by steepest single-location transfers (then paired transfers
/// when no single one improves). Results merge by (phi, smallest counts), so
/// the report does not depend on the number of threads.
OptimizerReport solve_exact(const CriterionEvaluator& criterion, const ConstraintSet& constraints,
                            const ExactOptions& options = {});

/// Largest-remainder apportionment of w * J within the bounds, followed by
/// cost repair transfers. Throws InfeasibleError when no rounding is feasible.
Design round_to_exact(const Eigen::VectorXd& weights, const ConstraintSet& constraints);

/// Eff = Phi(reference) / Phi(candidate) for the full A-criterion value.
double efficiency(const Design& reference, const Design& candidate, const CriterionEvaluator& criterion);

/// Solution of min g^T s over the approximate-design polytope. Exposed for tests.
Eigen::VectorXd linear_minimization_oracle(const Eigen::VectorXd& g, const ConstraintSet& constraints);

}  // namespace trialloc
