#pragma once

// Subcommands of the trialloc tool. Each returns a JSON report; errors are
// thrown as trialloc::Error and mapped to exit codes by the caller.

#include "trialloc/config.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>
#include <vector>

namespace trialloc {

enum class DesignMode { Approximate, Exact };

/// A design given on the command line: integer counts or weights.
struct DesignInput {
    std::optional<std::vector<int>> counts;
    std::optional<std::vector<double>> weights;
};

struct CommandOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<int> restarts;
    std::optional<int> threads;
    std::optional<double> jitter;
    std::optional<int> J;          // replaces J / J_grid
};

/// Applies command-line overrides to every scenario.
void apply_overrides(ProblemConfig& cfg, const CommandOverrides& o);

/// Evaluates one design per scenario. Exact designs fix J = sum of counts,
/// which must match the configured J; weights use the first configured J.
nlohmann::json cmd_eval(const ProblemConfig& cfg, const DesignInput& design);

/// Optimizes each scenario at each J of its grid.
nlohmann::json cmd_design(const ProblemConfig& cfg, DesignMode mode);

/// Eff = Phi(a) / Phi(b) under each scenario's criterion.
nlohmann::json cmd_efficiency(const ProblemConfig& cfg, const DesignInput& a, const DesignInput& b);

/// Quick internal consistency checks; "ok" is false when any fails.
nlohmann::json cmd_selftest();

/// Human-readable rendering of a report for --pretty.
void print_pretty(const nlohmann::json& report, std::ostream& os);

}  // namespace trialloc
