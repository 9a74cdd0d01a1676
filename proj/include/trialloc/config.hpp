#pragma once

// JSON problem configuration for the command-line front end.
//
//   {
//     "variance":    {"sigma2_omega", "sigma2_tau", "sigma2_gamma",
//                     "composite" | ("sigma2_phi", "sigma2_error"), "H", "L",
//                     "model": "cross" | "nested"},
//     "subregions":  {"V": [[...], ...], "ell": [...]},
//     "kinship":     {"type": "identity", "K"}
//                  | {"type": "cs", "K", "r", "sigma2_alpha"?}
//                  | {"type": "block_cs", "f", "m", "r", "sigma2_alpha"?}
//                  | {"type": "dense", "csv": path} | {"type": "dense", "matrix": [[...]]},
//                    plus optional "jitter"; a missing sigma2_alpha gives asv(N) = 1,
//     "J": 40  or  "J_grid": [10, 20, 40],
//     "constraints": {"min": int | [...], "max": int | [...], "max_fraction",
//                     "costs": [...], "budget" | "budget_per_trial"},
//     "criterion":   {"target": "effects" | "contrasts",
//                     "weighting": "standard" | "weighted",
//                     "path": "auto" | "full" | "bayes_cs" | "cbrc_block_cs" | "kbayes_block_cs"},
//     "solver":      {"tol", "restarts", "seed", "threads", "max_iter"},
//     "scenarios":   [{"name", ...}]   // each entry is merge-patched onto the base
//   }
//
// A scenario's "reference" member is carried through untouched.

#include "trialloc/criteria.hpp"
#include "trialloc/optimizer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace trialloc {

struct SolverSettings {
    double tol = 1e-9;
    int restarts = 20;
    std::uint64_t seed = 1;
    int threads = 1;
    int max_iter = 20000;
};

/// Constraints with J still open, so one block serves a whole J grid.
struct ConstraintTemplate {
    std::vector<int> min;                 // empty: 1 per region
    std::optional<std::vector<int>> max;
    std::optional<double> max_fraction;   // max_i = floor(fraction * J)
    std::optional<std::vector<double>> costs;
    std::optional<double> budget;
    std::optional<double> budget_per_trial;

    ConstraintSet instantiate(int P, int J) const;
};

struct Scenario {
    std::string name;
    VarianceComponents vc;
    SubRegionProfile profile;
    KinshipSpec kinship;
    std::vector<int> J_grid;
    ConstraintTemplate constraints;
    CriterionSpec criterion;
    SolverSettings solver;
    nlohmann::json reference;  // null unless given

    DesignProblem problem(int J) const;
};

struct ProblemConfig {
    std::vector<Scenario> scenarios;  // the base alone when none are listed
};

/// Parses and validates; relative CSV paths resolve against `base_dir`.
ProblemConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ProblemConfig load_config(const std::filesystem::path& path);

Target parse_target(const std::string& s);
Weighting parse_weighting(const std::string& s);
CriterionPath parse_path(const std::string& s);

/// "13,6,7,13,1" style lists.
std::vector<int> parse_int_list(const std::string& s);
std::vector<double> parse_double_list(const std::string& s);

}  // namespace trialloc
