// trialloc: optimal allocation of multi-environment trial locations to sub-regions.

#include "trialloc/commands.hpp"
#include "trialloc/error.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace trialloc;

namespace {

void emit(const nlohmann::json& report, bool pretty) {
    std::cout << report.dump(2) << "\n";
    if (pretty) print_pretty(report, std::cerr);
}

DesignInput design_input(const std::string& counts, const std::string& weights) {
    DesignInput in;
    if (!counts.empty()) in.counts = parse_int_list(counts);
    if (!weights.empty()) in.weights = parse_double_list(weights);
    return in;
}

int fail(const std::string& message, ExitCode code) {
    std::cerr << "trialloc: " << message << "\n";
    std::cout << nlohmann::json{{"error", message}, {"exit_code", static_cast<int>(code)}}.dump(2) << "\n";
    return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Allocation of trial locations to sub-regions for genomic prediction"};
    app.require_subcommand(1);

    std::string config_path, mode = "exact", design, weights, design_b, weights_b;
    bool pretty = false;
    CommandOverrides overrides;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON problem configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", overrides.seed, "seed for the exact solver's random restarts");
        sub->add_option("--tol", overrides.tol, "relative duality-gap tolerance");
        sub->add_option("--restarts", overrides.restarts, "random restarts of the exact solver");
        sub->add_option("--threads", overrides.threads, "worker threads for restarts");
        sub->add_option("--jitter", overrides.jitter, "value added to the kinship diagonal");
        sub->add_option("--J", overrides.J, "total number of trials, replacing J / J_grid");
        sub->add_flag("--pretty", pretty, "also print a readable table to stderr");
    };

    auto* eval = app.add_subcommand("eval", "evaluate a design");
    common(eval);
    eval->add_option("--design", design, "counts, e.g. 13,6,7,13,1");
    eval->add_option("--weights", weights, "approximate design weights");

    auto* des = app.add_subcommand("design", "optimize a design");
    common(des);
    des->add_option("--mode", mode, "approx or exact")->check(CLI::IsMember({"approx", "exact"}));

    auto* eff = app.add_subcommand("efficiency", "efficiency of design A relative to design B");
    common(eff);
    eff->add_option("--design", design, "design A counts");
    eff->add_option("--weights", weights, "design A weights");
    eff->add_option("--design-b", design_b, "design B counts");
    eff->add_option("--weights-b", weights_b, "design B weights");

    auto* self = app.add_subcommand("selftest", "run internal consistency checks");
    self->add_flag("--pretty", pretty, "also print a readable table to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::Validation);
    }

    try {
        if (self->parsed()) {
            const auto report = cmd_selftest();
            emit(report, pretty);
            return report.at("ok").get<bool>() ? 0 : static_cast<int>(ExitCode::Numerical);
        }
        ProblemConfig cfg = load_config(config_path);
        apply_overrides(cfg, overrides);
        if (eval->parsed()) {
            emit(cmd_eval(cfg, design_input(design, weights)), pretty);
        } else if (des->parsed()) {
            emit(cmd_design(cfg, mode == "approx" ? DesignMode::Approximate : DesignMode::Exact), pretty);
        } else {
            emit(cmd_efficiency(cfg, design_input(design, weights), design_input(design_b, weights_b)), pretty);
        }
    } catch (const Error& e) {
        return fail(e.what(), e.code());
    } catch (const std::exception& e) {
        return fail(e.what(), ExitCode::Numerical);
    }
    return 0;
}
