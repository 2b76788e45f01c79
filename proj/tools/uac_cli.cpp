// Experiment runner.
//
//   uac run ex1 [--config f] [--seed s] [--trials n] [--out dir] [--workers n] [--no-adaptation]
//   uac run ex2 [--config f] [--out dir] [--static-reference]
//   uac validate [--config f | --preset ex1|ex2]
//   uac fit-metric [--config f] [--out file]
//
// Exit codes: 0 ok, 1 usage/config error, 2 validation failure, 3 I/O error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "uac/uac.hpp"

namespace {

using namespace uac;

struct Common {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> workers;
    std::string out;
};

ExperimentConfig load(const Common& c, const std::string& default_preset, bool check_files = true) {
    nlohmann::json j = nlohmann::json::object();
    std::filesystem::path base;
    if (!c.config_path.empty()) {
        std::ifstream is(c.config_path);
        if (!is) throw IoError("cannot open config '" + c.config_path + "'");
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        base = std::filesystem::path(c.config_path).parent_path();
    }
    if (!j.contains("preset") && !j.contains("model")) j["preset"] = c.preset.empty() ? default_preset : c.preset;
    ExperimentConfig cfg = parse_config(j, base, check_files);
    if (c.seed) cfg.seed = *c.seed;
    if (c.trials) cfg.trials = *c.trials;
    if (c.workers) cfg.workers = *c.workers;
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.validate_config(check_files);
    return cfg;
}

void print_batch(const BatchSummary& s) {
    std::cout << s.arm << ": trials " << s.trials << ", converged " << s.converged << ", diverged " << s.diverged
              << " (blew up " << s.blew_up << "), final |x| p50 " << s.final_norm_p50 << ", p90 " << s.final_norm_p90
              << "\n";
}

int run_ex1(const Common& c, bool no_adaptation) {
    auto cfg = load(c, "ex1");
    if (no_adaptation) cfg.arms = {"no-adaptation"};
    const auto res = run_monte_carlo_ex1(cfg);
    for (const auto& a : res.arms) print_batch(a);
    if (!cfg.output_dir.empty()) std::cout << "wrote " << cfg.output_dir << "\n";
    return 0;
}

int run_ex2(const Common& c, bool static_only) {
    auto cfg = load(c, "ex2");
    if (static_only) cfg.arms = {"static-reference"};
    const auto res = run_tracking_ex2(cfg);
    std::cout << "metric validation: " << res.validation.points << " points, worst C1 " << res.validation.worst_c1
              << ", worst C2 " << res.validation.worst_c2 << "\n";
    for (const auto& a : res.arms) {
        std::cout << a.arm << ": mean E over [" << cfg.average_t0 << ", " << cfg.average_t1
                  << "] = " << a.average_certificate << ", final E " << a.final_certificates.front()
                  << ", max |x1 - sin t| over last " << cfg.tracking_window << " s = " << a.tracking_error << "\n";
    }
    if (!cfg.output_dir.empty()) std::cout << "wrote " << cfg.output_dir << "\n";
    return 0;
}

int validate(const Common& c) {
    const auto cfg = load(c, "ex1");
    const auto rep = validate_certificate(cfg);
    nlohmann::json j = {{"kind", rep.kind}, {"pass", rep.pass}, {"details", rep.details}};
    if (!rep.warning.empty()) {
        j["warning"] = rep.warning;
        std::cerr << "warning: " << rep.warning << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return rep.pass ? 0 : 2;
}

int fit_metric_cmd(const Common& c) {
    const auto cfg = load(c, "ex2", false);
    const auto rep = fit_metric_for(cfg);
    std::cout << "fit: worst C1 " << rep.fit.worst_c1 << ", worst C2 " << rep.fit.worst_c2 << ", eig(W) in ["
              << rep.fit.min_w_eig << ", " << rep.fit.max_w_eig << "], loss " << rep.fit.final_loss << "\n";
    if (!rep.fit.feasible) {
        std::cerr << "metric fit failed on the fitting grid\n";
        return 2;
    }
    std::cout << "validation: " << rep.validation.points << " points, worst C1 " << rep.validation.worst_c1
              << ", worst C2 " << rep.validation.worst_c2 << "\n";
    if (!rep.validation.pass) {
        std::cerr << "fitted metric failed validation on the finer grid\n";
        return 2;
    }
    const std::string path = c.out.empty() ? cfg.fit.output : c.out;
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "# dual metric W(x, theta) for " << cfg.model << ", lambda " << cfg.lambda << "\n";
    write_polynomial_metric(os, rep.fit.metric);
    if (!os) throw IoError("write failed for '" + path + "'");
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive control experiments for unmatched uncertainties"};
    app.require_subcommand(1);
    Common common;
    bool no_adaptation = false, static_reference = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "random seed");
        sub->add_option("--trials", common.trials, "number of trials")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", common.out, "output directory (run) or file (fit-metric)");
        sub->add_option("--workers", common.workers, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    };

    auto* run = app.add_subcommand("run", "run an experiment");
    run->require_subcommand(1);
    auto* ex1 = run->add_subcommand("ex1", "Monte Carlo regulation of the strict-feedback system");
    add_common(ex1);
    ex1->add_flag("--no-adaptation", no_adaptation, "run only the baseline arm with frozen estimates");
    auto* ex2 = run->add_subcommand("ex2", "tracking with adaptive vs static reference");
    add_common(ex2);
    ex2->add_flag("--static-reference", static_reference, "run only the static-reference arm");
    auto* val = app.add_subcommand("validate", "check a certificate on a grid");
    add_common(val);
    val->add_option("--preset", common.preset, "ex1 (uclf) or ex2 (metric) when no config is given");
    auto* fit = app.add_subcommand("fit-metric", "fit a dual metric on a grid and validate it");
    add_common(fit);
    fit->add_option("--preset", common.preset, "preset to start from");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (ex1->parsed()) return run_ex1(common, no_adaptation);
        if (ex2->parsed()) return run_ex2(common, static_reference);
        if (val->parsed()) return validate(common);
        if (fit->parsed()) return fit_metric_cmd(common);
    } catch (const ValidationFailure& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 2;
    } catch (const SynthesisFailure& e) {
        std::cerr << "synthesis failure: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
