#pragma once

// Monte Carlo regulation batch (strict-feedback example) and the tracking
// comparison (contracting example).

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "uac/certify.hpp"
#include "uac/experiment/config.hpp"
#include "uac/fit.hpp"
#include "uac/io.hpp"
#include "uac/simulate.hpp"

namespace uac {

struct TrialDraw {
    Vec x0;
    Vec theta_true;
};

/// Draw for one trial index. Each trial has its own stream, so draws do not
/// depend on the number of trials, the worker count or the arm.
inline TrialDraw draw_trial(std::uint64_t seed, int trial, const ParameterBox& x0_box,
                            const ParameterBox& theta_box) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), 0x9e3779b9u};
    std::mt19937_64 rng(seq);
    auto draw_box = [&](const ParameterBox& b) {
        Vec v(b.dim());
        for (Index i = 0; i < b.dim(); ++i) {
            std::uniform_real_distribution<double> d(b.lower[i], b.upper[i]);
            v[i] = d(rng);
        }
        return v;
    };
    TrialDraw out;
    out.x0 = draw_box(x0_box);
    out.theta_true = draw_box(theta_box);
    return out;
}

struct TrialResult {
    int index = 0;
    TrialDraw draw;
    TrajectoryLog log;
    bool converged = false;
    double final_norm = 0.0;
    double final_certificate = 0.0;
    double upsilon_min = 0.0;
    double upsilon_max = 0.0;
};

struct BatchSummary {
    std::string arm;
    int trials = 0;
    int converged = 0;
    int diverged = 0;  // every trial that did not converge
    int blew_up = 0;   // subset that left the divergence threshold or produced non-finite values
    std::vector<double> final_norms;
    std::vector<double> final_certificates;
    std::vector<double> upsilon_min;
    std::vector<double> upsilon_max;
    double final_norm_p50 = 0.0;
    double final_norm_p90 = 0.0;
    double final_norm_max = 0.0;
    // tracking runs only
    double average_certificate = 0.0;
    double tracking_error = 0.0;
};

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BatchSummary summarize(const std::string& arm, const std::vector<TrialResult>& results) {
    BatchSummary s;
    s.arm = arm;
    s.trials = static_cast<int>(results.size());
    for (const auto& r : results) {
        if (r.converged) {
            ++s.converged;
        } else {
            ++s.diverged;
        }
        if (r.log.diverged) ++s.blew_up;
        s.final_norms.push_back(r.final_norm);
        s.final_certificates.push_back(r.final_certificate);
        s.upsilon_min.push_back(r.upsilon_min);
        s.upsilon_max.push_back(r.upsilon_max);
    }
    s.final_norm_p50 = percentile(s.final_norms, 0.5);
    s.final_norm_p90 = percentile(s.final_norms, 0.9);
    s.final_norm_max = s.final_norms.empty() ? 0.0 : *std::max_element(s.final_norms.begin(), s.final_norms.end());
    return s;
}

inline nlohmann::json to_json(const BatchSummary& s) {
    return {{"arm", s.arm},
            {"trials", s.trials},
            {"converged", s.converged},
            {"diverged", s.diverged},
            {"blew_up", s.blew_up},
            {"final_norms", s.final_norms},
            {"final_certificates", s.final_certificates},
            {"upsilon_min", s.upsilon_min},
            {"upsilon_max", s.upsilon_max},
            {"final_norm_p50", s.final_norm_p50},
            {"final_norm_p90", s.final_norm_p90},
            {"final_norm_max", s.final_norm_max},
            {"average_certificate", s.average_certificate},
            {"tracking_error", s.tracking_error}};
}

/// Runs task(i) for i in [0, count) on a pool; results are indexed, so the
/// outcome does not depend on scheduling.
inline void parallel_for(int count, int workers, const std::function<void(int)>& task) {
    if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, std::max(count, 1));
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(count));
    auto run = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

namespace detail_batch {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    auto os = open_out(path);
    os << text;
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string trial_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%03d", i);
    return buf;
}

// t column followed by one column per trial; short series leave blanks.
inline void write_series_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                             const std::vector<const TrajectoryLog*>& logs,
                             const std::function<double(const TrajectoryLog&, size_t)>& value) {
    auto os = open_out(path);
    size_t rows = 0;
    const TrajectoryLog* longest = nullptr;
    for (const auto* l : logs) {
        if (l->size() > rows) {
            rows = l->size();
            longest = l;
        }
    }
    os << "t";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    for (size_t k = 0; k < rows; ++k) {
        os << detail::fmt_double(longest->times[k]);
        for (const auto* l : logs) {
            os << ',';
            if (k < l->size()) os << detail::fmt_double(value(*l, k));
        }
        os << '\n';
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail_batch

// ---------------------------------------------------------------------------
// Strict-feedback regulation batch

struct Ex1Result {
    std::vector<BatchSummary> arms;
    std::vector<std::vector<TrialResult>> trials;  // per arm

    const BatchSummary* arm(const std::string& name) const {
        for (const auto& a : arms) {
            if (a.arm == name) return &a;
        }
        return nullptr;
    }
};

inline StateController make_ex1_controller(const ExperimentConfig& cfg, const SystemModel& model,
                                           const UclfFamily& uclf) {
    if (cfg.controller == "backstepping") {
        return make_backstepping_controller(backstepping::form_from_string(cfg.backstepping_form));
    }
    if (cfg.controller == "min-norm-clf") return make_min_norm_clf_controller(model, uclf);
    throw ConfigError("controller '" + cfg.controller + "' is not available for " + cfg.model);
}

inline TrialResult run_ex1_trial(const ExperimentConfig& cfg, int index, bool adaptation) {
    const SystemModel model = models::by_name(cfg.model);
    const UclfFamily uclf = backstepping::uclf(backstepping::form_from_string(cfg.backstepping_form));
    const auto controller = make_ex1_controller(cfg, model, uclf);
    TrialResult r;
    r.index = index;
    r.draw = draw_trial(cfg.seed, index, cfg.x0_box, cfg.theta_box);
    if (cfg.x0) r.draw.x0 = *cfg.x0;
    if (cfg.theta_true) r.draw.theta_true = *cfg.theta_true;
    SimConfig sim = cfg.sim;
    sim.box = cfg.projection_box;
    sim.adaptation = sim.adaptation && adaptation;
    r.log = simulate_uclf(model, uclf, cfg.scaling(), cfg.gains(), controller, r.draw.x0, r.draw.theta_true,
                          {cfg.initial_estimate(), cfg.rho0}, sim);
    if (r.log.size() > 0) {
        r.final_norm = r.log.x.back().norm();
        r.final_certificate = r.log.certificate.back();
        r.upsilon_min = *std::min_element(r.log.upsilon.begin(), r.log.upsilon.end());
        r.upsilon_max = *std::max_element(r.log.upsilon.begin(), r.log.upsilon.end());
    }
    const bool reached_end = r.log.size() > 0 && std::abs(r.log.times.back() - sim.t_final) < 0.5 * sim.dt;
    r.converged = !r.log.diverged && reached_end && r.final_norm < cfg.convergence_threshold;
    if (r.log.diverged) r.final_norm = std::numeric_limits<double>::infinity();
    return r;
}

inline Ex1Result run_monte_carlo_ex1(const ExperimentConfig& cfg) {
    if (cfg.model != models::kStrictFeedbackName) throw ConfigError("run ex1: config is not for " + std::string(models::kStrictFeedbackName));
    Ex1Result out;
    for (const auto& arm : cfg.arms) {
        if (arm != "adaptive" && arm != "no-adaptation") throw ConfigError("run ex1: arm '" + arm + "' does not apply");
        std::vector<TrialResult> results(static_cast<size_t>(cfg.trials));
        const bool adapt = arm == "adaptive";
        parallel_for(cfg.trials, cfg.workers,
                     [&](int i) { results[static_cast<size_t>(i)] = run_ex1_trial(cfg, i, adapt); });
        out.arms.push_back(summarize(arm, results));
        out.trials.push_back(std::move(results));
    }

    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path root(cfg.output_dir);
        detail_batch::ensure_dir(root);
        detail_batch::write_text(root / "config.json", to_json(cfg).dump(2) + "\n");
        nlohmann::json summary;
        summary["experiment"] = "ex1";
        summary["seed"] = cfg.seed;
        summary["arms"] = nlohmann::json::array();
        for (size_t a = 0; a < out.arms.size(); ++a) {
            const auto& arm = out.arms[a];
            const auto& trials = out.trials[a];
            detail_batch::ensure_dir(root / arm.arm);
            std::vector<std::string> names;
            std::vector<const TrajectoryLog*> logs;
            nlohmann::json per_trial = nlohmann::json::array();
            for (const auto& t : trials) {
                const auto name = detail_batch::trial_name(t.index);
                auto os = detail_batch::open_out(root / arm.arm / (name + ".csv"));
                write_trajectory_csv(os, t.log);
                if (!os) throw IoError("write failed for trial CSV");
                names.push_back(name);
                logs.push_back(&t.log);
                auto tj = trajectory_summary(t.log);
                tj["trial"] = t.index;
                tj["converged"] = t.converged;
                tj["x0"] = vec_to_json(t.draw.x0);
                tj["theta_true"] = vec_to_json(t.draw.theta_true);
                per_trial.push_back(std::move(tj));
            }
            detail_batch::write_series_csv(root / ("plot_state_norm_" + arm.arm + ".csv"), names, logs,
                                           [](const TrajectoryLog& l, size_t k) { return l.x[k].norm(); });
            detail_batch::write_series_csv(root / ("plot_upsilon_" + arm.arm + ".csv"), names, logs,
                                           [](const TrajectoryLog& l, size_t k) { return l.upsilon[k]; });
            auto aj = to_json(arm);
            aj["per_trial"] = std::move(per_trial);
            summary["arms"].push_back(std::move(aj));
        }
        detail_batch::write_text(root / "summary.json", summary.dump(2) + "\n");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tracking comparison

inline PolynomialMetric load_metric_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open metric file '" + path + "'");
    return read_polynomial_metric(is);
}

/// Uniform metric bounds measured on the validation grid.
inline MetricFamily metric_family_from(const PolynomialMetric& pm, double lambda, const std::vector<Vec>& xs,
                                       const std::vector<Vec>& thetas) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& th : thetas) {
        for (const auto& x : xs) {
            Eigen::SelfAdjointEigenSolver<Mat> es(pm.dual(x, th), Eigen::EigenvaluesOnly);
            if (!(es.eigenvalues().minCoeff() > 0.0)) throw ValidationFailure("metric dual not positive definite");
            lo = std::min(lo, 1.0 / es.eigenvalues().maxCoeff());
            hi = std::max(hi, 1.0 / es.eigenvalues().minCoeff());
        }
    }
    if (xs.empty() || thetas.empty()) lo = hi = 1.0;
    return pm.family(lambda, lo, hi);
}

struct GridPoints {
    std::vector<Vec> xs, thetas, inputs;
};

inline GridPoints expand_grid(const GridSpec& g, const ParameterBox& theta_box, Index m) {
    GridPoints out;
    if (g.x_counts.empty()) return out;
    out.xs = grid_points(g.x_lower, g.x_upper, g.x_counts);
    out.thetas = grid_points(theta_box.lower, theta_box.upper, g.theta_counts);
    for (double u : g.inputs) out.inputs.push_back(Vec::Constant(m, u));
    return out;
}

struct Ex2Result {
    MetricValidation validation;
    std::vector<BatchSummary> arms;
    std::vector<TrajectoryLog> logs;

    const BatchSummary* arm(const std::string& name) const {
        for (const auto& a : arms) {
            if (a.arm == name) return &a;
        }
        return nullptr;
    }
};

inline const ParameterBox& ex2_constraint_box(const ExperimentConfig& cfg) {
    return cfg.projection_box ? *cfg.projection_box : cfg.theta_box;
}

inline TrajectoryLog run_ex2_arm(const ExperimentConfig& cfg, const MetricFamily& metric, ReferenceMode mode) {
    const SystemModel model = models::by_name(cfg.model);
    if (!cfg.x0 || !cfg.theta_true) throw ConfigError("run ex2: x0 and theta_true are required");
    SimConfig sim = cfg.sim;
    sim.box = cfg.projection_box;
    return simulate_uccm(model, metric, cfg.scaling(), cfg.gains(), make_reference_ex2(mode), *cfg.x0,
                         *cfg.theta_true, {cfg.initial_estimate(), cfg.rho0}, sim);
}

inline double tracking_error(const TrajectoryLog& log, double window) {
    if (log.size() == 0) return std::numeric_limits<double>::infinity();
    const double t_end = log.times.back();
    double worst = 0.0;
    for (size_t k = 0; k < log.size(); ++k) {
        if (log.times[k] >= t_end - window - 1e-12) worst = std::max(worst, std::abs(log.x[k][0] - std::sin(log.times[k])));
    }
    return worst;
}

inline Ex2Result run_tracking_ex2(const ExperimentConfig& cfg) {
    if (cfg.model != models::kContractingName) throw ConfigError("run ex2: config is not for " + std::string(models::kContractingName));
    const SystemModel model = models::by_name(cfg.model);
    const PolynomialMetric pm = load_metric_file(cfg.metric_file);
    if (pm.n != model.n() || pm.p != model.p()) throw ConfigError("run ex2: metric dimensions do not match the model");
    const auto grid = expand_grid(cfg.validate, ex2_constraint_box(cfg), model.m());
    Ex2Result out;
    const MetricFamily metric = metric_family_from(pm, cfg.lambda, grid.xs, grid.thetas);
    out.validation = validate_metric_grid(metric, model, grid.xs, grid.thetas, grid.inputs);
    if (!out.validation.pass) {
        throw ValidationFailure(detail::concat("metric failed validation: worst C1 eigenvalue ", out.validation.worst_c1,
                                               ", worst C2 residual ", out.validation.worst_c2));
    }
    for (const auto& arm : cfg.arms) {
        ReferenceMode mode;
        if (arm == "adaptive-reference") {
            mode = ReferenceMode::adaptive;
        } else if (arm == "static-reference") {
            mode = ReferenceMode::static_;
        } else {
            throw ConfigError("run ex2: arm '" + arm + "' does not apply");
        }
        out.logs.push_back(run_ex2_arm(cfg, metric, mode));
    }
    for (size_t a = 0; a < cfg.arms.size(); ++a) {
        const auto& log = out.logs[a];
        TrialResult r;
        r.log = log;
        r.final_norm = log.size() ? (log.x.back() - log.x_d.back()).norm() : 0.0;
        r.final_certificate = log.size() ? log.certificate.back() : 0.0;
        r.upsilon_min = log.size() ? *std::min_element(log.upsilon.begin(), log.upsilon.end()) : 0.0;
        r.upsilon_max = log.size() ? *std::max_element(log.upsilon.begin(), log.upsilon.end()) : 0.0;
        r.converged = !log.diverged;
        auto s = summarize(cfg.arms[a], {r});
        s.average_certificate = log.diverged ? std::numeric_limits<double>::infinity()
                                             : time_average_certificate(log, cfg.average_t0, cfg.average_t1);
        s.tracking_error = tracking_error(log, cfg.tracking_window);
        out.arms.push_back(std::move(s));
    }

    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path root(cfg.output_dir);
        detail_batch::ensure_dir(root);
        detail_batch::write_text(root / "config.json", to_json(cfg).dump(2) + "\n");
        std::vector<std::string> names;
        std::vector<const TrajectoryLog*> logs;
        nlohmann::json summary;
        summary["experiment"] = "ex2";
        summary["validation"] = {{"points", out.validation.points},
                                 {"worst_c1", out.validation.worst_c1},
                                 {"worst_c2", out.validation.worst_c2},
                                 {"min_metric_eig", out.validation.min_metric_eig}};
        summary["arms"] = nlohmann::json::array();
        for (size_t a = 0; a < out.arms.size(); ++a) {
            const auto& name = out.arms[a].arm;
            auto os = detail_batch::open_out(root / (name + ".csv"));
            write_trajectory_csv(os, out.logs[a]);
            names.push_back("E_" + name);
            logs.push_back(&out.logs[a]);
            auto aj = to_json(out.arms[a]);
            aj["trajectory"] = trajectory_summary(out.logs[a]);
            summary["arms"].push_back(std::move(aj));
        }
        detail_batch::write_series_csv(root / "plot_energy.csv", names, logs,
                                       [](const TrajectoryLog& l, size_t k) { return l.certificate[k]; });
        // states with their references, per arm
        for (size_t a = 0; a < out.arms.size(); ++a) {
            auto os = detail_batch::open_out(root / ("plot_tracking_" + out.arms[a].arm + ".csv"));
            os << "t,x1,x2,x3,x_d1,x_d2,x_d3\n";
            const auto& l = out.logs[a];
            for (size_t k = 0; k < l.size(); ++k) {
                os << detail::fmt_double(l.times[k]);
                for (Index i = 0; i < 3; ++i) os << ',' << detail::fmt_double(l.x[k][i]);
                for (Index i = 0; i < 3; ++i) os << ',' << detail::fmt_double(l.x_d[k][i]);
                os << '\n';
            }
            if (!os) throw IoError("write failed for tracking plot data");
        }
        detail_batch::write_text(root / "summary.json", summary.dump(2) + "\n");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Certificate validation and metric fitting

struct ValidationReport {
    std::string kind;  // "uclf" or "uccm"
    bool pass = true;
    std::string warning;
    nlohmann::json details;
};

inline ValidationReport validate_certificate(const ExperimentConfig& cfg) {
    const SystemModel model = models::by_name(cfg.model);
    ValidationReport rep;
    const ParameterBox& tb = cfg.projection_box ? *cfg.projection_box : cfg.theta_box;
    const auto grid = expand_grid(cfg.validate, tb, model.m());
    if (cfg.model == models::kStrictFeedbackName) {
        rep.kind = "uclf";
        const auto uclf = backstepping::uclf(backstepping::form_from_string(cfg.backstepping_form));
        const auto r = validate_uclf_grid(model, uclf, grid.xs, grid.thetas);
        rep.pass = r.pass;
        rep.warning = r.warning;
        rep.details = {{"points", r.points}, {"infeasible", r.infeasible}, {"min_b_where_needed", r.min_b_where_needed}};
        if (r.infeasible > 0) {
            rep.details["worst_a"] = r.worst_a;
            rep.details["worst_x"] = vec_to_json(r.worst_x);
            rep.details["worst_theta"] = vec_to_json(r.worst_theta);
        }
    } else {
        rep.kind = "uccm";
        const PolynomialMetric pm = load_metric_file(cfg.metric_file);
        const MetricFamily metric = pm.family(cfg.lambda, 0.0, 0.0);
        const auto r = validate_metric_grid(metric, model, grid.xs, grid.thetas, grid.inputs);
        rep.pass = r.pass;
        rep.warning = r.warning;
        rep.details = {{"points", r.points}, {"worst_c1", r.worst_c1}, {"worst_c2", r.worst_c2},
                       {"min_metric_eig", r.min_metric_eig}};
        if (r.worst_c1_x.size() > 0) {
            rep.details["worst_c1_x"] = vec_to_json(r.worst_c1_x);
            rep.details["worst_c1_theta"] = vec_to_json(r.worst_c1_theta);
            rep.details["worst_c1_u"] = vec_to_json(r.worst_c1_u);
        }
    }
    return rep;
}

struct FitReport {
    FitResult fit;
    MetricValidation validation;
};

/// Fits on the fit grid, then re-validates on the validation grid.
inline FitReport fit_metric_for(const ExperimentConfig& cfg) {
    const SystemModel model = models::by_name(cfg.model);
    const ParameterBox& tb = cfg.projection_box ? *cfg.projection_box : cfg.theta_box;
    std::vector<bool> active = cfg.fit.active;
    if (active.empty()) active.assign(static_cast<size_t>(model.n() + model.p()), false);
    const auto templ = PolynomialMetric::make_template(model.n(), model.p(), cfg.fit.degree, active);
    const SampleGrid grid = SampleGrid::make(cfg.fit.grid.x_lower, cfg.fit.grid.x_upper, cfg.fit.grid.x_counts, tb,
                                             cfg.fit.grid.theta_counts);
    FitReport rep;
    rep.fit = fit_metric(model, templ, cfg.lambda, grid, cfg.fit.options);
    if (!rep.fit.feasible) return rep;
    const auto vg = expand_grid(cfg.fit.validation_grid, tb, model.m());
    rep.validation = validate_metric_grid(rep.fit.metric.family(cfg.lambda, 0.0, 0.0), model, vg.xs, vg.thetas,
                                          vg.inputs);
    return rep;
}

}  // namespace uac
