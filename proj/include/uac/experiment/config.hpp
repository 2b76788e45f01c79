#pragma once

// Experiment configuration: JSON object, optionally starting from a preset
// ("ex1", "ex2") whose values explicit keys override. Unknown keys are
// rejected at every nesting level.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "uac/core.hpp"
#include "uac/fit.hpp"
#include "uac/lyapunov.hpp"
#include "uac/model.hpp"
#include "uac/simulate.hpp"

#ifndef UAC_DATA_DIR
#define UAC_DATA_DIR "data"
#endif

namespace uac {

class IoError : public Error {
   public:
    using Error::Error;
};

/// A certificate or metric failed its grid check.
class ValidationFailure : public Error {
   public:
    using Error::Error;
};

struct GridSpec {
    Vec x_lower, x_upper;
    std::vector<int> x_counts;
    std::vector<int> theta_counts;
    std::vector<double> inputs;  // scalar input samples, applied to every input channel
};

struct FitSpec {
    int degree = 0;
    std::vector<bool> active;  // which of (x, theta) the template may use
    GridSpec grid;
    GridSpec validation_grid;
    FitOptions options;
    std::string output;
};

struct ExperimentConfig {
    std::string preset;
    std::string model;
    std::string controller = "backstepping";
    std::string backstepping_form = "rederived";
    std::string metric_file;
    double lambda = 0.5;
    Vec gamma_diag;
    double eta = 1.0;
    double scaling_a = 0.9, scaling_b = 0.1, scaling_c = 5.0, rho_max = 500.0;
    SimConfig sim;
    ParameterBox x0_box;
    ParameterBox theta_box;  // sampling box for the true parameter
    std::optional<ParameterBox> projection_box;
    std::optional<Vec> theta_hat0;  // default: center of the projection (or sampling) box
    double rho0 = 0.0;
    std::optional<Vec> theta_true;
    std::optional<Vec> x0;
    int trials = 1;
    std::uint64_t seed = 1;
    std::string output_dir;
    int workers = 0;  // 0: hardware concurrency
    double convergence_threshold = 0.05;
    std::vector<std::string> arms;
    double average_t0 = 5.0, average_t1 = 30.0;
    double tracking_window = 10.0;
    double tracking_threshold = 0.1;
    GridSpec validate;
    FitSpec fit;
    std::filesystem::path base_dir;  // for relative paths

    ScalingFunction scaling() const { return ScalingFunction(scaling_a, scaling_b, scaling_c, rho_max); }
    AdaptGains gains() const { return AdaptGains::diagonal(gamma_diag, eta); }
    Vec initial_estimate() const {
        if (theta_hat0) return *theta_hat0;
        return projection_box ? projection_box->center() : theta_box.center();
    }
    std::filesystem::path resolve(const std::string& path) const {
        std::filesystem::path p(path);
        if (p.is_absolute() || base_dir.empty()) return p;
        return base_dir / p;
    }
    void validate_config(bool check_files = true) const;
};

namespace detail_cfg {

using nlohmann::json;

inline Vec to_vec(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("config: '" + key + "' must be an array of numbers");
    Vec v(static_cast<Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError("config: '" + key + "' must be an array of numbers");
        v[static_cast<Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T get(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
}

inline ParameterBox to_box(const json& j, const std::string& where) {
    check_keys(j, {"lower", "upper"}, where);
    if (!j.contains("lower") || !j.contains("upper")) throw ConfigError("config: " + where + " needs lower and upper");
    return ParameterBox(to_vec(j["lower"], where + ".lower"), to_vec(j["upper"], where + ".upper"));
}

inline json from_box(const ParameterBox& b) { return {{"lower", from_vec(b.lower)}, {"upper", from_vec(b.upper)}}; }

inline Vec vec_of(std::initializer_list<double> l) {
    Vec v(static_cast<Index>(l.size()));
    Index i = 0;
    for (double d : l) v[i++] = d;
    return v;
}

inline void apply_grid(GridSpec& g, const json& j, const std::string& where) {
    check_keys(j, {"x_lower", "x_upper", "x_counts", "theta_counts", "inputs"}, where);
    if (j.contains("x_lower")) g.x_lower = to_vec(j["x_lower"], where + ".x_lower");
    if (j.contains("x_upper")) g.x_upper = to_vec(j["x_upper"], where + ".x_upper");
    if (j.contains("x_counts")) g.x_counts = get<std::vector<int>>(j, "x_counts");
    if (j.contains("theta_counts")) g.theta_counts = get<std::vector<int>>(j, "theta_counts");
    if (j.contains("inputs")) g.inputs = get<std::vector<double>>(j, "inputs");
}

inline json grid_json(const GridSpec& g) {
    return {{"x_lower", from_vec(g.x_lower)},
            {"x_upper", from_vec(g.x_upper)},
            {"x_counts", g.x_counts},
            {"theta_counts", g.theta_counts},
            {"inputs", g.inputs}};
}

}  // namespace detail_cfg

/// Preset constants of the two experiments.
inline ExperimentConfig preset_config(const std::string& name) {
    using detail_cfg::vec_of;
    ExperimentConfig c;
    c.preset = name;
    if (name == "ex1") {
        c.model = models::kStrictFeedbackName;
        c.controller = "backstepping";
        c.gamma_diag = vec_of({0.1, 0.1});
        c.eta = 100.0;
        c.sim.dt = 0.005;
        c.sim.t_final = 20.0;
        c.sim.log_stride = 20;
        c.sim.projection = true;
        c.x0_box = ParameterBox(vec_of({-2, -2, -2}), vec_of({2, 2, 2}));
        c.theta_box = ParameterBox(vec_of({-0.2, 0.2}), vec_of({0.4, 0.6}));
        c.projection_box = c.theta_box;
        c.trials = 100;
        c.seed = 1;
        c.arms = {"adaptive", "no-adaptation"};
        c.validate.x_lower = vec_of({-2, -2, -2});
        c.validate.x_upper = vec_of({2, 2, 2});
        c.validate.x_counts = {21, 21, 21};
        c.validate.theta_counts = {5, 5};
    } else if (name == "ex2") {
        c.model = models::kContractingName;
        c.controller = "min-norm-ccm";
        c.metric_file = std::string(UAC_DATA_DIR) + "/ex2_metric.txt";
        c.lambda = 0.5;
        c.gamma_diag = vec_of({5, 5, 5, 5});
        c.eta = 0.1;
        c.sim.dt = 0.01;
        c.sim.t_final = 30.0;
        c.sim.log_stride = 1;
        c.sim.projection = true;
        c.theta_box = ParameterBox(vec_of({-0.4, -1, -0.6, -1.75}), vec_of({0.5, 0.6, 0.75, 0.4}));
        c.projection_box = c.theta_box;
        c.x0_box = ParameterBox(vec_of({-2, -2, -3}), vec_of({2, 2, 3}));
        c.theta_true = vec_of({-0.3, -0.8, -0.25, -0.75});
        c.x0 = vec_of({0.5, -0.5, 0.0});
        c.trials = 1;
        c.arms = {"adaptive-reference", "static-reference"};
        c.validate.x_lower = vec_of({-2, -2, -3});
        c.validate.x_upper = vec_of({2, 2, 3});
        c.validate.x_counts = {11, 11, 5};
        c.validate.theta_counts = {3, 3, 3, 3};
        c.validate.inputs = {-5.0, 0.0, 5.0};
        c.fit.degree = 0;
        c.fit.active = std::vector<bool>(7, false);
        c.fit.grid.x_lower = c.validate.x_lower;
        c.fit.grid.x_upper = c.validate.x_upper;
        c.fit.grid.x_counts = {9, 9, 1};
        c.fit.grid.theta_counts = {2, 2, 2, 2};
        c.fit.validation_grid = c.validate;
        c.fit.options.margin = 0.3;
        c.fit.options.w_hi = 20.0;
        c.fit.options.iterations = 2000;
        c.fit.output = "ex2_metric.txt";
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                                     bool check_files = true) {
    using namespace detail_cfg;
    check_keys(j, {"preset", "model", "controller", "backstepping_form", "metric_file", "lambda", "gains", "scaling",
                   "sim", "x0_box", "theta_box", "projection_box", "theta_hat0", "rho0", "theta_true", "x0",
                   "trials", "seed", "output_dir", "workers", "convergence_threshold", "arms", "average_window",
                   "tracking_window", "tracking_threshold", "validate", "fit"},
               "config");
    ExperimentConfig c;
    if (j.contains("preset")) c = preset_config(get<std::string>(j, "preset"));
    c.base_dir = base_dir;
    if (j.contains("model")) c.model = get<std::string>(j, "model");
    if (j.contains("controller")) c.controller = get<std::string>(j, "controller");
    if (j.contains("backstepping_form")) c.backstepping_form = get<std::string>(j, "backstepping_form");
    if (j.contains("metric_file")) c.metric_file = c.resolve(get<std::string>(j, "metric_file")).string();
    if (j.contains("lambda")) c.lambda = get<double>(j, "lambda");
    if (j.contains("gains")) {
        const auto& g = j["gains"];
        check_keys(g, {"gamma_diag", "eta"}, "gains");
        if (g.contains("gamma_diag")) c.gamma_diag = to_vec(g["gamma_diag"], "gains.gamma_diag");
        if (g.contains("eta")) c.eta = get<double>(g, "eta");
    }
    if (j.contains("scaling")) {
        const auto& s = j["scaling"];
        check_keys(s, {"a", "b", "c", "rho_max"}, "scaling");
        if (s.contains("a")) c.scaling_a = get<double>(s, "a");
        if (s.contains("b")) c.scaling_b = get<double>(s, "b");
        if (s.contains("c")) c.scaling_c = get<double>(s, "c");
        if (s.contains("rho_max")) c.rho_max = get<double>(s, "rho_max");
    }
    if (j.contains("sim")) {
        const auto& s = j["sim"];
        check_keys(s,
                   {"dt", "t_final", "integrator", "projection", "log_stride", "feedback", "adaptation",
                    "divergence_threshold", "geodesic_policy", "geodesic_segments", "geodesic_max_iters",
                    "reference_feedthrough"},
                   "sim");
        if (s.contains("dt")) c.sim.dt = get<double>(s, "dt");
        if (s.contains("t_final")) c.sim.t_final = get<double>(s, "t_final");
        if (s.contains("integrator")) c.sim.integrator = integrator_from_string(get<std::string>(s, "integrator"));
        if (s.contains("projection")) c.sim.projection = get<bool>(s, "projection");
        if (s.contains("log_stride")) c.sim.log_stride = get<int>(s, "log_stride");
        if (s.contains("feedback")) c.sim.feedback = feedback_mode_from_string(get<std::string>(s, "feedback"));
        if (s.contains("adaptation")) c.sim.adaptation = get<bool>(s, "adaptation");
        if (s.contains("divergence_threshold")) c.sim.divergence_threshold = get<double>(s, "divergence_threshold");
        if (s.contains("geodesic_policy")) {
            c.sim.geodesic_policy = geodesic_policy_from_string(get<std::string>(s, "geodesic_policy"));
        }
        if (s.contains("geodesic_segments")) c.sim.geodesic.segments = get<int>(s, "geodesic_segments");
        if (s.contains("geodesic_max_iters")) c.sim.geodesic.max_iters = get<int>(s, "geodesic_max_iters");
        if (s.contains("reference_feedthrough")) c.sim.reference_feedthrough = get<bool>(s, "reference_feedthrough");
    }
    if (j.contains("x0_box")) c.x0_box = to_box(j["x0_box"], "x0_box");
    if (j.contains("theta_box")) c.theta_box = to_box(j["theta_box"], "theta_box");
    if (j.contains("projection_box")) {
        if (j["projection_box"].is_null()) {
            c.projection_box.reset();
        } else {
            c.projection_box = to_box(j["projection_box"], "projection_box");
        }
    }
    if (j.contains("theta_hat0")) c.theta_hat0 = to_vec(j["theta_hat0"], "theta_hat0");
    if (j.contains("rho0")) c.rho0 = get<double>(j, "rho0");
    if (j.contains("theta_true")) c.theta_true = to_vec(j["theta_true"], "theta_true");
    if (j.contains("x0")) c.x0 = to_vec(j["x0"], "x0");
    if (j.contains("trials")) c.trials = get<int>(j, "trials");
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
    if (j.contains("output_dir")) c.output_dir = c.resolve(get<std::string>(j, "output_dir")).string();
    if (j.contains("workers")) c.workers = get<int>(j, "workers");
    if (j.contains("convergence_threshold")) c.convergence_threshold = get<double>(j, "convergence_threshold");
    if (j.contains("arms")) c.arms = get<std::vector<std::string>>(j, "arms");
    if (j.contains("average_window")) {
        const auto w = get<std::vector<double>>(j, "average_window");
        if (w.size() != 2) throw ConfigError("config: average_window needs two entries");
        c.average_t0 = w[0];
        c.average_t1 = w[1];
    }
    if (j.contains("tracking_window")) c.tracking_window = get<double>(j, "tracking_window");
    if (j.contains("tracking_threshold")) c.tracking_threshold = get<double>(j, "tracking_threshold");
    if (j.contains("validate")) apply_grid(c.validate, j["validate"], "validate");
    if (j.contains("fit")) {
        const auto& f = j["fit"];
        check_keys(f,
                   {"degree", "active", "grid", "validation_grid", "margin", "w_lo", "w_hi", "iterations",
                    "learning_rate", "output"},
                   "fit");
        if (f.contains("degree")) c.fit.degree = get<int>(f, "degree");
        if (f.contains("active")) c.fit.active = get<std::vector<bool>>(f, "active");
        if (f.contains("grid")) apply_grid(c.fit.grid, f["grid"], "fit.grid");
        if (f.contains("validation_grid")) apply_grid(c.fit.validation_grid, f["validation_grid"], "fit.validation_grid");
        if (f.contains("margin")) c.fit.options.margin = get<double>(f, "margin");
        if (f.contains("w_lo")) c.fit.options.w_lo = get<double>(f, "w_lo");
        if (f.contains("w_hi")) c.fit.options.w_hi = get<double>(f, "w_hi");
        if (f.contains("iterations")) c.fit.options.iterations = get<int>(f, "iterations");
        if (f.contains("learning_rate")) c.fit.options.learning_rate = get<double>(f, "learning_rate");
        if (f.contains("output")) c.fit.output = get<std::string>(f, "output");
    }
    c.validate_config(check_files);
    return c;
}

inline void ExperimentConfig::validate_config(bool check_files) const {
    if (model.empty()) throw ConfigError("config: no model (set 'preset' or 'model')");
    const SystemModel m = models::by_name(model);
    if (!is_controller_name(controller)) throw ConfigError("config: unknown controller '" + controller + "'");
    backstepping::form_from_string(backstepping_form);
    if (model == models::kStrictFeedbackName && controller == "min-norm-ccm") {
        throw ConfigError("config: min-norm-ccm needs a metric model");
    }
    if (model == models::kContractingName && controller != "min-norm-ccm") {
        throw ConfigError("config: " + model + " runs with min-norm-ccm");
    }
    if (gamma_diag.size() != m.p()) throw ConfigError("config: gains.gamma_diag must have p entries");
    if (!(gamma_diag.array() >= 0.0).all()) throw ConfigError("config: gains.gamma_diag must be non-negative");
    if (!(eta > 0.0)) throw ConfigError("config: gains.eta must be > 0");
    scaling();
    if (!(lambda > 0.0)) throw ConfigError("config: lambda must be > 0");
    if (x0_box.dim() != m.n()) throw ConfigError("config: x0_box must have n entries");
    if (theta_box.dim() != m.p()) throw ConfigError("config: theta_box must have p entries");
    if (projection_box && projection_box->dim() != m.p()) throw ConfigError("config: projection_box must have p entries");
    if (sim.projection && !projection_box) throw ConfigError("config: projection needs projection_box");
    if (theta_hat0 && theta_hat0->size() != m.p()) throw ConfigError("config: theta_hat0 must have p entries");
    if (theta_true && theta_true->size() != m.p()) throw ConfigError("config: theta_true must have p entries");
    if (x0 && x0->size() != m.n()) throw ConfigError("config: x0 must have n entries");
    if (trials < 0) throw ConfigError("config: trials must be >= 0");
    if (workers < 0) throw ConfigError("config: workers must be >= 0");
    if (!(convergence_threshold > 0.0)) throw ConfigError("config: convergence_threshold must be > 0");
    SimConfig s = sim;
    s.box = projection_box;
    s.validate();
    static const std::set<std::string> arm_names{"adaptive", "no-adaptation", "adaptive-reference", "static-reference"};
    for (const auto& a : arms) {
        if (!arm_names.count(a)) throw ConfigError("config: unknown arm '" + a + "'");
    }
    if (check_files && !metric_file.empty() && model == models::kContractingName && !std::filesystem::exists(metric_file)) {
        throw IoError("config: metric file '" + metric_file + "' does not exist");
    }
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    using namespace detail_cfg;
    json j;
    if (!c.preset.empty()) j["preset"] = c.preset;
    j["model"] = c.model;
    j["controller"] = c.controller;
    j["backstepping_form"] = c.backstepping_form;
    if (!c.metric_file.empty()) j["metric_file"] = c.metric_file;
    j["lambda"] = c.lambda;
    j["gains"] = {{"gamma_diag", from_vec(c.gamma_diag)}, {"eta", c.eta}};
    j["scaling"] = {{"a", c.scaling_a}, {"b", c.scaling_b}, {"c", c.scaling_c}, {"rho_max", c.rho_max}};
    j["sim"] = {{"dt", c.sim.dt},
                {"t_final", c.sim.t_final},
                {"integrator", to_string(c.sim.integrator)},
                {"projection", c.sim.projection},
                {"log_stride", c.sim.log_stride},
                {"feedback", to_string(c.sim.feedback)},
                {"adaptation", c.sim.adaptation},
                {"divergence_threshold", c.sim.divergence_threshold},
                {"geodesic_policy", to_string(c.sim.geodesic_policy)},
                {"geodesic_segments", c.sim.geodesic.segments},
                {"geodesic_max_iters", c.sim.geodesic.max_iters},
                {"reference_feedthrough", c.sim.reference_feedthrough}};
    j["x0_box"] = from_box(c.x0_box);
    j["theta_box"] = from_box(c.theta_box);
    if (c.projection_box) j["projection_box"] = from_box(*c.projection_box);
    j["theta_hat0"] = from_vec(c.initial_estimate());
    j["rho0"] = c.rho0;
    if (c.theta_true) j["theta_true"] = from_vec(*c.theta_true);
    if (c.x0) j["x0"] = from_vec(*c.x0);
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
    j["workers"] = c.workers;
    j["convergence_threshold"] = c.convergence_threshold;
    j["arms"] = c.arms;
    j["average_window"] = {c.average_t0, c.average_t1};
    j["tracking_window"] = c.tracking_window;
    j["tracking_threshold"] = c.tracking_threshold;
    j["validate"] = grid_json(c.validate);
    if (c.model == models::kContractingName) {
        j["fit"] = {{"degree", c.fit.degree},
                    {"active", c.fit.active},
                    {"grid", grid_json(c.fit.grid)},
                    {"validation_grid", grid_json(c.fit.validation_grid)},
                    {"margin", c.fit.options.margin},
                    {"w_lo", c.fit.options.w_lo},
                    {"w_hi", c.fit.options.w_hi},
                    {"iterations", c.fit.options.iterations},
                    {"learning_rate", c.fit.options.learning_rate},
                    {"output", c.fit.output}};
    }
    return j;
}

}  // namespace uac
