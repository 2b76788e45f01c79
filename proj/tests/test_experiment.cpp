#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uac/experiment/batch.hpp"

using namespace uac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("uac_test_experiment_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(UAC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> csv_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
    }
    std::sort(out.begin(), out.end());
    return out;
}

Vec vec_of(std::initializer_list<double> v) {
    Vec out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double d : v) out[i++] = d;
    return out;
}

}  // namespace

TEST(Config, Ex1Preset) {
    const auto c = preset_config("ex1");
    EXPECT_EQ(c.model, models::kStrictFeedbackName);
    EXPECT_EQ(c.gamma_diag, vec_of({0.1, 0.1}));
    EXPECT_EQ(c.eta, 100.0);
    EXPECT_EQ(c.sim.dt, 0.005);
    EXPECT_EQ(c.scaling_a, 0.9);
    EXPECT_EQ(c.scaling_b, 0.1);
    EXPECT_EQ(c.scaling_c, 5.0);
    EXPECT_EQ(c.x0_box.lower, vec_of({-2, -2, -2}));
    EXPECT_EQ(c.x0_box.upper, vec_of({2, 2, 2}));
    EXPECT_EQ(c.theta_box.lower, vec_of({-0.2, 0.2}));
    EXPECT_EQ(c.theta_box.upper, vec_of({0.4, 0.6}));
    EXPECT_EQ(c.trials, 100);
    EXPECT_EQ(c.convergence_threshold, 0.05);
    EXPECT_EQ(c.sim.t_final, 20.0);
}

TEST(Config, Ex2Preset) {
    const auto c = preset_config("ex2");
    EXPECT_EQ(c.model, models::kContractingName);
    EXPECT_EQ(c.gamma_diag, vec_of({5, 5, 5, 5}));
    EXPECT_EQ(c.eta, 0.1);
    EXPECT_EQ(c.sim.dt, 0.01);
    ASSERT_TRUE(c.theta_true.has_value());
    EXPECT_EQ(*c.theta_true, vec_of({-0.3, -0.8, -0.25, -0.75}));
    EXPECT_EQ(c.theta_box.lower, vec_of({-0.4, -1, -0.6, -1.75}));
    EXPECT_EQ(c.theta_box.upper, vec_of({0.5, 0.6, 0.75, 0.4}));
    EXPECT_TRUE(c.sim.projection);
    EXPECT_THROW(preset_config("ex3"), ConfigError);
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex1"}, {"gama", 1}}), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex1"}, {"sim", {{"dtt", 0.1}}}}), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex1"}, {"gains", {{"gamma", {1, 1}}}}}), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex1"}, {"gains", {{"gamma_diag", {1, 1, 1}}}}}), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex1"}, {"controller", "lqr"}}), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "ex2"}, {"metric_file", "/nonexistent/metric.txt"}}), IoError);
}

TEST(Config, JsonRoundTrip) {
    for (const char* name : {"ex1", "ex2"}) {
        auto c = parse_config(nlohmann::json{{"preset", name}, {"seed", 7}, {"sim", {{"t_final", 3.0}}}});
        EXPECT_EQ(c.seed, 7u);
        EXPECT_EQ(c.sim.t_final, 3.0);
        const auto j = to_json(c);
        EXPECT_EQ(to_json(parse_config(j)), j);
    }
}

TEST(Batch, DrawsAreDeterministicAndInBox) {
    const auto c = preset_config("ex1");
    for (int i = 0; i < 50; ++i) {
        const auto a = draw_trial(c.seed, i, c.x0_box, c.theta_box);
        const auto b = draw_trial(c.seed, i, c.x0_box, c.theta_box);
        EXPECT_EQ(a.x0, b.x0);
        EXPECT_EQ(a.theta_true, b.theta_true);
        EXPECT_TRUE(c.x0_box.contains(a.x0));
        EXPECT_TRUE(c.theta_box.contains(a.theta_true));
    }
    EXPECT_NE(draw_trial(1, 0, c.x0_box, c.theta_box).x0, draw_trial(1, 1, c.x0_box, c.theta_box).x0);
    EXPECT_NE(draw_trial(1, 0, c.x0_box, c.theta_box).x0, draw_trial(2, 0, c.x0_box, c.theta_box).x0);
}

TEST(Batch, Percentile) {
    EXPECT_EQ(percentile({3.0, 1.0, 2.0}, 0.5), 2.0);
    EXPECT_EQ(percentile({1.0, 2.0}, 0.5), 1.5);
    EXPECT_EQ(percentile({4.0}, 0.9), 4.0);
}

TEST(Batch, EquilibriumTrialConverges) {
    auto c = preset_config("ex1");
    c.trials = 1;
    c.x0 = Vec::Zero(3);
    c.sim.t_final = 2.0;
    c.arms = {"adaptive"};
    const auto res = run_monte_carlo_ex1(c);
    ASSERT_EQ(res.arms.size(), 1u);
    EXPECT_EQ(res.arms[0].converged, 1);
    EXPECT_EQ(res.trials[0][0].final_norm, 0.0);
}

TEST(Batch, SummaryArithmetic) {
    auto c = preset_config("ex1");
    c.trials = 8;
    c.sim.t_final = 3.0;
    c.workers = 4;
    const auto res = run_monte_carlo_ex1(c);
    ASSERT_EQ(res.arms.size(), 2u);
    for (const auto& a : res.arms) {
        EXPECT_EQ(a.trials, 8);
        EXPECT_EQ(a.converged + a.diverged, a.trials);
        EXPECT_LE(a.blew_up, a.diverged);
        EXPECT_EQ(a.final_norms.size(), 8u);
    }
    // both arms run the same draws
    for (size_t i = 0; i < 8; ++i) EXPECT_EQ(res.trials[0][i].draw.x0, res.trials[1][i].draw.x0);
}

TEST(Batch, WorkerCountDoesNotChangeResults) {
    auto c = preset_config("ex1");
    c.trials = 6;
    c.sim.t_final = 2.0;
    c.workers = 1;
    const auto a = run_monte_carlo_ex1(c);
    c.workers = 3;
    const auto b = run_monte_carlo_ex1(c);
    for (size_t arm = 0; arm < a.trials.size(); ++arm) {
        for (size_t i = 0; i < a.trials[arm].size(); ++i) {
            EXPECT_EQ(a.trials[arm][i].log.x.back(), b.trials[arm][i].log.x.back());
        }
    }
}

// With no mismatch and a start on the reference both arms stay on it, up to
// integration and geodesic tolerances (E stays near 1e-15).
TEST(Tracking, ArmsCoincideWithoutMismatch) {
    auto c = preset_config("ex2");
    c.theta_true = vec_of({-0.3, -0.8, 0.0, 0.0});
    c.theta_hat0 = *c.theta_true;
    c.x0 = vec_of({0.0, 0.0, 1.0});
    c.sim.t_final = 3.0;
    c.average_t0 = 1.0;
    c.average_t1 = 3.0;
    c.tracking_window = 1.0;
    const auto res = run_tracking_ex2(c);
    ASSERT_EQ(res.logs.size(), 2u);
    const auto& a = res.logs[0];
    const auto& b = res.logs[1];
    ASSERT_EQ(a.size(), b.size());
    for (size_t k = 0; k < a.size(); ++k) {
        EXPECT_LT((a.x[k] - b.x[k]).norm(), 1e-6);
        EXPECT_LT(a.certificate[k], 1e-12);
        EXPECT_LT(b.certificate[k], 1e-12);
    }
}

TEST(Validate, PresetsPass) {
    auto c1 = preset_config("ex1");
    c1.validate.x_counts = {7, 7, 7};
    c1.validate.theta_counts = {3, 3};
    const auto r1 = validate_certificate(c1);
    EXPECT_EQ(r1.kind, "uclf");
    EXPECT_TRUE(r1.pass);
    const auto r2 = validate_certificate(preset_config("ex2"));
    EXPECT_EQ(r2.kind, "uccm");
    EXPECT_TRUE(r2.pass);
}

TEST(Validate, EmptyGridWarns) {
    auto c = preset_config("ex1");
    c.validate.x_counts.clear();
    const auto r = validate_certificate(c);
    EXPECT_TRUE(r.pass);
    EXPECT_FALSE(r.warning.empty());
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("exit");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("run ex1 --bogus"), 1);
    EXPECT_EQ(run_cli("frobnicate"), 1);

    write_file(dir / "unknown.json", R"({"preset": "ex1", "trails": 3})");
    EXPECT_EQ(run_cli("run ex1 --config " + (dir / "unknown.json").string()), 1);

    write_file(dir / "missing.json", R"({"preset": "ex2", "metric_file": "nowhere.txt"})");
    EXPECT_EQ(run_cli("validate --config " + (dir / "missing.json").string()), 3);

    // a contraction rate far above what the shipped metric certifies
    write_file(dir / "fast.json", R"({"preset": "ex2", "lambda": 50.0})");
    EXPECT_EQ(run_cli("validate --config " + (dir / "fast.json").string()), 2);
    EXPECT_EQ(run_cli("run ex2 --config " + (dir / "fast.json").string()), 2);

    write_file(dir / "ok.json", R"({"preset": "ex1", "validate": {"x_counts": [3, 3, 3], "theta_counts": [2, 2]}})");
    EXPECT_EQ(run_cli("validate --config " + (dir / "ok.json").string()), 0);
    fs::remove_all(dir);
}

TEST(Cli, CsvOutputIsByteIdentical) {
    const auto dir = scratch("bytes");
    write_file(dir / "short.json", R"({"preset": "ex1", "trials": 5, "sim": {"t_final": 2.0}})");
    const std::string cfg = " --config " + (dir / "short.json").string();
    ASSERT_EQ(run_cli("run ex1" + cfg + " --workers 1 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("run ex1" + cfg + " --workers 4 --out " + (dir / "b").string()), 0);
    const auto files = csv_files(dir / "a");
    ASSERT_FALSE(files.empty());
    EXPECT_EQ(files, csv_files(dir / "b"));
    for (const auto& f : files) EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
    EXPECT_TRUE(fs::exists(dir / "a" / "summary.json"));
    EXPECT_TRUE(fs::exists(dir / "a" / "config.json"));
    EXPECT_TRUE(fs::exists(dir / "a" / "plot_state_norm_adaptive.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / "plot_upsilon_adaptive.csv"));
    fs::remove_all(dir);
}
