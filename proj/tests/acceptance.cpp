// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "uac/uac.hpp"

using namespace uac;
using uac::testing::curved_dual;
using uac::testing::fd_gradient;
using uac::testing::fd_jacobian;
using uac::testing::fd_matrix;
using uac::testing::rel_err;
using uac::testing::uniform;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MetricFamily shipped_metric(const ExperimentConfig& cfg) {
    const auto pm = load_metric_file(cfg.metric_file);
    const auto grid = expand_grid(cfg.validate, ex2_constraint_box(cfg), 1);
    return metric_family_from(pm, cfg.lambda, grid.xs, grid.thetas);
}

MetricFamily curved_metric(double lambda) { return curved_dual(4).family(lambda, 0, 0); }

// Only the first parameter moves the curved metric; keep it where the dual is
// positive definite.
Vec curved_theta(std::mt19937_64& rng) {
    Vec th = uniform(rng, 4, -0.5, 0.5);
    th[0] = uniform(rng, 1, 0.0, 1.0)[0];
    return th;
}

// Ex1 batch shared by criteria 1, 2 and 4.
const Ex1Result& ex1_batch() {
    static std::optional<Ex1Result> res;
    static double elapsed = 0.0;
    if (!res) {
        auto cfg = preset_config("ex1");
        cfg.workers = 8;
        cfg.sim.log_stride = 1;
        const auto t0 = std::chrono::steady_clock::now();
        res = run_monte_carlo_ex1(cfg);
        elapsed = seconds_since(t0);
        std::cout << "  ex1 batch: " << fmt("%.1f", elapsed) << " s for both arms\n";
    }
    return *res;
}

double ex1_seconds() {
    static std::optional<double> s;
    if (!s) {
        auto cfg = preset_config("ex1");
        cfg.workers = 8;
        cfg.arms = {"adaptive"};
        const auto t0 = std::chrono::steady_clock::now();
        run_monte_carlo_ex1(cfg);
        s = seconds_since(t0);
    }
    return *s;
}

struct Ex2Run {
    Ex2Result result;
    double seconds_per_arm = 0.0;
};

const Ex2Run& ex2_run() {
    static std::optional<Ex2Run> run;
    if (!run) {
        const auto cfg = preset_config("ex2");
        const auto t0 = std::chrono::steady_clock::now();
        Ex2Run r{run_tracking_ex2(cfg), 0.0};
        r.seconds_per_arm = seconds_since(t0) / static_cast<double>(cfg.arms.size());
        run = std::move(r);
    }
    return *run;
}

// ---------------------------------------------------------------------------

Outcome c1_monte_carlo() {
    const auto& res = ex1_batch();
    const auto* a = res.arm("adaptive");
    const double secs = ex1_seconds();
    Outcome o;
    o.pass = a && a->converged == a->trials && a->trials == 100 && secs < 60.0;
    o.detail = std::to_string(a ? a->converged : 0) + "/" + std::to_string(a ? a->trials : 0) +
               " trials reach |x(20)| < 0.05, max final |x| " + fmt("%.3g", a ? a->final_norm_max : 0.0) +
               ", adaptive batch " + fmt("%.1f", secs) + " s";
    return o;
}

Outcome c2_baseline() {
    const auto& res = ex1_batch();
    const auto* a = res.arm("adaptive");
    const auto* b = res.arm("no-adaptation");
    Outcome o;
    o.pass = a && b && b->diverged >= 1 && b->diverged > a->diverged;
    o.detail = "no adaptation: " + std::to_string(b ? b->diverged : 0) + " failed, adaptation: " +
               std::to_string(a ? a->diverged : 0) + " failed on identical draws";
    return o;
}

Outcome c3_known_rate() {
    const auto cfg = preset_config("ex1");
    const auto model = models::by_name(cfg.model);
    const auto form = backstepping::form_from_string(cfg.backstepping_form);
    const auto uclf = backstepping::uclf(form);
    SimConfig sim = cfg.sim;
    sim.adaptation = false;
    sim.log_stride = 1;
    sim.box = cfg.projection_box;
    double worst = 0.0;
    int bad = 0;
    for (int i = 0; i < 10; ++i) {
        const auto d = draw_trial(cfg.seed, i, cfg.x0_box, cfg.theta_box);
        const auto log = simulate_uclf(model, uclf, cfg.scaling(), cfg.gains(), make_backstepping_controller(form), d.x0,
                                       d.theta_true, {d.theta_true, 0.0}, sim);
        if (log.diverged) ++bad;
        const double V0 = log.certificate.front();
        for (size_t k = 0; k < log.size(); ++k) {
            const double env = V0 * std::exp(-4.0 * log.times[k]);
            if (env > 0.0) worst = std::max(worst, log.certificate[k] / env);
            if (!(log.certificate[k] <= env * 1.02)) ++bad;
        }
    }
    return {bad == 0, "max V(t) / (V(0) e^{-4t}) = " + fmt("%.6f", worst) + " over 10 trials (limit 1.02)"};
}

Outcome c4_composite_descent() {
    const auto& res = ex1_batch();
    const auto cfg = preset_config("ex1");
    const double dt = cfg.sim.dt;
    double worst = -std::numeric_limits<double>::infinity();
    int violations = 0;
    size_t steps = 0;
    for (size_t a = 0; a < res.arms.size(); ++a) {
        if (res.arms[a].arm != "adaptive") continue;
        for (const auto& t : res.trials[a]) {
            const auto& vc = t.log.composite;
            for (size_t k = 0; k + 1 < vc.size(); ++k) {
                const double ratio = (vc[k + 1] - vc[k]) / ((1.0 + vc[k]) * dt);
                worst = std::max(worst, ratio);
                if (ratio > 1e-6) ++violations;
                ++steps;
            }
        }
    }
    return {violations == 0 && steps > 0, std::to_string(steps) + " steps, max (Vc[k+1]-Vc[k]) / ((1+Vc) dt) = " +
                                              fmt("%.3g", worst) + " (limit 1e-6)"};
}

Outcome c5_cancellation() {
    std::mt19937_64 rng(501);
    const ScalingFunction s;
    double worst_v = 0.0, worst_e = 0.0;
    const auto ex1 = preset_config("ex1");
    const auto model1 = models::strict_feedback();
    const auto uclf = backstepping::uclf();
    for (int k = 0; k < 1000; ++k) {
        const Vec x = uniform(rng, 3, -2, 2);
        const AdaptState st{uniform(rng, ex1.theta_box.lower, ex1.theta_box.upper), uniform(rng, 1, -10, 10)[0]};
        const auto gains = AdaptGains::diagonal(uniform(rng, 2, 0.05, 5.0), uniform(rng, 1, 0.1, 100)[0]);
        const auto r = adapt_rhs_uclf(model1, uclf, s, gains, x, st, 0.0);
        const auto v = uclf_value_and_grads(uclf, x, st.theta_hat);
        const auto sv = s.eval(st.rho);
        const double drift = sv.v * v.dV_dtheta.dot(r.theta_hat_dot);
        worst_v = std::max(worst_v, std::abs(sv.v_rho * r.rho_dot * (v.V + gains.eta) + drift) / (1.0 + std::abs(drift)));
    }
    const auto ex2 = preset_config("ex2");
    const auto model2 = models::contracting();
    const auto shipped = shipped_metric(ex2);
    const auto curved = curved_metric(ex2.lambda);
    for (int k = 0; k < 1000; ++k) {
        const bool use_curved = k % 2 == 0;
        const auto& metric = use_curved ? curved : shipped;
        const Vec x = uniform(rng, 3, -1.5, 1.5), xd = uniform(rng, 3, -1.5, 1.5);
        const Vec th = use_curved ? curved_theta(rng) : uniform(rng, ex2.theta_box.lower, ex2.theta_box.upper);
        const AdaptState st{th, uniform(rng, 1, -10, 10)[0]};
        const auto gains = AdaptGains::diagonal(uniform(rng, 4, 0.1, 10.0), uniform(rng, 1, 0.05, 10)[0]);
        const auto geo = solve_geodesic(metric, th, xd, x, 0.0);
        const auto r = adapt_rhs_uccm(model2, metric, s, gains, x, xd, st, geo, 0.0);
        const auto sv = s.eval(st.rho);
        const double drift = sv.v * energy_param_grad(metric, geo, th).dot(r.theta_hat_dot);
        worst_e = std::max(worst_e,
                           std::abs(sv.v_rho * r.rho_dot * (geo.energy + gains.eta) + drift) / (1.0 + std::abs(drift)));
    }
    return {worst_v <= 1e-10 && worst_e <= 1e-10,
            "worst residual V form " + fmt("%.2e", worst_v) + ", E form " + fmt("%.2e", worst_e) + " (limit 1e-10)"};
}

Outcome c6_energy_rate() {
    const auto cfg = preset_config("ex2");
    const auto model = models::contracting();
    const auto metric = shipped_metric(cfg);
    const double lambda = cfg.lambda;
    std::mt19937_64 rng(601);
    double worst = -std::numeric_limits<double>::infinity();
    int violations = 0, failed = 0;
    for (int i = 0; i < 5; ++i) {
        const Vec th = uniform(rng, cfg.theta_box.lower, cfg.theta_box.upper);
        const Vec x0 = uniform(rng, cfg.x0_box.lower, cfg.x0_box.upper);
        SimConfig sim = cfg.sim;
        sim.t_final = 15.0;
        sim.adaptation = false;
        sim.log_stride = 1;
        sim.box = cfg.projection_box;
        const auto log = simulate_uccm(model, metric, cfg.scaling(), cfg.gains(),
                                       make_reference_ex2(ReferenceMode::static_), x0, th, {th, 0.0}, sim);
        if (log.diverged) ++failed;
        const auto& E = log.certificate;
        for (size_t k = 1; k + 1 < E.size(); ++k) {
            const double dt2 = log.times[k + 1] - log.times[k - 1];
            const double fd = (E[k + 1] - E[k - 1]) / dt2;
            const double excess = (fd + 2.0 * lambda * E[k]) / (1.0 + E[k]);
            worst = std::max(worst, excess);
            if (excess > 1e-4) ++violations;
        }
    }
    return {violations == 0 && failed == 0,
            "max (dE/dt + 2 lambda E) / (1 + E) = " + fmt("%.3g", worst) + " over 5 trajectories (limit 1e-4)"};
}

Outcome c7_tracking_comparison() {
    const auto& run = ex2_run();
    const auto* a = run.result.arm("adaptive-reference");
    const auto* s = run.result.arm("static-reference");
    Outcome o;
    o.pass = a && s && a->average_certificate < s->average_certificate && run.seconds_per_arm < 120.0;
    o.detail = "mean E on [5, 30]: adaptive " + fmt("%.4g", a ? a->average_certificate : NAN) + ", static " +
               fmt("%.4g", s ? s->average_certificate : NAN) + ", " + fmt("%.1f", run.seconds_per_arm) + " s per arm";
    return o;
}

Outcome c8_geodesic() {
    std::mt19937_64 rng(801);
    PolynomialMetric flat;
    flat.n = 3;
    flat.p = 4;
    flat.degree = 0;
    for (Index i = 0; i < 3; ++i) flat.terms.push_back({i, i, std::vector<int>(7, 0), 1.0});
    const auto euclid = flat.family(0.5, 1.0, 1.0);
    double worst_line = 0.0;
    for (int k = 0; k < 100; ++k) {
        const Vec xd = uniform(rng, 3, -2, 2), x = uniform(rng, 3, -2, 2);
        const auto g = solve_geodesic(euclid, Vec::Zero(4), xd, x, 0.0);
        worst_line = std::max(worst_line, std::abs(g.energy - (x - xd).squaredNorm()));
        for (Index i = 0; i <= g.segments(); ++i) {
            const double sf = static_cast<double>(i) / static_cast<double>(g.segments());
            worst_line = std::max(worst_line, (g.nodes.row(i).transpose() - (xd + sf * (x - xd))).norm());
        }
    }

    const auto cfg = preset_config("ex2");
    const auto shipped = shipped_metric(cfg);
    const auto curved = curved_metric(0.5);
    GeodesicOptions fine;
    fine.segments = 20;
    double dev_shipped = 0.0, dev_curved20 = 0.0, dev_curved10 = 0.0;
    int above_straight = 0, unconverged = 0;
    auto check = [&](const MetricFamily& m, const Vec& th, const Vec& xd, const Vec& x, const GeodesicOptions& opt) {
        const auto g = solve_geodesic(m, th, xd, x, 0.0, nullptr, opt);
        if (!g.converged) ++unconverged;
        const double straight = discrete_energy(m, detail_geo::straight_line(xd, x, g.segments()), th, 0.0);
        if (g.energy > straight) ++above_straight;
        return speed_deviation(m, g, th, 0.0);
    };
    for (int k = 0; k < 100; ++k) {
        const Vec xd = uniform(rng, 3, -1.5, 1.5), x = uniform(rng, 3, -1.5, 1.5);
        dev_shipped = std::max(dev_shipped, check(shipped, uniform(rng, cfg.theta_box.lower, cfg.theta_box.upper), xd, x,
                                                  GeodesicOptions()));
        const Vec th = curved_theta(rng);
        dev_curved10 = std::max(dev_curved10, check(curved, th, xd, x, GeodesicOptions()));
        dev_curved20 = std::max(dev_curved20, check(curved, th, xd, x, fine));
    }
    Outcome o;
    o.pass = worst_line <= 1e-10 && dev_shipped < 1e-3 && dev_curved20 < 1e-3 && above_straight == 0 && unconverged == 0;
    o.detail = "euclidean error " + fmt("%.2e", worst_line) + "; speed spread shipped " + fmt("%.2e", dev_shipped) +
               ", curved N=20 " + fmt("%.2e", dev_curved20) + " (N=10: " + fmt("%.2e", dev_curved10) +
               "); solves above straight line: " + std::to_string(above_straight) +
               ", unconverged: " + std::to_string(unconverged);
    return o;
}

Outcome c9_validators() {
    const auto ex1 = preset_config("ex1");
    const auto xs = grid_points(Vec::Constant(3, -2.0), Vec::Constant(3, 2.0), {21, 21, 21});
    const auto ths = grid_points(ex1.theta_box.lower, ex1.theta_box.upper, {5, 5});
    const auto uclf_rep = validate_uclf_grid(models::strict_feedback(), backstepping::uclf(), xs, ths);

    // x1' = x1^3 / 3 under W = I: projected C1 is 2 x1^2 + 2 lambda, worst at x1 = 2
    SystemModel::Definition d;
    d.name = "graded";
    d.n = 2;
    d.m = 1;
    d.p = 1;
    d.f = [](const Vec& x, double) { return Vec((Vec(2) << x[0] * x[0] * x[0] / 3.0, 0.0).finished()); };
    d.regressor = [](const Vec&, double) { return Mat::Zero(1, 2); };
    d.input_matrix = [](const Vec&, double) { return Mat((Mat(2, 1) << 0.0, 1.0).finished()); };
    d.jac_f = [](const Vec& x, double) { return Mat((Mat(2, 2) << x[0] * x[0], 0, 0, 0).finished()); };
    d.jac_phi = [](const Vec&, double) { return std::vector<Mat>{Mat::Zero(2, 2)}; };
    d.jac_b = [](const Vec&, double) { return std::vector<Mat>{Mat::Zero(2, 2)}; };
    PolynomialMetric eye;
    eye.n = 2;
    eye.p = 1;
    eye.degree = 0;
    eye.terms = {{0, 0, {0, 0, 0}, 1.0}, {1, 1, {0, 0, 0}, 1.0}};
    const auto bad = validate_metric_grid(eye.family(0.5, 1, 1), SystemModel(d),
                                          grid_points(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0), {9, 5}),
                                          {Vec::Zero(1)}, {});
    const bool located = !bad.pass && std::abs(bad.worst_c1 - 9.0) < 1e-12 && std::abs(std::abs(bad.worst_c1_x[0]) - 2.0) < 1e-15;

    const auto ex2 = preset_config("ex2");
    std::mt19937_64 rng(901);
    std::vector<Vec> thetas;
    for (int k = 0; k < 10; ++k) thetas.push_back(uniform(rng, ex2.theta_box.lower, ex2.theta_box.upper));
    const auto xs2 = grid_points(ex2.validate.x_lower, ex2.validate.x_upper, {10, 10, 10});
    const auto shipped = validate_metric_grid(shipped_metric(ex2), models::contracting(), xs2, thetas,
                                              {Vec::Constant(1, -5.0), Vec::Zero(1), Vec::Constant(1, 5.0)});
    Outcome o;
    o.pass = uclf_rep.pass && uclf_rep.points == 21u * 21u * 21u * 25u && located && shipped.worst_c2 < 1e-8 &&
             xs2.size() * thetas.size() == 10000u;
    o.detail = "uclf grid " + std::to_string(uclf_rep.points) + " points, " + std::to_string(uclf_rep.infeasible) +
               " infeasible; C1 violation at x1 = " + fmt("%.3g", bad.worst_c1_x.size() ? bad.worst_c1_x[0] : NAN) +
               " value " + fmt("%.6g", bad.worst_c1) + "; shipped C2 " + fmt("%.2e", shipped.worst_c2) + " on " +
               std::to_string(xs2.size() * thetas.size()) + " points";
    return o;
}

Outcome c10_gradients() {
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    std::string where;
    auto note = [&](double e, const char* what) {
        if (e > worst) {
            worst = e;
            where = what;
        }
    };
    for (const auto& model : {models::strict_feedback(), models::contracting()}) {
        for (int k = 0; k < 100; ++k) {
            const Vec x = uniform(rng, 3, -2, 2);
            const Vec th = uniform(rng, model.p(), -1, 1);
            const Vec u = uniform(rng, 1, -5, 5);
            note(rel_err(model.jac_f(x, 0.0), fd_jacobian([&](const Vec& y) { return model.f(y, 0.0); }, x)), "jac_f");
            const auto dphi = model.jac_phi(x, 0.0);
            for (Index i = 0; i < model.p(); ++i) {
                const Mat fd = fd_jacobian([&](const Vec& y) { return Vec(model.regressor(y, 0.0).row(i).transpose()); }, x);
                note(rel_err(dphi[static_cast<size_t>(i)], fd), "jac_phi");
            }
            const auto db = model.jac_b(x, 0.0);
            note(rel_err(db[0], fd_jacobian([&](const Vec& y) { return Vec(model.input_matrix(y, 0.0).col(0)); }, x)),
                 "jac_b");
            note(rel_err(closed_loop_jacobian(model, x, th, u, 0.0),
                         fd_jacobian([&](const Vec& y) { return eval_dynamics(model, y, th, u, 0.0); }, x)),
                 "closed loop");
        }
    }
    const auto ex1 = preset_config("ex1");
    for (auto form : {backstepping::Form::rederived, backstepping::Form::printed}) {
        const auto uclf = backstepping::uclf(form);
        for (int k = 0; k < 100; ++k) {
            const Vec x = uniform(rng, 3, -2, 2);
            const Vec th = uniform(rng, ex1.theta_box.lower, ex1.theta_box.upper);
            const auto v = uclf_value_and_grads(uclf, x, th);
            note(rel_err(v.dV_dx, fd_gradient([&](const Vec& y) { return uclf_value_and_grads(uclf, y, th).V; }, x)), "dV/dx");
            note(rel_err(v.dV_dtheta, fd_gradient([&](const Vec& y) { return uclf_value_and_grads(uclf, x, y).V; }, th)),
                 "dV/dtheta");
        }
    }
    const auto ex2 = preset_config("ex2");
    const auto curved = curved_metric(0.5);
    const auto shipped = shipped_metric(ex2);
    for (const auto* m : {&curved, &shipped}) {
        for (int k = 0; k < 100; ++k) {
            const Vec x = uniform(rng, 3, -2, 2);
            const Vec th = curved_theta(rng);
            const auto dx = m->metric_dx(x, th, 0.0);
            const auto dt = m->metric_dtheta(x, th, 0.0);
            for (Index j = 0; j < 3; ++j) {
                note(rel_err(dx[static_cast<size_t>(j)], fd_matrix([&](const Vec& y) { return m->metric(y, th, 0.0); }, x, j)),
                     "dM/dx");
            }
            for (Index j = 0; j < 4; ++j) {
                note(rel_err(dt[static_cast<size_t>(j)], fd_matrix([&](const Vec& y) { return m->metric(x, y, 0.0); }, th, j)),
                     "dM/dtheta");
            }
        }
    }
    GeodesicOptions tight;
    tight.grad_tol = 1e-12;
    tight.rel_decrease_tol = 1e-16;
    for (int k = 0; k < 100; ++k) {
        const Vec xd = uniform(rng, 3, -1.5, 1.5), x = uniform(rng, 3, -1.5, 1.5);
        Vec th = curved_theta(rng);
        th[0] = std::clamp(th[0], 0.1, 0.9);
        const auto g = solve_geodesic(curved, th, xd, x, 0.0, nullptr, tight);
        const Vec fd = fd_gradient([&](const Vec& y) { return solve_geodesic(curved, y, xd, x, 0.0, &g, tight).energy; },
                                   th, 1e-5);
        note(rel_err(energy_param_grad(curved, g, th), fd), "dE/dtheta");
    }
    return {worst <= 1e-4, "worst relative error " + fmt("%.2e", worst) + " (" + where + "), limit 1e-4"};
}

Outcome c11_projection() {
    const auto& run = ex2_run();
    const auto box = *preset_config("ex2").projection_box;
    double worst = 0.0;
    size_t samples = 0;
    for (const auto& log : run.result.logs) {
        for (const auto& th : log.theta_hat) {
            const double below = (box.lower - th).maxCoeff();
            const double above = (th - box.upper).maxCoeff();
            worst = std::max({worst, below, above});
            ++samples;
        }
    }
    return {worst <= 1e-9 && samples > 0,
            std::to_string(samples) + " logged estimates, max distance outside the box " + fmt("%.2e", worst)};
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Compares every CSV below two roots; returns the number of files compared or -1 on a mismatch.
int compare_csv_trees(const fs::path& a, const fs::path& b, std::string& first_diff) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(fs::relative(e.path(), a));
    }
    for (const auto& f : files) {
        if (!fs::exists(b / f) || read_bytes(a / f) != read_bytes(b / f)) {
            first_diff = f.string();
            return -1;
        }
    }
    return static_cast<int>(files.size());
}

Outcome c12_determinism() {
    const fs::path root = fs::temp_directory_path() / "uac_acceptance_determinism";
    fs::remove_all(root);
    std::string diff;
    auto ex1 = preset_config("ex1");
    ex1.workers = 8;
    ex1.output_dir = (root / "ex1_a").string();
    run_monte_carlo_ex1(ex1);
    ex1.workers = 1;
    ex1.output_dir = (root / "ex1_b").string();
    run_monte_carlo_ex1(ex1);
    const int n1 = compare_csv_trees(root / "ex1_a", root / "ex1_b", diff);

    auto ex2 = preset_config("ex2");
    ex2.output_dir = (root / "ex2_a").string();
    run_tracking_ex2(ex2);
    ex2.output_dir = (root / "ex2_b").string();
    run_tracking_ex2(ex2);
    const int n2 = n1 < 0 ? 0 : compare_csv_trees(root / "ex2_a", root / "ex2_b", diff);
    fs::remove_all(root);
    Outcome o;
    o.pass = n1 > 0 && n2 > 0;
    o.detail = o.pass ? std::to_string(n1 + n2) + " CSV files byte-identical across repeated runs"
                      : "mismatch in " + diff;
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"ex1 monte carlo convergence", c1_monte_carlo},
        {"ex1 baseline without adaptation fails more often", c2_baseline},
        {"known-model exponential rate", c3_known_rate},
        {"composite function non-increasing", c4_composite_descent},
        {"rate-scaling cancellation identities", c5_cancellation},
        {"energy decay rate with true parameters", c6_energy_rate},
        {"adaptive reference lowers tracking energy", c7_tracking_comparison},
        {"geodesic solver properties", c8_geodesic},
        {"certificate validators", c9_validators},
        {"analytic gradients against finite differences", c10_gradients},
        {"projection keeps estimates in the box", c11_projection},
        {"byte-identical outputs", c12_determinism},
    };
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
                  << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
    }
    std::cout << (criteria.size() - static_cast<size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
