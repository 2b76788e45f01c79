#pragma once

// Fixed-step closed-loop simulation of plant, estimator and rate-scaling
// state (and the reference's internal state), stacked into one vector:
//
//   s = [x (n), theta_hat (p), rho (1), reference internal (r)]

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "uac/contraction.hpp"
#include "uac/control.hpp"
#include "uac/core.hpp"
#include "uac/geodesic.hpp"
#include "uac/integrate.hpp"
#include "uac/lyapunov.hpp"
#include "uac/metric.hpp"
#include "uac/model.hpp"
#include "uac/projection.hpp"
#include "uac/reference.hpp"

namespace uac {

/// per_stage re-evaluates controller and adaptation law inside every
/// integrator stage; zero_order_hold evaluates them once at the step start.
enum class FeedbackMode { per_stage, zero_order_hold };

enum class GeodesicFailurePolicy { reuse, abort };

inline FeedbackMode feedback_mode_from_string(const std::string& s) {
    if (s == "per-stage") return FeedbackMode::per_stage;
    if (s == "zoh") return FeedbackMode::zero_order_hold;
    throw ConfigError("unknown feedback mode '" + s + "' (expected per-stage or zoh)");
}
inline const char* to_string(FeedbackMode m) { return m == FeedbackMode::per_stage ? "per-stage" : "zoh"; }

inline GeodesicFailurePolicy geodesic_policy_from_string(const std::string& s) {
    if (s == "reuse") return GeodesicFailurePolicy::reuse;
    if (s == "abort") return GeodesicFailurePolicy::abort;
    throw ConfigError("unknown geodesic failure policy '" + s + "'");
}
inline const char* to_string(GeodesicFailurePolicy p) { return p == GeodesicFailurePolicy::reuse ? "reuse" : "abort"; }

struct SimConfig {
    double dt = 0.005;
    double t_final = 20.0;
    Integrator integrator = Integrator::rk4;
    bool projection = false;
    std::optional<ParameterBox> box;  // required when projection is on
    int log_stride = 1;
    FeedbackMode feedback = FeedbackMode::per_stage;
    bool adaptation = true;  // false: theta_hat and rho frozen
    double divergence_threshold = 1e6;
    GeodesicFailurePolicy geodesic_policy = GeodesicFailurePolicy::reuse;
    GeodesicOptions geodesic;
    // u_d absorbs the matched part of the theta_hat_dot feedthrough and of the
    // estimate mismatch; false uses the generator's u_d as is.
    bool reference_feedthrough = true;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("SimConfig: dt must be > 0");
        if (!(t_final >= dt)) throw ConfigError("SimConfig: t_final must be >= dt");
        if (log_stride < 1) throw ConfigError("SimConfig: log_stride must be >= 1");
        if (projection && !box) throw ConfigError("SimConfig: projection needs a parameter box");
        if (!(divergence_threshold > 0.0)) throw ConfigError("SimConfig: divergence_threshold must be > 0");
    }

    long steps() const { return std::lround(t_final / dt); }

    std::optional<ParameterBox> active_box() const { return projection ? box : std::nullopt; }
};

struct TrajectoryLog {
    std::vector<double> times;
    std::vector<Vec> x;
    std::vector<Vec> theta_hat;
    std::vector<double> rho;
    std::vector<double> upsilon;
    std::vector<Vec> u;
    std::vector<double> certificate;  // V or E
    std::vector<double> composite;    // upsilon (cert + eta) + 1/2 theta_err^T Gamma^-1 theta_err
    std::vector<Vec> x_d;
    std::vector<Vec> u_d;
    std::vector<double> geodesic_residual;
    std::vector<int> constraint_active;
    std::vector<double> reference_residual;

    bool diverged = false;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
    std::string failure;
    int clamp_events = 0;
    int geodesic_failures = 0;
    double wall_time = 0.0;

    size_t size() const { return times.size(); }

    bool consistent() const {
        const size_t k = times.size();
        return x.size() == k && theta_hat.size() == k && rho.size() == k && upsilon.size() == k && u.size() == k &&
               certificate.size() == k && composite.size() == k && x_d.size() == k && u_d.size() == k &&
               geodesic_residual.size() == k && constraint_active.size() == k && reference_residual.size() == k;
    }
};

namespace detail_sim {

struct Layout {
    Index n, p, r;
    Index dim() const { return n + p + 1 + r; }
    Vec x(const Vec& s) const { return s.head(n); }
    Vec th(const Vec& s) const { return s.segment(n, p); }
    double rho(const Vec& s) const { return s[n + p]; }
    Vec internal(const Vec& s) const { return s.tail(r); }
    Vec pack(const Vec& x, const Vec& th, double rho, const Vec& internal) const {
        Vec s(dim());
        s << x, th, rho, internal;
        return s;
    }
};

inline double guard_rho_rate(const ScalingFunction& scaling, double rho, double rate) {
    if (rho >= scaling.rho_max() && rate > 0.0) return 0.0;
    if (rho <= -scaling.rho_max() && rate < 0.0) return 0.0;
    return rate;
}

inline Vec clamp_estimate(const SimConfig& cfg, const Vec& th) { return cfg.projection ? cfg.box->clamp(th) : th; }

// Clamp estimate and rho after a step; counts clamp events.
inline void post_step(const Layout& L, const SimConfig& cfg, const ScalingFunction& scaling, Vec& s,
                      TrajectoryLog& log) {
    if (cfg.projection) {
        bool clamped = false;
        s.segment(L.n, L.p) = clamp_to_box(L.th(s), *cfg.box, &clamped);
        if (clamped) ++log.clamp_events;
    }
    s[L.n + L.p] = scaling.clamp(s[L.n + L.p]);
}

inline void mark_failed(TrajectoryLog& log, double t, const std::string& why) {
    log.diverged = true;
    log.divergence_time = t;
    log.failure = why;
}

}  // namespace detail_sim

// ---------------------------------------------------------------------------

inline TrajectoryLog simulate_uclf(const SystemModel& model, const UclfFamily& uclf, const ScalingFunction& scaling,
                                   const AdaptGains& gains, const StateController& controller, const Vec& x0,
                                   const Vec& theta_true, const AdaptState& adapt_state0, const SimConfig& cfg) {
    cfg.validate();
    gains.validate();
    detail::require_size(x0, model.n(), "simulate_uclf: x0");
    detail::require_size(theta_true, model.p(), "simulate_uclf: theta_true");
    detail::require_size(adapt_state0.theta_hat, model.p(), "simulate_uclf: theta_hat0");
    const auto t_start = std::chrono::steady_clock::now();
    const detail_sim::Layout L{model.n(), model.p(), 0};
    const auto box = cfg.active_box();

    struct Eval {
        Vec deriv;
        ControlOutput ctl;
    };
    // held_u is used in zero-order-hold mode
    auto evaluate = [&](const Vec& s, double t, const Vec* held_u) {
        const Vec x = L.x(s);
        const Vec th = detail_sim::clamp_estimate(cfg, L.th(s));
        const double rho = L.rho(s);
        Eval e;
        if (held_u) {
            e.ctl.u = *held_u;
        } else {
            e.ctl = controller(x, th, t);
        }
        const Vec xdot = eval_dynamics(model, x, theta_true, e.ctl.u, t);
        AdaptRates rates{Vec::Zero(model.p()), 0.0};
        if (cfg.adaptation) rates = adapt_rhs_uclf(model, uclf, scaling, gains, x, {th, rho}, t, box);
        e.deriv = L.pack(xdot, rates.theta_hat_dot, detail_sim::guard_rho_rate(scaling, rho, rates.rho_dot), Vec(0));
        return e;
    };

    TrajectoryLog log;
    Vec s = L.pack(x0, detail_sim::clamp_estimate(cfg, adapt_state0.theta_hat), scaling.clamp(adapt_state0.rho),
                   Vec(0));
    const long N = cfg.steps();
    for (long k = 0; k <= N; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        Eval e0;
        try {
            e0 = evaluate(s, t, nullptr);
        } catch (const Error& err) {
            detail_sim::mark_failed(log, t, err.what());
            break;
        }
        if (k % cfg.log_stride == 0) {
            const Vec th = L.th(s);
            const double V = uclf_value_and_grads(uclf, L.x(s), th).V;
            log.times.push_back(t);
            log.x.push_back(L.x(s));
            log.theta_hat.push_back(th);
            log.rho.push_back(L.rho(s));
            log.upsilon.push_back(scaling.eval(L.rho(s)).v);
            log.u.push_back(e0.ctl.u);
            log.certificate.push_back(V);
            log.composite.push_back(composite_value(V, scaling, gains, {th, L.rho(s)}, theta_true));
            log.x_d.push_back(Vec::Zero(model.n()));
            log.u_d.push_back(Vec::Zero(model.m()));
            log.geodesic_residual.push_back(0.0);
            log.constraint_active.push_back(e0.ctl.constraint_active ? 1 : 0);
            log.reference_residual.push_back(0.0);
        }
        if (k == N) break;
        try {
            StateField field;
            if (cfg.feedback == FeedbackMode::per_stage) {
                field = [&](const Vec& st, double tt) { return evaluate(st, tt, nullptr).deriv; };
            } else {
                const Vec held = e0.ctl.u;
                field = [&, held](const Vec& st, double tt) { return evaluate(st, tt, &held).deriv; };
            }
            s = integrate_step(cfg.integrator, field, s, t, cfg.dt);
            detail_sim::post_step(L, cfg, scaling, s, log);
        } catch (const DivergenceError& err) {
            detail_sim::mark_failed(log, err.time(), err.what());
            break;
        } catch (const Error& err) {
            if (dynamic_cast<const ConfigError*>(&err)) throw;
            detail_sim::mark_failed(log, t, err.what());
            break;
        }
        const double xn = L.x(s).norm();
        if (!(xn <= cfg.divergence_threshold)) {
            detail_sim::mark_failed(log, t + cfg.dt, detail::concat("|x| = ", xn, " exceeds divergence threshold"));
            break;
        }
    }
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return log;
}

// ---------------------------------------------------------------------------

inline TrajectoryLog simulate_uccm(const SystemModel& model, const MetricFamily& metric,
                                   const ScalingFunction& scaling, const AdaptGains& gains,
                                   const ReferenceModel& reference, const Vec& x0, const Vec& theta_true,
                                   const AdaptState& adapt_state0, const SimConfig& cfg) {
    cfg.validate();
    gains.validate();
    detail::require_size(x0, model.n(), "simulate_uccm: x0");
    detail::require_size(theta_true, model.p(), "simulate_uccm: theta_true");
    detail::require_size(adapt_state0.theta_hat, model.p(), "simulate_uccm: theta_hat0");
    if (metric.n() != model.n() || metric.p() != model.p()) throw ConfigError("simulate_uccm: metric/model mismatch");
    const auto t_start = std::chrono::steady_clock::now();
    const detail_sim::Layout L{model.n(), model.p(), reference.internal_dim()};
    const auto box = cfg.active_box();
    const Vec theta0 = detail_sim::clamp_estimate(cfg, adapt_state0.theta_hat);
    const bool adaptive_ref = reference.mode == ReferenceMode::adaptive;

    TrajectoryLog log;
    std::optional<Geodesic> warm;

    struct Eval {
        Vec deriv;
        ControlOutput ctl;
        Geodesic geo;
        Vec x_d;
        Vec u_d;
        double ref_residual = 0.0;
        AdaptRates rates;
    };
    struct Held {
        Vec u;
        AdaptRates rates;
    };

    auto evaluate = [&](const Vec& s, double t, const Held* held) {
        const Vec x = L.x(s);
        const Vec th = detail_sim::clamp_estimate(cfg, L.th(s));
        const double rho = L.rho(s);
        const Vec internal = L.internal(s);
        const Vec& th_ref = adaptive_ref ? th : theta0;
        const ReferenceSample smp = reference.generate(th_ref, t, internal);

        Eval e;
        e.x_d = smp.x_d;
        e.geo = solve_geodesic(metric, th, smp.x_d, x, t, warm ? &*warm : nullptr, cfg.geodesic);
        if (!e.geo.converged) {
            ++log.geodesic_failures;
            if (cfg.geodesic_policy == GeodesicFailurePolicy::abort) {
                throw NumericError(detail::concat("geodesic did not converge (residual ", e.geo.residual, ")"));
            }
            e.geo.converged = true;  // proceed with the best curve found
        }
        warm = e.geo;

        if (held) {
            e.rates = held->rates;
        } else if (cfg.adaptation) {
            e.rates = uccm_rates(model, metric, scaling, gains, x, {th, rho}, e.geo, t, box);
        } else {
            e.rates = {Vec::Zero(model.p()), 0.0};
        }

        Vec xd_dot = smp.x_d_dot;
        if (adaptive_ref && cfg.adaptation && reference.sensitivity) {
            xd_dot += reference.sensitivity(th_ref, t, internal) * e.rates.theta_hat_dot;
        }
        const Mat Bd = model.input_matrix(smp.x_d, t);
        const Vec drift_d = model.f(smp.x_d, t) - model.regressor(smp.x_d, t).transpose() * th;
        if (cfg.reference_feedthrough) {
            const Vec target = xd_dot - drift_d;
            e.u_d = Bd.colPivHouseholderQr().solve(target);
            e.ref_residual = (Bd * e.u_d - target).norm();
        } else {
            e.u_d = smp.u_d;
            e.ref_residual = (xd_dot - drift_d - Bd * e.u_d).norm();
        }

        if (held) {
            e.ctl.u = held->u;
        } else {
            e.ctl = min_norm_ccm(model, metric, e.geo, x, smp.x_d, e.u_d, th, t);
        }
        const Vec xdot = eval_dynamics(model, x, theta_true, e.ctl.u, t);
        e.deriv = L.pack(xdot, e.rates.theta_hat_dot, detail_sim::guard_rho_rate(scaling, rho, e.rates.rho_dot),
                         reference.internal_rate(th_ref, t, internal));
        return e;
    };

    Vec s = L.pack(x0, theta0, scaling.clamp(adapt_state0.rho), reference.internal0);
    const long N = cfg.steps();
    for (long k = 0; k <= N; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        Eval e0;
        try {
            e0 = evaluate(s, t, nullptr);
        } catch (const Error& err) {
            if (dynamic_cast<const ConfigError*>(&err)) throw;
            detail_sim::mark_failed(log, t, err.what());
            break;
        }
        if (k % cfg.log_stride == 0) {
            const Vec th = L.th(s);
            log.times.push_back(t);
            log.x.push_back(L.x(s));
            log.theta_hat.push_back(th);
            log.rho.push_back(L.rho(s));
            log.upsilon.push_back(scaling.eval(L.rho(s)).v);
            log.u.push_back(e0.ctl.u);
            log.certificate.push_back(e0.geo.energy);
            log.composite.push_back(composite_value(e0.geo.energy, scaling, gains, {th, L.rho(s)}, theta_true));
            log.x_d.push_back(e0.x_d);
            log.u_d.push_back(e0.u_d);
            log.geodesic_residual.push_back(e0.geo.residual);
            log.constraint_active.push_back(e0.ctl.constraint_active ? 1 : 0);
            log.reference_residual.push_back(e0.ref_residual);
        }
        if (k == N) break;
        try {
            StateField field;
            if (cfg.feedback == FeedbackMode::per_stage) {
                field = [&](const Vec& st, double tt) { return evaluate(st, tt, nullptr).deriv; };
            } else {
                const Held held{e0.ctl.u, e0.rates};
                field = [&, held](const Vec& st, double tt) { return evaluate(st, tt, &held).deriv; };
            }
            s = integrate_step(cfg.integrator, field, s, t, cfg.dt);
            detail_sim::post_step(L, cfg, scaling, s, log);
        } catch (const DivergenceError& err) {
            detail_sim::mark_failed(log, err.time(), err.what());
            break;
        } catch (const Error& err) {
            if (dynamic_cast<const ConfigError*>(&err)) throw;
            detail_sim::mark_failed(log, t, err.what());
            break;
        }
        const double xn = L.x(s).norm();
        if (!(xn <= cfg.divergence_threshold)) {
            detail_sim::mark_failed(log, t + cfg.dt, detail::concat("|x| = ", xn, " exceeds divergence threshold"));
            break;
        }
    }
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return log;
}

}  // namespace uac
