#pragma once

// Desired trajectories (x_d, u_d) generated under a parameter vector. In
// adaptive mode the generator is driven by the current estimate; in static
// mode by the initial estimate.

#include <cmath>
#include <functional>
#include <string>

#include "uac/core.hpp"
#include "uac/model.hpp"

namespace uac {

enum class ReferenceMode { static_, adaptive };

inline const char* to_string(ReferenceMode m) { return m == ReferenceMode::adaptive ? "adaptive" : "static"; }

inline ReferenceMode reference_mode_from_string(const std::string& s) {
    if (s == "adaptive") return ReferenceMode::adaptive;
    if (s == "static") return ReferenceMode::static_;
    throw ConfigError("unknown reference mode '" + s + "'");
}

struct ReferenceSample {
    Vec x_d;
    Vec x_d_dot;  // with the driving parameter held fixed
    Vec u_d;
};

struct ReferenceModel {
    ReferenceMode mode = ReferenceMode::adaptive;
    Vec internal0;  // initial internal state
    // (theta, t, internal) -> sample
    std::function<ReferenceSample(const Vec& theta, double t, const Vec& internal)> generate;
    // (theta, t, internal) -> d internal / dt
    std::function<Vec(const Vec& theta, double t, const Vec& internal)> internal_rate;
    // (theta, t, internal) -> d x_d / d theta (n x p), explicit dependence only
    std::function<Mat(const Vec& theta, double t, const Vec& internal)> sensitivity;

    Index internal_dim() const { return internal0.size(); }
};

/// Example-2 reference: x1d = sin t, driving parameter (th1, th2, 0, 0).
/// internal = (x2d).
inline ReferenceSample reference_ex2(const Vec& theta_hat, double t, const Vec& internal) {
    detail::require_size(internal, 1, "reference_ex2: internal");
    if (theta_hat.size() < 2) throw ConfigError("reference_ex2: theta_hat needs at least two entries");
    const double th1 = theta_hat[0], th2 = theta_hat[1];
    const double s = std::sin(t), c = std::cos(t);
    const double x2d = internal[0];
    ReferenceSample r;
    r.x_d = Vec(3);
    r.x_d << s, x2d, c + th1 * s;
    r.x_d_dot = Vec(3);
    r.x_d_dot << c, -x2d - th2 * s * s, -s + th1 * c;
    r.u_d = Vec::Constant(1, r.x_d_dot[2] - std::tanh(x2d));
    return r;
}

inline Vec reference_ex2_internal_rate(const Vec& theta_hat, double t, const Vec& internal) {
    const double s = std::sin(t);
    return Vec::Constant(1, -internal[0] - theta_hat[1] * s * s);
}

/// One RK4 step of the internal state with theta_hat frozen; returns the
/// sample at t and the internal state at t + dt.
inline std::pair<ReferenceSample, Vec> reference_ex2_step(const Vec& theta_hat, double t, const Vec& internal,
                                                          double dt) {
    auto rate = [&](const Vec& z, double tt) { return reference_ex2_internal_rate(theta_hat, tt, z); };
    const Vec k1 = rate(internal, t);
    const Vec k2 = rate(internal + 0.5 * dt * k1, t + 0.5 * dt);
    const Vec k3 = rate(internal + 0.5 * dt * k2, t + 0.5 * dt);
    const Vec k4 = rate(internal + dt * k3, t + dt);
    return {reference_ex2(theta_hat, t, internal), internal + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)};
}

inline ReferenceModel make_reference_ex2(ReferenceMode mode, double x2d0 = 0.0) {
    ReferenceModel r;
    r.mode = mode;
    r.internal0 = Vec::Constant(1, x2d0);
    r.generate = reference_ex2;
    r.internal_rate = reference_ex2_internal_rate;
    r.sensitivity = [](const Vec& th, double t, const Vec&) {
        Mat s = Mat::Zero(3, th.size());
        s(2, 0) = std::sin(t);
        return s;
    };
    return r;
}

/// Regulation to the origin.
inline ReferenceModel make_origin_reference(Index n, Index m, Index p) {
    ReferenceModel r;
    r.mode = ReferenceMode::static_;
    r.internal0 = Vec(0);
    r.generate = [n, m](const Vec&, double, const Vec&) {
        return ReferenceSample{Vec::Zero(n), Vec::Zero(n), Vec::Zero(m)};
    };
    r.internal_rate = [](const Vec&, double, const Vec&) { return Vec(0); };
    r.sensitivity = [n, p](const Vec&, double, const Vec&) { return Mat::Zero(n, p); };
    return r;
}

/// x_d_dot - (f(x_d) - Delta(x_d)^T theta + B(x_d) u_d)
inline Vec reference_residual(const SystemModel& model, const ReferenceSample& r, const Vec& theta, double t) {
    return r.x_d_dot - eval_dynamics(model, r.x_d, theta, r.u_d, t);
}

}  // namespace uac
