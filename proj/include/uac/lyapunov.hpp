#pragma once

// Unmatched control Lyapunov functions V_theta(x) = 1/2 |z_theta(x)|^2, the
// rate-scaling function upsilon(rho), and the rate-scaled adaptation law
//
//   theta_hat' = -upsilon(rho) Gamma Delta(x) dV/dx^T
//   rho'       = -(upsilon/upsilon_rho) 1/(V + eta) sum_i dV/dtheta_i theta_hat'_i

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "uac/core.hpp"
#include "uac/model.hpp"
#include "uac/projection.hpp"

namespace uac {

/// upsilon(rho) = a exp(rho / c) + b, with a, b, c > 0.
///
/// rho is clamped to [-rho_max, rho_max] before evaluation so exp never
/// overflows; inside the clamp the function is strictly increasing and >= b.
class ScalingFunction {
   public:
    struct Value {
        double v;
        double v_rho;
    };

    ScalingFunction() : ScalingFunction(0.9, 0.1, 5.0) {}
    ScalingFunction(double a, double b, double c, double rho_max = 500.0)
        : a_(a), b_(b), c_(c), rho_max_(rho_max) {
        if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0) || !(rho_max > 0.0)) {
            throw ConfigError("ScalingFunction: a, b, c and rho_max must be strictly positive");
        }
    }

    double a() const { return a_; }
    double b() const { return b_; }
    double c() const { return c_; }
    double rho_max() const { return rho_max_; }

    double clamp(double rho) const { return std::clamp(rho, -rho_max_, rho_max_); }
    bool saturated(double rho) const { return std::abs(rho) >= rho_max_; }

    Value eval(double rho) const {
        const double e = a_ * std::exp(clamp(rho) / c_);
        return {e + b_, e / c_};
    }

    // Inverse on (b, inf); used for logging.
    double rho_of(double v) const { return c_ * std::log((v - b_) / a_); }

   private:
    double a_;
    double b_;
    double c_;
    double rho_max_;
};

inline ScalingFunction::Value scaling_eval(const ScalingFunction& scaling, double rho) {
    return scaling.eval(rho);
}

struct AdaptGains {
    Mat gamma;
    double eta = 1.0;

    AdaptGains() = default;
    AdaptGains(Mat g, double e) : gamma(std::move(g)), eta(e) { validate(); }

    static AdaptGains diagonal(const Vec& diag, double eta) { return AdaptGains(diag.asDiagonal(), eta); }

    void validate() const {
        if (gamma.rows() != gamma.cols()) throw ConfigError("AdaptGains: Gamma must be square");
        if ((gamma - gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + gamma.cwiseAbs().maxCoeff())) {
            throw ConfigError("AdaptGains: Gamma must be symmetric");
        }
        if (!(detail::min_eigenvalue(gamma) > 0.0)) throw ConfigError("AdaptGains: Gamma must be positive definite");
        if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("AdaptGains: eta must be finite and > 0");
    }

    bool is_diagonal() const { return (gamma - Mat(gamma.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0; }
};

struct AdaptState {
    Vec theta_hat;
    double rho = 0.0;
};

struct AdaptRates {
    Vec theta_hat_dot;
    double rho_dot = 0.0;
};

/// Family of state transformations z = T_theta(x) with V = 1/2 z^T z and
/// decrement Q_theta = decrement_rate * V_theta.
struct UclfFamily {
    Index n = 0;
    Index p = 0;
    std::function<Vec(const Vec& x, const Vec& theta)> transform;
    std::function<Mat(const Vec& x, const Vec& theta)> jac_x;
    std::function<Mat(const Vec& x, const Vec& theta)> jac_theta;
    double decrement_rate = 1.0;
};

struct UclfValue {
    double V = 0.0;
    Vec dV_dx;
    Vec dV_dtheta;
};

inline UclfValue uclf_value_and_grads(const UclfFamily& uclf, const Vec& x, const Vec& theta_hat) {
    detail::require_size(x, uclf.n, "uclf: x");
    detail::require_size(theta_hat, uclf.p, "uclf: theta_hat");
    const Vec z = uclf.transform(x, theta_hat);
    detail::require_finite(z, "uclf transform");
    const Mat jx = uclf.jac_x(x, theta_hat);
    const Mat jt = uclf.jac_theta(x, theta_hat);
    detail::require_shape(jx, z.size(), uclf.n, "uclf jac_x");
    detail::require_shape(jt, z.size(), uclf.p, "uclf jac_theta");
    UclfValue out;
    out.V = 0.5 * z.squaredNorm();
    out.dV_dx = jx.transpose() * z;
    out.dV_dtheta = jt.transpose() * z;
    return out;
}

/// rho' from the certificate value, its parameter gradient and the (possibly
/// projected) estimate rate. Shared by the Lyapunov and contraction laws.
inline double rate_scaling_rhs(const ScalingFunction& scaling, double rho, double certificate,
                               const Vec& dcert_dtheta, const Vec& theta_hat_dot, double eta) {
    const auto s = scaling.eval(rho);
    if (!(s.v_rho > 0.0)) {
        throw InvariantViolation("scaling function not strictly increasing at rho = " + std::to_string(rho));
    }
    return -(s.v / s.v_rho) * dcert_dtheta.dot(theta_hat_dot) / (certificate + eta);
}

/// theta_hat' = -upsilon Gamma Delta(x,t) dV/dx^T, optionally box-projected,
/// followed by rho' computed from the rate actually applied.
inline AdaptRates adapt_rhs_uclf(const SystemModel& model, const UclfFamily& uclf, const ScalingFunction& scaling,
                                 const AdaptGains& gains, const Vec& x, const AdaptState& state, double t,
                                 const std::optional<ParameterBox>& box = std::nullopt);

/// upsilon(rho)(V + eta) + 1/2 (theta_hat - theta)^T Gamma^{-1} (theta_hat - theta)
inline double composite_lyapunov(const UclfFamily& uclf, const ScalingFunction& scaling, const AdaptGains& gains,
                                 const Vec& x, const AdaptState& state, const Vec& theta_true, double /*t*/) {
    Eigen::LDLT<Mat> ldlt(gains.gamma);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || detail::min_eigenvalue(gains.gamma) <= 0.0) {
        throw ConfigError("composite_lyapunov: Gamma is singular");
    }
    const double V = uclf_value_and_grads(uclf, x, state.theta_hat).V;
    const Vec err = state.theta_hat - theta_true;
    return scaling.eval(state.rho).v * (V + gains.eta) + 0.5 * err.dot(ldlt.solve(err));
}

/// Composite function for an arbitrary certificate value (V or E).
inline double composite_value(double certificate, const ScalingFunction& scaling, const AdaptGains& gains,
                              const AdaptState& state, const Vec& theta_true) {
    const Vec err = state.theta_hat - theta_true;
    return scaling.eval(state.rho).v * (certificate + gains.eta) + 0.5 * err.dot(gains.gamma.ldlt().solve(err));
}

// Backstepping design for the strict-feedback example.
//
// Form::printed keeps the legacy closed-form expressions for this example,
// which carry x2^2 where x1^2 belongs and coefficient 3 (not 5) on x1 in z3.
// Its closed loop does NOT satisfy Vdot = -4V; it is kept for comparison.
// Form::rederived is the standard three-step construction
//   z1 = x1, z2 = x1' + 2 z1, z3 = z2' + z1 + 2 z2 (drift parts),
// giving z' = [-2 1 0; -1 -2 1; 0 -1 -2] z and hence Vdot = -4V exactly.
namespace backstepping {

enum class Form { printed, rederived };

inline const char* to_string(Form f) { return f == Form::printed ? "printed" : "rederived"; }

inline Form form_from_string(const std::string& s) {
    if (s == "printed") return Form::printed;
    if (s == "rederived") return Form::rederived;
    throw ConfigError("unknown backstepping form '" + s + "'");
}

namespace detail_bs {
// g = x1' under theta (drift of the first row), h = d z2 / d x1.
struct Parts {
    double s, c, g, h;
};
inline Parts parts(const Vec& x, const Vec& th) {
    const double s = std::sin(x[0]);
    const double c = std::cos(x[0]);
    const double g = x[1] - th[0] * s - th[1] * x[0] * x[0];
    const double h = 2.0 - 2.0 * th[1] * x[0] - th[0] * c;
    return {s, c, g, h};
}
}  // namespace detail_bs

inline Vec transform(const Vec& x, const Vec& theta, Form form) {
    detail::require_size(x, 3, "backstepping x");
    detail::require_size(theta, 2, "backstepping theta");
    const double x1 = x[0], x2 = x[1], x3 = x[2];
    const double t1 = theta[0], t2 = theta[1];
    Vec z(3);
    z[0] = x1;
    z[1] = x2 + 2.0 * x1 - t2 * x1 * x1 - t1 * std::sin(x1);
    if (form == Form::printed) {
        z[2] = x1 + x3 + 2.0 * (-t2 * x2 * x2 + x2 + x1 - t1 * std::sin(x1)) +
               (t2 * x1 * x1 - x2 + t1 * std::sin(x1)) * (2.0 * t2 * x1 - 2.0 + t1 * std::cos(x1));
    } else {
        const auto q = detail_bs::parts(x, theta);
        z[2] = 5.0 * x1 + x3 + 2.0 * q.g + q.g * q.h;
    }
    return z;
}

inline Mat jac_x(const Vec& x, const Vec& theta, Form form) {
    const auto q = detail_bs::parts(x, theta);
    const double t1 = theta[0], t2 = theta[1];
    const double dh_dx1 = -2.0 * t2 + t1 * q.s;
    Mat j = Mat::Zero(3, 3);
    j(0, 0) = 1.0;
    j(1, 0) = q.h;
    j(1, 1) = 1.0;
    if (form == Form::printed) {
        j(2, 0) = 3.0 - 2.0 * t1 * q.c + (q.h - 2.0) * q.h + q.g * dh_dx1;
        j(2, 1) = 2.0 * (1.0 - 2.0 * t2 * x[1]) + q.h;
    } else {
        j(2, 0) = 5.0 + (2.0 + q.h) * (q.h - 2.0) + q.g * dh_dx1;
        j(2, 1) = 2.0 + q.h;
    }
    j(2, 2) = 1.0;
    return j;
}

inline Mat jac_theta(const Vec& x, const Vec& theta, Form form) {
    const auto q = detail_bs::parts(x, theta);
    const double x1 = x[0];
    Mat j = Mat::Zero(3, 2);
    j(1, 0) = -q.s;
    j(1, 1) = -x1 * x1;
    if (form == Form::printed) {
        j(2, 0) = -2.0 * q.s - q.s * q.h - q.g * q.c;
        j(2, 1) = -2.0 * x[1] * x[1] - x1 * x1 * q.h - 2.0 * x1 * q.g;
    } else {
        j(2, 0) = -(2.0 + q.h) * q.s - q.g * q.c;
        j(2, 1) = -(2.0 + q.h) * x1 * x1 - 2.0 * x1 * q.g;
    }
    return j;
}

/// Certainty-equivalence control law evaluated at the estimate.
inline double control(const Vec& x, const Vec& theta_hat, Form form) {
    detail::require_size(x, 3, "backstepping x");
    detail::require_size(theta_hat, 2, "backstepping theta");
    const double x1 = x[0], x2 = x[1], x3 = x[2];
    const double t1 = theta_hat[0], t2 = theta_hat[1];
    if (form == Form::printed) {
        const double sn = std::sin(x1), cs = std::cos(x1);
        const double r = t2 * x1 * x1 - x2 + t1 * sn;
        const double k = 2.0 * t2 * x1 - 2.0 + t1 * cs;
        return r * ((2.0 * t2 * x1 + t1 * cs) * k + (2.0 * t2 - t1 * sn) * r - 2.0 * k - 1.0) -
               2.0 * (x1 + x3 + 2.0 * (-t2 * x2 * x2 + x2 + 2.0 * x1 - t1 * sn) + r * k) - x2 - 2.0 * x1 +
               t2 * x1 * x1 + t1 * sn + x3 * (2.0 * t2 * x1 - 4.0 + t1 * cs);
    }
    const Vec z = transform(x, theta_hat, form);
    const Mat j = jac_x(x, theta_hat, form);
    const double g = detail_bs::parts(x, theta_hat).g;
    return -z[1] - 2.0 * z[2] - j(2, 0) * g - j(2, 1) * x3;
}

/// The uclf family with decrement Q = 4 V.
inline UclfFamily uclf(Form form = Form::rederived) {
    UclfFamily u;
    u.n = 3;
    u.p = 2;
    u.transform = [form](const Vec& x, const Vec& th) { return transform(x, th, form); };
    u.jac_x = [form](const Vec& x, const Vec& th) { return jac_x(x, th, form); };
    u.jac_theta = [form](const Vec& x, const Vec& th) { return jac_theta(x, th, form); };
    u.decrement_rate = 4.0;
    return u;
}

}  // namespace backstepping

/// z_theta(x) in the legacy printed form (see backstepping::Form::printed).
inline Vec backstepping_transform(const Vec& x, const Vec& theta) {
    return backstepping::transform(x, theta, backstepping::Form::printed);
}

// ---------------------------------------------------------------------------

inline AdaptRates adapt_rhs_uclf(const SystemModel& model, const UclfFamily& uclf, const ScalingFunction& scaling,
                                 const AdaptGains& gains, const Vec& x, const AdaptState& state, double t,
                                 const std::optional<ParameterBox>& box) {
    const auto val = uclf_value_and_grads(uclf, x, state.theta_hat);
    const auto s = scaling.eval(state.rho);
    if (!(s.v_rho > 0.0)) throw InvariantViolation("scaling function not strictly increasing");
    AdaptRates out;
    out.theta_hat_dot = -s.v * gains.gamma * (model.regressor(x, t) * val.dV_dx);
    if (box) out.theta_hat_dot = project_rate(state.theta_hat, out.theta_hat_dot, *box);
    out.rho_dot = rate_scaling_rhs(scaling, state.rho, val.V, val.dV_dtheta, out.theta_hat_dot, gains.eta);
    return out;
}

}  // namespace uac
