#pragma once

// Adaptation driven by the Riemannian energy E of the geodesic joining x_d
// to x:
//
//   theta_hat' = -upsilon(rho) Gamma Delta(x) M(x) gamma_s(1)
//   rho'       = -(upsilon/upsilon_rho) 1/(E + eta) sum_i dE/dtheta_i theta_hat'_i

#include <optional>

#include "uac/core.hpp"
#include "uac/geodesic.hpp"
#include "uac/lyapunov.hpp"
#include "uac/metric.hpp"
#include "uac/model.hpp"
#include "uac/projection.hpp"

namespace uac {

namespace detail {
inline void require_geodesic(const Geodesic& geo, const Vec& x_d, const Vec& x, const char* what) {
    if (!geo.converged) throw PreconditionError(concat(what, ": geodesic not converged"));
    const double scale = 1.0 + x.cwiseAbs().maxCoeff() + x_d.cwiseAbs().maxCoeff();
    if ((geo.start() - x_d).cwiseAbs().maxCoeff() > 1e-9 * scale ||
        (geo.end() - x).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw PreconditionError(concat(what, ": geodesic endpoints do not match (x_d, x)"));
    }
}
}  // namespace detail

/// Rates without the convergence precondition; used inside integrator
/// stages where the geodesic-failure policy is applied by the caller.
inline AdaptRates uccm_rates(const SystemModel& model, const MetricFamily& metric, const ScalingFunction& scaling,
                             const AdaptGains& gains, const Vec& x, const AdaptState& state, const Geodesic& geo,
                             double t, const std::optional<ParameterBox>& box = std::nullopt) {
    const auto cov = endpoint_covectors(metric, geo, state.theta_hat, t);
    const auto s = scaling.eval(state.rho);
    if (!(s.v_rho > 0.0)) throw InvariantViolation("scaling function not strictly increasing");
    AdaptRates out;
    out.theta_hat_dot = -s.v * gains.gamma * (model.regressor(x, t) * cov.end);
    if (box) out.theta_hat_dot = project_rate(state.theta_hat, out.theta_hat_dot, *box);
    Geodesic fixed = geo;
    fixed.converged = true;
    const Vec dE = energy_param_grad(metric, fixed, state.theta_hat, t);
    out.rho_dot = rate_scaling_rhs(scaling, state.rho, geo.energy, dE, out.theta_hat_dot, gains.eta);
    return out;
}

inline AdaptRates adapt_rhs_uccm(const SystemModel& model, const MetricFamily& metric,
                                 const ScalingFunction& scaling, const AdaptGains& gains, const Vec& x,
                                 const Vec& x_d, const AdaptState& state, const Geodesic& geo, double t,
                                 const std::optional<ParameterBox>& box = std::nullopt) {
    detail::require_size(x, model.n(), "adapt_rhs_uccm: x");
    detail::require_size(state.theta_hat, model.p(), "adapt_rhs_uccm: theta_hat");
    detail::require_geodesic(geo, x_d, x, "adapt_rhs_uccm");
    return uccm_rates(model, metric, scaling, gains, x, state, geo, t, box);
}

/// The terms of 1/2 Edot along the true closed loop. Their sum equals
/// 1/2 dE/dt when x_d moves with f(x_d) - Delta(x_d)^T theta_hat + B u_d.
struct EnergyRateReport {
    double term_estimated_system = 0.0;
    double term_reference_model = 0.0;
    double term_mismatch = 0.0;
    double term_param_drift = 0.0;
    double term_time = 0.0;

    double total() const {
        return term_estimated_system + term_reference_model + term_mismatch + term_param_drift + term_time;
    }
};

/// theta_hat_dot defaults to zero (frozen estimate); pass the applied rate to
/// include the drift of the metric under adaptation.
inline EnergyRateReport energy_rate_report(const SystemModel& model, const MetricFamily& metric, const Geodesic& geo,
                                           const Vec& x, const Vec& x_d, const Vec& u, const Vec& u_d,
                                           const AdaptState& state, const Vec& theta_true, double t,
                                           const Vec& theta_hat_dot = Vec()) {
    const Vec& th = state.theta_hat;
    const auto cov = endpoint_covectors(metric, geo, th, t);
    EnergyRateReport r;
    r.term_estimated_system = cov.end.dot(eval_dynamics(model, x, th, u, t));
    r.term_reference_model = -cov.start.dot(eval_dynamics(model, x_d, th, u_d, t));
    r.term_mismatch = cov.end.dot(model.regressor(x, t).transpose() * (th - theta_true));
    if (theta_hat_dot.size() > 0) {
        detail::require_size(theta_hat_dot, model.p(), "energy_rate_report: theta_hat_dot");
        Geodesic fixed = geo;
        fixed.converged = true;
        r.term_param_drift = 0.5 * energy_param_grad(metric, fixed, th, t).dot(theta_hat_dot);
    }
    r.term_time = 0.5 * energy_time_derivative(metric, geo, th, t);
    return r;
}

}  // namespace uac
