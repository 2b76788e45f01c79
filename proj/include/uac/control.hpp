#pragma once

// Certainty-equivalence controllers. None of them takes the true parameter.

#include <functional>
#include <string>

#include "uac/core.hpp"
#include "uac/geodesic.hpp"
#include "uac/lyapunov.hpp"
#include "uac/metric.hpp"
#include "uac/model.hpp"
#include "uac/projection.hpp"

namespace uac {

struct ControlOutput {
    Vec u;
    bool constraint_active = false;
    double slack = 0.0;  // a + b u at the returned input
};

/// Printed appendix law of the strict-feedback example, evaluated at theta_hat.
inline double backstepping_control(const Vec& x, const Vec& theta_hat) {
    return backstepping::control(x, theta_hat, backstepping::Form::printed);
}

namespace detail {

// argmin |u - u_ref|^2  s.t.  a + b u <= 0
inline ControlOutput min_norm_projection(double a, const Vec& b, const Vec& u_ref, const char* what) {
    ControlOutput out;
    const double a_ref = a + b.dot(u_ref);
    if (a_ref <= 0.0) {
        out.u = u_ref;
        out.slack = a_ref;
        return out;
    }
    const double bb = b.squaredNorm();
    if (!(std::sqrt(bb) >= 1e-12)) {
        // rounding residue at a coincident point or equilibrium
        if (a_ref <= 1e-12) {
            out.u = u_ref;
            out.slack = a_ref;
            return out;
        }
        throw InfeasibleError(concat(what, ": decrement violated (a = ", a_ref, ") with |b| = ", std::sqrt(bb)));
    }
    out.u = u_ref - (a_ref / bb) * b;
    out.constraint_active = true;
    out.slack = a + b.dot(out.u);
    return out;
}

}  // namespace detail

/// Minimum-norm input achieving dV/dt <= -Q at the estimate.
inline ControlOutput min_norm_clf(const SystemModel& model, const UclfFamily& uclf, const Vec& x, const Vec& theta_hat,
                                  double t) {
    const auto val = uclf_value_and_grads(uclf, x, theta_hat);
    const Vec drift = model.f(x, t) - model.regressor(x, t).transpose() * theta_hat;
    const double a = val.dV_dx.dot(drift) + uclf.decrement_rate * val.V;
    const Vec b = model.input_matrix(x, t).transpose() * val.dV_dx;
    return detail::min_norm_projection(a, b, Vec::Zero(model.m()), "min_norm_clf");
}

/// Input closest to u_d achieving dE/dt <= -2 lambda E under the estimate.
inline ControlOutput min_norm_ccm(const SystemModel& model, const MetricFamily& metric, const Geodesic& geo,
                                  const Vec& x, const Vec& x_d, const Vec& u_d, const Vec& theta_hat, double t) {
    detail::require_size(u_d, model.m(), "min_norm_ccm: u_d");
    if (!geo.converged) throw PreconditionError("min_norm_ccm: geodesic not converged");
    const auto cov = endpoint_covectors(metric, geo, theta_hat, t);
    const Vec drift = model.f(x, t) - model.regressor(x, t).transpose() * theta_hat;
    const Vec ref = eval_dynamics(model, x_d, theta_hat, u_d, t);
    const double a = 2.0 * (cov.end.dot(drift) - cov.start.dot(ref)) +
                     energy_time_derivative(metric, geo, theta_hat, t) + 2.0 * metric.lambda() * geo.energy;
    const Vec b = 2.0 * model.input_matrix(x, t).transpose() * cov.end;
    // the constraint is a + b u <= 0 and the target is u_d
    return detail::min_norm_projection(a, b, u_d, "min_norm_ccm");
}

/// Controller for the regulation task: (x, theta_hat, t) -> input.
using StateController = std::function<ControlOutput(const Vec& x, const Vec& theta_hat, double t)>;

inline StateController make_backstepping_controller(backstepping::Form form) {
    return [form](const Vec& x, const Vec& th, double) {
        ControlOutput out;
        out.u = Vec::Constant(1, backstepping::control(x, th, form));
        return out;
    };
}

inline StateController make_min_norm_clf_controller(SystemModel model, UclfFamily uclf) {
    return [model = std::move(model), uclf = std::move(uclf)](const Vec& x, const Vec& th, double t) {
        return min_norm_clf(model, uclf, x, th, t);
    };
}

inline constexpr const char* kControllerNames[] = {"backstepping", "min-norm-clf", "min-norm-ccm"};

inline bool is_controller_name(const std::string& name) {
    for (const char* c : kControllerNames) {
        if (name == c) return true;
    }
    return false;
}

}  // namespace uac
