#pragma once

// Grid validators for the two certificate types.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "uac/core.hpp"
#include "uac/lyapunov.hpp"
#include "uac/metric.hpp"
#include "uac/model.hpp"

namespace uac {

struct UclfValidation {
    size_t points = 0;
    size_t infeasible = 0;
    bool pass = true;
    std::string warning;
    // worst drift excess a = dV/dx (f - Delta^T theta) + Q among points with b ~ 0
    double worst_a = -std::numeric_limits<double>::infinity();
    Vec worst_x;
    Vec worst_theta;
    // smallest |b| among points where the drift alone violates the decrement
    double min_b_where_needed = std::numeric_limits<double>::infinity();
};

/// The min-norm input exists at a point iff a <= 0 or b != 0.
inline UclfValidation validate_uclf_grid(const SystemModel& model, const UclfFamily& uclf,
                                         const std::vector<Vec>& xs, const std::vector<Vec>& thetas,
                                         double t = 0.0, double b_min = 1e-12, double a_tol = 1e-9) {
    UclfValidation r;
    if (xs.empty() || thetas.empty()) {
        r.warning = "empty grid: nothing checked";
        return r;
    }
    for (const auto& th : thetas) {
        for (const auto& x : xs) {
            ++r.points;
            const auto val = uclf_value_and_grads(uclf, x, th);
            const Vec drift = model.f(x, t) - model.regressor(x, t).transpose() * th;
            const double a = val.dV_dx.dot(drift) + uclf.decrement_rate * val.V;
            const double b = (model.input_matrix(x, t).transpose() * val.dV_dx).norm();
            if (a > a_tol * (1.0 + val.V)) {
                r.min_b_where_needed = std::min(r.min_b_where_needed, b);
                if (b < b_min) {
                    ++r.infeasible;
                    if (a > r.worst_a) {
                        r.worst_a = a;
                        r.worst_x = x;
                        r.worst_theta = th;
                    }
                }
            }
        }
    }
    r.pass = r.infeasible == 0;
    return r;
}

struct MetricValidation {
    size_t points = 0;
    bool pass = true;
    std::string warning;
    double worst_c1 = -std::numeric_limits<double>::infinity();
    Vec worst_c1_x, worst_c1_theta, worst_c1_u;
    double worst_c2 = 0.0;
    Vec worst_c2_x, worst_c2_theta;
    double min_metric_eig = std::numeric_limits<double>::infinity();
};

/// check_c1 over grid x theta x inputs (x_dot from the estimated dynamics),
/// check_c2 over grid x theta.
inline MetricValidation validate_metric_grid(const MetricFamily& metric, const SystemModel& model,
                                             const std::vector<Vec>& xs, const std::vector<Vec>& thetas,
                                             const std::vector<Vec>& inputs, double t = 0.0, double c1_tol = 1e-8,
                                             double c2_tol = 1e-8) {
    MetricValidation r;
    if (xs.empty() || thetas.empty()) {
        r.warning = "empty grid: nothing checked";
        return r;
    }
    std::vector<Vec> us = inputs;
    if (us.empty()) us.push_back(Vec::Zero(model.m()));
    for (const auto& th : thetas) {
        for (const auto& x : xs) {
            ++r.points;
            try {
                r.min_metric_eig = std::min(r.min_metric_eig, detail::min_eigenvalue(metric.metric(x, th, t)));
            } catch (const DegeneracyError&) {
                r.min_metric_eig = -std::numeric_limits<double>::infinity();
                r.pass = false;
                r.warning = "metric not positive definite on the grid";
                continue;
            }
            for (const auto& u : us) {
                const Vec xdot = eval_dynamics(model, x, th, u, t);
                const auto c1 = check_c1(metric, model, x, th, u, t, xdot, c1_tol);
                if (c1.max_eig > r.worst_c1) {
                    r.worst_c1 = c1.max_eig;
                    r.worst_c1_x = x;
                    r.worst_c1_theta = th;
                    r.worst_c1_u = u;
                }
                if (!c1.pass) r.pass = false;
            }
            const auto c2 = check_c2(metric, model, x, th, t, c2_tol);
            for (double res : c2.residuals) {
                if (res > r.worst_c2) {
                    r.worst_c2 = res;
                    r.worst_c2_x = x;
                    r.worst_c2_theta = th;
                }
            }
            if (!c2.pass) r.pass = false;
        }
    }
    if (!(r.min_metric_eig > 0.0)) r.pass = false;
    return r;
}

}  // namespace uac
