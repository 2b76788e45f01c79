#pragma once

#include "uac/core.hpp"
#include "uac/model.hpp"

namespace uac {

/// Zero each rate component that would push the estimate out of the box.
inline Vec project_rate(const Vec& theta_hat, const Vec& rate, const ParameterBox& box) {
    detail::require_size(theta_hat, box.dim(), "project_rate: theta_hat");
    detail::require_size(rate, box.dim(), "project_rate: rate");
    if (!box.contains(theta_hat, 1e-9)) {
        throw InvariantViolation("project_rate: estimate outside parameter box");
    }
    Vec out = rate;
    for (Index i = 0; i < rate.size(); ++i) {
        const bool at_upper = theta_hat[i] >= box.upper[i] && rate[i] > 0.0;
        const bool at_lower = theta_hat[i] <= box.lower[i] && rate[i] < 0.0;
        if (at_upper || at_lower) out[i] = 0.0;
    }
    return out;
}

/// Discrete counterpart applied after each integration step.
inline Vec clamp_to_box(const Vec& theta_hat, const ParameterBox& box, bool* clamped = nullptr) {
    Vec out = box.clamp(theta_hat);
    if (clamped) *clamped = (out.array() != theta_hat.array()).any();
    return out;
}

}  // namespace uac
