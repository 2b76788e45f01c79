#pragma once

#include <functional>
#include <string>

#include "uac/core.hpp"

namespace uac {

using StateField = std::function<Vec(const Vec& state, double t)>;

enum class Integrator { rk4, euler };

inline const char* to_string(Integrator i) { return i == Integrator::rk4 ? "rk4" : "euler"; }

inline Integrator integrator_from_string(const std::string& s) {
    if (s == "rk4") return Integrator::rk4;
    if (s == "euler") return Integrator::euler;
    throw ConfigError("unknown integrator '" + s + "'");
}

namespace detail {
inline Vec checked_stage(const StateField& field, const Vec& state, double t) {
    Vec k = field(state, t);
    if (k.size() != state.size()) {
        throw ConfigError(concat("integrator: field returned size ", k.size(), ", expected ", state.size()));
    }
    if (!k.allFinite() || !state.allFinite()) {
        throw DivergenceError(t, state.norm(), concat("non-finite integrator stage at t = ", t));
    }
    return k;
}
}  // namespace detail

inline Vec rk4_step(const StateField& field, const Vec& state, double t, double dt) {
    if (!(dt > 0.0)) throw ConfigError("rk4_step: dt must be > 0");
    const Vec k1 = detail::checked_stage(field, state, t);
    const Vec k2 = detail::checked_stage(field, state + 0.5 * dt * k1, t + 0.5 * dt);
    const Vec k3 = detail::checked_stage(field, state + 0.5 * dt * k2, t + 0.5 * dt);
    const Vec k4 = detail::checked_stage(field, state + dt * k3, t + dt);
    Vec out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw DivergenceError(t + dt, out.norm(), "non-finite state after rk4 step");
    return out;
}

inline Vec euler_step(const StateField& field, const Vec& state, double t, double dt) {
    if (!(dt > 0.0)) throw ConfigError("euler_step: dt must be > 0");
    Vec out = state + dt * detail::checked_stage(field, state, t);
    if (!out.allFinite()) throw DivergenceError(t + dt, out.norm(), "non-finite state after euler step");
    return out;
}

inline Vec integrate_step(Integrator kind, const StateField& field, const Vec& state, double t, double dt) {
    return kind == Integrator::rk4 ? rk4_step(field, state, t, dt) : euler_step(field, state, t, dt);
}

}  // namespace uac
