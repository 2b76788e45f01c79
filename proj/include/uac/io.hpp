#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uac/simulate.hpp"

namespace uac {

namespace detail {
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void append_names(std::vector<std::string>& out, const char* stem, Index count) {
    for (Index i = 1; i <= count; ++i) out.push_back(concat(stem, i));
}
}  // namespace detail

/// One row per logged step; every series gets a column.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
    if (!log.consistent()) throw NumericError("write_trajectory_csv: series lengths differ");
    const Index n = log.x.empty() ? 0 : log.x.front().size();
    const Index p = log.theta_hat.empty() ? 0 : log.theta_hat.front().size();
    const Index m = log.u.empty() ? 0 : log.u.front().size();
    std::vector<std::string> cols{"t"};
    detail::append_names(cols, "x", n);
    detail::append_names(cols, "theta_hat", p);
    cols.insert(cols.end(), {"rho", "upsilon"});
    detail::append_names(cols, "u", m);
    cols.insert(cols.end(), {"certificate", "composite"});
    detail::append_names(cols, "x_d", n);
    detail::append_names(cols, "u_d", m);
    cols.insert(cols.end(), {"geodesic_residual", "constraint_active", "reference_residual"});
    for (size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
    os << '\n';
    auto put_vec = [&](const Vec& v) {
        for (Index i = 0; i < v.size(); ++i) os << ',' << detail::fmt_double(v[i]);
    };
    for (size_t k = 0; k < log.size(); ++k) {
        os << detail::fmt_double(log.times[k]);
        put_vec(log.x[k]);
        put_vec(log.theta_hat[k]);
        os << ',' << detail::fmt_double(log.rho[k]) << ',' << detail::fmt_double(log.upsilon[k]);
        put_vec(log.u[k]);
        os << ',' << detail::fmt_double(log.certificate[k]) << ',' << detail::fmt_double(log.composite[k]);
        put_vec(log.x_d[k]);
        put_vec(log.u_d[k]);
        os << ',' << detail::fmt_double(log.geodesic_residual[k]) << ',' << log.constraint_active[k] << ','
           << detail::fmt_double(log.reference_residual[k]) << '\n';
    }
}

inline nlohmann::json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Structured summary. Contains the wall time, so it is not byte-stable.
inline nlohmann::json trajectory_summary(const TrajectoryLog& log) {
    nlohmann::json j;
    j["steps_logged"] = log.size();
    j["diverged"] = log.diverged;
    if (log.diverged) {
        j["divergence_time"] = log.divergence_time;
        j["failure"] = log.failure;
    }
    if (log.size() > 0) {
        j["final_time"] = log.times.back();
        j["final_state_norm"] = log.x.back().norm();
        j["final_state"] = vec_to_json(log.x.back());
        j["final_theta_hat"] = vec_to_json(log.theta_hat.back());
        j["final_certificate"] = log.certificate.back();
        j["upsilon_min"] = *std::min_element(log.upsilon.begin(), log.upsilon.end());
        j["upsilon_max"] = *std::max_element(log.upsilon.begin(), log.upsilon.end());
    }
    j["clamp_events"] = log.clamp_events;
    j["geodesic_failures"] = log.geodesic_failures;
    j["wall_time_s"] = log.wall_time;
    return j;
}

/// Mean of the certificate over logged times in [t0, t1].
inline double time_average_certificate(const TrajectoryLog& log, double t0, double t1) {
    double acc = 0.0;
    size_t count = 0;
    for (size_t k = 0; k < log.size(); ++k) {
        if (log.times[k] >= t0 - 1e-12 && log.times[k] <= t1 + 1e-12) {
            acc += log.certificate[k];
            ++count;
        }
    }
    if (count == 0) throw ConfigError("time_average_certificate: empty window");
    return acc / static_cast<double>(count);
}

}  // namespace uac
