#pragma once

// Minimum-energy curves between x_d and x under a metric M_theta.
//
// The curve is piecewise linear through nodes c_0 = x_d, ..., c_N = x at
// s_k = k/N. On each segment the speed is N d_k with d_k = c_{k+1} - c_k and
// the metric is averaged over the two end nodes (trapezoidal rule), so
//
//   E = N sum_k d_k^T Mbar_k d_k,   Mbar_k = (M(c_k) + M(c_{k+1})) / 2.
//
// Interior nodes are optimized with a Gauss-Newton preconditioned descent
// (block-tridiagonal model Hessian 2N Mbar) and an Armijo line search, so the
// energy never increases across iterations.

#include <cmath>
#include <optional>
#include <vector>

#include "uac/core.hpp"
#include "uac/metric.hpp"

namespace uac {

struct Geodesic {
    Mat nodes;   // (N+1) x n
    Mat speeds;  // (N+1) x n, gamma_s at the nodes
    double energy = 0.0;
    bool converged = false;
    double residual = 0.0;  // norm of the interior gradient
    int iterations = 0;

    Index segments() const { return nodes.rows() - 1; }
    Vec start() const { return nodes.row(0).transpose(); }
    Vec end() const { return nodes.row(nodes.rows() - 1).transpose(); }
};

struct GeodesicOptions {
    int segments = 10;
    int max_iters = 200;
    double grad_tol = 1e-8;
    double rel_decrease_tol = 1e-12;
};

namespace detail_geo {

struct NodeMetrics {
    std::vector<Mat> M;
};

inline NodeMetrics node_metrics(const MetricFamily& metric, const Mat& nodes, const Vec& theta, double t) {
    NodeMetrics out;
    out.M.reserve(static_cast<size_t>(nodes.rows()));
    for (Index k = 0; k < nodes.rows(); ++k) {
        Mat m = metric.metric(nodes.row(k).transpose(), theta, t);
        Eigen::LLT<Mat> llt(m);
        if (llt.info() != Eigen::Success) {
            throw DegeneracyError(detail::concat("geodesic: metric indefinite at node ", k));
        }
        out.M.push_back(std::move(m));
    }
    return out;
}

inline double energy(const Mat& nodes, const NodeMetrics& nm) {
    const Index N = nodes.rows() - 1;
    double e = 0.0;
    for (Index k = 0; k < N; ++k) {
        const Vec d = (nodes.row(k + 1) - nodes.row(k)).transpose();
        e += d.dot(0.5 * (nm.M[static_cast<size_t>(k)] + nm.M[static_cast<size_t>(k + 1)]) * d);
    }
    return static_cast<double>(N) * e;
}

// Gradient of E with respect to every node (rows), endpoints included.
inline Mat node_gradient(const MetricFamily& metric, const Mat& nodes, const NodeMetrics& nm, const Vec& theta,
                         double t) {
    const Index N = nodes.rows() - 1;
    const Index n = nodes.cols();
    const double dN = static_cast<double>(N);
    Mat g = Mat::Zero(N + 1, n);
    for (Index k = 0; k < N; ++k) {
        const Vec d = (nodes.row(k + 1) - nodes.row(k)).transpose();
        const Mat mbar = 0.5 * (nm.M[static_cast<size_t>(k)] + nm.M[static_cast<size_t>(k + 1)]);
        const Vec md = 2.0 * dN * (mbar * d);
        g.row(k) -= md.transpose();
        g.row(k + 1) += md.transpose();
    }
    if (N == 0) return g;
    // metric variation at each node, from the (at most two) adjacent segments
    for (Index k = 0; k <= N; ++k) {
        const auto dM = metric.metric_dx(nodes.row(k).transpose(), theta, t);
        for (Index q = 0; q < n; ++q) {
            double acc = 0.0;
            const Mat& dm = dM[static_cast<size_t>(q)];
            if (k > 0) {
                const Vec d = (nodes.row(k) - nodes.row(k - 1)).transpose();
                acc += d.dot(dm * d);
            }
            if (k < N) {
                const Vec d = (nodes.row(k + 1) - nodes.row(k)).transpose();
                acc += d.dot(dm * d);
            }
            g(k, q) += 0.5 * dN * acc;
        }
    }
    return g;
}

inline Mat node_speeds(const Mat& nodes) {
    const Index N = nodes.rows() - 1;
    const double dN = static_cast<double>(N);
    Mat s = Mat::Zero(nodes.rows(), nodes.cols());
    if (N == 0) return s;
    s.row(0) = dN * (nodes.row(1) - nodes.row(0));
    s.row(N) = dN * (nodes.row(N) - nodes.row(N - 1));
    for (Index k = 1; k < N; ++k) s.row(k) = 0.5 * dN * (nodes.row(k + 1) - nodes.row(k - 1));
    return s;
}

inline Mat straight_line(const Vec& a, const Vec& b, Index N) {
    Mat nodes(N + 1, a.size());
    for (Index k = 0; k <= N; ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(N);
        nodes.row(k) = ((1.0 - s) * a + s * b).transpose();
    }
    return nodes;
}

inline Vec flatten_interior(const Mat& rows) {
    const Index N = rows.rows() - 1;
    const Index n = rows.cols();
    Vec out((N - 1) * n);
    for (Index k = 1; k < N; ++k) out.segment((k - 1) * n, n) = rows.row(k).transpose();
    return out;
}

}  // namespace detail_geo

inline double discrete_energy(const MetricFamily& metric, const Mat& nodes, const Vec& theta, double t) {
    return detail_geo::energy(nodes, detail_geo::node_metrics(metric, nodes, theta, t));
}

inline Geodesic solve_geodesic(const MetricFamily& metric, const Vec& theta_hat, const Vec& x_d, const Vec& x,
                               double t, const Geodesic* warm_start = nullptr, const GeodesicOptions& opt = {}) {
    using namespace detail_geo;
    detail::require_size(x_d, metric.n(), "solve_geodesic: x_d");
    detail::require_size(x, metric.n(), "solve_geodesic: x");
    if (opt.segments < 1) throw ConfigError("solve_geodesic: need at least one segment");
    const Index N = opt.segments;
    const Index n = metric.n();
    const double dN = static_cast<double>(N);

    Mat nodes = straight_line(x_d, x, N);
    NodeMetrics nm = node_metrics(metric, nodes, theta_hat, t);
    double E = energy(nodes, nm);

    if (warm_start && warm_start->nodes.rows() == N + 1 && warm_start->nodes.cols() == n && N > 1) {
        // Shift the previous curve so that its endpoints match the new ones.
        Mat shifted = warm_start->nodes;
        const Vec d0 = x_d - warm_start->start();
        const Vec d1 = x - warm_start->end();
        for (Index k = 0; k <= N; ++k) {
            const double s = static_cast<double>(k) / dN;
            shifted.row(k) += ((1.0 - s) * d0 + s * d1).transpose();
        }
        shifted.row(0) = x_d.transpose();
        shifted.row(N) = x.transpose();
        try {
            NodeMetrics wm = node_metrics(metric, shifted, theta_hat, t);
            const double ew = energy(shifted, wm);
            if (ew < E) {
                nodes = std::move(shifted);
                nm = std::move(wm);
                E = ew;
            }
        } catch (const DegeneracyError&) {
            // warm start left the region where M is positive definite; keep the straight line
        }
    }

    Geodesic out;
    int iter = 0;
    double gnorm = 0.0;
    bool converged = (N == 1);
    const Index dim = (N - 1) * n;
    while (!converged && iter < opt.max_iters) {
        const Mat G = node_gradient(metric, nodes, nm, theta_hat, t);
        const Vec g = flatten_interior(G);
        gnorm = g.norm();
        if (gnorm <= opt.grad_tol) {
            converged = true;
            break;
        }
        // model Hessian: 2N (Mbar_{k-1} + Mbar_k) on the diagonal, -2N Mbar_k off it
        Mat H = Mat::Zero(dim, dim);
        for (Index k = 0; k < N; ++k) {
            const Mat mbar = dN * (nm.M[static_cast<size_t>(k)] + nm.M[static_cast<size_t>(k + 1)]);
            const Index a = k - 1;  // interior index of node k
            const Index b = k;      // interior index of node k + 1
            if (a >= 0) H.block(a * n, a * n, n, n) += mbar;
            if (b < N - 1) H.block(b * n, b * n, n, n) += mbar;
            if (a >= 0 && b < N - 1) {
                H.block(a * n, b * n, n, n) -= mbar;
                H.block(b * n, a * n, n, n) -= mbar;
            }
        }
        Vec dir;
        Eigen::LLT<Mat> llt(H);
        if (llt.info() == Eigen::Success) {
            dir = -llt.solve(g);
        } else {
            dir = -g;
        }
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        bool accepted = false;
        Mat trial = nodes;
        NodeMetrics tm;
        double et = E;
        for (int ls = 0; ls < 60; ++ls) {
            trial = nodes;
            for (Index k = 1; k < N; ++k) trial.row(k) += step * dir.segment((k - 1) * n, n).transpose();
            try {
                tm = node_metrics(metric, trial, theta_hat, t);
                et = energy(trial, tm);
                if (et <= E + 1e-4 * step * slope) {
                    accepted = true;
                    break;
                }
            } catch (const DegeneracyError&) {
            }
            step *= 0.5;
        }
        ++iter;
        if (!accepted) break;  // no descent possible at working precision
        const double decrease = E - et;
        nodes = std::move(trial);
        nm = std::move(tm);
        const double previous = E;
        E = et;
        if (decrease <= opt.rel_decrease_tol * std::max(previous, 1e-300)) {
            gnorm = flatten_interior(node_gradient(metric, nodes, nm, theta_hat, t)).norm();
            converged = true;
            break;
        }
    }
    if (!converged && dim > 0) {
        gnorm = flatten_interior(node_gradient(metric, nodes, nm, theta_hat, t)).norm();
        converged = gnorm <= opt.grad_tol;
    }
    if (E == 0.0) converged = true;  // coincident endpoints

    out.nodes = std::move(nodes);
    out.speeds = node_speeds(out.nodes);
    out.energy = E;
    out.converged = converged;
    out.residual = gnorm;
    out.iterations = iter;
    return out;
}

/// Covectors at the two endpoints: half the energy gradient at x, and minus
/// half the energy gradient at x_d. On the continuous curve these are
/// M(x) gamma_s(1) and M(x_d) gamma_s(0); with the discrete energy they make
///   1/2 Edot = end^T xdot - start^T x_d_dot   (fixed theta, t)
/// exact at a discrete minimizer.
struct EndpointCovectors {
    Vec end;
    Vec start;
};

inline EndpointCovectors endpoint_covectors(const MetricFamily& metric, const Geodesic& geo, const Vec& theta,
                                            double t) {
    const auto nm = detail_geo::node_metrics(metric, geo.nodes, theta, t);
    const Mat G = detail_geo::node_gradient(metric, geo.nodes, nm, theta, t);
    return {0.5 * G.row(G.rows() - 1).transpose(), -0.5 * G.row(0).transpose()};
}

/// dE/dtheta along the fixed curve (envelope argument). Requires a converged curve.
inline Vec energy_param_grad(const MetricFamily& metric, const Geodesic& geo, const Vec& theta_hat, double t = 0.0) {
    if (!geo.converged) throw PreconditionError("energy_param_grad: geodesic not converged");
    const Index N = geo.segments();
    Vec grad = Vec::Zero(metric.p());
    std::vector<std::vector<Mat>> dM;
    dM.reserve(static_cast<size_t>(N + 1));
    for (Index k = 0; k <= N; ++k) dM.push_back(metric.metric_dtheta(geo.nodes.row(k).transpose(), theta_hat, t));
    for (Index k = 0; k < N; ++k) {
        const Vec d = (geo.nodes.row(k + 1) - geo.nodes.row(k)).transpose();
        for (Index i = 0; i < metric.p(); ++i) {
            const auto si = static_cast<size_t>(i);
            grad[i] += d.dot(0.5 * (dM[static_cast<size_t>(k)][si] + dM[static_cast<size_t>(k + 1)][si]) * d);
        }
    }
    return static_cast<double>(N) * grad;
}

/// dE/dt along the fixed curve; zero for time-invariant metrics.
inline double energy_time_derivative(const MetricFamily& metric, const Geodesic& geo, const Vec& theta_hat,
                                     double t) {
    if (metric.time_invariant()) return 0.0;
    const Index N = geo.segments();
    double acc = 0.0;
    for (Index k = 0; k < N; ++k) {
        const Vec d = (geo.nodes.row(k + 1) - geo.nodes.row(k)).transpose();
        const Mat m = 0.5 * (metric.metric_dt(geo.nodes.row(k).transpose(), theta_hat, t) +
                             metric.metric_dt(geo.nodes.row(k + 1).transpose(), theta_hat, t));
        acc += d.dot(m * d);
    }
    return static_cast<double>(N) * acc;
}

/// Per-segment N^2 d_k^T Mbar_k d_k: the speed of the piecewise-linear curve
/// under the quadrature metric. Constant along an exact geodesic; on a discrete
/// minimizer the spread is O(1/N^2).
inline Vec segment_speed_squares(const MetricFamily& metric, const Geodesic& geo, const Vec& theta, double t) {
    const Index N = geo.segments();
    const auto nm = detail_geo::node_metrics(metric, geo.nodes, theta, t);
    Vec out(N);
    for (Index k = 0; k < N; ++k) {
        const Vec d = (geo.nodes.row(k + 1) - geo.nodes.row(k)).transpose();
        out[k] = static_cast<double>(N * N) * d.dot(0.5 * (nm.M[static_cast<size_t>(k)] + nm.M[static_cast<size_t>(k + 1)]) * d);
    }
    return out;
}

/// Relative standard deviation of the segment speeds; 0 for a degenerate
/// curve (E < 1e-12), where the ratio would only measure rounding noise.
inline double speed_deviation(const MetricFamily& metric, const Geodesic& geo, const Vec& theta, double t) {
    if (geo.energy < 1e-12) return 0.0;
    const Vec s = segment_speed_squares(metric, geo, theta, t);
    const double mean = s.mean();
    return std::sqrt((s.array() - mean).square().mean()) / mean;
}

/// Node values gamma_s^T M(gamma) gamma_s from the node speed estimates.
inline Vec node_speed_squares(const MetricFamily& metric, const Geodesic& geo, const Vec& theta, double t) {
    Vec out(geo.nodes.rows());
    for (Index k = 0; k < geo.nodes.rows(); ++k) {
        const Vec s = geo.speeds.row(k).transpose();
        out[k] = s.dot(metric.metric(geo.nodes.row(k).transpose(), theta, t) * s);
    }
    return out;
}

}  // namespace uac
