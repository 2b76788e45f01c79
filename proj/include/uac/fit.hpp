#pragma once

// Sampled fitting of a polynomial dual metric. Every constraint is linear in
// the coefficients c, so per sample we precompute
//   L_j = B_perp^T (W_j A^T + A W_j - Wdot_j + 2 lambda W_j) B_perp
//   R_ij = d_{b_i} W_j - W_j db_i^T - db_i W_j
// for each basis dual W_j and minimize
//   mean_s [ relu(lmax(sum_j c_j L_j) + margin)^2 + |sum_j c_j R_j|_F^2
//            + relu(w_lo - lmin(W))^2 + relu(lmax(W) - w_hi)^2 ]
// by Adam with eigenvector subgradients. Wdot uses the drift at u = 0; once
// C2 holds the projected condition no longer depends on u for constant B.

#include <algorithm>
#include <cmath>
#include <vector>

#include "uac/core.hpp"
#include "uac/metric.hpp"
#include "uac/model.hpp"

namespace uac {

/// Uniform tensor grid over [lo, hi]; a count of 1 places the midpoint.
inline std::vector<Vec> grid_points(const Vec& lo, const Vec& hi, const std::vector<int>& counts) {
    if (lo.size() != hi.size() || static_cast<Index>(counts.size()) != lo.size()) {
        throw ConfigError("grid_points: dimension mismatch");
    }
    std::vector<Vec> out;
    for (int c : counts) {
        if (c < 0) throw ConfigError("grid_points: negative count");
        if (c == 0) return out;
    }
    const Index d = lo.size();
    std::vector<int> idx(static_cast<size_t>(d), 0);
    while (true) {
        Vec v(d);
        for (Index k = 0; k < d; ++k) {
            const int c = counts[static_cast<size_t>(k)];
            const double s = c == 1 ? 0.5 : static_cast<double>(idx[static_cast<size_t>(k)]) / (c - 1);
            v[k] = lo[k] + s * (hi[k] - lo[k]);
        }
        out.push_back(std::move(v));
        Index k = 0;
        for (; k < d; ++k) {
            auto& i = idx[static_cast<size_t>(k)];
            if (++i < counts[static_cast<size_t>(k)]) break;
            i = 0;
        }
        if (k == d) break;
    }
    return out;
}

/// State samples and parameter samples; the fit uses their product.
struct SampleGrid {
    std::vector<Vec> x;
    std::vector<Vec> theta;

    size_t size() const { return x.size() * theta.size(); }

    static SampleGrid make(const Vec& x_lo, const Vec& x_hi, const std::vector<int>& x_counts,
                           const ParameterBox& theta_box, const std::vector<int>& theta_counts) {
        return {grid_points(x_lo, x_hi, x_counts), grid_points(theta_box.lower, theta_box.upper, theta_counts)};
    }
};

struct FitOptions {
    double margin = 0.05;  // target for -lmax of the projected C1 matrix
    double w_lo = 0.1;     // eigenvalue bounds on W
    double w_hi = 100.0;
    int iterations = 4000;
    double learning_rate = 0.02;
    double c1_tol = 0.0;  // accept when every sample has lmax <= c1_tol
    double c2_tol = 1e-8;
};

struct FitResult {
    PolynomialMetric metric;
    double worst_c1 = 0.0;
    Vec worst_c1_x;
    Vec worst_c1_theta;
    double worst_c2 = 0.0;
    double min_w_eig = 0.0;
    double max_w_eig = 0.0;
    double final_loss = 0.0;
    int iterations = 0;
    bool feasible = false;
};

namespace detail_fit {

// Per-sample constraint data, one column per coefficient, matrices stored
// column-major as vectors.
struct Sample {
    Vec x, theta;
    Mat L;  // (q*q) x J
    Mat R;  // (m*n*n) x J
    Mat W;  // (n*n) x J
};

inline Mat as_matrix(const Vec& flat, Index rows) {
    return Eigen::Map<const Mat>(flat.data(), rows, flat.size() / rows);
}

inline Vec flat(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

struct Eigen1 {
    double value;
    Vec vec;
};

inline Eigen1 extreme_eig(const Mat& sym, bool largest) {
    Eigen::SelfAdjointEigenSolver<Mat> es(detail::symmetrize(sym));
    const Index k = largest ? sym.rows() - 1 : 0;
    return {es.eigenvalues()[k], es.eigenvectors().col(k)};
}

}  // namespace detail_fit

inline FitResult fit_metric(const SystemModel& model, const PolynomialMetric& templ, double lambda,
                            const SampleGrid& grid, const FitOptions& opt = {}) {
    templ.validate();
    if (templ.n != model.n() || templ.p != model.p()) throw ConfigError("fit_metric: template/model mismatch");
    if (!(lambda > 0.0)) throw ConfigError("fit_metric: lambda must be > 0");
    if (grid.size() == 0) throw ConfigError("fit_metric: empty sample grid");
    const Index n = model.n();
    const size_t J = templ.terms.size();
    if (J == 0) throw ConfigError("fit_metric: template has no terms");

    // basis duals: one template term with unit coefficient
    std::vector<PolynomialMetric> basis(J);
    for (size_t j = 0; j < J; ++j) {
        basis[j] = templ;
        basis[j].terms = {templ.terms[j]};
        basis[j].terms[0].coeff = 1.0;
    }

    std::vector<detail_fit::Sample> samples;
    samples.reserve(grid.size());
    const Vec zero_u = Vec::Zero(model.m());
    for (const auto& th : grid.theta) {
        for (const auto& x : grid.x) {
            detail_fit::Sample s{x, th, {}, {}, {}};
            const Mat A = closed_loop_jacobian(model, x, th, zero_u, 0.0);
            const Mat B = model.input_matrix(x, 0.0);
            const Mat Bp = annihilator(B);
            const auto dB = model.jac_b(x, 0.0);
            const Vec xdot = eval_dynamics(model, x, th, zero_u, 0.0);
            const Index q = Bp.cols();
            s.L.resize(q * q, static_cast<Index>(J));
            s.R.resize(model.m() * n * n, static_cast<Index>(J));
            s.W.resize(n * n, static_cast<Index>(J));
            for (size_t j = 0; j < J; ++j) {
                const auto col = static_cast<Index>(j);
                const Mat W = basis[j].dual(x, th);
                const auto dW = basis[j].dual_dx(x, th);
                Mat Wdot = Mat::Zero(n, n);
                for (Index k = 0; k < n; ++k) Wdot += xdot[k] * dW[static_cast<size_t>(k)];
                if (q > 0) {
                    s.L.col(col) =
                        detail_fit::flat(Bp.transpose() * (W * A.transpose() + A * W - Wdot + 2.0 * lambda * W) * Bp);
                }
                for (Index i = 0; i < model.m(); ++i) {
                    Mat along = Mat::Zero(n, n);
                    for (Index k = 0; k < n; ++k) along += B(k, i) * dW[static_cast<size_t>(k)];
                    const Mat& db = dB[static_cast<size_t>(i)];
                    s.R.col(col).segment(i * n * n, n * n) = detail_fit::flat(along - W * db.transpose() - db * W);
                }
                s.W.col(col) = detail_fit::flat(W);
            }
            samples.push_back(std::move(s));
        }
    }
    const bool c1_vacuous = samples.front().L.rows() == 0;
    const Index q = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(samples.front().L.rows()))));

    Vec c = Vec::Zero(static_cast<Index>(J));
    for (size_t j = 0; j < J; ++j) {
        const auto& term = templ.terms[j];
        const bool constant = std::all_of(term.exponents.begin(), term.exponents.end(), [](int e) { return e == 0; });
        if (constant && term.i == term.j) c[static_cast<Index>(j)] = 1.0;
    }

    const double inv_s = 1.0 / static_cast<double>(samples.size());
    auto loss_and_grad = [&](const Vec& coeffs, Vec* grad) {
        double loss = 0.0;
        if (grad) grad->setZero(coeffs.size());
        for (const auto& s : samples) {
            if (!c1_vacuous) {
                const auto top = detail_fit::extreme_eig(detail_fit::as_matrix(s.L * coeffs, q), true);
                const double h = top.value + opt.margin;
                if (h > 0.0) {
                    loss += h * h;
                    if (grad) *grad += 2.0 * h * (s.L.transpose() * detail_fit::flat(top.vec * top.vec.transpose()));
                }
            }
            const Vec R = s.R * coeffs;
            if (R.size() > 0) {
                loss += R.squaredNorm();
                if (grad) *grad += 2.0 * (s.R.transpose() * R);
            }
            const Mat W = detail_fit::as_matrix(s.W * coeffs, n);
            const auto lo = detail_fit::extreme_eig(W, false);
            const auto hi = detail_fit::extreme_eig(W, true);
            const double gl = opt.w_lo - lo.value;
            const double gh = hi.value - opt.w_hi;
            if (gl > 0.0) {
                loss += gl * gl;
                if (grad) *grad -= 2.0 * gl * (s.W.transpose() * detail_fit::flat(lo.vec * lo.vec.transpose()));
            }
            if (gh > 0.0) {
                loss += gh * gh;
                if (grad) *grad += 2.0 * gh * (s.W.transpose() * detail_fit::flat(hi.vec * hi.vec.transpose()));
            }
        }
        if (grad) *grad *= inv_s;
        return loss * inv_s;
    };

    // Adam
    const double b1 = 0.9, b2 = 0.999, eps = 1e-12;
    Vec mom = Vec::Zero(c.size()), vel = Vec::Zero(c.size()), g(c.size());
    FitResult out;
    int it = 0;
    for (; it < opt.iterations; ++it) {
        const double loss = loss_and_grad(c, &g);
        out.final_loss = loss;
        if (loss == 0.0) break;
        mom = b1 * mom + (1.0 - b1) * g;
        vel = b2 * vel + (1.0 - b2) * g.cwiseProduct(g);
        const double corr1 = 1.0 - std::pow(b1, it + 1);
        const double corr2 = 1.0 - std::pow(b2, it + 1);
        c.array() -= opt.learning_rate * (mom.array() / corr1) / ((vel.array() / corr2).sqrt() + eps);
    }
    out.iterations = it;
    out.final_loss = loss_and_grad(c, nullptr);

    out.metric = templ;
    for (size_t j = 0; j < J; ++j) out.metric.terms[j].coeff = c[static_cast<Index>(j)];
    out.worst_c1 = -std::numeric_limits<double>::infinity();
    out.min_w_eig = std::numeric_limits<double>::infinity();
    out.max_w_eig = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        if (!c1_vacuous) {
            const double top = detail::max_eigenvalue(detail::symmetrize(detail_fit::as_matrix(s.L * c, q)));
            if (top > out.worst_c1) {
                out.worst_c1 = top;
                out.worst_c1_x = s.x;
                out.worst_c1_theta = s.theta;
            }
        }
        out.worst_c2 = std::max(out.worst_c2, (s.R * c).norm());
        const Mat W = detail::symmetrize(detail_fit::as_matrix(s.W * c, n));
        out.min_w_eig = std::min(out.min_w_eig, detail::min_eigenvalue(W));
        out.max_w_eig = std::max(out.max_w_eig, detail::max_eigenvalue(W));
    }
    out.feasible = out.worst_c1 <= opt.c1_tol && out.worst_c2 <= opt.c2_tol && out.min_w_eig > 0.0;
    return out;
}

/// Fitted coefficients; SynthesisFailure when the sampled conditions are not met.
inline PolynomialMetric fit_metric_coeffs(const SystemModel& model, const PolynomialMetric& templ, double lambda,
                                          const SampleGrid& grid, const FitOptions& opt = {}) {
    auto res = fit_metric(model, templ, lambda, grid, opt);
    if (!res.feasible) {
        std::ostringstream os;
        os << "metric fit failed: worst C1 eigenvalue " << res.worst_c1;
        if (res.worst_c1_x.size() > 0) {
            os << " at x = [" << res.worst_c1_x.transpose() << "], theta = [" << res.worst_c1_theta.transpose()
               << "]";
        }
        os << "; worst C2 residual " << res.worst_c2 << "; min eig(W) " << res.min_w_eig;
        throw SynthesisFailure(os.str());
    }
    return res.metric;
}

inline PolynomialMetric fit_metric_coeffs(const SystemModel& model, const PolynomialMetric& templ, double lambda,
                                          const std::vector<Vec>& x_samples, const ParameterBox& theta_box,
                                          const std::vector<int>& theta_counts, const FitOptions& opt = {}) {
    SampleGrid grid{x_samples, grid_points(theta_box.lower, theta_box.upper, theta_counts)};
    return fit_metric_coeffs(model, templ, lambda, grid, opt);
}

}  // namespace uac
