#pragma once

// Parameter-dependent Riemannian metrics M_theta(x,t), their duals
// W_theta = M_theta^{-1}, and pointwise checks of the dual contraction
// conditions
//
//   C1:  B_perp^T (W A^T + A W - Wdot + 2 lambda W) B_perp <= 0
//   C2:  d_{b_i} W - W (db_i/dx)^T - (db_i/dx) W = 0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "uac/core.hpp"
#include "uac/model.hpp"

namespace uac {

using MetricField = std::function<Mat(const Vec& x, const Vec& theta, double t)>;
using MetricPartials = std::function<std::vector<Mat>(const Vec& x, const Vec& theta, double t)>;

/// A metric family given either through M or through its dual W.
///
/// Whichever representation is supplied is the "primary" one; the other and
/// its partial derivatives follow from d(M^{-1}) = -M^{-1} dM M^{-1}.
class MetricFamily {
   public:
    struct Definition {
        Index n = 0;
        Index p = 0;
        double lambda = 0.5;
        double m_lo = 0.0;  // m_lo I <= M <= m_hi I on the working domain
        double m_hi = 0.0;
        MetricField value;            // M or W
        MetricPartials d_dx;          // n partials
        MetricPartials d_dtheta;      // p partials
        MetricField d_dt;             // optional; empty means time invariant
    };

    MetricFamily() = default;

    static MetricFamily from_metric(Definition d) { return MetricFamily(std::move(d), false); }
    static MetricFamily from_dual(Definition d) { return MetricFamily(std::move(d), true); }

    Index n() const { return def_.n; }
    Index p() const { return def_.p; }
    double lambda() const { return def_.lambda; }
    double m_lo() const { return def_.m_lo; }
    double m_hi() const { return def_.m_hi; }
    bool time_invariant() const { return !def_.d_dt; }
    bool dual_primary() const { return dual_primary_; }

    Mat metric(const Vec& x, const Vec& th, double t) const {
        return dual_primary_ ? invert(primary(x, th, t)) : primary(x, th, t);
    }
    Mat dual(const Vec& x, const Vec& th, double t) const {
        return dual_primary_ ? primary(x, th, t) : invert(primary(x, th, t));
    }

    std::vector<Mat> metric_dx(const Vec& x, const Vec& th, double t) const {
        return convert(x, th, t, def_.d_dx(x, th, t), /*want_dual=*/false);
    }
    std::vector<Mat> metric_dtheta(const Vec& x, const Vec& th, double t) const {
        return convert(x, th, t, def_.d_dtheta(x, th, t), false);
    }
    Mat metric_dt(const Vec& x, const Vec& th, double t) const {
        if (!def_.d_dt) return Mat::Zero(n(), n());
        return convert(x, th, t, {def_.d_dt(x, th, t)}, false).front();
    }
    std::vector<Mat> dual_dx(const Vec& x, const Vec& th, double t) const {
        return convert(x, th, t, def_.d_dx(x, th, t), true);
    }
    std::vector<Mat> dual_dtheta(const Vec& x, const Vec& th, double t) const {
        return convert(x, th, t, def_.d_dtheta(x, th, t), true);
    }
    Mat dual_dt(const Vec& x, const Vec& th, double t) const {
        if (!def_.d_dt) return Mat::Zero(n(), n());
        return convert(x, th, t, {def_.d_dt(x, th, t)}, true).front();
    }

    /// Inverse of a symmetric positive-definite matrix; DegeneracyError otherwise.
    static Mat invert(const Mat& spd) {
        Eigen::LLT<Mat> llt(spd);
        if (llt.info() != Eigen::Success) throw DegeneracyError("metric is not positive definite");
        return llt.solve(Mat::Identity(spd.rows(), spd.cols()));
    }

   private:
    MetricFamily(Definition d, bool dual_primary) : def_(std::move(d)), dual_primary_(dual_primary) {
        if (def_.n <= 0 || def_.p < 0) throw ConfigError("MetricFamily: bad dimensions");
        if (!def_.value || !def_.d_dx || !def_.d_dtheta) {
            throw ConfigError("MetricFamily: value, d_dx and d_dtheta are required");
        }
        if (!(def_.lambda > 0.0)) throw ConfigError("MetricFamily: lambda must be > 0");
    }

    Mat primary(const Vec& x, const Vec& th, double t) const {
        Mat v = def_.value(x, th, t);
        detail::require_shape(v, n(), n(), "metric value");
        return v;
    }

    std::vector<Mat> convert(const Vec& x, const Vec& th, double t, std::vector<Mat> partials, bool want_dual) const {
        if (want_dual == dual_primary_) return partials;
        const Mat other = invert(primary(x, th, t));
        for (auto& d : partials) d = -other * d * other;
        return partials;
    }

    Definition def_;
    bool dual_primary_ = false;
};

// ---------------------------------------------------------------------------
// Polynomial duals

/// W_theta(x) with every upper-triangular entry a polynomial in v = (x, theta).
struct PolynomialMetric {
    struct Term {
        Index i = 0;
        Index j = 0;
        std::vector<int> exponents;  // length n + p
        double coeff = 0.0;
    };

    Index n = 0;
    Index p = 0;
    int degree = 0;
    std::vector<Term> terms;

    Index num_vars() const { return n + p; }

    void validate() const {
        if (n <= 0 || p < 0 || degree < 0) throw ConfigError("PolynomialMetric: bad header");
        for (const auto& term : terms) {
            if (term.i < 0 || term.j < term.i || term.j >= n) {
                throw ConfigError(detail::concat("PolynomialMetric: entry (", term.i, ",", term.j,
                                                 ") is not in the upper triangle"));
            }
            if (static_cast<Index>(term.exponents.size()) != num_vars()) {
                throw ConfigError("PolynomialMetric: exponent tuple has wrong length");
            }
            int total = 0;
            for (int e : term.exponents) {
                if (e < 0) throw ConfigError("PolynomialMetric: negative exponent");
                total += e;
            }
            if (total > degree) throw ConfigError("PolynomialMetric: monomial exceeds declared degree");
            if (!std::isfinite(term.coeff)) throw ConfigError("PolynomialMetric: non-finite coefficient");
        }
    }

    static double monomial(const std::vector<int>& exps, const Vec& v) {
        double out = 1.0;
        for (size_t k = 0; k < exps.size(); ++k) {
            for (int e = 0; e < exps[k]; ++e) out *= v[static_cast<Index>(k)];
        }
        return out;
    }

    // d/dv_k of the monomial.
    static double monomial_d(const std::vector<int>& exps, const Vec& v, size_t k) {
        if (exps[k] == 0) return 0.0;
        double out = static_cast<double>(exps[k]);
        for (size_t q = 0; q < exps.size(); ++q) {
            const int e = q == k ? exps[q] - 1 : exps[q];
            for (int r = 0; r < e; ++r) out *= v[static_cast<Index>(q)];
        }
        return out;
    }

    Vec stack(const Vec& x, const Vec& theta) const {
        detail::require_size(x, n, "PolynomialMetric: x");
        detail::require_size(theta, p, "PolynomialMetric: theta");
        Vec v(n + p);
        v << x, theta;
        return v;
    }

    static void add_sym(Mat& m, Index i, Index j, double val) {
        m(i, j) += val;
        if (i != j) m(j, i) += val;
    }

    Mat dual(const Vec& x, const Vec& theta) const {
        const Vec v = stack(x, theta);
        Mat w = Mat::Zero(n, n);
        for (const auto& term : terms) add_sym(w, term.i, term.j, term.coeff * monomial(term.exponents, v));
        return w;
    }

    // Partials with respect to stacked variable k (x first, then theta).
    Mat dual_dvar(const Vec& v, size_t k) const {
        Mat w = Mat::Zero(n, n);
        for (const auto& term : terms) add_sym(w, term.i, term.j, term.coeff * monomial_d(term.exponents, v, k));
        return w;
    }

    std::vector<Mat> dual_dx(const Vec& x, const Vec& theta) const {
        const Vec v = stack(x, theta);
        std::vector<Mat> out;
        for (Index k = 0; k < n; ++k) out.push_back(dual_dvar(v, static_cast<size_t>(k)));
        return out;
    }

    std::vector<Mat> dual_dtheta(const Vec& x, const Vec& theta) const {
        const Vec v = stack(x, theta);
        std::vector<Mat> out;
        for (Index k = 0; k < p; ++k) out.push_back(dual_dvar(v, static_cast<size_t>(n + k)));
        return out;
    }

    /// True when no monomial involves state variable k.
    bool independent_of_state(Index k) const {
        for (const auto& term : terms) {
            if (term.exponents[static_cast<size_t>(k)] != 0 && term.coeff != 0.0) return false;
        }
        return true;
    }

    MetricFamily family(double lambda, double m_lo, double m_hi) const {
        validate();
        MetricFamily::Definition d;
        d.n = n;
        d.p = p;
        d.lambda = lambda;
        d.m_lo = m_lo;
        d.m_hi = m_hi;
        PolynomialMetric self = *this;
        d.value = [self](const Vec& x, const Vec& th, double) { return self.dual(x, th); };
        d.d_dx = [self](const Vec& x, const Vec& th, double) { return self.dual_dx(x, th); };
        d.d_dtheta = [self](const Vec& x, const Vec& th, double) { return self.dual_dtheta(x, th); };
        return MetricFamily::from_dual(std::move(d));
    }

    /// All monomials of total degree <= degree in the variables flagged active,
    /// one zero-coefficient term per upper-triangular entry and monomial.
    static PolynomialMetric make_template(Index n, Index p, int degree, const std::vector<bool>& active) {
        if (static_cast<Index>(active.size()) != n + p) throw ConfigError("make_template: mask has wrong length");
        std::vector<std::vector<int>> monos;
        std::vector<int> cur(static_cast<size_t>(n + p), 0);
        std::function<void(size_t, int)> rec = [&](size_t k, int left) {
            if (k == cur.size()) {
                monos.push_back(cur);
                return;
            }
            const int top = active[k] ? left : 0;
            for (int e = 0; e <= top; ++e) {
                cur[k] = e;
                rec(k + 1, left - e);
            }
            cur[k] = 0;
        };
        rec(0, degree);
        PolynomialMetric out;
        out.n = n;
        out.p = p;
        out.degree = degree;
        for (Index i = 0; i < n; ++i) {
            for (Index j = i; j < n; ++j) {
                for (const auto& mono : monos) out.terms.push_back({i, j, mono, 0.0});
            }
        }
        return out;
    }
};

// Text format (one record per line, '#' starts a comment):
//   uac-polymetric 1
//   n <n>
//   p <p>
//   degree <d>
//   term <i> <j> <e_1> ... <e_{n+p}> <coefficient>
// Indices are 0-based; exponents index (x_1..x_n, theta_1..theta_p).

inline void write_polynomial_metric(std::ostream& os, const PolynomialMetric& pm) {
    pm.validate();
    os << "uac-polymetric 1\n";
    os << "n " << pm.n << "\np " << pm.p << "\ndegree " << pm.degree << "\n";
    char buf[64];
    for (const auto& term : pm.terms) {
        os << "term " << term.i << ' ' << term.j;
        for (int e : term.exponents) os << ' ' << e;
        std::snprintf(buf, sizeof buf, " %.17g\n", term.coeff);
        os << buf;
    }
}

inline PolynomialMetric read_polynomial_metric(std::istream& is) {
    PolynomialMetric pm;
    std::string line;
    bool have_magic = false;
    bool have_n = false, have_p = false, have_degree = false;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& why) {
            throw ConfigError(detail::concat("polynomial metric line ", lineno, ": ", why));
        };
        if (key == "uac-polymetric") {
            int version = 0;
            if (!(ls >> version) || version != 1) fail("unsupported version");
            have_magic = true;
        } else if (key == "n") {
            if (!(ls >> pm.n)) fail("bad n");
            have_n = true;
        } else if (key == "p") {
            if (!(ls >> pm.p)) fail("bad p");
            have_p = true;
        } else if (key == "degree") {
            if (!(ls >> pm.degree)) fail("bad degree");
            have_degree = true;
        } else if (key == "term") {
            if (!(have_n && have_p && have_degree)) fail("term before header");
            PolynomialMetric::Term term;
            if (!(ls >> term.i >> term.j)) fail("bad entry index");
            term.exponents.resize(static_cast<size_t>(pm.n + pm.p));
            for (auto& e : term.exponents) {
                if (!(ls >> e)) fail("bad exponent");
            }
            if (!(ls >> term.coeff)) fail("bad coefficient");
            std::string extra;
            if (ls >> extra) fail("trailing tokens");
            pm.terms.push_back(std::move(term));
        } else {
            fail("unknown record '" + key + "'");
        }
    }
    if (!have_magic || !have_n || !have_p || !have_degree) throw ConfigError("polynomial metric: incomplete header");
    pm.validate();
    return pm;
}

// ---------------------------------------------------------------------------
// Contraction conditions

/// Orthonormal basis of null(B^T). Empty (n x 0) when m == n.
inline Mat annihilator(const Mat& B) {
    const Index n = B.rows();
    const Index m = B.cols();
    if (m == 0) return Mat::Identity(n, n);
    if (m > n) throw DegeneracyError("annihilator: B has more columns than rows");
    Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    const double tol = std::max(1e-12, 1e-10 * sv[0]);
    if (sv[m - 1] <= tol) throw DegeneracyError("annihilator: B is rank deficient");
    return svd.matrixU().rightCols(n - m);
}

struct C1Report {
    double max_eig = 0.0;
    bool pass = true;
};

/// C1 at one point. Wdot = dW/dt + sum_k dW/dx_k x_dot_k.
inline C1Report check_c1(const MetricFamily& metric, const SystemModel& model, const Vec& x, const Vec& theta,
                         const Vec& u, double t, const Vec& x_dot, double tol = 1e-8) {
    detail::require_size(x_dot, model.n(), "check_c1: x_dot");
    const Mat W = metric.dual(x, theta, t);
    const Mat A = closed_loop_jacobian(model, x, theta, u, t);
    Mat Wdot = metric.dual_dt(x, theta, t);
    const auto dW = metric.dual_dx(x, theta, t);
    for (Index k = 0; k < model.n(); ++k) Wdot += x_dot[k] * dW[static_cast<size_t>(k)];
    const Mat L = W * A.transpose() + A * W - Wdot + 2.0 * metric.lambda() * W;
    const double asym = (L - L.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * (1.0 + L.cwiseAbs().maxCoeff())) {
        throw NumericError(detail::concat("check_c1: assembled matrix not symmetric (", asym, ")"));
    }
    const Mat Bp = annihilator(model.input_matrix(x, t));
    C1Report out;
    if (Bp.cols() == 0) return out;
    out.max_eig = detail::max_eigenvalue(detail::symmetrize(Bp.transpose() * L * Bp));
    out.pass = out.max_eig <= tol;
    return out;
}

struct C2Report {
    std::vector<double> residuals;
    bool pass = true;
};

inline C2Report check_c2(const MetricFamily& metric, const SystemModel& model, const Vec& x, const Vec& theta,
                         double t, double tol = 1e-8) {
    const Mat W = metric.dual(x, theta, t);
    const auto dW = metric.dual_dx(x, theta, t);
    const Mat B = model.input_matrix(x, t);
    const auto dB = model.jac_b(x, t);
    C2Report out;
    for (Index i = 0; i < model.m(); ++i) {
        Mat along = Mat::Zero(model.n(), model.n());
        for (Index k = 0; k < model.n(); ++k) along += B(k, i) * dW[static_cast<size_t>(k)];
        const Mat& db = dB[static_cast<size_t>(i)];
        const double r = (along - W * db.transpose() - db * W).norm();
        out.residuals.push_back(r);
        if (!(r <= tol)) out.pass = false;
    }
    return out;
}

}  // namespace uac
