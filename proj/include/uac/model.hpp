#pragma once

// Uncertain dynamics  xdot = f(x,t) - Delta(x,t)^T theta + B(x,t) u.
//
// Sign convention: the regressor Delta (p x n, rows phi_i) is stored without
// the minus sign; eval_dynamics applies it. Parameter values of the built-in
// systems therefore read exactly as in their defining equations.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uac/core.hpp"

namespace uac {

using VectorField = std::function<Vec(const Vec& x, double t)>;
using MatrixField = std::function<Mat(const Vec& x, double t)>;
using JacobianList = std::function<std::vector<Mat>(const Vec& x, double t)>;

/// Axis-aligned parameter set used by the projection operator.
struct ParameterBox {
    Vec lower;
    Vec upper;

    ParameterBox() = default;
    ParameterBox(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) { validate(); }

    Index dim() const { return lower.size(); }

    void validate() const {
        if (lower.size() != upper.size()) throw ConfigError("ParameterBox: lower/upper size mismatch");
        for (Index i = 0; i < lower.size(); ++i) {
            if (!(lower[i] <= upper[i])) {
                throw ConfigError(detail::concat("ParameterBox: lower[", i, "] > upper[", i, "]"));
            }
        }
    }

    bool contains(const Vec& theta, double tol = 0.0) const {
        return ((theta.array() >= lower.array() - tol) && (theta.array() <= upper.array() + tol)).all();
    }

    Vec center() const { return 0.5 * (lower + upper); }

    Vec clamp(const Vec& theta) const { return theta.cwiseMax(lower).cwiseMin(upper); }
};

/// Immutable description of one uncertain system. All callables are pure.
class SystemModel {
   public:
    struct Definition {
        std::string name;
        Index n = 0;
        Index m = 0;
        Index p = 0;
        VectorField f;
        MatrixField regressor;     // p x n, rows phi_i
        MatrixField input_matrix;  // n x m, columns b_i
        MatrixField jac_f;         // n x n
        JacobianList jac_phi;      // p matrices d(phi_i^T)/dx
        JacobianList jac_b;        // m matrices d(b_i)/dx
    };

    SystemModel() = default;
    explicit SystemModel(Definition def) : def_(std::move(def)) {
        if (def_.n <= 0 || def_.m < 0 || def_.p < 0) throw ConfigError("SystemModel: bad dimensions");
        if (!def_.f || !def_.regressor || !def_.input_matrix) {
            throw ConfigError("SystemModel: f, regressor and input_matrix are required");
        }
    }

    const std::string& name() const { return def_.name; }
    Index n() const { return def_.n; }
    Index m() const { return def_.m; }
    Index p() const { return def_.p; }

    bool has_jacobians() const { return def_.jac_f && def_.jac_phi && def_.jac_b; }

    Vec f(const Vec& x, double t) const {
        Vec out = def_.f(x, t);
        detail::require_size(out, n(), "f(x,t)");
        return out;
    }
    Mat regressor(const Vec& x, double t) const {
        Mat out = def_.regressor(x, t);
        detail::require_shape(out, p(), n(), "regressor(x,t)");
        return out;
    }
    Mat input_matrix(const Vec& x, double t) const {
        Mat out = def_.input_matrix(x, t);
        detail::require_shape(out, n(), m(), "input_matrix(x,t)");
        return out;
    }
    Mat jac_f(const Vec& x, double t) const {
        if (!def_.jac_f) throw ConfigError(name() + ": missing jac_f");
        Mat out = def_.jac_f(x, t);
        detail::require_shape(out, n(), n(), "jac_f(x,t)");
        return out;
    }
    std::vector<Mat> jac_phi(const Vec& x, double t) const {
        if (!def_.jac_phi) throw ConfigError(name() + ": missing jac_phi");
        auto out = def_.jac_phi(x, t);
        check_list(out, p(), "jac_phi(x,t)");
        return out;
    }
    std::vector<Mat> jac_b(const Vec& x, double t) const {
        if (!def_.jac_b) throw ConfigError(name() + ": missing jac_b");
        auto out = def_.jac_b(x, t);
        check_list(out, m(), "jac_b(x,t)");
        return out;
    }

   private:
    void check_list(const std::vector<Mat>& list, Index count, const char* what) const {
        if (static_cast<Index>(list.size()) != count) {
            throw ConfigError(detail::concat(what, ": expected ", count, " matrices, got ", list.size()));
        }
        for (const auto& m : list) detail::require_shape(m, n(), n(), what);
    }

    Definition def_;
};

/// f(x,t) - Delta(x,t)^T theta + B(x,t) u
inline Vec eval_dynamics(const SystemModel& model, const Vec& x, const Vec& theta, const Vec& u,
                         double t) {
    detail::require_size(x, model.n(), "eval_dynamics: x");
    detail::require_size(theta, model.p(), "eval_dynamics: theta");
    detail::require_size(u, model.m(), "eval_dynamics: u");
    Vec xdot = model.f(x, t) - model.regressor(x, t).transpose() * theta + model.input_matrix(x, t) * u;
    detail::require_finite(xdot, "eval_dynamics");
    return xdot;
}

/// A_theta = df/dx - sum_i theta_i d(phi_i)/dx + sum_i u_i d(b_i)/dx
inline Mat closed_loop_jacobian(const SystemModel& model, const Vec& x, const Vec& theta, const Vec& u,
                                double t) {
    detail::require_size(x, model.n(), "closed_loop_jacobian: x");
    detail::require_size(theta, model.p(), "closed_loop_jacobian: theta");
    detail::require_size(u, model.m(), "closed_loop_jacobian: u");
    if (!model.has_jacobians()) throw ConfigError(model.name() + ": closed_loop_jacobian needs all Jacobians");
    Mat a = model.jac_f(x, t);
    const auto dphi = model.jac_phi(x, t);
    for (Index i = 0; i < model.p(); ++i) a -= theta[i] * dphi[static_cast<size_t>(i)];
    const auto db = model.jac_b(x, t);
    for (Index i = 0; i < model.m(); ++i) a += u[i] * db[static_cast<size_t>(i)];
    return a;
}

namespace models {

inline constexpr const char* kStrictFeedbackName = "ex1-strict-feedback";
inline constexpr const char* kContractingName = "ex2-contracting";

namespace detail_models {
inline Mat last_column_input(const Vec&, double) {
    Mat b = Mat::Zero(3, 1);
    b(2, 0) = 1.0;
    return b;
}
inline std::vector<Mat> zero_list(Index count) { return std::vector<Mat>(static_cast<size_t>(count), Mat::Zero(3, 3)); }
}  // namespace detail_models

/// x1' = x2 - th1 sin x1 - th2 x1^2,  x2' = x3,  x3' = u
inline SystemModel strict_feedback() {
    SystemModel::Definition d;
    d.name = kStrictFeedbackName;
    d.n = 3;
    d.m = 1;
    d.p = 2;
    d.f = [](const Vec& x, double) {
        Vec out(3);
        out << x[1], x[2], 0.0;
        return out;
    };
    d.regressor = [](const Vec& x, double) {
        Mat delta = Mat::Zero(2, 3);
        delta(0, 0) = std::sin(x[0]);
        delta(1, 0) = x[0] * x[0];
        return delta;
    };
    d.input_matrix = detail_models::last_column_input;
    d.jac_f = [](const Vec&, double) {
        Mat j = Mat::Zero(3, 3);
        j(0, 1) = 1.0;
        j(1, 2) = 1.0;
        return j;
    };
    d.jac_phi = [](const Vec& x, double) {
        auto list = detail_models::zero_list(2);
        list[0](0, 0) = std::cos(x[0]);
        list[1](0, 0) = 2.0 * x[0];
        return list;
    };
    d.jac_b = [](const Vec&, double) { return detail_models::zero_list(1); };
    return SystemModel(std::move(d));
}

/// x1' = x3 - th1 x1,  x2' = -x2 - th2 x1^2,  x3' = tanh(x2) - th3 x3 - th4 x1^2 + u
///
/// Regressor rows: phi1 = (x1,0,0), phi2 = (0,x1^2,0), phi3 = (0,0,x3), phi4 = (0,0,x1^2).
/// This is the only split of the uncertain terms into one row per parameter.
inline SystemModel contracting() {
    SystemModel::Definition d;
    d.name = kContractingName;
    d.n = 3;
    d.m = 1;
    d.p = 4;
    d.f = [](const Vec& x, double) {
        Vec out(3);
        out << x[2], -x[1], std::tanh(x[1]);
        return out;
    };
    d.regressor = [](const Vec& x, double) {
        Mat delta = Mat::Zero(4, 3);
        delta(0, 0) = x[0];
        delta(1, 1) = x[0] * x[0];
        delta(2, 2) = x[2];
        delta(3, 2) = x[0] * x[0];
        return delta;
    };
    d.input_matrix = detail_models::last_column_input;
    d.jac_f = [](const Vec& x, double) {
        Mat j = Mat::Zero(3, 3);
        const double c = std::cosh(x[1]);
        j(0, 2) = 1.0;
        j(1, 1) = -1.0;
        j(2, 1) = 1.0 / (c * c);
        return j;
    };
    d.jac_phi = [](const Vec& x, double) {
        auto list = detail_models::zero_list(4);
        list[0](0, 0) = 1.0;
        list[1](1, 0) = 2.0 * x[0];
        list[2](2, 2) = 1.0;
        list[3](2, 0) = 2.0 * x[0];
        return list;
    };
    d.jac_b = [](const Vec&, double) { return detail_models::zero_list(1); };
    return SystemModel(std::move(d));
}

struct BuiltinModels {
    SystemModel strict_feedback;
    SystemModel contracting;
};

inline BuiltinModels builtin_models() { return {strict_feedback(), contracting()}; }

inline SystemModel by_name(const std::string& name) {
    if (name == kStrictFeedbackName) return strict_feedback();
    if (name == kContractingName) return contracting();
    throw ConfigError("unknown model name '" + name + "'");
}

}  // namespace models
}  // namespace uac
