#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace uac {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, missing callbacks, invalid gains or config values.
class ConfigError : public Error {
   public:
    using Error::Error;
};

/// Non-finite or otherwise unusable numeric result.
class NumericError : public Error {
   public:
    using Error::Error;
};

/// Rank-deficient or indefinite matrix where full rank / definiteness is required.
class DegeneracyError : public Error {
   public:
    using Error::Error;
};

/// A runtime invariant of the adaptive loop was broken (e.g. estimate left its box).
class InvariantViolation : public Error {
   public:
    using Error::Error;
};

/// Caller passed an object that does not satisfy an operation's precondition.
class PreconditionError : public Error {
   public:
    using Error::Error;
};

/// The pointwise decrement constraint cannot be met at this state.
class InfeasibleError : public Error {
   public:
    using Error::Error;
};

/// Metric fitting finished with constraint violation above tolerance.
class SynthesisFailure : public Error {
   public:
    using Error::Error;
};

/// Integration produced a non-finite stage.
class DivergenceError : public Error {
   public:
    DivergenceError(double t, double state_norm, const std::string& what)
        : Error(what), t_(t), state_norm_(state_norm) {}
    double time() const { return t_; }
    double state_norm() const { return state_norm_; }

   private:
    double t_;
    double state_norm_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

inline void require_size(const Vec& v, Index expected, const char* what) {
    if (v.size() != expected) {
        throw ConfigError(concat(what, ": expected size ", expected, ", got ", v.size()));
    }
}

inline void require_shape(const Mat& m, Index rows, Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ConfigError(concat(what, ": expected ", rows, "x", cols, ", got ", m.rows(), "x",
                                 m.cols()));
    }
}

// Throws NumericError naming the first non-finite component.
inline void require_finite(const Vec& v, const char* what) {
    for (Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(concat(what, ": component ", i, " is not finite (", v[i], ")"));
        }
    }
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double max_eigenvalue(const Mat& sym) {
    if (sym.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline double min_eigenvalue(const Mat& sym) {
    if (sym.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace detail
}  // namespace uac
