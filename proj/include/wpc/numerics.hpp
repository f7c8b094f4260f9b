#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "wpc/errors.hpp"

namespace wpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Square real matrix kept exactly symmetric: both triangles are written from
// the same averaged value, so entries(i,j) == entries(j,i) bit for bit.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(const MatrixXd& m) : m_(m.rows(), m.cols()) {
    if (m.rows() != m.cols())
      throw DimensionError("symmetric matrix must be square, got " +
                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    if (!m.allFinite())
      throw NumericalError("symmetric matrix has non-finite entries");
    const Eigen::Index n = m.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      m_(i, i) = m(i, i);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = 0.5 * (m(i, j) + m(j, i));
        m_(i, j) = v;
        m_(j, i) = v;
      }
    }
  }

  Eigen::Index order() const { return m_.rows(); }
  const MatrixXd& data() const { return m_; }

 private:
  MatrixXd m_;
};

// Top-k eigenvalues (descending) with matching orthonormal eigenvectors.
struct EigenPairs {
  VectorXd values;   // k, algebraically largest first
  MatrixXd vectors;  // n x k, columns match values
};

namespace detail {

// Sign convention: in each eigenvector column, the entry of largest absolute
// value is made nonnegative; ties go to the lowest index.
inline void fix_eigvec_signs(MatrixXd& vecs) {
  for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vecs.rows(); ++i) {
      const double a = std::abs(vecs(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (vecs(arg, j) < 0.0) vecs.col(j) = -vecs.col(j);
  }
}

}  // namespace detail

// Eigenpairs of a symmetric matrix via Householder tridiagonalization and
// implicit-shift QL (Eigen's selfadjoint solver), the top k selected and
// reordered descending.
inline EigenPairs sym_eigs(const SymmetricMatrix& s, int k) {
  const Eigen::Index n = s.order();
  if (k < 1 || k > n)
    throw DimensionError("eigenpair count " + std::to_string(k) +
                         " out of range for order " + std::to_string(n));
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(s.data());
  if (solver.info() != Eigen::Success)
    throw NumericalError("symmetric eigensolver failed to converge",
                         30L * static_cast<long>(n));
  EigenPairs out;
  out.values = VectorXd(k);
  out.vectors = MatrixXd(n, k);
  for (int j = 0; j < k; ++j) {
    out.values(j) = solver.eigenvalues()(n - 1 - j);
    out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  detail::fix_eigvec_signs(out.vectors);
  return out;
}

namespace detail {

// Plain lower Cholesky used only to locate the failing pivot after the fast
// path has already certified failure.
inline int find_failing_pivot(const MatrixXd& a) {
  const Eigen::Index n = a.rows();
  MatrixXd l = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return static_cast<int>(j);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return -1;
}

}  // namespace detail

// Cholesky factorization as a positive-definiteness certificate. Throws
// DefinitenessError with the failing pivot index when the matrix is not PD.
inline Eigen::LLT<MatrixXd> pd_factor(const SymmetricMatrix& s) {
  Eigen::LLT<MatrixXd> llt(s.data());
  if (llt.info() != Eigen::Success) {
    const int pivot = detail::find_failing_pivot(s.data());
    throw DefinitenessError("matrix is not positive definite (pivot " +
                                std::to_string(pivot) + ")",
                            pivot);
  }
  return llt;
}

// Inverse of a positive definite matrix via the certified Cholesky factor.
inline SymmetricMatrix pd_inverse(const SymmetricMatrix& s) {
  const Eigen::LLT<MatrixXd> llt = pd_factor(s);
  const Eigen::Index n = s.order();
  MatrixXd inv = llt.solve(MatrixXd::Identity(n, n));
  return SymmetricMatrix(inv);
}

// Inverse standard normal CDF, Wichura's PPND16 (AS 241). Deterministic
// rational approximation, relative error below 1e-15 on (0,1).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DimensionError("inverse_normal_cdf requires p in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -v : v;
}

}  // namespace wpc
