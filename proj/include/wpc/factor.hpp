#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "wpc/numerics.hpp"

namespace wpc {

// N x T panel of observations: rows are cross-section units, columns are
// time periods.
class ObservationPanel {
 public:
  explicit ObservationPanel(MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 2 || values_.cols() < 2)
      throw DimensionError("panel needs at least 2 units and 2 periods, got " +
                           std::to_string(values_.rows()) + "x" +
                           std::to_string(values_.cols()));
    if (!values_.allFinite())
      throw NumericalError("panel has non-finite entries");
  }

  Eigen::Index n_units() const { return values_.rows(); }
  Eigen::Index n_periods() const { return values_.cols(); }
  const MatrixXd& values() const { return values_; }

 private:
  MatrixXd values_;
};

// Cross-section weight W_T used in the weighted PC objective
// sum_t (Y_t - L f_t)' W_T (Y_t - L f_t). Identity matches plain PC,
// diagonal carries per-series precisions, full carries an inverse
// covariance. Full weights are PD-certified on construction.
class WeightSpec {
 public:
  enum class Kind { identity, diagonal, full };

  static WeightSpec identity() { return WeightSpec(); }

  static WeightSpec diagonal(VectorXd d) {
    if (d.size() == 0) throw DimensionError("diagonal weight is empty");
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!(d(i) > 0.0) || !std::isfinite(d(i)))
        throw DefinitenessError("diagonal weight entry " + std::to_string(i) +
                                    " is not strictly positive",
                                static_cast<int>(i));
    WeightSpec w;
    w.kind_ = Kind::diagonal;
    w.diag_ = std::move(d);
    return w;
  }

  static WeightSpec full(const SymmetricMatrix& w) {
    pd_factor(w);
    WeightSpec out;
    out.kind_ = Kind::full;
    out.full_ = w.data();
    return out;
  }

  Kind kind() const { return kind_; }

  // -1 for identity, which conforms to any cross-section size.
  Eigen::Index dim() const {
    switch (kind_) {
      case Kind::identity: return -1;
      case Kind::diagonal: return diag_.size();
      case Kind::full: return full_.rows();
    }
    return -1;
  }

  void check_conformable(Eigen::Index n) const {
    const Eigen::Index d = dim();
    if (d >= 0 && d != n)
      throw DimensionError("weight of dimension " + std::to_string(d) +
                           " does not conform to N=" + std::to_string(n));
  }

  // W * m
  MatrixXd apply_left(const MatrixXd& m) const {
    check_conformable(m.rows());
    switch (kind_) {
      case Kind::identity: return m;
      case Kind::diagonal: return diag_.asDiagonal() * m;
      case Kind::full: return full_ * m;
    }
    return m;
  }

  const VectorXd& diagonal_entries() const { return diag_; }
  const MatrixXd& full_matrix() const { return full_; }

 private:
  WeightSpec() = default;
  Kind kind_ = Kind::identity;
  VectorXd diag_;
  MatrixXd full_;
};

// Output of a weighted PC fit. factors has orthonormal columns scaled so
// F'F/T = I_r; loadings'  W loadings is diagonal; eig_diag holds the top-r
// eigenvalues of Y' W Y / (T N) in descending order.
struct FactorEstimate {
  int rank = 0;
  MatrixXd factors;   // T x r
  MatrixXd loadings;  // N x r
  VectorXd eig_diag;  // r
  WeightSpec weight = WeightSpec::identity();
};

// Weighted principal components. The factor estimate solves
//   min_{L,F} sum_t (Y_t - L f_t)' W (Y_t - L f_t)
// subject to F'F/T = I_r: columns of F/sqrt(T) are the top-r eigenvectors
// of Y'WY, and L = Y F / T. The T x T eigenproblem is used throughout; the
// N x N form has the same nonzero spectrum.
inline FactorEstimate wpc_fit(const ObservationPanel& y, int r, const WeightSpec& w) {
  const Eigen::Index n = y.n_units();
  const Eigen::Index t = y.n_periods();
  if (r < 0 || r > std::min(n, t))
    throw DimensionError("rank " + std::to_string(r) + " out of range for " +
                         std::to_string(n) + "x" + std::to_string(t) + " panel");
  w.check_conformable(n);

  FactorEstimate est;
  est.rank = r;
  est.weight = w;
  if (r == 0) {
    est.factors = MatrixXd(t, 0);
    est.loadings = MatrixXd(n, 0);
    est.eig_diag = VectorXd(0);
    return est;
  }
  const MatrixXd wy = w.apply_left(y.values());
  const SymmetricMatrix gram(y.values().transpose() * wy);
  const EigenPairs top = sym_eigs(gram, r);
  est.factors = std::sqrt(static_cast<double>(t)) * top.vectors;
  est.loadings = (y.values() * est.factors) / static_cast<double>(t);
  est.eig_diag = top.values / (static_cast<double>(t) * static_cast<double>(n));
  return est;
}

// Fitted common component matrix L F' (N x T). Rank 0 gives zeros.
inline MatrixXd common_components(const FactorEstimate& est) {
  if (est.rank == 0) return MatrixXd::Zero(est.loadings.rows(), est.factors.rows());
  return est.loadings * est.factors.transpose();
}

inline MatrixXd residual_matrix(const ObservationPanel& y, const FactorEstimate& est) {
  if (y.n_units() != est.loadings.rows() || y.n_periods() != est.factors.rows())
    throw DimensionError("estimate does not conform to the panel");
  return y.values() - common_components(est);
}

// Heteroskedasticity-weighted PC: a first identity-weight pass estimates the
// per-series residual variances, a second pass reweights by their
// reciprocals.
inline FactorEstimate hwpc_fit(const ObservationPanel& y, int r) {
  const FactorEstimate pc = wpc_fit(y, r, WeightSpec::identity());
  const MatrixXd resid = y.values() - common_components(pc);
  const Eigen::Index n = y.n_units();
  const double t = static_cast<double>(y.n_periods());
  VectorXd prec(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sigma_ii = resid.row(i).squaredNorm() / t;
    const double scale = y.values().row(i).squaredNorm() / t;
    if (!(sigma_ii > 1e-20 * scale))
      throw DegenerateSeriesError(
          "series " + std::to_string(i) + " has zero step-1 residual variance",
          static_cast<int>(i));
    prec(i) = 1.0 / sigma_ii;
  }
  return wpc_fit(y, r, WeightSpec::diagonal(prec));
}

// Rotation H_W = V^-1 (Fhat'F) (L'WL) / (N T) aligning the estimate with the
// true (F, L); columns of Fhat approximate F H_W'.
inline MatrixXd rotation_matrix(const FactorEstimate& est, const MatrixXd& f_true,
                                const MatrixXd& loadings_true, const WeightSpec& w) {
  const int r = est.rank;
  if (f_true.cols() != r || loadings_true.cols() != r)
    throw DimensionError("true factors/loadings rank does not match the estimate");
  if (f_true.rows() != est.factors.rows() || loadings_true.rows() != est.loadings.rows())
    throw DimensionError("true factors/loadings shape does not match the estimate");
  w.check_conformable(est.loadings.rows());
  const double n = static_cast<double>(est.loadings.rows());
  const double t = static_cast<double>(est.factors.rows());
  for (int j = 0; j < r; ++j)
    if (!(est.eig_diag(j) > 0.0))
      throw DefinitenessError("eigenvalue diagonal is singular at position " +
                                  std::to_string(j),
                              j);
  const MatrixXd ff = est.factors.transpose() * f_true;          // r x r
  const MatrixXd lwl = loadings_true.transpose() * w.apply_left(loadings_true);
  return est.eig_diag.cwiseInverse().asDiagonal() * ff * lwl / (n * t);
}

}  // namespace wpc
