#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wpc/factor.hpp"
#include "wpc/numerics.hpp"

namespace wpc {

// Entrywise shrinkage rule for off-diagonal covariance entries. All three
// satisfy s(z)=0 for |z|<tau and |s(z)-z| <= tau.
enum class ThresholdRule { hard, soft, scad };

inline std::string rule_name(ThresholdRule r) {
  switch (r) {
    case ThresholdRule::hard: return "hard";
    case ThresholdRule::soft: return "soft";
    case ThresholdRule::scad: return "scad";
  }
  return "?";
}

struct ThresholdConfig {
  ThresholdRule rule = ThresholdRule::soft;
  double scad_a = 3.7;
  // Threshold constant; empty means pick by cross-validation over cv_grid.
  std::optional<double> constant_C;
  int cv_folds = 5;
  std::vector<double> cv_grid = default_grid();
  // Smallest acceptable eigenvalue of the thresholded matrix; below this the
  // constant is raised along the grid until the matrix clears it.
  double pd_epsilon = 1e-6;

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 30; ++i) g.push_back(0.1 * i);
    return g;
  }

  void validate() const {
    if (cv_grid.empty()) throw DimensionError("threshold grid is empty");
    for (std::size_t i = 0; i < cv_grid.size(); ++i) {
      if (!(cv_grid[i] > 0.0))
        throw DimensionError("threshold grid entries must be positive");
      if (i > 0 && !(cv_grid[i] > cv_grid[i - 1]))
        throw DimensionError("threshold grid must be strictly increasing");
    }
    if (constant_C && !(*constant_C > 0.0))
      throw DimensionError("threshold constant must be positive");
    if (cv_folds < 2) throw DimensionError("cross-validation needs at least 2 folds");
    if (!(scad_a > 2.0)) throw DimensionError("scad parameter must exceed 2");
    if (!(pd_epsilon > 0.0)) throw DimensionError("pd_epsilon must be positive");
  }
};

struct SparseCovEstimate {
  SymmetricMatrix sigma;
  SymmetricMatrix inverse;
  double constant_C = 0.0;
  double omega = 0.0;
  ThresholdRule rule = ThresholdRule::soft;
  long nonzero_count = 0;  // surviving off-diagonal entries, both triangles
};

// Rate term omega_T = sqrt(ln N / T) + 1/sqrt(N) controlling the threshold
// magnitude.
inline double omega_T(double n_units, double n_periods) {
  if (!(n_units >= 2.0)) throw DimensionError("omega_T needs N >= 2");
  if (!(n_periods >= 1.0)) throw DimensionError("omega_T needs T >= 1");
  return std::sqrt(std::log(n_units) / n_periods) + 1.0 / std::sqrt(n_units);
}

// s(z) for one off-diagonal entry at threshold tau >= 0.
inline double apply_rule(double z, double tau, ThresholdRule rule, double scad_a = 3.7) {
  if (!(tau >= 0.0)) throw DimensionError("threshold must be nonnegative");
  const double az = std::abs(z);
  switch (rule) {
    case ThresholdRule::hard:
      return az > tau ? z : 0.0;
    case ThresholdRule::soft:
      return az > tau ? (z > 0.0 ? az - tau : tau - az) : 0.0;
    case ThresholdRule::scad: {
      if (!(scad_a > 2.0)) throw DimensionError("scad parameter must exceed 2");
      if (az <= 2.0 * tau) return az > tau ? (z > 0.0 ? az - tau : tau - az) : 0.0;
      if (az <= scad_a * tau)
        return ((scad_a - 1.0) * z - (z > 0.0 ? 1.0 : -1.0) * scad_a * tau) /
               (scad_a - 2.0);
      return z;
    }
  }
  return 0.0;
}

namespace detail {

// Residual second-moment matrix after removing the top-r principal
// directions: R = S - sum_{i<=r} nu_i xi_i xi_i'. The factor-model path uses
// the mean-centered covariance of Y_t (divisor T); the panel-regression path
// uses the uncentered moment matrix of the residuals.
inline MatrixXd residual_cov_core(const MatrixXd& panel, int r, bool centered) {
  const Eigen::Index n = panel.rows();
  const double t = static_cast<double>(panel.cols());
  if (r < 0 || r >= n)
    throw DimensionError("spectral rank " + std::to_string(r) +
                         " out of range for N=" + std::to_string(n));
  MatrixXd s;
  if (centered) {
    const VectorXd mean = panel.rowwise().mean();
    const MatrixXd dev = panel.colwise() - mean;
    s = dev * dev.transpose() / t;
  } else {
    s = panel * panel.transpose() / t;
  }
  if (r == 0) return s;
  const EigenPairs top = sym_eigs(SymmetricMatrix(s), r);
  for (int j = 0; j < r; ++j)
    s.noalias() -= top.values(j) * top.vectors.col(j) * top.vectors.col(j).transpose();
  return s;
}

// Entry-adaptive thresholding: tau_ij = C sqrt(R_ii R_jj) omega; the
// diagonal is never shrunk.
inline MatrixXd threshold_matrix(const MatrixXd& r_mat, double c, double omega,
                                 ThresholdRule rule, double scad_a) {
  const Eigen::Index n = r_mat.rows();
  MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = r_mat(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double tau =
          c * std::sqrt(std::max(r_mat(i, i) * r_mat(j, j), 0.0)) * omega;
      const double v = apply_rule(r_mat(i, j), tau, rule, scad_a);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

inline double min_eigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigenvalue computation failed", 30L * m.rows());
  return es.eigenvalues()(0);
}

// Picks C by K-fold cross-validation on contiguous time blocks: the
// thresholded residual covariance from the training blocks is compared in
// squared Frobenius norm against the raw residual covariance of the held-out
// block.
inline double cv_select_c(const MatrixXd& panel, int r, const ThresholdConfig& cfg,
                          bool centered) {
  const Eigen::Index n = panel.rows();
  const Eigen::Index t = panel.cols();
  const int folds = cfg.cv_folds;
  if (t < folds + 1)
    throw DimensionError("cross-validation needs T >= cv_folds + 1, got T=" +
                         std::to_string(t));
  std::vector<double> loss(cfg.cv_grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index lo = t * f / folds;
    const Eigen::Index hi = t * (f + 1) / folds;
    const Eigen::Index nv = hi - lo;
    MatrixXd train(n, t - nv);
    if (lo > 0) train.leftCols(lo) = panel.leftCols(lo);
    if (hi < t) train.rightCols(t - hi) = panel.rightCols(t - hi);
    const MatrixXd r_train = residual_cov_core(train, r, centered);
    const MatrixXd r_valid = residual_cov_core(panel.middleCols(lo, nv), r, centered);
    const double omega_train = omega_T(static_cast<double>(n),
                                       static_cast<double>(t - nv));
    for (std::size_t g = 0; g < cfg.cv_grid.size(); ++g) {
      const MatrixXd thr =
          threshold_matrix(r_train, cfg.cv_grid[g], omega_train, cfg.rule, cfg.scad_a);
      loss[g] += (thr - r_valid).squaredNorm();
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < loss.size(); ++g)
    if (loss[g] < loss[best]) best = g;
  return cfg.cv_grid[best];
}

// Shared construction path for the factor-model and panel-regression
// estimators; `centered` selects the residual moment convention.
inline SparseCovEstimate threshold_residual_panel(const MatrixXd& panel, int r,
                                                  const ThresholdConfig& cfg,
                                                  bool centered) {
  cfg.validate();
  const Eigen::Index n = panel.rows();
  const Eigen::Index t = panel.cols();
  const MatrixXd r_mat = residual_cov_core(panel, r, centered);
  const double omega = omega_T(static_cast<double>(n), static_cast<double>(t));
  const double c0 =
      cfg.constant_C ? *cfg.constant_C : cv_select_c(panel, r, cfg, centered);

  // PD repair: walk the grid upward from the chosen constant until the
  // smallest eigenvalue clears pd_epsilon.
  std::vector<double> candidates{c0};
  for (double g : cfg.cv_grid)
    if (g > c0) candidates.push_back(g);
  MatrixXd sigma;
  double c_used = 0.0;
  bool ok = false;
  for (double c : candidates) {
    sigma = threshold_matrix(r_mat, c, omega, cfg.rule, cfg.scad_a);
    if (min_eigenvalue(sigma) >= cfg.pd_epsilon) {
      c_used = c;
      ok = true;
      break;
    }
  }
  if (!ok)
    throw DefinitenessError(
        "no threshold constant in [" + std::to_string(c0) + ", " +
        std::to_string(candidates.back()) +
        "] yields a positive definite covariance (min eigenvalue below " +
        std::to_string(cfg.pd_epsilon) + ")");

  long nonzero = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && sigma(i, j) != 0.0) ++nonzero;

  SymmetricMatrix sig(sigma);
  SymmetricMatrix inv = pd_inverse(sig);
  return SparseCovEstimate{std::move(sig), std::move(inv), c_used, omega,
                           cfg.rule, nonzero};
}

}  // namespace detail

// R = S_y - top-r spectral part, where S_y is the mean-centered sample
// covariance of the columns Y_t with divisor T.
inline SymmetricMatrix pc_residual_cov(const ObservationPanel& y, int r) {
  return SymmetricMatrix(detail::residual_cov_core(y.values(), r, true));
}

// POET-style thresholded error covariance from the principal-components
// residual of the panel.
inline SparseCovEstimate threshold_from_pc(const ObservationPanel& y, int r,
                                           const ThresholdConfig& cfg) {
  return detail::threshold_residual_panel(y.values(), r, cfg, true);
}

// Sparsity measure m_N = max_i sum_j |S_ij|^q; q = 0 counts nonzeros per row.
inline double sparsity_m(const SymmetricMatrix& s, double q) {
  if (!(q >= 0.0 && q < 0.5))
    throw DimensionError("sparsity exponent must lie in [0, 0.5)");
  const Eigen::Index n = s.order();
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = std::abs(s.data()(i, j));
      if (q == 0.0)
        row += (a != 0.0) ? 1.0 : 0.0;
      else
        row += std::pow(a, q);
    }
    best = std::max(best, row);
  }
  return best;
}

// Eigenvector-weighted PC: fits with the inverse of the thresholded error
// covariance as the cross-section weight. Returns the fit together with the
// covariance estimate that produced the weight.
inline std::pair<FactorEstimate, SparseCovEstimate> ewpc_fit(
    const ObservationPanel& y, int r, const ThresholdConfig& cfg) {
  SparseCovEstimate cov = threshold_from_pc(y, r, cfg);
  FactorEstimate est = wpc_fit(y, r, WeightSpec::full(cov.inverse));
  return {std::move(est), std::move(cov)};
}

}  // namespace wpc
