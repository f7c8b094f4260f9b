#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "wpc/factor.hpp"
#include "wpc/numerics.hpp"
#include "wpc/sparsecov.hpp"

namespace wpc {

// Bandwidth policy for the HAC long-run variance. Empty bandwidth_K means
// the automatic rule K = floor(min(T,N)^{1/4}) - 1, floored at 0.
struct HacConfig {
  std::optional<int> bandwidth_K;

  int resolve(Eigen::Index n_periods, Eigen::Index n_units) const {
    if (bandwidth_K) {
      if (*bandwidth_K < 0)
        throw BandwidthError("HAC bandwidth must be nonnegative");
      if (*bandwidth_K >= n_periods)
        throw BandwidthError("HAC bandwidth " + std::to_string(*bandwidth_K) +
                             " must be below T=" + std::to_string(n_periods));
      return *bandwidth_K;
    }
    const Eigen::Index m = std::min(n_periods, n_units);
    int k = 0;
    while (static_cast<Eigen::Index>(k + 1) * (k + 1) * (k + 1) * (k + 1) <= m) ++k;
    return std::max(k - 1, 0);
  }
};

// (1/N) V^-1 Lhat' Sigma_u^-1 Lhat V^-1, the inverse of the asymptotic
// factor variance under the efficient weight. Requires an estimate fitted
// with the inverse of `cov` as its weight.
inline MatrixXd ve_inverse(const FactorEstimate& est, const SparseCovEstimate& cov) {
  const Eigen::Index n = est.loadings.rows();
  if (cov.sigma.order() != n)
    throw DimensionError("covariance order does not match the cross-section size");
  for (int j = 0; j < est.rank; ++j)
    if (!(est.eig_diag(j) > 0.0))
      throw DefinitenessError("eigenvalue diagonal is singular at position " +
                                  std::to_string(j),
                              j);
  const MatrixXd lwl =
      est.loadings.transpose() * cov.inverse.data() * est.loadings;
  const VectorXd vinv = est.eig_diag.cwiseInverse();
  return (vinv.asDiagonal() * lwl * vinv.asDiagonal()) / static_cast<double>(n);
}

// Newey-West long-run covariance of f_t u_jt for one series j with Bartlett
// weights 1 - l/(K+1):
//   Psi_j = T^-1 sum_t u_jt^2 f_t f_t'
//         + sum_{l=1}^K w_l T^-1 sum_{t>l} u_jt u_{j,t-l} (f_t f_{t-l}' + f_{t-l} f_t').
inline MatrixXd hac_loading_variance(const MatrixXd& f_hat, const VectorXd& u_hat_j,
                                     int bandwidth_K) {
  const Eigen::Index t = f_hat.rows();
  const Eigen::Index r = f_hat.cols();
  if (u_hat_j.size() != t)
    throw DimensionError("residual length does not match the factor sample");
  if (bandwidth_K < 0) throw BandwidthError("HAC bandwidth must be nonnegative");
  if (bandwidth_K >= t)
    throw BandwidthError("HAC bandwidth " + std::to_string(bandwidth_K) +
                         " must be below T=" + std::to_string(t));
  MatrixXd psi = MatrixXd::Zero(r, r);
  for (Eigen::Index s = 0; s < t; ++s)
    psi.noalias() += u_hat_j(s) * u_hat_j(s) * f_hat.row(s).transpose() * f_hat.row(s);
  for (int l = 1; l <= bandwidth_K; ++l) {
    const double w = 1.0 - static_cast<double>(l) / (bandwidth_K + 1.0);
    MatrixXd acc = MatrixXd::Zero(r, r);
    for (Eigen::Index s = l; s < t; ++s)
      acc.noalias() +=
          u_hat_j(s) * u_hat_j(s - l) * f_hat.row(s).transpose() * f_hat.row(s - l);
    psi.noalias() += w * (acc + acc.transpose());
  }
  return psi / static_cast<double>(t);
}

struct CommonComponentInterval {
  double center = 0.0;
  double half_width = 0.0;
  double theta1 = 0.0;  // loading-direction variance piece, scaled by 1/N
  double theta2 = 0.0;  // factor-direction variance piece, scaled by 1/T
  int bandwidth = 0;
};

namespace detail {

// Variance pieces are quadratic forms, so tiny negative values are pure
// roundoff; anything beyond the floor signals a real defect upstream.
inline double clamp_variance(double v, const char* label) {
  if (v >= 0.0) return v;
  if (v >= -1e-10) return 0.0;
  throw NumericalError(std::string(label) + " is negative beyond roundoff: " +
                       std::to_string(v));
}

}  // namespace detail

// Two-sided confidence interval for the common component lambda_i' f_t.
// Indices i (series) and t (period) are 0-based.
inline CommonComponentInterval common_component_interval(
    const ObservationPanel& y, const FactorEstimate& est, const SparseCovEstimate& cov,
    const HacConfig& cfg, Eigen::Index i, Eigen::Index t, double level) {
  const Eigen::Index n = y.n_units();
  const Eigen::Index big_t = y.n_periods();
  if (i < 0 || i >= n) throw DimensionError("series index out of range");
  if (t < 0 || t >= big_t) throw DimensionError("period index out of range");
  if (!(level > 0.0 && level < 1.0))
    throw DimensionError("confidence level must lie in (0,1)");
  if (est.loadings.rows() != n || est.factors.rows() != big_t)
    throw DimensionError("estimate does not conform to the panel");

  const int k = cfg.resolve(big_t, n);
  const VectorXd u_i =
      (y.values().row(i) - est.loadings.row(i) * est.factors.transpose()).transpose();
  const MatrixXd psi_i = hac_loading_variance(est.factors, u_i, k);
  const MatrixXd ve_inv = ve_inverse(est, cov);

  CommonComponentInterval out;
  out.bandwidth = k;
  out.center = est.loadings.row(i).dot(est.factors.row(t));
  out.theta1 = detail::clamp_variance(
      (est.loadings.row(i) * ve_inv * est.loadings.row(i).transpose()).value(),
      "theta1");
  out.theta2 = detail::clamp_variance(
      (est.factors.row(t) * psi_i * est.factors.row(t).transpose()).value(), "theta2");
  const double z = inverse_normal_cdf(0.5 * (1.0 + level));
  out.half_width = z * std::sqrt(out.theta1 / static_cast<double>(n) +
                                 out.theta2 / static_cast<double>(big_t));
  return out;
}

// Full inference summary for a weighted fit: the efficient-variance inverse,
// one HAC matrix per series, and both variance pieces for every cell.
struct VarianceReport {
  MatrixXd ve_inv;               // r x r
  std::vector<MatrixXd> psi;     // N matrices, r x r
  VectorXd theta1;               // N
  MatrixXd theta2;               // N x T
  int bandwidth = 0;
};

inline VarianceReport variance_report(const ObservationPanel& y,
                                      const FactorEstimate& est,
                                      const SparseCovEstimate& cov,
                                      const HacConfig& cfg) {
  const Eigen::Index n = y.n_units();
  const Eigen::Index big_t = y.n_periods();
  if (est.loadings.rows() != n || est.factors.rows() != big_t)
    throw DimensionError("estimate does not conform to the panel");
  VarianceReport rep;
  rep.bandwidth = cfg.resolve(big_t, n);
  rep.ve_inv = ve_inverse(est, cov);
  rep.psi.reserve(static_cast<std::size_t>(n));
  rep.theta1 = VectorXd(n);
  rep.theta2 = MatrixXd(n, big_t);
  const MatrixXd resid = residual_matrix(y, est);
  for (Eigen::Index i = 0; i < n; ++i) {
    const MatrixXd psi_i =
        hac_loading_variance(est.factors, resid.row(i).transpose(), rep.bandwidth);
    rep.theta1(i) = detail::clamp_variance(
        (est.loadings.row(i) * rep.ve_inv * est.loadings.row(i).transpose()).value(),
        "theta1");
    for (Eigen::Index s = 0; s < big_t; ++s)
      rep.theta2(i, s) = detail::clamp_variance(
          (est.factors.row(s) * psi_i * est.factors.row(s).transpose()).value(),
          "theta2");
    rep.psi.push_back(psi_i);
  }
  return rep;
}

// Asymptotic factor covariances under an arbitrary weight W versus the
// efficient weight Sigma_u^-1:
//   Xi_W = SigmaL^-1 (L' W Sigma_u W L / N) SigmaL^-1, SigmaL = L'WL/N,
//   Xi_e = (L' Sigma_u^-1 L / N)^-1.
// Xi_W - Xi_e is positive semidefinite, with equality at W = Sigma_u^-1.
struct XiComparison {
  MatrixXd xi_w;
  MatrixXd xi_e;
  double min_eig_gap = 0.0;  // smallest eigenvalue of xi_w - xi_e
};

inline XiComparison xi_comparison(const MatrixXd& loadings, const SymmetricMatrix& sigma_u,
                                  const SymmetricMatrix& w) {
  const Eigen::Index n = loadings.rows();
  const Eigen::Index r = loadings.cols();
  if (sigma_u.order() != n || w.order() != n)
    throw DimensionError("covariance/weight order does not match the loadings");
  if (r < 1) throw DimensionError("loadings need at least one column");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(loadings);
  if (qr.rank() < r) throw RankError("loadings are rank deficient");
  const Eigen::LLT<MatrixXd> sigma_llt = pd_factor(sigma_u);
  pd_factor(w);

  const double dn = static_cast<double>(n);
  const MatrixXd wl = w.data() * loadings;
  const MatrixXd sigma_l = loadings.transpose() * wl / dn;   // r x r, PD
  const MatrixXd mid = wl.transpose() * sigma_u.data() * wl / dn;
  const Eigen::LLT<MatrixXd> sl_llt(sigma_l);
  if (sl_llt.info() != Eigen::Success)
    throw RankError("L'WL is numerically singular");
  XiComparison out;
  out.xi_w = sl_llt.solve(sl_llt.solve(mid).transpose());
  const MatrixXd lsl =
      loadings.transpose() * sigma_llt.solve(loadings) / dn;  // L'Sigma^-1 L/N
  const Eigen::LLT<MatrixXd> lsl_llt(lsl);
  if (lsl_llt.info() != Eigen::Success)
    throw RankError("L'Sigma_u^-1 L is numerically singular");
  out.xi_e = lsl_llt.solve(MatrixXd::Identity(r, r));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(
      SymmetricMatrix(out.xi_w - out.xi_e).data(), Eigen::EigenvaluesOnly);
  out.min_eig_gap = es.eigenvalues()(0);
  return out;
}

}  // namespace wpc
