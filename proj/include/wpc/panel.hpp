#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wpc/factor.hpp"
#include "wpc/numerics.hpp"
#include "wpc/sparsecov.hpp"

namespace wpc {

// Panel regression y_it = x_it' beta + lambda_i' f_t + u_it. y is N x T and
// each regressor is its own N x T slice.
class PanelRegression {
 public:
  PanelRegression(MatrixXd y, std::vector<MatrixXd> x)
      : y_(std::move(y)), x_(std::move(x)) {
    if (y_.rows() < 2 || y_.cols() < 2)
      throw DimensionError("panel needs at least 2 units and 2 periods");
    if (x_.empty()) throw DimensionError("panel regression needs d >= 1 regressors");
    if (!y_.allFinite()) throw NumericalError("outcome panel has non-finite entries");
    for (std::size_t k = 0; k < x_.size(); ++k) {
      if (x_[k].rows() != y_.rows() || x_[k].cols() != y_.cols())
        throw DimensionError("regressor " + std::to_string(k) +
                             " does not match outcome dimensions");
      if (!x_[k].allFinite())
        throw NumericalError("regressor " + std::to_string(k) +
                             " has non-finite entries");
    }
  }

  Eigen::Index n_units() const { return y_.rows(); }
  Eigen::Index n_periods() const { return y_.cols(); }
  int n_regressors() const { return static_cast<int>(x_.size()); }
  const MatrixXd& y() const { return y_; }
  const MatrixXd& x(int k) const { return x_[static_cast<std::size_t>(k)]; }

 private:
  MatrixXd y_;
  std::vector<MatrixXd> x_;
};

struct IterationConfig {
  int r = 0;
  int max_iter = 500;
  double tol = 1e-7;  // sup-norm on successive beta iterates

  void validate(const PanelRegression& p) const {
    if (r < 0 || r > std::min(p.n_units(), p.n_periods()))
      throw DimensionError("factor count " + std::to_string(r) + " out of range");
    if (max_iter < 1) throw DimensionError("max_iter must be at least 1");
    if (!(tol > 0.0)) throw DimensionError("tolerance must be positive");
  }
};

struct PanelFit {
  VectorXd beta;
  FactorEstimate factor_part;               // fitted on y - x beta
  std::optional<SparseCovEstimate> cov;     // frozen GLS weight, WPC path only
  MatrixXd gamma;                           // d x d
  VectorXd se;                              // sqrt(diag(gamma^-1)/(NT))
  int iterations = 0;
  bool converged = false;
  // Weighted objective after every half step (beta step, factor step);
  // non-increasing because each half step is an exact conditional minimizer.
  std::vector<double> objective_trace;
};

namespace detail {

// Pieces of the GLS step that are invariant across alternation iterations.
struct GlsContext {
  std::vector<MatrixXd> wx;  // W x_k, one per regressor
  Eigen::LLT<MatrixXd> gram_llt;
};

inline GlsContext make_gls_context(const PanelRegression& p, const WeightSpec& w) {
  const int d = p.n_regressors();
  GlsContext ctx;
  ctx.wx.reserve(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) ctx.wx.push_back(w.apply_left(p.x(k)));
  MatrixXd gram(d, d);
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l) {
      const double v = p.x(k).cwiseProduct(ctx.wx[static_cast<std::size_t>(l)]).sum();
      gram(k, l) = v;
      gram(l, k) = v;
    }
  ctx.gram_llt.compute(gram);
  if (ctx.gram_llt.info() != Eigen::Success)
    throw RankError("weighted regressor gram matrix sum_t X_t' W X_t is singular");
  return ctx;
}

// beta = (sum_t X_t' W X_t)^-1 sum_t X_t' W e_t for the residual panel
// e = y - L F'.
inline VectorXd gls_solve(const GlsContext& ctx, const PanelRegression& p,
                          const MatrixXd& resid) {
  const int d = p.n_regressors();
  VectorXd rhs(d);
  for (int k = 0; k < d; ++k)
    rhs(k) = ctx.wx[static_cast<std::size_t>(k)].cwiseProduct(resid).sum();
  return ctx.gram_llt.solve(rhs);
}

// Weighted PC on a residual panel with W*panel already available; avoids the
// N x N product in the alternation loop. Matches wpc_fit exactly.
inline FactorEstimate wpc_fit_prewhitened(const MatrixXd& a, const MatrixXd& wa, int r,
                                          const WeightSpec& w) {
  const Eigen::Index t = a.cols();
  FactorEstimate est;
  est.rank = r;
  est.weight = w;
  if (r == 0) {
    est.factors = MatrixXd(t, 0);
    est.loadings = MatrixXd(a.rows(), 0);
    est.eig_diag = VectorXd(0);
    return est;
  }
  const SymmetricMatrix gram(a.transpose() * wa);
  const EigenPairs top = sym_eigs(gram, r);
  est.factors = std::sqrt(static_cast<double>(t)) * top.vectors;
  est.loadings = (a * est.factors) / static_cast<double>(t);
  est.eig_diag = top.values / (static_cast<double>(t) * static_cast<double>(a.rows()));
  return est;
}

struct AlternationResult {
  VectorXd beta;
  FactorEstimate est;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  double sigma2 = 0.0;  // final weighted objective / (N T)
};

// Alternates the exact conditional minimizers: beta given (L, F) by weighted
// least squares, then (L, F) given beta by weighted PC on y - x beta.
// Convergence is declared on the sup-norm of successive beta iterates.
inline AlternationResult alternate_fit(const PanelRegression& p, const WeightSpec& w,
                                       const IterationConfig& cfg,
                                       const VectorXd* beta_init) {
  cfg.validate(p);
  const Eigen::Index n = p.n_units();
  const Eigen::Index t = p.n_periods();
  const int d = p.n_regressors();
  const int r = cfg.r;
  const double nt = static_cast<double>(n) * static_cast<double>(t);

  const GlsContext ctx = make_gls_context(p, w);
  const MatrixXd wy = w.apply_left(p.y());

  AlternationResult out;
  const auto resid_pair = [&](const VectorXd& beta, const FactorEstimate& est) {
    MatrixXd a = p.y();
    MatrixXd wa = wy;
    for (int k = 0; k < d; ++k) {
      a.noalias() -= beta(k) * p.x(k);
      wa.noalias() -= beta(k) * ctx.wx[static_cast<std::size_t>(k)];
    }
    if (est.rank > 0) {
      a.noalias() -= est.loadings * est.factors.transpose();
      wa.noalias() -= (w.apply_left(est.loadings)) * est.factors.transpose();
    }
    return std::make_pair(std::move(a), std::move(wa));
  };
  const auto objective = [&](const VectorXd& beta, const FactorEstimate& est) {
    const auto [e, we] = resid_pair(beta, est);
    return e.cwiseProduct(we).sum();
  };
  const auto factor_step = [&](const VectorXd& beta) {
    MatrixXd a = p.y();
    MatrixXd wa = wy;
    for (int k = 0; k < d; ++k) {
      a.noalias() -= beta(k) * p.x(k);
      wa.noalias() -= beta(k) * ctx.wx[static_cast<std::size_t>(k)];
    }
    return wpc_fit_prewhitened(a, wa, r, w);
  };

  FactorEstimate est;
  est.rank = 0;
  est.factors = MatrixXd::Zero(t, 0);
  est.loadings = MatrixXd::Zero(n, 0);
  std::optional<VectorXd> beta_prev;
  if (beta_init) {
    beta_prev = *beta_init;
    est = factor_step(*beta_init);
    out.objective_trace.push_back(objective(*beta_init, est));
  }

  VectorXd beta = beta_prev ? *beta_prev : VectorXd::Zero(d);
  while (out.iterations < cfg.max_iter) {
    // beta step
    {
      MatrixXd resid = p.y();
      if (est.rank > 0) resid.noalias() -= est.loadings * est.factors.transpose();
      beta = gls_solve(ctx, p, resid);
    }
    ++out.iterations;
    out.objective_trace.push_back(objective(beta, est));
    if (beta_prev && (beta - *beta_prev).cwiseAbs().maxCoeff() <= cfg.tol) {
      out.converged = true;
      break;
    }
    beta_prev = beta;
    est = factor_step(beta);
    out.objective_trace.push_back(objective(beta, est));
  }

  // Refresh the factor part at the final beta so the reported estimate is
  // the conditional minimizer at the reported coefficients.
  est = factor_step(beta);
  const double final_obj = objective(beta, est);
  out.objective_trace.push_back(final_obj);
  out.beta = beta;
  out.est = std::move(est);
  out.sigma2 = final_obj / nt;
  if (!out.beta.allFinite())
    throw NumericalError("alternation produced non-finite coefficients",
                         out.iterations);
  return out;
}

// Gamma = (NT)^-1 sum_ij B_ij x_i' M_F x_j computed through
// tr(P_k' B P_l) with P_k = x_k M_F, never materializing the NT x NT
// Kronecker form B (x) M_F.
inline MatrixXd gamma_core(const PanelRegression& p, const MatrixXd& factors,
                           const MatrixXd& loadings, const MatrixXd* sigma_inv) {
  const Eigen::Index n = p.n_units();
  const Eigen::Index t = p.n_periods();
  const int d = p.n_regressors();
  const Eigen::Index r = loadings.cols();
  if (factors.cols() != r)
    throw DimensionError("factor and loading ranks differ");
  if (factors.rows() != t || loadings.rows() != n)
    throw DimensionError("factors/loadings do not conform to the panel");
  if (sigma_inv && (sigma_inv->rows() != n || sigma_inv->cols() != n))
    throw DimensionError("weight order does not match the cross-section size");

  MatrixXd b;
  if (r == 0) {
    b = sigma_inv ? *sigma_inv : MatrixXd::Identity(n, n);
  } else {
    const MatrixXd sil = sigma_inv ? MatrixXd(*sigma_inv * loadings) : loadings;
    const MatrixXd g = loadings.transpose() * sil;
    const Eigen::LLT<MatrixXd> g_llt(g);
    if (g_llt.info() != Eigen::Success)
      throw RankError("L' Sigma^-1 L is singular in the gamma sandwich");
    b = sigma_inv ? MatrixXd(*sigma_inv) : MatrixXd::Identity(n, n);
    b.noalias() -= sil * g_llt.solve(sil.transpose());
  }

  MatrixXd mf = MatrixXd::Identity(t, t);
  if (r > 0) {
    const MatrixXd ftf = factors.transpose() * factors;
    const Eigen::LLT<MatrixXd> f_llt(ftf);
    if (f_llt.info() != Eigen::Success)
      throw RankError("F'F is singular in the factor projector");
    mf.noalias() -= factors * f_llt.solve(factors.transpose());
  }

  std::vector<MatrixXd> proj;
  proj.reserve(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) proj.push_back(p.x(k) * mf);
  MatrixXd gamma(d, d);
  for (int l = 0; l < d; ++l) {
    const MatrixXd bp = b * proj[static_cast<std::size_t>(l)];
    for (int k = 0; k <= l; ++k) {
      const double v = proj[static_cast<std::size_t>(k)].cwiseProduct(bp).sum() /
                       (static_cast<double>(n) * static_cast<double>(t));
      gamma(k, l) = v;
      gamma(l, k) = v;
    }
  }
  return gamma;
}

inline VectorXd se_from_gamma(const MatrixXd& gamma, double nt) {
  const Eigen::Index d = gamma.rows();
  const Eigen::LLT<MatrixXd> llt(gamma);
  if (llt.info() != Eigen::Success)
    throw DefinitenessError("gamma matrix is not positive definite");
  const MatrixXd inv = llt.solve(MatrixXd::Identity(d, d));
  VectorXd se(d);
  for (Eigen::Index k = 0; k < d; ++k) se(k) = std::sqrt(inv(k, k) / nt);
  return se;
}

}  // namespace detail

// GLS coefficient given the factor structure:
//   beta(L, F) = (sum_t X_t' W X_t)^-1 sum_t X_t' W (y_t - L f_t).
inline VectorXd gls_beta(const PanelRegression& p, const MatrixXd& loadings,
                         const MatrixXd& factors, const SymmetricMatrix& w) {
  if (w.order() != p.n_units())
    throw DimensionError("weight order does not match the cross-section size");
  if (loadings.cols() != factors.cols())
    throw DimensionError("factor and loading ranks differ");
  if ((loadings.cols() > 0) &&
      (loadings.rows() != p.n_units() || factors.rows() != p.n_periods()))
    throw DimensionError("factors/loadings do not conform to the panel");
  const WeightSpec spec = WeightSpec::full(w);
  const detail::GlsContext ctx = detail::make_gls_context(p, spec);
  MatrixXd resid = p.y();
  if (loadings.cols() > 0) resid.noalias() -= loadings * factors.transpose();
  return detail::gls_solve(ctx, p, resid);
}

// Bai-style iterative principal components with identity weight. The gamma
// reported here uses the identity in place of the error covariance and
// serves as a positive-definiteness diagnostic, not an efficient sandwich.
inline PanelFit pc_panel_fit(const PanelRegression& p, const IterationConfig& cfg) {
  const detail::AlternationResult alt =
      detail::alternate_fit(p, WeightSpec::identity(), cfg, nullptr);
  PanelFit fit;
  fit.beta = alt.beta;
  fit.factor_part = alt.est;
  fit.cov = std::nullopt;
  fit.gamma = detail::gamma_core(p, alt.est.factors, alt.est.loadings, nullptr);
  fit.se = detail::se_from_gamma(
      fit.gamma, static_cast<double>(p.n_units()) * static_cast<double>(p.n_periods()));
  fit.iterations = alt.iterations;
  fit.converged = alt.converged;
  fit.objective_trace = alt.objective_trace;
  return fit;
}

// Thresholded covariance of the regression residuals y - x beta0, with the
// uncentered second-moment convention and the top-r spectral part removed.
inline SparseCovEstimate residual_cov_from_beta(const PanelRegression& p,
                                                const VectorXd& beta0, int r,
                                                const ThresholdConfig& cfg) {
  if (beta0.size() != p.n_regressors())
    throw DimensionError("coefficient length does not match the regressor count");
  MatrixXd resid = p.y();
  for (int k = 0; k < p.n_regressors(); ++k) resid.noalias() -= beta0(k) * p.x(k);
  return detail::threshold_residual_panel(resid, r, cfg, false);
}

// Weighted interactive-effects estimator: an identity-weight fit seeds the
// residual covariance, whose inverse is then frozen as the GLS and PC weight
// for the final alternation.
inline PanelFit wpc_panel_fit(const PanelRegression& p, const IterationConfig& cfg,
                              const ThresholdConfig& thr) {
  const PanelFit pc = pc_panel_fit(p, cfg);
  SparseCovEstimate cov = residual_cov_from_beta(p, pc.beta, cfg.r, thr);
  const WeightSpec w = WeightSpec::full(cov.inverse);
  const detail::AlternationResult alt = detail::alternate_fit(p, w, cfg, &pc.beta);
  PanelFit fit;
  fit.beta = alt.beta;
  fit.factor_part = alt.est;
  const MatrixXd sigma_inv = cov.inverse.data();
  fit.gamma = detail::gamma_core(p, alt.est.factors, alt.est.loadings, &sigma_inv);
  fit.cov = std::move(cov);
  fit.se = detail::se_from_gamma(
      fit.gamma, static_cast<double>(p.n_units()) * static_cast<double>(p.n_periods()));
  fit.iterations = alt.iterations;
  fit.converged = alt.converged;
  fit.objective_trace = alt.objective_trace;
  return fit;
}

// Gamma with an explicit inverse covariance weight.
inline MatrixXd gamma_estimate(const PanelRegression& p, const MatrixXd& factors,
                               const MatrixXd& loadings, const SymmetricMatrix& sigma_inv) {
  const MatrixXd w = sigma_inv.data();
  return detail::gamma_core(p, factors, loadings, &w);
}

inline MatrixXd gamma_estimate(const PanelRegression& p, const MatrixXd& factors,
                               const MatrixXd& loadings, const SparseCovEstimate& cov) {
  return gamma_estimate(p, factors, loadings, cov.inverse);
}

enum class RankCriterion { cp, ic };

struct RankSelection {
  int selected = 0;
  RankCriterion criterion = RankCriterion::ic;
  std::vector<double> sigma2;            // sigma^2(k), k = 0..k_bar
  std::vector<double> criterion_values;  // CP(k) or IC(k)
};

// Scans k = 0..k_bar with the identity-weight iterative fit and picks the
// criterion minimizer (smallest k on ties):
//   CP(k) = sigma^2(k) + sigma^2(k_bar) k_eff ln(NT)/(NT),
//   IC(k) = ln sigma^2(k) + k_eff ln(NT)/(NT),  k_eff = k(N+T) - k^2.
// Each fit warm-starts from the previous k, which keeps sigma^2(k)
// non-increasing.
inline RankSelection select_rank(const PanelRegression& p, int k_bar,
                                 RankCriterion criterion,
                                 const IterationConfig& base = IterationConfig{}) {
  if (k_bar < 0 || k_bar >= std::min(p.n_units(), p.n_periods()))
    throw DimensionError("max rank " + std::to_string(k_bar) +
                         " out of range for this panel");
  const double n = static_cast<double>(p.n_units());
  const double t = static_cast<double>(p.n_periods());
  const double nt = n * t;

  RankSelection out;
  out.criterion = criterion;
  std::optional<VectorXd> warm;
  for (int k = 0; k <= k_bar; ++k) {
    IterationConfig cfg = base;
    cfg.r = k;
    const detail::AlternationResult alt = detail::alternate_fit(
        p, WeightSpec::identity(), cfg, warm ? &*warm : nullptr);
    out.sigma2.push_back(alt.sigma2);
    warm = alt.beta;
  }
  const double sigma_bar = out.sigma2.back();
  for (int k = 0; k <= k_bar; ++k) {
    const double k_eff = static_cast<double>(k) * (n + t) -
                         static_cast<double>(k) * static_cast<double>(k);
    const double penalty = k_eff * std::log(nt) / nt;
    out.criterion_values.push_back(criterion == RankCriterion::cp
                                       ? out.sigma2[static_cast<std::size_t>(k)] +
                                             sigma_bar * penalty
                                       : std::log(out.sigma2[static_cast<std::size_t>(k)]) +
                                             penalty);
  }
  out.selected = 0;
  for (int k = 1; k <= k_bar; ++k)
    if (out.criterion_values[static_cast<std::size_t>(k)] <
        out.criterion_values[static_cast<std::size_t>(out.selected)])
      out.selected = k;
  return out;
}

// Rank scan for a pure factor panel (no regressors): sigma^2(k) is the
// identity-weight PC residual variance, exactly non-increasing in k.
inline RankSelection select_rank(const ObservationPanel& y, int k_bar,
                                 RankCriterion criterion) {
  if (k_bar < 0 || k_bar >= std::min(y.n_units(), y.n_periods()))
    throw DimensionError("max rank " + std::to_string(k_bar) +
                         " out of range for this panel");
  const double n = static_cast<double>(y.n_units());
  const double t = static_cast<double>(y.n_periods());
  const double nt = n * t;
  RankSelection out;
  out.criterion = criterion;
  for (int k = 0; k <= k_bar; ++k) {
    const FactorEstimate est = wpc_fit(y, k, WeightSpec::identity());
    out.sigma2.push_back((y.values() - common_components(est)).squaredNorm() / nt);
  }
  const double sigma_bar = out.sigma2.back();
  for (int k = 0; k <= k_bar; ++k) {
    const double k_eff = static_cast<double>(k) * (n + t) -
                         static_cast<double>(k) * static_cast<double>(k);
    const double penalty = k_eff * std::log(nt) / nt;
    out.criterion_values.push_back(criterion == RankCriterion::cp
                                       ? out.sigma2[static_cast<std::size_t>(k)] +
                                             sigma_bar * penalty
                                       : std::log(out.sigma2[static_cast<std::size_t>(k)]) +
                                             penalty);
  }
  out.selected = 0;
  for (int k = 1; k <= k_bar; ++k)
    if (out.criterion_values[static_cast<std::size_t>(k)] <
        out.criterion_values[static_cast<std::size_t>(out.selected)])
      out.selected = k;
  return out;
}

// Removes unit and period means: m_it - mean_i - mean_t + grand mean.
inline MatrixXd double_demean(const MatrixXd& m) {
  MatrixXd out = m;
  const VectorXd row_mean = m.rowwise().mean();
  const Eigen::RowVectorXd col_mean = m.colwise().mean();
  const double grand = m.mean();
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

// Projects each unit's time path off polynomial trends t^1..t^degree
// (degree 0 is the identity). Uses the orthonormal basis from a
// column-pivoted QR of the trend matrix.
inline MatrixXd detrend_project(const MatrixXd& m, int trend_degree) {
  if (trend_degree < 0) throw DimensionError("trend degree must be nonnegative");
  if (trend_degree == 0) return m;
  const Eigen::Index t = m.cols();
  if (trend_degree >= t)
    throw RankError("trend basis with degree " + std::to_string(trend_degree) +
                    " is rank deficient over T=" + std::to_string(t));
  MatrixXd basis(t, trend_degree);
  for (Eigen::Index s = 0; s < t; ++s) {
    double v = 1.0;
    for (int j = 0; j < trend_degree; ++j) {
      v *= static_cast<double>(s + 1);
      basis(s, j) = v;
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(basis);
  if (qr.rank() < trend_degree) throw RankError("trend basis is rank deficient");
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(t, trend_degree);
  return m - (m * q) * q.transpose();
}

}  // namespace wpc
