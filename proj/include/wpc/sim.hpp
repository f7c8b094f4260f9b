#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "wpc/factor.hpp"
#include "wpc/inference.hpp"
#include "wpc/panel.hpp"
#include "wpc/rng.hpp"
#include "wpc/sparsecov.hpp"

namespace wpc {

// Design 1: y_it = lambda_i' f_t + u_it with two iid N(0,1) factors,
// mean-zero uniform loadings on [-1,1], and an MA-type banded error
//   u_it = e_it + a_{i-1} e_{i-1,t} + b_{i-2} e_{i-2,t} + c_{i-3} e_{i-3,t}
// (terms dropped near the boundary), the mixing coefficients drawn once per
// replication. sigma_u is the implied exact covariance, banded with
// bandwidth 3.
struct Design1Truth {
  MatrixXd y;         // N x T
  MatrixXd loadings;  // N x 2
  MatrixXd factors;   // T x 2
  MatrixXd sigma_u;   // N x N
  MatrixXd errors;    // N x T
};

namespace detail {

enum : std::uint64_t {
  kStreamEps = 0,
  kStreamCoef = 1,
  kStreamFactors = 2,
  kStreamLoadings = 3,
  kStreamEta = 4,
};

struct Design1Parts {
  MatrixXd eps;
  VectorXd a, b, c;
};

inline Design1Parts draw_design1_parts(int n, int t, std::uint64_t seed) {
  Design1Parts parts;
  parts.eps = MatrixXd(n, t);
  CounterRng eps_rng(seed, kStreamEps);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) parts.eps(i, s) = eps_rng.normal();
  parts.a = VectorXd(n);
  parts.b = VectorXd(n);
  parts.c = VectorXd(n);
  CounterRng coef_rng(seed, kStreamCoef);
  for (int i = 0; i < n; ++i) {
    parts.a(i) = coef_rng.normal();
    parts.b(i) = coef_rng.normal();
    parts.c(i) = coef_rng.normal();
  }
  return parts;
}

// Weight of e_k in u_j under the banded moving-average recursion.
inline double ma_coef(const Design1Parts& parts, int j, int k) {
  if (k == j) return 1.0;
  if (k == j - 1 && j >= 1) return parts.a(j - 1);
  if (k == j - 2 && j >= 2) return parts.b(j - 2);
  if (k == j - 3 && j >= 3) return parts.c(j - 3);
  return 0.0;
}

}  // namespace detail

inline Design1Truth gen_design1(int n, int t, std::uint64_t seed) {
  if (n < 4) throw DimensionError("design 1 needs N >= 4");
  if (t < 2) throw DimensionError("design 1 needs T >= 2");
  const detail::Design1Parts parts = detail::draw_design1_parts(n, t, seed);

  Design1Truth out;
  out.errors = MatrixXd(n, t);
  for (int j = 0; j < n; ++j) {
    out.errors.row(j) = parts.eps.row(j);
    if (j >= 1) out.errors.row(j) += parts.a(j - 1) * parts.eps.row(j - 1);
    if (j >= 2) out.errors.row(j) += parts.b(j - 2) * parts.eps.row(j - 2);
    if (j >= 3) out.errors.row(j) += parts.c(j - 3) * parts.eps.row(j - 3);
  }

  out.sigma_u = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n && j <= i + 3; ++j) {
      double v = 0.0;
      for (int k = std::max(0, j - 3); k <= i; ++k)
        v += detail::ma_coef(parts, i, k) * detail::ma_coef(parts, j, k);
      out.sigma_u(i, j) = v;
      out.sigma_u(j, i) = v;
    }

  out.factors = MatrixXd(t, 2);
  CounterRng fac_rng(seed, detail::kStreamFactors);
  for (int s = 0; s < t; ++s) {
    out.factors(s, 0) = fac_rng.normal();
    out.factors(s, 1) = fac_rng.normal();
  }
  out.loadings = MatrixXd(n, 2);
  CounterRng load_rng(seed, detail::kStreamLoadings);
  for (int i = 0; i < n; ++i) {
    out.loadings(i, 0) = 2.0 * load_rng.uniform() - 1.0;
    out.loadings(i, 1) = 2.0 * load_rng.uniform() - 1.0;
  }
  out.y = out.loadings * out.factors.transpose() + out.errors;
  return out;
}

// Design 2: y_it = x_it' beta + lambda_i' f_t + u_it over the design-1
// factor structure, with regressors correlated with the factors and
// loadings:
//   x_it1 = 2.5 lambda_i1 f_1t - 0.2 lambda_i2 f_2t - 1 + eta_it1
//   x_it2 =     lambda_i1 f_1t - 2   lambda_i2 f_2t + 1 + eta_it2.
struct Design2Data {
  PanelRegression panel;
  Design1Truth truth;
};

inline Design2Data gen_design2(int n, int t, const Eigen::Vector2d& beta,
                               std::uint64_t seed) {
  Design1Truth truth = gen_design1(n, t, seed);
  MatrixXd eta1(n, t), eta2(n, t);
  CounterRng eta_rng(seed, detail::kStreamEta);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      eta1(i, s) = eta_rng.normal();
      eta2(i, s) = eta_rng.normal();
    }
  const MatrixXd g1 = truth.loadings.col(0) * truth.factors.col(0).transpose();
  const MatrixXd g2 = truth.loadings.col(1) * truth.factors.col(1).transpose();
  MatrixXd x1 = 2.5 * g1 - 0.2 * g2 + eta1;
  x1.array() -= 1.0;
  MatrixXd x2 = g1 - 2.0 * g2 + eta2;
  x2.array() += 1.0;
  MatrixXd y = beta(0) * x1 + beta(1) * x2 + truth.loadings * truth.factors.transpose() +
               truth.errors;
  PanelRegression panel(std::move(y), {std::move(x1), std::move(x2)});
  return Design2Data{std::move(panel), std::move(truth)};
}

// Smallest canonical correlation between the column spaces of two n x r
// blocks, from the symmetric form of (A'A)^-1 A'B (B'B)^-1 B'A. Eigenvalues
// are squared correlations; anything outside [0,1] beyond 1e-8 indicates a
// defect and throws, smaller excursions are clamped.
inline double smallest_canonical_correlation(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("canonical correlation inputs must have equal shapes");
  const Eigen::Index r = a.cols();
  if (r < 1 || a.rows() <= r)
    throw DimensionError("canonical correlation needs n > r >= 1");
  // Column scaling leaves both column spaces (hence the correlations)
  // unchanged and keeps the Gram matrices well conditioned even when the
  // input columns have wildly different norms.
  MatrixXd an = a, bn = b;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double na = an.col(j).norm();
    const double nb = bn.col(j).norm();
    if (na == 0.0 || nb == 0.0) throw RankError("zero column in canonical input");
    an.col(j) /= na;
    bn.col(j) /= nb;
  }
  const Eigen::LLT<MatrixXd> ata(MatrixXd(an.transpose() * an));
  if (ata.info() != Eigen::Success) throw RankError("first block is rank deficient");
  const Eigen::LLT<MatrixXd> btb(MatrixXd(bn.transpose() * bn));
  if (btb.info() != Eigen::Success) throw RankError("second block is rank deficient");
  const MatrixXd atb = an.transpose() * bn;
  const MatrixXd mid = atb * btb.solve(atb.transpose());
  const MatrixXd l = ata.matrixL();
  MatrixXd g = l.triangularView<Eigen::Lower>().solve(mid);
  g = l.triangularView<Eigen::Lower>().solve(g.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(SymmetricMatrix(g).data(),
                                             Eigen::EigenvaluesOnly);
  // Squared correlations live in [0,1]; roundoff from the solves may push
  // the extremes slightly outside, so clamp rather than fail.
  return std::sqrt(std::min(std::max(es.eigenvalues()(0), 0.0), 1.0));
}

inline double common_rmse(const MatrixXd& fitted, const MatrixXd& truth) {
  if (fitted.rows() != truth.rows() || fitted.cols() != truth.cols())
    throw DimensionError("RMSE inputs must have equal shapes");
  const double nt = static_cast<double>(fitted.rows()) * static_cast<double>(fitted.cols());
  return std::sqrt((fitted - truth).squaredNorm() / nt);
}

// Diagnostic mean_t || N^{-1/2} L' (inv_est - inv_true) u_t ||, the quantity
// whose vanishing drives the weighted estimator's efficiency.
inline double weighted_convergence_stat(const MatrixXd& loadings,
                                        const SymmetricMatrix& inv_true,
                                        const SymmetricMatrix& inv_est,
                                        const MatrixXd& u) {
  const Eigen::Index n = loadings.rows();
  if (inv_true.order() != n || inv_est.order() != n || u.rows() != n)
    throw DimensionError("convergence diagnostic inputs do not conform");
  const MatrixXd m = loadings.transpose() * (inv_est.data() - inv_true.data());
  const MatrixXd v = m * u;  // r x T
  const double root_n = std::sqrt(static_cast<double>(n));
  double acc = 0.0;
  for (Eigen::Index s = 0; s < v.cols(); ++s) acc += v.col(s).norm() / root_n;
  return acc / static_cast<double>(v.cols());
}

enum class Estimator { pc, hwpc, ewpc, pc_panel, wpc_panel };

inline std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::pc: return "pc";
    case Estimator::hwpc: return "hwpc";
    case Estimator::ewpc: return "ewpc";
    case Estimator::pc_panel: return "pc-panel";
    case Estimator::wpc_panel: return "wpc-panel";
  }
  return "?";
}

struct McConfig {
  int design = 1;
  int n_units = 0;
  int n_periods = 0;
  int replications = 0;
  std::uint64_t master_seed = 0;
  std::vector<Estimator> estimators;  // empty means the design's defaults
  Eigen::Vector2d beta_true{1.0, 3.0};
  ThresholdConfig threshold;
  IterationConfig iteration{/*r=*/2, /*max_iter=*/500, /*tol=*/1e-7};
  int jobs = 0;  // 0 means hardware concurrency; never affects the numbers
};

struct McRecord {
  int replication = 0;
  Estimator estimator = Estimator::pc;
  bool ok = false;
  std::string error;
  double cc_loadings = std::numeric_limits<double>::quiet_NaN();
  double cc_factors = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  VectorXd beta;  // design 2 only
};

struct McAggregate {
  Estimator estimator = Estimator::pc;
  int n_ok = 0;
  int n_failed = 0;
  double mean_cc_loadings = std::numeric_limits<double>::quiet_NaN();
  double mean_cc_factors = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
  VectorXd beta_mean;
  VectorXd normalized_se;         // sample sd of beta over reps, times sqrt(NT)
  VectorXd relative_efficiency;   // var(wpc)/var(pc) per coefficient
};

struct McReport {
  McConfig config;
  std::vector<McRecord> records;     // replication-major, estimator order fixed
  std::vector<McAggregate> aggregates;
};

namespace detail {

inline std::vector<Estimator> default_estimators(int design) {
  if (design == 1) return {Estimator::pc, Estimator::hwpc, Estimator::ewpc};
  return {Estimator::pc_panel, Estimator::wpc_panel};
}

inline void run_design1_rep(const McConfig& cfg, int rep, McRecord* slot) {
  const std::uint64_t seed = derive_replication_seed(cfg.master_seed,
                                                     static_cast<std::uint64_t>(rep));
  const Design1Truth truth = gen_design1(cfg.n_units, cfg.n_periods, seed);
  const ObservationPanel panel(truth.y);
  const MatrixXd common_true = truth.loadings * truth.factors.transpose();
  const int r = cfg.iteration.r;
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    McRecord& rec = slot[e];
    rec.replication = rep;
    rec.estimator = cfg.estimators[e];
    try {
      FactorEstimate est;
      switch (rec.estimator) {
        case Estimator::pc: est = wpc_fit(panel, r, WeightSpec::identity()); break;
        case Estimator::hwpc: est = hwpc_fit(panel, r); break;
        case Estimator::ewpc: est = ewpc_fit(panel, r, cfg.threshold).first; break;
        default:
          throw DimensionError("panel estimators require design 2");
      }
      rec.cc_loadings = smallest_canonical_correlation(est.loadings, truth.loadings);
      rec.cc_factors = smallest_canonical_correlation(est.factors, truth.factors);
      rec.rmse = common_rmse(common_components(est), common_true);
      rec.ok = true;
    } catch (const WpcError& err) {
      rec.ok = false;
      rec.error = err.what();
    }
  }
}

inline void run_design2_rep(const McConfig& cfg, int rep, McRecord* slot) {
  const std::uint64_t seed = derive_replication_seed(cfg.master_seed,
                                                     static_cast<std::uint64_t>(rep));
  const Design2Data data = gen_design2(cfg.n_units, cfg.n_periods, cfg.beta_true, seed);
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    McRecord& rec = slot[e];
    rec.replication = rep;
    rec.estimator = cfg.estimators[e];
    try {
      PanelFit fit;
      switch (rec.estimator) {
        case Estimator::pc_panel: fit = pc_panel_fit(data.panel, cfg.iteration); break;
        case Estimator::wpc_panel:
          fit = wpc_panel_fit(data.panel, cfg.iteration, cfg.threshold);
          break;
        default:
          throw DimensionError("factor estimators require design 1");
      }
      if (!fit.converged)
        throw NumericalError("alternation did not converge", fit.iterations);
      rec.beta = fit.beta;
      rec.ok = true;
    } catch (const WpcError& err) {
      rec.ok = false;
      rec.error = err.what();
    }
  }
}

}  // namespace detail

// Runs the replication loop, optionally across threads. Replication k is a
// pure function of (master_seed, k), results land in preassigned slots, and
// aggregation scans them in fixed order, so the report is bit-identical for
// any jobs value.
inline McReport run_monte_carlo(const McConfig& cfg_in) {
  McConfig cfg = cfg_in;
  if (cfg.design != 1 && cfg.design != 2)
    throw DimensionError("design must be 1 or 2");
  if (cfg.replications < 1) throw DimensionError("need at least one replication");
  if (cfg.estimators.empty()) cfg.estimators = detail::default_estimators(cfg.design);
  for (Estimator e : cfg.estimators) {
    const bool factor_side =
        e == Estimator::pc || e == Estimator::hwpc || e == Estimator::ewpc;
    if (factor_side != (cfg.design == 1))
      throw DimensionError("estimator " + estimator_name(e) +
                           " does not apply to design " + std::to_string(cfg.design));
  }
  cfg.threshold.validate();

  const int reps = cfg.replications;
  const std::size_t n_est = cfg.estimators.size();
  std::vector<McRecord> records(static_cast<std::size_t>(reps) * n_est);

  int jobs = cfg.jobs > 0 ? cfg.jobs
                          : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, reps);

  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (int k = next.fetch_add(1); k < reps; k = next.fetch_add(1)) {
      McRecord* slot = records.data() + static_cast<std::size_t>(k) * n_est;
      try {
        if (cfg.design == 1)
          detail::run_design1_rep(cfg, k, slot);
        else
          detail::run_design2_rep(cfg, k, slot);
      } catch (const std::exception& err) {
        for (std::size_t e = 0; e < n_est; ++e) {
          slot[e].replication = k;
          slot[e].estimator = cfg.estimators[e];
          slot[e].ok = false;
          slot[e].error = err.what();
        }
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  McReport report;
  report.config = cfg;
  report.records = std::move(records);
  for (std::size_t e = 0; e < n_est; ++e) {
    McAggregate agg;
    agg.estimator = cfg.estimators[e];
    double sum_l = 0.0, sum_f = 0.0, sum_r = 0.0;
    VectorXd beta_sum = VectorXd::Zero(2);
    std::vector<VectorXd> betas;
    for (int k = 0; k < reps; ++k) {
      const McRecord& rec = report.records[static_cast<std::size_t>(k) * n_est + e];
      if (!rec.ok) {
        ++agg.n_failed;
        continue;
      }
      ++agg.n_ok;
      if (cfg.design == 1) {
        sum_l += rec.cc_loadings;
        sum_f += rec.cc_factors;
        sum_r += rec.rmse;
      } else {
        if (beta_sum.size() != rec.beta.size()) beta_sum = VectorXd::Zero(rec.beta.size());
        beta_sum += rec.beta;
        betas.push_back(rec.beta);
      }
    }
    if (cfg.design == 1 && agg.n_ok > 0) {
      agg.mean_cc_loadings = sum_l / agg.n_ok;
      agg.mean_cc_factors = sum_f / agg.n_ok;
      agg.mean_rmse = sum_r / agg.n_ok;
    }
    if (cfg.design == 2 && agg.n_ok > 0) {
      agg.beta_mean = beta_sum / agg.n_ok;
      const Eigen::Index d = agg.beta_mean.size();
      agg.normalized_se = VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
      if (agg.n_ok > 1) {
        VectorXd ssq = VectorXd::Zero(d);
        for (const VectorXd& bvec : betas)
          ssq += (bvec - agg.beta_mean).cwiseAbs2();
        const double nt = static_cast<double>(cfg.n_units) *
                          static_cast<double>(cfg.n_periods);
        agg.normalized_se = (ssq / (agg.n_ok - 1.0)).cwiseSqrt() * std::sqrt(nt);
      }
    }
    report.aggregates.push_back(std::move(agg));
  }

  // Efficiency of the weighted panel estimator against plain PC, per
  // coefficient, from the same replications.
  if (cfg.design == 2) {
    const McAggregate* pc_agg = nullptr;
    McAggregate* wpc_agg = nullptr;
    for (auto& agg : report.aggregates) {
      if (agg.estimator == Estimator::pc_panel) pc_agg = &agg;
      if (agg.estimator == Estimator::wpc_panel) wpc_agg = &agg;
    }
    if (pc_agg && wpc_agg && pc_agg->n_ok > 1 && wpc_agg->n_ok > 1 &&
        pc_agg->normalized_se.size() == wpc_agg->normalized_se.size()) {
      wpc_agg->relative_efficiency =
          wpc_agg->normalized_se.cwiseAbs2().cwiseQuotient(
              pc_agg->normalized_se.cwiseAbs2());
    }
  }
  return report;
}

}  // namespace wpc
