// Integration acceptance suite. Each criterion prints exactly one line,
//   C<n> PASS: <detail>   or   C<n> FAIL: <detail>
// and the process exits nonzero if any selected criterion fails. With no
// arguments all criteria run; otherwise each argument is a criterion number.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "wpc/io.hpp"
#include "wpc/sim.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------- C1
// Design-1 factor recovery benchmark: mean smallest canonical correlations
// and common-component RMSE against frozen reference values, per cell, with
// the efficiency ordering ewpc > hwpc > pc (correlations) and the reverse
// for RMSE.
struct Design1Cell {
  int t, n;
  std::uint64_t seed;
  double cc_load[3];  // pc, hwpc, ewpc
  double cc_fact[3];
  double rmse[3];
};

Outcome criterion1() {
  const std::vector<Design1Cell> cells = {
      {50, 100, 20501, {0.411, 0.508, 0.553}, {0.476, 0.602, 0.666},
       {0.546, 0.524, 0.498}},
      {100, 150, 20502, {0.613, 0.761, 0.807}, {0.661, 0.835, 0.902},
       {0.385, 0.346, 0.307}},
      {150, 300, 20503, {0.882, 0.892, 0.901}, {0.927, 0.946, 0.973},
       {0.257, 0.243, 0.222}},
  };
  const double tol = 0.06;
  double worst = 0.0;
  std::string worst_at;
  Outcome out;
  for (const Design1Cell& cell : cells) {
    wpc::McConfig cfg;
    cfg.design = 1;
    cfg.n_units = cell.n;
    cfg.n_periods = cell.t;
    cfg.replications = 100;
    cfg.master_seed = cell.seed;
    const wpc::McReport rep = wpc::run_monte_carlo(cfg);
    const wpc::Estimator order[3] = {wpc::Estimator::pc, wpc::Estimator::hwpc,
                                     wpc::Estimator::ewpc};
    double got_l[3], got_f[3], got_r[3];
    for (int e = 0; e < 3; ++e) {
      const wpc::McAggregate* agg = nullptr;
      for (const wpc::McAggregate& a : rep.aggregates)
        if (a.estimator == order[e]) agg = &a;
      if (!agg || agg->n_failed != 0) {
        out.detail = "cell T=" + std::to_string(cell.t) + " N=" +
                     std::to_string(cell.n) + " had failed replications";
        return out;
      }
      got_l[e] = agg->mean_cc_loadings;
      got_f[e] = agg->mean_cc_factors;
      got_r[e] = agg->mean_rmse;
    }
    const auto track = [&](double got, double want, const char* tag) {
      const double dev = std::abs(got - want);
      if (dev > worst) {
        worst = dev;
        worst_at = std::string(tag) + " at T=" + std::to_string(cell.t) +
                   ",N=" + std::to_string(cell.n) + " (got " + fmt(got) +
                   ", want " + fmt(want) + ")";
      }
    };
    for (int e = 0; e < 3; ++e) {
      track(got_l[e], cell.cc_load[e], "cc_loadings");
      track(got_f[e], cell.cc_fact[e], "cc_factors");
      track(got_r[e], cell.rmse[e], "rmse");
    }
    const bool order_ok = got_l[2] > got_l[1] && got_l[1] > got_l[0] &&
                          got_f[2] > got_f[1] && got_f[1] > got_f[0] &&
                          got_r[2] < got_r[1] && got_r[1] < got_r[0];
    if (!order_ok) {
      out.detail = "efficiency ordering violated at T=" + std::to_string(cell.t) +
                   ",N=" + std::to_string(cell.n) + ": cc_l " + fmt(got_l[0]) + "/" +
                   fmt(got_l[1]) + "/" + fmt(got_l[2]) + ", cc_f " + fmt(got_f[0]) +
                   "/" + fmt(got_f[1]) + "/" + fmt(got_f[2]) + ", rmse " +
                   fmt(got_r[0]) + "/" + fmt(got_r[1]) + "/" + fmt(got_r[2]);
      return out;
    }
  }
  out.pass = worst <= tol;
  out.detail = "27 benchmark values within " + fmt(tol) + " (max deviation " +
               fmt(worst) + " for " + worst_at + "); orderings hold in 3/3 cells";
  if (!out.pass)
    out.detail = "deviation " + fmt(worst) + " exceeds " + fmt(tol) + " for " + worst_at;
  return out;
}

// ---------------------------------------------------------------- C2
// Design-2 coefficient benchmark: mean beta near the truth for both panel
// methods, weighted normalized dispersion near the references, and relative
// efficiency below one half per coefficient.
struct Design2Cell {
  int t, n;
  std::uint64_t seed;
  double se_wpc[2];
};

Outcome criterion2() {
  const std::vector<Design2Cell> cells = {
      {50, 100, 20601, {0.662, 0.731}},
      {100, 150, 20602, {0.681, 0.611}},
      {150, 200, 20603, {0.547, 0.602}},
  };
  Outcome out;
  double worst_mean = 0.0, worst_se = 0.0, worst_eff = 0.0;
  for (const Design2Cell& cell : cells) {
    wpc::McConfig cfg;
    cfg.design = 2;
    cfg.n_units = cell.n;
    cfg.n_periods = cell.t;
    cfg.replications = 100;
    cfg.master_seed = cell.seed;
    const wpc::McReport rep = wpc::run_monte_carlo(cfg);
    const wpc::McAggregate* pc = nullptr;
    const wpc::McAggregate* wp = nullptr;
    for (const wpc::McAggregate& agg : rep.aggregates) {
      if (agg.estimator == wpc::Estimator::pc_panel) pc = &agg;
      if (agg.estimator == wpc::Estimator::wpc_panel) wp = &agg;
    }
    if (!pc || !wp || pc->n_failed != 0 || wp->n_failed != 0) {
      out.detail = "failed replications at T=" + std::to_string(cell.t) + ",N=" +
                   std::to_string(cell.n);
      return out;
    }
    const Eigen::Vector2d truth(1.0, 3.0);
    for (int k = 0; k < 2; ++k) {
      worst_mean = std::max(worst_mean, std::abs(pc->beta_mean(k) - truth(k)));
      worst_mean = std::max(worst_mean, std::abs(wp->beta_mean(k) - truth(k)));
      worst_se = std::max(worst_se, std::abs(wp->normalized_se(k) - cell.se_wpc[k]));
      worst_eff = std::max(worst_eff, wp->relative_efficiency(k));
    }
  }
  const bool mean_ok = worst_mean <= 0.02;
  const bool se_ok = worst_se <= 0.25;
  const bool eff_ok = worst_eff < 0.5;
  out.pass = mean_ok && se_ok && eff_ok;
  out.detail = "max |beta_mean - truth| " + fmt(worst_mean) +
               " (<= 0.02), max |se_wpc - ref| " + fmt(worst_se) +
               " (<= 0.25), max relative efficiency " + fmt(worst_eff) + " (< 0.5)";
  return out;
}

// ---------------------------------------------------------------- C3
// Asymptotic-variance dominance: Xi_W - Xi_e is PSD for arbitrary weights
// and vanishes at the efficient weight.
Outcome criterion3() {
  wpc::CounterRng rng(20701, 0);
  const int n = 50;
  double worst_gap = 0.0;
  double worst_eq = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int r = 1 + k % 3;
    const MatrixXd lam = support::random_matrix(rng, n, r);
    const wpc::SymmetricMatrix sigma(support::random_pd(rng, n));
    const wpc::SymmetricMatrix w(support::random_pd(rng, n));
    const wpc::XiComparison cmp = wpc::xi_comparison(lam, sigma, w);
    worst_gap = std::min(worst_gap, cmp.min_eig_gap);

    const wpc::XiComparison eq = wpc::xi_comparison(lam, sigma, wpc::pd_inverse(sigma));
    worst_eq = std::max(worst_eq, (eq.xi_w - eq.xi_e).cwiseAbs().maxCoeff());
    worst_eq = std::max(worst_eq, std::abs(eq.min_eig_gap));
  }
  Outcome out;
  out.pass = worst_gap >= -1e-8 && worst_eq <= 1e-10;
  out.detail = "100 draws at N=50, r in {1,2,3}: min gap eigenvalue " +
               fmt(worst_gap) + " (>= -1e-8), max deviation at the efficient weight " +
               fmt(worst_eq) + " (<= 1e-10)";
  return out;
}

// ---------------------------------------------------------------- C4
// The trace-form gamma equals the literal Kronecker materialization.
Outcome criterion4() {
  wpc::CounterRng rng(20801, 0);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int n = 4 + k % 6;
    const int t = std::max(3, 100 / n);
    const int r = k % 3;
    const int d = 1 + k % 3;
    std::vector<MatrixXd> xs;
    for (int j = 0; j < d; ++j) xs.push_back(support::random_matrix(rng, n, t));
    const wpc::PanelRegression p(support::random_matrix(rng, n, t), xs);
    const MatrixXd lam = support::random_matrix(rng, n, r);
    const MatrixXd f = support::random_matrix(rng, t, r);
    const MatrixXd sigma = support::random_pd(rng, n);
    const MatrixXd got = wpc::gamma_estimate(
        p, f, lam, wpc::SymmetricMatrix(MatrixXd(sigma.inverse())));
    const MatrixXd want = oracle::gamma_naive(xs, f, lam, sigma);
    worst = std::max(worst,
                     (got - want).norm() / std::max(1.0, want.norm()));
  }
  Outcome out;
  out.pass = worst <= 1e-10;
  out.detail = "50 instances with NT <= 100: max Frobenius deviation " + fmt(worst) +
               " (<= 1e-10)";
  return out;
}

// ---------------------------------------------------------------- C5
// The weighted-convergence diagnostic shrinks as the sample grows.
Outcome criterion5() {
  const int n = 150;
  const auto mean_stat = [&](int t, std::uint64_t key) {
    double acc = 0.0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
      const wpc::Design1Truth truth =
          wpc::gen_design1(n, t, wpc::derive_replication_seed(key, rep));
      wpc::ThresholdConfig cfg;
      const wpc::SparseCovEstimate cov =
          wpc::threshold_from_pc(wpc::ObservationPanel(truth.y), 2, cfg);
      const wpc::SymmetricMatrix inv_true =
          wpc::pd_inverse(wpc::SymmetricMatrix(truth.sigma_u));
      acc += wpc::weighted_convergence_stat(truth.loadings, inv_true, cov.inverse,
                                            truth.errors);
    }
    return acc / reps;
  };
  const double at_100 = mean_stat(100, 20901);
  const double at_400 = mean_stat(400, 20902);
  Outcome out;
  out.pass = at_400 < at_100;
  out.detail = "mean statistic at N=150: T=100 gives " + fmt(at_100) +
               ", T=400 gives " + fmt(at_400) +
               (out.pass ? " (strictly smaller)" : " (no decrease)");
  return out;
}

// ---------------------------------------------------------------- C6
// Confidence-interval coverage for the regression coefficients and for the
// common components.
Outcome criterion6() {
  // Coefficients: design 2 at T=N=100.
  int beta_covered = 0, beta_total = 0;
  {
    const double z = wpc::inverse_normal_cdf(0.975);
    const Eigen::Vector2d truth(1.0, 3.0);
    wpc::IterationConfig iter;
    iter.r = 2;
    wpc::ThresholdConfig thr;
    for (int rep = 0; rep < 200; ++rep) {
      const wpc::Design2Data data = wpc::gen_design2(
          100, 100, truth, wpc::derive_replication_seed(21001, rep));
      const wpc::PanelFit fit = wpc::wpc_panel_fit(data.panel, iter, thr);
      if (!fit.converged) continue;
      for (int k = 0; k < 2; ++k) {
        ++beta_total;
        if (std::abs(fit.beta(k) - truth(k)) <= z * fit.se(k)) ++beta_covered;
      }
    }
  }
  const double beta_rate = static_cast<double>(beta_covered) / beta_total;

  // Common components: design 1 at T=150, N=200, five random cells per
  // replication.
  int cc_covered = 0, cc_total = 0;
  {
    wpc::ThresholdConfig thr;
    wpc::HacConfig hac;
    wpc::CounterRng cell_rng(21002, 0);
    for (int rep = 0; rep < 200; ++rep) {
      const wpc::Design1Truth truth =
          wpc::gen_design1(200, 150, wpc::derive_replication_seed(21003, rep));
      const wpc::ObservationPanel panel(truth.y);
      const auto [est, cov] = wpc::ewpc_fit(panel, 2, thr);
      for (int cell = 0; cell < 5; ++cell) {
        const Eigen::Index i =
            static_cast<Eigen::Index>(cell_rng.uniform() * 200) % 200;
        const Eigen::Index s =
            static_cast<Eigen::Index>(cell_rng.uniform() * 150) % 150;
        const wpc::CommonComponentInterval ci =
            wpc::common_component_interval(panel, est, cov, hac, i, s, 0.95);
        const double target = truth.loadings.row(i).dot(truth.factors.row(s));
        ++cc_total;
        if (std::abs(ci.center - target) <= ci.half_width) ++cc_covered;
      }
    }
  }
  const double cc_rate = static_cast<double>(cc_covered) / cc_total;

  Outcome out;
  const bool beta_ok = beta_rate >= 0.90 && beta_rate <= 0.985 && beta_total == 400;
  const bool cc_ok = cc_rate >= 0.88 && cc_rate <= 0.99 && cc_total == 1000;
  out.pass = beta_ok && cc_ok;
  out.detail = "beta coverage " + fmt(beta_rate) + " over " +
               std::to_string(beta_total) + " intervals (in [0.90, 0.985]); " +
               "common-component coverage " + fmt(cc_rate) + " over " +
               std::to_string(cc_total) + " intervals (in [0.88, 0.99])";
  return out;
}

// ---------------------------------------------------------------- C7
// Rank selection frequencies.
Outcome criterion7() {
  int cp_right = 0, ic_right = 0;
  wpc::IterationConfig base;
  for (int rep = 0; rep < 100; ++rep) {
    const wpc::Design2Data data = wpc::gen_design2(
        100, 100, {1.0, 3.0}, wpc::derive_replication_seed(21101, rep));
    if (wpc::select_rank(data.panel, 5, wpc::RankCriterion::cp, base).selected == 2)
      ++cp_right;
    if (wpc::select_rank(data.panel, 5, wpc::RankCriterion::ic, base).selected == 2)
      ++ic_right;
  }
  int noise_right = 0;
  for (int rep = 0; rep < 100; ++rep) {
    wpc::CounterRng rng(wpc::derive_replication_seed(21102, rep), 0);
    const MatrixXd noise = support::random_matrix(rng, 100, 100);
    if (wpc::select_rank(wpc::ObservationPanel(noise), 5, wpc::RankCriterion::ic)
            .selected == 0)
      ++noise_right;
  }
  Outcome out;
  out.pass = cp_right >= 90 && ic_right >= 90 && noise_right >= 80;
  out.detail = "design 2 at T=N=100: CP picked 2 in " + std::to_string(cp_right) +
               "/100, IC in " + std::to_string(ic_right) +
               "/100 (each >= 90); IC picked 0 on noise in " +
               std::to_string(noise_right) + "/100 (>= 80)";
  return out;
}

// ---------------------------------------------------------------- C8
// Exactness suite.
Outcome criterion8() {
  std::vector<std::string> failures;
  wpc::CounterRng rng(21201, 0);

  // Noise-free recovery under identity and full weights.
  {
    const int n = 40, t = 60;
    const MatrixXd lam = support::random_matrix(rng, n, 2);
    const MatrixXd f =
        std::sqrt(static_cast<double>(t)) * support::random_orthonormal(rng, t, 2);
    const MatrixXd y = lam * f.transpose();
    const wpc::ObservationPanel panel(y);
    for (const wpc::WeightSpec& w :
         {wpc::WeightSpec::identity(),
          wpc::WeightSpec::full(wpc::SymmetricMatrix(support::random_pd(rng, n)))}) {
      const wpc::FactorEstimate est = wpc::wpc_fit(panel, 2, w);
      const double dev = (wpc::common_components(est) - y).cwiseAbs().maxCoeff();
      if (!(dev <= 1e-8))
        failures.push_back("noise-free recovery deviation " + fmt(dev));
    }
  }

  // Normalization invariants of a weighted fit.
  {
    const wpc::Design1Truth truth = wpc::gen_design1(50, 70, 21202);
    const MatrixXd w_raw = support::random_pd(rng, 50);
    const wpc::FactorEstimate est =
        wpc::wpc_fit(wpc::ObservationPanel(truth.y), 2,
                     wpc::WeightSpec::full(wpc::SymmetricMatrix(w_raw)));
    const MatrixXd ftf =
        est.factors.transpose() * est.factors / 70.0 - MatrixXd::Identity(2, 2);
    if (!(ftf.cwiseAbs().maxCoeff() <= 1e-8))
      failures.push_back("factor normalization deviation " +
                         fmt(ftf.cwiseAbs().maxCoeff()));
    const MatrixXd lwl = est.loadings.transpose() * w_raw * est.loadings;
    const double off = std::abs(lwl(0, 1));
    if (!(off <= 1e-8 * std::max(1.0, lwl.cwiseAbs().maxCoeff())))
      failures.push_back("loading diagonalization deviation " + fmt(off));
  }

  // HAC estimates never dip below the PSD floor.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
      const int t = 10 + static_cast<int>(rng.uniform() * 30);
      const int r = 1 + static_cast<int>(rng.uniform() * 3);
      const int k = static_cast<int>(rng.uniform() * 6);
      const MatrixXd f = support::random_matrix(rng, t, r);
      const VectorXd u = support::random_vector(rng, t);
      const MatrixXd psi = wpc::hac_loading_variance(f, u, std::min(k, t - 1));
      worst = std::min(worst, oracle::min_eig(psi) /
                                  std::max(1.0, psi.cwiseAbs().maxCoeff()));
    }
    if (!(worst >= -1e-10))
      failures.push_back("HAC floor violated: relative min eigenvalue " + fmt(worst));
  }

  // Thresholding keeps every entry within one threshold of the raw matrix.
  {
    const wpc::Design1Truth truth = wpc::gen_design1(40, 80, 21203);
    const wpc::ObservationPanel panel(truth.y);
    const MatrixXd raw = wpc::pc_residual_cov(panel, 2).data();
    for (const wpc::ThresholdRule rule :
         {wpc::ThresholdRule::hard, wpc::ThresholdRule::soft,
          wpc::ThresholdRule::scad}) {
      wpc::ThresholdConfig cfg;
      cfg.rule = rule;
      cfg.constant_C = 0.5;
      const wpc::SparseCovEstimate cov = wpc::threshold_from_pc(panel, 2, cfg);
      for (int i = 0; i < 40; ++i) {
        if (cov.sigma.data()(i, i) != raw(i, i)) {
          failures.push_back("diagonal modified by rule " + wpc::rule_name(rule));
          break;
        }
        for (int j = 0; j < 40; ++j) {
          if (i == j) continue;
          const double tau = cov.constant_C *
                             std::sqrt(raw(i, i) * raw(j, j)) * cov.omega;
          if (!(std::abs(cov.sigma.data()(i, j) - raw(i, j)) <= tau + 1e-12)) {
            failures.push_back("shrinkage bound violated by rule " +
                               wpc::rule_name(rule));
            i = 40;
            break;
          }
        }
      }
    }
  }

  // Double demeaning zeroes every row and column sum.
  {
    const MatrixXd m = support::random_matrix(rng, 50, 80);
    const MatrixXd dd = wpc::double_demean(m);
    const double worst = std::max(dd.rowwise().sum().cwiseAbs().maxCoeff(),
                                  dd.colwise().sum().cwiseAbs().maxCoeff());
    if (!(worst <= 1e-10))
      failures.push_back("double-demean sum " + fmt(worst));
  }

  // Replication records and aggregates are bit-identical for any jobs value.
  {
    for (int design = 1; design <= 2; ++design) {
      wpc::McConfig cfg;
      cfg.design = design;
      cfg.n_units = design == 1 ? 30 : 20;
      cfg.n_periods = design == 1 ? 40 : 25;
      cfg.replications = 5;
      cfg.master_seed = 21204;
      cfg.threshold.constant_C = 0.5;
      std::string first;
      for (int jobs : {1, 2, 5}) {
        cfg.jobs = jobs;
        wpc::McReport rep = wpc::run_monte_carlo(cfg);
        nlohmann::json j = wpc::mc_report_json(rep);
        j["config"].erase("jobs");  // the only field echoing the input itself
        const std::string dumped = j.dump();
        if (first.empty())
          first = dumped;
        else if (dumped != first)
          failures.push_back("design " + std::to_string(design) +
                             " report differs at jobs=" + std::to_string(jobs));
      }
    }
  }

  Outcome out;
  out.pass = failures.empty();
  if (out.pass) {
    out.detail = "noise-free recovery, normalization, HAC floor, shrinkage bound, "
                 "demeaning, and jobs determinism all exact";
  } else {
    std::ostringstream msg;
    for (std::size_t i = 0; i < failures.size(); ++i)
      msg << (i ? "; " : "") << failures[i];
    out.detail = msg.str();
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) {
    const int n = std::atoi(argv[a]);
    if (n < 1 || n > 8) {
      std::fprintf(stderr, "usage: %s [criterion 1..8]...\n", argv[0]);
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty())
    for (int n = 1; n <= 8; ++n) selected.push_back(n);

  Outcome (*const table[8])() = {criterion1, criterion2, criterion3, criterion4,
                                 criterion5, criterion6, criterion7, criterion8};
  bool all_ok = true;
  for (const int n : selected) {
    const Outcome out = table[n - 1]();
    std::printf("C%d %s: %s\n", n, out.pass ? "PASS" : "FAIL", out.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && out.pass;
  }
  return all_ok ? 0 : 1;
}
