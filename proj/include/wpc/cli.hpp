#pragma once

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wpc/io.hpp"

namespace wpc {

// Exit codes: 0 success, 1 user error (flags, malformed input), 2 numerical
// failure (definiteness, rank, bandwidth, convergence).
namespace cli_detail {

struct ThresholdFlags {
  std::string constant_c = "auto";
  std::string rule = "soft";
  double scad_a = 3.7;
  int cv_folds = 5;
  double pd_epsilon = 1e-6;

  void attach(CLI::App* cmd) {
    cmd->add_option("--threshold-c", constant_c,
                    "threshold constant C, or 'auto' for cross-validation");
    cmd->add_option("--threshold-rule", rule, "shrinkage rule: hard, soft, or scad")
        ->check(CLI::IsMember({"hard", "soft", "scad"}));
    cmd->add_option("--scad-a", scad_a, "SCAD parameter a (> 2)");
    cmd->add_option("--cv-folds", cv_folds, "cross-validation folds");
    cmd->add_option("--pd-epsilon", pd_epsilon,
                    "minimum eigenvalue enforced on the thresholded covariance");
  }

  ThresholdConfig to_config() const {
    ThresholdConfig cfg;
    if (rule == "hard")
      cfg.rule = ThresholdRule::hard;
    else if (rule == "soft")
      cfg.rule = ThresholdRule::soft;
    else
      cfg.rule = ThresholdRule::scad;
    cfg.scad_a = scad_a;
    if (constant_c != "auto") {
      double v = 0.0;
      if (!detail::parse_double(constant_c, v) || !(v > 0.0))
        throw ParseError("--threshold-c must be 'auto' or a positive number, got '" +
                         constant_c + "'");
      cfg.constant_C = v;
    }
    cfg.cv_folds = cv_folds;
    cfg.pd_epsilon = pd_epsilon;
    cfg.validate();
    return cfg;
  }
};

inline HacConfig parse_hac(const std::string& text) {
  HacConfig cfg;
  if (text == "auto") return cfg;
  double v = 0.0;
  if (!detail::parse_double(text, v) || v != static_cast<long>(v) || v < 0)
    throw ParseError("--hac-k must be 'auto' or a nonnegative integer, got '" + text +
                     "'");
  cfg.bandwidth_K = static_cast<int>(v);
  return cfg;
}

inline Estimator parse_estimator(const std::string& name) {
  if (name == "pc") return Estimator::pc;
  if (name == "hwpc") return Estimator::hwpc;
  if (name == "ewpc") return Estimator::ewpc;
  if (name == "pc-panel") return Estimator::pc_panel;
  if (name == "wpc-panel") return Estimator::wpc_panel;
  throw ParseError("unknown estimator '" + name +
                   "' (expected pc, hwpc, ewpc, pc-panel, wpc-panel)");
}

inline void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ParseError("cannot open '" + out_path + "' for writing");
  out << text;
  if (!out) throw ParseError("failed writing '" + out_path + "'");
}

inline void emit_json(const json& j, const std::string& out_path) {
  emit_text(j.dump(2) + "\n", out_path);
}

// Detrend first, then remove two-way means, matching how trend projection
// composes with the within transformation.
inline MatrixXd transform_slice(const MatrixXd& m, const std::string& demean,
                                int detrend) {
  MatrixXd out = detrend_project(m, detrend);
  if (demean == "two-way") out = double_demean(out);
  return out;
}

struct RankChoice {
  int value = 0;
  bool automatic = false;
};

inline RankChoice parse_rank(const std::string& text) {
  RankChoice rc;
  if (text == "auto") {
    rc.automatic = true;
    return rc;
  }
  double v = 0.0;
  if (!detail::parse_double(text, v) || v != static_cast<long>(v) || v < 0)
    throw ParseError("--rank must be 'auto' or a nonnegative integer, got '" + text +
                     "'");
  rc.value = static_cast<int>(v);
  return rc;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"weighted principal components for approximate factor models and "
               "interactive-effects panels"};
  app.require_subcommand(1);

  // factor ------------------------------------------------------------
  auto* factor_cmd = app.add_subcommand(
      "factor", "fit a factor model by plain, heteroskedasticity-weighted, or "
                "covariance-weighted PC");
  std::string f_input, f_weight = "pc", f_hac = "auto", f_out;
  int f_rank = 0;
  cli_detail::ThresholdFlags f_thr;
  factor_cmd->add_option("--input", f_input, "panel CSV, rows=units, cols=periods")
      ->required()
      ->check(CLI::ExistingFile);
  factor_cmd->add_option("--rank", f_rank, "number of factors")->required();
  factor_cmd->add_option("--weight", f_weight, "pc, hwpc, or ewpc")
      ->check(CLI::IsMember({"pc", "hwpc", "ewpc"}));
  factor_cmd->add_option("--hac-k", f_hac, "HAC bandwidth, or 'auto'");
  factor_cmd->add_option("--out", f_out, "output JSON path (default stdout)");
  f_thr.attach(factor_cmd);

  // cov ---------------------------------------------------------------
  auto* cov_cmd = app.add_subcommand(
      "cov", "thresholded sparse error covariance from the PC residual");
  std::string c_input, c_out, c_inverse_out, c_meta_out;
  int c_rank = 0;
  cli_detail::ThresholdFlags c_thr;
  cov_cmd->add_option("--input", c_input, "panel CSV, rows=units, cols=periods")
      ->required()
      ->check(CLI::ExistingFile);
  cov_cmd->add_option("--rank", c_rank, "number of factors removed before thresholding")
      ->required();
  cov_cmd->add_option("--out", c_out, "CSV path for the covariance matrix")->required();
  cov_cmd->add_option("--inverse-out", c_inverse_out, "CSV path for its inverse");
  cov_cmd->add_option("--meta-out", c_meta_out,
                      "JSON path for the estimate metadata (default stdout)");
  c_thr.attach(cov_cmd);

  // panel ---------------------------------------------------------------
  auto* panel_cmd = app.add_subcommand(
      "panel", "interactive-effects regression with weighted or plain PC factors");
  std::string p_y, p_rank = "auto", p_criterion = "ic", p_method = "wpc";
  std::string p_demean = "none", p_out;
  std::vector<std::string> p_x;
  int p_max_rank = 8, p_detrend = 0, p_max_iter = 500;
  double p_tol = 1e-7;
  cli_detail::ThresholdFlags p_thr;
  panel_cmd->add_option("--y", p_y, "outcome panel CSV")->required()->check(
      CLI::ExistingFile);
  panel_cmd->add_option("--x", p_x, "regressor CSVs, one per regressor")
      ->required()
      ->delimiter(',');
  panel_cmd->add_option("--rank", p_rank, "factor count, or 'auto' to select");
  panel_cmd->add_option("--max-rank", p_max_rank, "upper bound for rank selection");
  panel_cmd->add_option("--criterion", p_criterion, "rank criterion: ic or cp")
      ->check(CLI::IsMember({"ic", "cp"}));
  panel_cmd->add_option("--method", p_method, "wpc or pc")
      ->check(CLI::IsMember({"wpc", "pc"}));
  panel_cmd->add_option("--demean", p_demean, "none or two-way")
      ->check(CLI::IsMember({"none", "two-way"}));
  panel_cmd->add_option("--detrend", p_detrend, "polynomial trend degree to project off");
  panel_cmd->add_option("--tol", p_tol, "sup-norm tolerance on beta");
  panel_cmd->add_option("--max-iter", p_max_iter, "alternation cap");
  panel_cmd->add_option("--out", p_out, "output JSON path (default stdout)");
  p_thr.attach(panel_cmd);

  // select-rank ---------------------------------------------------------
  auto* rank_cmd = app.add_subcommand("select-rank",
                                      "choose the factor count by CP or IC");
  std::string r_y, r_criterion = "ic", r_demean = "none", r_out;
  std::vector<std::string> r_x;
  int r_max_rank = 0, r_detrend = 0, r_max_iter = 500;
  double r_tol = 1e-7;
  rank_cmd->add_option("--y", r_y, "panel CSV")->required()->check(CLI::ExistingFile);
  rank_cmd->add_option("--x", r_x, "optional regressor CSVs")->delimiter(',');
  rank_cmd->add_option("--max-rank", r_max_rank, "largest rank scanned")->required();
  rank_cmd->add_option("--criterion", r_criterion, "ic or cp")
      ->check(CLI::IsMember({"ic", "cp"}));
  rank_cmd->add_option("--demean", r_demean, "none or two-way")
      ->check(CLI::IsMember({"none", "two-way"}));
  rank_cmd->add_option("--detrend", r_detrend, "polynomial trend degree to project off");
  rank_cmd->add_option("--tol", r_tol, "sup-norm tolerance on beta");
  rank_cmd->add_option("--max-iter", r_max_iter, "alternation cap");
  rank_cmd->add_option("--out", r_out, "output JSON path (default stdout)");

  // simulate --------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate",
                                     "deterministic Monte Carlo over the two designs");
  int s_design = 1, s_n = 0, s_t = 0, s_reps = 0, s_jobs = 0, s_max_iter = 500;
  std::uint64_t s_seed = 0;
  double s_tol = 1e-7;
  std::vector<std::string> s_estimators;
  std::vector<double> s_beta{1.0, 3.0};
  std::string s_format = "table", s_out, s_raw_out;
  cli_detail::ThresholdFlags s_thr;
  sim_cmd->add_option("--design", s_design, "1 (factor) or 2 (panel regression)")
      ->required();
  sim_cmd->add_option("--n", s_n, "cross-section size")->required();
  sim_cmd->add_option("--t", s_t, "time-series length")->required();
  sim_cmd->add_option("--reps", s_reps, "replications")->required();
  sim_cmd->add_option("--seed", s_seed, "master seed");
  sim_cmd->add_option("--estimators", s_estimators,
                      "subset of pc,hwpc,ewpc,pc-panel,wpc-panel")
      ->delimiter(',');
  sim_cmd->add_option("--beta", s_beta, "true coefficients for design 2")
      ->expected(2)
      ->delimiter(',');
  sim_cmd->add_option("--jobs", s_jobs, "worker threads (0 = hardware)");
  sim_cmd->add_option("--tol", s_tol, "alternation tolerance");
  sim_cmd->add_option("--max-iter", s_max_iter, "alternation cap");
  sim_cmd->add_option("--format", s_format, "table, json, or csv")
      ->check(CLI::IsMember({"table", "json", "csv"}));
  sim_cmd->add_option("--out", s_out, "output path (default stdout)");
  sim_cmd->add_option("--raw-out", s_raw_out, "CSV path for per-replication records");
  s_thr.attach(sim_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const auto fail_json = [](const char* kind, const std::string& detail) {
    json j;
    j["error"] = {{"kind", kind}, {"detail", detail}};
    std::cerr << j.dump() << "\n";
  };

  try {
    if (factor_cmd->parsed()) {
      const ObservationPanel panel = read_panel_csv(f_input);
      json out;
      json config{{"command", "factor"}, {"input", f_input}, {"rank", f_rank},
                  {"weight", f_weight}, {"hac_k", f_hac}};
      if (f_weight == "pc") {
        out["estimate"] = factor_estimate_json(
            wpc_fit(panel, f_rank, WeightSpec::identity()));
      } else if (f_weight == "hwpc") {
        out["estimate"] = factor_estimate_json(hwpc_fit(panel, f_rank));
      } else {
        const ThresholdConfig thr = f_thr.to_config();
        config["threshold"] = threshold_config_json(thr);
        const auto [est, cov] = ewpc_fit(panel, f_rank, thr);
        out["estimate"] = factor_estimate_json(est);
        out["cov"] = sparse_cov_meta_json(cov);
        out["variance"] = variance_report_json(
            variance_report(panel, est, cov, cli_detail::parse_hac(f_hac)));
      }
      out["config"] = std::move(config);
      cli_detail::emit_json(out, f_out);
    } else if (cov_cmd->parsed()) {
      const ObservationPanel panel = read_panel_csv(c_input);
      const ThresholdConfig thr = c_thr.to_config();
      const SparseCovEstimate cov = threshold_from_pc(panel, c_rank, thr);
      write_matrix_csv(c_out, cov.sigma.data());
      if (!c_inverse_out.empty()) write_matrix_csv(c_inverse_out, cov.inverse.data());
      json meta;
      meta["config"] = json{{"command", "cov"}, {"input", c_input}, {"rank", c_rank},
                            {"threshold", threshold_config_json(thr)},
                            {"out", c_out}};
      meta["estimate"] = sparse_cov_meta_json(cov);
      cli_detail::emit_json(meta, c_meta_out);
    } else if (panel_cmd->parsed()) {
      const MatrixXd y_raw = read_matrix_csv(p_y);
      std::vector<MatrixXd> xs;
      xs.reserve(p_x.size());
      for (const std::string& path : p_x) xs.push_back(read_matrix_csv(path));
      MatrixXd y = cli_detail::transform_slice(y_raw, p_demean, p_detrend);
      for (MatrixXd& x : xs) x = cli_detail::transform_slice(x, p_demean, p_detrend);
      const PanelRegression reg(std::move(y), std::move(xs));

      const cli_detail::RankChoice rank = cli_detail::parse_rank(p_rank);
      const RankCriterion crit =
          p_criterion == "cp" ? RankCriterion::cp : RankCriterion::ic;
      IterationConfig iter;
      iter.max_iter = p_max_iter;
      iter.tol = p_tol;
      json out;
      int r_used = rank.value;
      if (rank.automatic) {
        const RankSelection sel = select_rank(reg, p_max_rank, crit, iter);
        out["selection"] = rank_selection_json(sel);
        r_used = sel.selected;
      }
      iter.r = r_used;
      PanelFit fit;
      json config{{"command", "panel"}, {"y", p_y}, {"x", p_x},
                  {"rank", rank.automatic ? json("auto") : json(rank.value)},
                  {"rank_used", r_used}, {"criterion", p_criterion},
                  {"method", p_method}, {"demean", p_demean}, {"detrend", p_detrend},
                  {"tol", p_tol}, {"max_iter", p_max_iter}};
      if (p_method == "wpc") {
        const ThresholdConfig thr = p_thr.to_config();
        config["threshold"] = threshold_config_json(thr);
        fit = wpc_panel_fit(reg, iter, thr);
      } else {
        fit = pc_panel_fit(reg, iter);
      }
      if (!fit.converged)
        throw NumericalError("panel alternation did not converge within " +
                                 std::to_string(p_max_iter) + " iterations",
                             fit.iterations);
      out["fit"] = panel_fit_json(fit);
      out["config"] = std::move(config);
      cli_detail::emit_json(out, p_out);
    } else if (rank_cmd->parsed()) {
      const RankCriterion crit =
          r_criterion == "cp" ? RankCriterion::cp : RankCriterion::ic;
      json out;
      json config{{"command", "select-rank"}, {"y", r_y}, {"x", r_x},
                  {"max_rank", r_max_rank}, {"criterion", r_criterion},
                  {"demean", r_demean}, {"detrend", r_detrend},
                  {"tol", r_tol}, {"max_iter", r_max_iter}};
      const MatrixXd y_raw = read_matrix_csv(r_y);
      const MatrixXd y = cli_detail::transform_slice(y_raw, r_demean, r_detrend);
      if (r_x.empty()) {
        out["selection"] = rank_selection_json(
            select_rank(ObservationPanel(y), r_max_rank, crit));
      } else {
        std::vector<MatrixXd> xs;
        xs.reserve(r_x.size());
        for (const std::string& path : r_x)
          xs.push_back(cli_detail::transform_slice(read_matrix_csv(path), r_demean,
                                                   r_detrend));
        IterationConfig iter;
        iter.max_iter = r_max_iter;
        iter.tol = r_tol;
        const PanelRegression reg(y, std::move(xs));
        out["selection"] = rank_selection_json(select_rank(reg, r_max_rank, crit, iter));
      }
      out["config"] = std::move(config);
      cli_detail::emit_json(out, r_out);
    } else if (sim_cmd->parsed()) {
      McConfig cfg;
      cfg.design = s_design;
      cfg.n_units = s_n;
      cfg.n_periods = s_t;
      cfg.replications = s_reps;
      cfg.master_seed = s_seed;
      for (const std::string& name : s_estimators)
        cfg.estimators.push_back(cli_detail::parse_estimator(name));
      cfg.beta_true = Eigen::Vector2d(s_beta[0], s_beta[1]);
      cfg.threshold = s_thr.to_config();
      cfg.iteration.max_iter = s_max_iter;
      cfg.iteration.tol = s_tol;
      cfg.jobs = s_jobs;
      const McReport report = run_monte_carlo(cfg);
      if (!s_raw_out.empty()) cli_detail::emit_text(mc_records_csv(report), s_raw_out);
      if (s_format == "json")
        cli_detail::emit_json(mc_report_json(report), s_out);
      else if (s_format == "csv")
        cli_detail::emit_text(mc_records_csv(report), s_out);
      else
        cli_detail::emit_text(mc_report_table(report), s_out);
    }
    return 0;
  } catch (const ParseError& e) {
    fail_json("parse", e.what());
    return 1;
  } catch (const DimensionError& e) {
    fail_json("dimension", e.what());
    return 1;
  } catch (const DefinitenessError& e) {
    fail_json("definiteness", e.what());
    return 2;
  } catch (const RankError& e) {
    fail_json("rank", e.what());
    return 2;
  } catch (const BandwidthError& e) {
    fail_json("bandwidth", e.what());
    return 2;
  } catch (const DegenerateSeriesError& e) {
    fail_json("degenerate-series", e.what());
    return 2;
  } catch (const NumericalError& e) {
    fail_json("numerical", e.what());
    return 2;
  } catch (const WpcError& e) {
    fail_json("error", e.what());
    return 2;
  }
}

}  // namespace wpc
