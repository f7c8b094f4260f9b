#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpc/factor.hpp"
#include "wpc/inference.hpp"
#include "wpc/panel.hpp"
#include "wpc/sim.hpp"
#include "wpc/sparsecov.hpp"

namespace wpc {

using nlohmann::json;

namespace detail {

inline bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  if (first == last) return false;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> toks;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      toks.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  toks.push_back(cur);
  return toks;
}

}  // namespace detail

// Rectangular numeric CSV. A first row with any non-numeric cell is treated
// as a header and skipped; every later cell must parse as a double and rows
// must agree in width. Errors carry 1-based row/column positions.
inline MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> toks = detail::split_csv_line(line);
    std::vector<double> vals(toks.size());
    bool all_numeric = true;
    long bad_col = 0;
    for (std::size_t c = 0; c < toks.size(); ++c) {
      if (!detail::parse_double(toks[c], vals[c])) {
        all_numeric = false;
        bad_col = static_cast<long>(c + 1);
        break;
      }
    }
    if (!all_numeric) {
      if (first_content) {  // header row
        first_content = false;
        continue;
      }
      throw ParseError("non-numeric cell in '" + path + "' at row " +
                           std::to_string(lineno) + ", column " +
                           std::to_string(bad_col),
                       lineno, bad_col);
    }
    first_content = false;
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError("ragged row in '" + path + "' at row " +
                           std::to_string(lineno) + ": expected " +
                           std::to_string(rows.front().size()) + " columns, got " +
                           std::to_string(vals.size()),
                       lineno, static_cast<long>(vals.size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError("'" + path + "' holds no numeric rows");
  MatrixXd m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows.front().size(); ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return m;
}

// Panel CSV: rows are cross-section units, columns are time periods.
inline ObservationPanel read_panel_csv(const std::string& path) {
  try {
    return ObservationPanel(read_matrix_csv(path));
  } catch (const DimensionError& e) {
    throw ParseError(std::string("'") + path + "': " + e.what());
  }
}

inline void write_matrix_csv(const std::string& path, const MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  if (!out) throw ParseError("failed writing '" + path + "'");
}

inline json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline json threshold_config_json(const ThresholdConfig& cfg) {
  json j;
  j["rule"] = rule_name(cfg.rule);
  j["scad_a"] = cfg.scad_a;
  j["constant_C"] = cfg.constant_C ? json(*cfg.constant_C) : json("auto");
  j["cv_folds"] = cfg.cv_folds;
  j["cv_grid"] = {{"min", cfg.cv_grid.front()},
                  {"max", cfg.cv_grid.back()},
                  {"size", cfg.cv_grid.size()}};
  j["pd_epsilon"] = cfg.pd_epsilon;
  return j;
}

inline json iteration_config_json(const IterationConfig& cfg) {
  return json{{"r", cfg.r}, {"max_iter", cfg.max_iter}, {"tol", cfg.tol}};
}

inline json weight_json(const WeightSpec& w) {
  switch (w.kind()) {
    case WeightSpec::Kind::identity: return json{{"kind", "identity"}};
    case WeightSpec::Kind::diagonal:
      return json{{"kind", "diagonal"}, {"entries", vector_json(w.diagonal_entries())}};
    case WeightSpec::Kind::full:
      return json{{"kind", "full"}, {"order", w.full_matrix().rows()}};
  }
  return json{{"kind", "?"}};
}

inline json factor_estimate_json(const FactorEstimate& est) {
  json j;
  j["rank"] = est.rank;
  j["eig_diag"] = vector_json(est.eig_diag);
  j["weight"] = weight_json(est.weight);
  j["factors"] = matrix_json(est.factors);
  j["loadings"] = matrix_json(est.loadings);
  return j;
}

inline json sparse_cov_meta_json(const SparseCovEstimate& cov) {
  json j;
  j["order"] = cov.sigma.order();
  j["constant_C"] = cov.constant_C;
  j["omega"] = cov.omega;
  j["rule"] = rule_name(cov.rule);
  j["nonzero_offdiagonal"] = cov.nonzero_count;
  return j;
}

inline json variance_report_json(const VarianceReport& rep) {
  json j;
  j["bandwidth"] = rep.bandwidth;
  j["ve_inverse"] = matrix_json(rep.ve_inv);
  j["theta1"] = vector_json(rep.theta1);
  j["theta2"] = matrix_json(rep.theta2);
  return j;
}

inline json panel_fit_json(const PanelFit& fit, double level = 0.95) {
  json j;
  j["beta"] = vector_json(fit.beta);
  j["se"] = vector_json(fit.se);
  const double z = inverse_normal_cdf(0.5 * (1.0 + level));
  json ci = json::array();
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k)
    ci.push_back({{"level", level},
                  {"lower", fit.beta(k) - z * fit.se(k)},
                  {"upper", fit.beta(k) + z * fit.se(k)}});
  j["confidence_intervals"] = ci;
  j["gamma"] = matrix_json(fit.gamma);
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["rank"] = fit.factor_part.rank;
  if (fit.cov) j["cov"] = sparse_cov_meta_json(*fit.cov);
  return j;
}

inline json rank_selection_json(const RankSelection& sel) {
  json j;
  j["selected"] = sel.selected;
  j["criterion"] = sel.criterion == RankCriterion::cp ? "cp" : "ic";
  j["sigma2"] = sel.sigma2;
  j["criterion_values"] = sel.criterion_values;
  return j;
}

inline json mc_config_json(const McConfig& cfg) {
  json est = json::array();
  for (Estimator e : cfg.estimators) est.push_back(estimator_name(e));
  json j;
  j["design"] = cfg.design;
  j["n_units"] = cfg.n_units;
  j["n_periods"] = cfg.n_periods;
  j["replications"] = cfg.replications;
  j["master_seed"] = cfg.master_seed;
  j["estimators"] = est;
  j["beta_true"] = {cfg.beta_true(0), cfg.beta_true(1)};
  j["threshold"] = threshold_config_json(cfg.threshold);
  j["iteration"] = iteration_config_json(cfg.iteration);
  j["jobs"] = cfg.jobs;
  return j;
}

inline json mc_report_json(const McReport& rep) {
  json j;
  j["config"] = mc_config_json(rep.config);
  json aggs = json::array();
  for (const McAggregate& a : rep.aggregates) {
    json ja;
    ja["estimator"] = estimator_name(a.estimator);
    ja["n_ok"] = a.n_ok;
    ja["n_failed"] = a.n_failed;
    if (rep.config.design == 1) {
      ja["mean_cc_loadings"] = a.mean_cc_loadings;
      ja["mean_cc_factors"] = a.mean_cc_factors;
      ja["mean_rmse"] = a.mean_rmse;
    } else {
      ja["beta_mean"] = vector_json(a.beta_mean);
      ja["normalized_se"] = vector_json(a.normalized_se);
      if (a.relative_efficiency.size() > 0)
        ja["relative_efficiency"] = vector_json(a.relative_efficiency);
    }
    aggs.push_back(std::move(ja));
  }
  j["aggregates"] = std::move(aggs);
  json recs = json::array();
  for (const McRecord& r : rep.records) {
    json jr;
    jr["replication"] = r.replication;
    jr["estimator"] = estimator_name(r.estimator);
    jr["ok"] = r.ok;
    if (!r.ok) jr["error"] = r.error;
    if (rep.config.design == 1 && r.ok) {
      jr["cc_loadings"] = r.cc_loadings;
      jr["cc_factors"] = r.cc_factors;
      jr["rmse"] = r.rmse;
    }
    if (rep.config.design == 2 && r.ok) jr["beta"] = vector_json(r.beta);
    recs.push_back(std::move(jr));
  }
  j["records"] = std::move(recs);
  return j;
}

// Aligned text summary shaped like the paper-style Monte Carlo tables.
inline std::string mc_report_table(const McReport& rep) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "design %d  N=%d T=%d  reps=%d  seed=%llu\n",
                rep.config.design, rep.config.n_units, rep.config.n_periods,
                rep.config.replications,
                static_cast<unsigned long long>(rep.config.master_seed));
  out << buf;
  if (rep.config.design == 1) {
    std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %10s %6s\n", "estimator",
                  "cc_loadings", "cc_factors", "rmse", "fail");
    out << buf;
    for (const McAggregate& a : rep.aggregates) {
      std::snprintf(buf, sizeof(buf), "%-10s %12.3f %12.3f %10.3f %6d\n",
                    estimator_name(a.estimator).c_str(), a.mean_cc_loadings,
                    a.mean_cc_factors, a.mean_rmse, a.n_failed);
      out << buf;
    }
  } else {
    std::snprintf(buf, sizeof(buf), "%-10s %11s %11s %11s %11s %9s %9s %6s\n",
                  "estimator", "beta1_mean", "beta1_se_n", "beta2_mean", "beta2_se_n",
                  "releff1", "releff2", "fail");
    out << buf;
    for (const McAggregate& a : rep.aggregates) {
      const bool has_re = a.relative_efficiency.size() == 2;
      std::string re1 = "-", re2 = "-";
      if (has_re) {
        std::snprintf(buf, sizeof(buf), "%9.3f", a.relative_efficiency(0));
        re1 = buf;
        std::snprintf(buf, sizeof(buf), "%9.3f", a.relative_efficiency(1));
        re2 = buf;
      }
      std::snprintf(buf, sizeof(buf), "%-10s %11.3f %11.3f %11.3f %11.3f %9s %9s %6d\n",
                    estimator_name(a.estimator).c_str(),
                    a.beta_mean.size() > 0 ? a.beta_mean(0) : std::nan(""),
                    a.normalized_se.size() > 0 ? a.normalized_se(0) : std::nan(""),
                    a.beta_mean.size() > 1 ? a.beta_mean(1) : std::nan(""),
                    a.normalized_se.size() > 1 ? a.normalized_se(1) : std::nan(""),
                    re1.c_str(), re2.c_str(), a.n_failed);
      out << buf;
    }
  }
  return out.str();
}

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

}  // namespace detail

// Per-replication records as CSV.
inline std::string mc_records_csv(const McReport& rep) {
  std::ostringstream out;
  out << std::setprecision(17);
  if (rep.config.design == 1) {
    out << "replication,estimator,ok,cc_loadings,cc_factors,rmse,error\n";
    for (const McRecord& r : rep.records) {
      out << r.replication << ',' << estimator_name(r.estimator) << ',' << (r.ok ? 1 : 0)
          << ',';
      if (r.ok)
        out << r.cc_loadings << ',' << r.cc_factors << ',' << r.rmse << ",\n";
      else
        out << ",,," << detail::csv_safe(r.error) << '\n';
    }
  } else {
    out << "replication,estimator,ok,beta1,beta2,error\n";
    for (const McRecord& r : rep.records) {
      out << r.replication << ',' << estimator_name(r.estimator) << ',' << (r.ok ? 1 : 0)
          << ',';
      if (r.ok)
        out << r.beta(0) << ',' << r.beta(1) << ",\n";
      else
        out << ",," << detail::csv_safe(r.error) << '\n';
    }
  }
  return out.str();
}

}  // namespace wpc
