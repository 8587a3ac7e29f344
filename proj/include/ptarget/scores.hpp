#pragma once

// Doubly robust (AIPW) per-unit scores, the AIPW average treatment effect, and
// regression-based ATE estimates for comparison.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/nuisance.hpp"

namespace ptarget {

struct ScoreSet {
  std::string outcome;
  double cost = 0.0;
  std::string provenance;
  std::vector<std::string> ids;
  std::vector<double> gamma_treat;    // Gamma_i(1)
  std::vector<double> gamma_control;  // Gamma_i(-1)
  std::vector<double> gamma;          // Gamma_i(1) - Gamma_i(-1)
  std::vector<double> net_reward;     // Gamma_i - cost

  std::size_t size() const { return gamma.size(); }

  /// Score of the action taken: Gamma_i(1) for +1, Gamma_i(-1) for -1.
  double arm_score(std::size_t i, int action) const {
    return action == kTreat ? gamma_treat[i] : gamma_control[i];
  }

  ScoreSet subset(std::span<const std::size_t> idx) const {
    ScoreSet s;
    s.outcome = outcome;
    s.cost = cost;
    s.provenance = provenance;
    for (auto i : idx) {
      s.ids.push_back(ids[i]);
      s.gamma_treat.push_back(gamma_treat[i]);
      s.gamma_control.push_back(gamma_control[i]);
      s.gamma.push_back(gamma[i]);
      s.net_reward.push_back(net_reward[i]);
    }
    return s;
  }
};

/// Value of the primary outcome or a named extra outcome for one unit.
inline double unit_outcome(const Schema& schema, const Unit& u, const std::string& name) {
  if (name == schema.outcome) return u.y;
  for (std::size_t k = 0; k < schema.extra_outcomes.size(); ++k) {
    if (schema.extra_outcomes[k] == name) return u.extra[k];
  }
  throw ValidationError("unknown outcome '" + name + "'");
}

/// AIPW scores from per-unit nuisance values:
///   Gamma(1)  = mu1 + 1{d=1}  (y - mu1) / p
///   Gamma(-1) = mu0 + 1{d=-1} (y - mu0) / (1 - p)
inline ScoreSet compute_aipw(const Schema& schema, std::span<const Unit> units, const NuisancePredictions& nuis,
                             const std::string& outcome, double cost, std::string provenance = "") {
  const std::size_t n = units.size();
  if (nuis.p.size() != n || nuis.mu1.size() != n || nuis.mu0.size() != n) {
    throw ValidationError("nuisance predictions are not aligned with the dataset");
  }
  ScoreSet s;
  s.outcome = outcome;
  s.cost = cost;
  s.provenance = std::move(provenance);
  s.ids.reserve(n);
  s.gamma_treat.resize(n);
  s.gamma_control.resize(n);
  s.gamma.resize(n);
  s.net_reward.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Unit& u = units[i];
    const double p = nuis.p[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericalError("propensity " + std::to_string(p) + " outside (0,1) for unit " + u.id);
    }
    const double y = unit_outcome(schema, u, outcome);
    const bool treated = u.d == kTreat;
    s.ids.push_back(u.id);
    s.gamma_treat[i] = nuis.mu1[i] + (treated ? (y - nuis.mu1[i]) / p : 0.0);
    s.gamma_control[i] = nuis.mu0[i] + (treated ? 0.0 : (y - nuis.mu0[i]) / (1.0 - p));
    s.gamma[i] = s.gamma_treat[i] - s.gamma_control[i];
    s.net_reward[i] = s.gamma[i] - cost;
    if (!std::isfinite(s.gamma[i])) throw NumericalError("non-finite AIPW score for unit " + u.id);
  }
  return s;
}

inline ScoreSet compute_aipw(const Dataset& data, const NuisancePredictions& nuis, const std::string& outcome,
                             std::string provenance = "") {
  return compute_aipw(data.schema(), data.units(), nuis, outcome, data.cost(), std::move(provenance));
}

/// Fits nuisances per `spec` (plug-in or cross-fitted) and scores `data`.
inline ScoreSet score_dataset(const Dataset& data, const NuisanceSpec& spec, const std::string& outcome,
                              std::size_t threads = 1) {
  const auto nuis = nuisance_predictions(data, spec, outcome, threads);
  return compute_aipw(data, nuis, outcome, spec.to_json().dump());
}

struct AteEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

struct AipwAte {
  double estimate = 0.0;
  double se = 0.0;
  double net = 0.0;  // estimate - cost
};

inline double sample_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Standard deviation with denominator n - 1.
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// mean(Gamma) with the i.i.d. score standard error sd(Gamma)/sqrt(N).
inline AipwAte estimate_ate_aipw(const ScoreSet& scores) {
  if (scores.size() < 2) throw ValidationError("AIPW ATE needs at least two units");
  AipwAte a;
  a.estimate = sample_mean(scores.gamma);
  a.se = sample_sd(scores.gamma) / std::sqrt(static_cast<double>(scores.size()));
  a.net = a.estimate - scores.cost;
  return a;
}

/// Coefficient on 1{d=1} from OLS of the outcome on an intercept, the
/// treatment dummy, and optionally stratum dummies; HC1 standard error.
inline AteEstimate estimate_ate_ols(const Dataset& data, std::optional<DesignKind> controls,
                                    const std::string& outcome) {
  const auto y = data.outcome(outcome);
  Eigen::MatrixXd S;
  std::vector<std::string> names{"(intercept)", "treated"};
  if (controls) {
    const StratumDesign design = StratumDesign::fit(data, *controls);
    S = design.matrix(data);
    const auto cols = design.column_names();
    names.insert(names.end(), cols.begin() + 1, cols.end());
  }
  const Eigen::Index extra = controls ? S.cols() - 1 : 0;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()), 2 + extra);
  Eigen::VectorXd yv(X.rows());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    X(r, 1) = data[i].d == kTreat ? 1.0 : 0.0;
    if (extra > 0) X.row(r).tail(extra) = S.row(r).tail(extra);
    yv[r] = y[i];
  }
  const OlsFit fit = ols(X, yv, names, "OLS ATE");
  const Eigen::MatrixXd cov = hc1_covariance(X, fit);
  return {fit.coef[1], std::sqrt(cov(1, 1))};
}

/// Audit export: id, gamma1, gamma_neg1, gamma, net_reward.
inline void write_scores_csv(std::ostream& out, const ScoreSet& s, const std::string& comment = "") {
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "id,gamma1,gamma_neg1,gamma,net_reward\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << csv::quote_if_needed(s.ids[i]) << ',' << csv::format_double(s.gamma_treat[i]) << ','
        << csv::format_double(s.gamma_control[i]) << ',' << csv::format_double(s.gamma[i]) << ','
        << csv::format_double(s.net_reward[i]) << '\n';
  }
}

}  // namespace ptarget
