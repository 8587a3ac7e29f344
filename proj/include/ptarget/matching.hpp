#pragma once

// Caliper nearest-neighbour matching of sample A to sample B on a fitted
// membership probability, balance diagnostics, and rule transfer evaluated
// on matched subsets of B.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/evaluation.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/rule.hpp"
#include "ptarget/scores.hpp"

namespace ptarget {

struct MatchPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
};

struct MatchResult {
  double radius = std::numeric_limits<double>::infinity();
  std::vector<MatchPair> pairs;  // ordered by A index
  std::size_t unmatched_a = 0;
  std::vector<double> score_a, score_b;  // membership probabilities P(A | x)

  /// Distinct B units used by at least one pair, ascending.
  std::vector<std::size_t> unique_b() const {
    std::vector<std::size_t> b;
    for (const auto& p : pairs) b.push_back(p.b);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

  /// Pairs within a tighter radius.
  MatchResult restrict(double r) const {
    MatchResult out = *this;
    out.radius = r;
    out.pairs.clear();
    for (const auto& p : pairs) {
      if (p.distance <= r) out.pairs.push_back(p);
    }
    out.unmatched_a = score_a.size() - out.pairs.size();
    return out;
  }

  void write_csv(std::ostream& out, const Dataset& a, const Dataset& b, const std::string& comment = "") const {
    if (!comment.empty()) out << "# " << comment << "\n";
    out << "a_id,b_id,distance\n";
    for (const auto& p : pairs) {
      out << csv::quote_if_needed(a[p.a].id) << ',' << csv::quote_if_needed(b[p.b].id) << ','
          << csv::format_double(p.distance) << '\n';
    }
  }
};

/// Features of A that B must also carry.
inline std::vector<std::string> shared_features(const Dataset& a, const Dataset& b,
                                                const std::vector<std::string>& requested = {}) {
  const auto names = requested.empty() ? a.schema().features : requested;
  b.features(names);  // throws listing what B lacks
  a.features(names);
  return names;
}

/// Nearest B score for every A score (with replacement; ties to the lower B
/// index); pairs farther apart than `radius` are dropped.
inline MatchResult match_on_scores(std::vector<double> score_a, std::vector<double> score_b, double radius) {
  if (!(radius > 0.0)) throw ValidationError("caliper radius must be positive");
  const std::size_t na = score_a.size(), nb = score_b.size();
  MatchResult out;
  out.radius = radius;
  out.score_a = std::move(score_a);
  out.score_b = std::move(score_b);
  std::vector<std::size_t> order(nb);
  for (std::size_t i = 0; i < nb; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t z) { return out.score_b[x] < out.score_b[z]; });
  std::vector<double> sorted(nb);
  for (std::size_t k = 0; k < nb; ++k) sorted[k] = out.score_b[order[k]];

  for (std::size_t i = 0; i < na; ++i) {
    const double s = out.score_a[i];
    // First B unit at or above s, and the first unit of the group just below.
    const auto hi = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin());
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    auto consider = [&](std::size_t pos) {
      const std::size_t bi = order[pos];
      const double d = std::abs(out.score_b[bi] - s);
      if (d < best_d || (d == best_d && best && bi < *best)) {
        best = bi;
        best_d = d;
      }
    };
    if (hi < nb) consider(hi);
    if (hi > 0) {
      const auto lo = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), sorted[hi - 1]) - sorted.begin());
      consider(lo);
    }
    if (best && best_d <= radius) {
      out.pairs.push_back({i, *best, best_d});
    } else {
      ++out.unmatched_a;
    }
  }
  return out;
}


/// Logit of membership in A on the standardized shared features of the pooled
/// sample; for each A unit the B unit with the nearest membership
/// probability (with replacement; ties to the lower B index) is kept when
/// the distance is at most `radius`.
inline MatchResult caliper_match(const Dataset& a, const Dataset& b, double radius,
                                 const std::vector<std::string>& features = {}) {
  if (!(radius > 0.0)) throw ValidationError("caliper radius must be positive");
  const auto names = shared_features(a, b, features);
  const FeatureMatrix Xa = a.features(names), Xb = b.features(names);
  const std::size_t na = a.size(), nb = b.size(), p = names.size();
  const std::size_t n = na + nb;
  std::vector<double> mean(p, 0.0), sd(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < na; ++i) mean[j] += Xa(i, j);
    for (std::size_t i = 0; i < nb; ++i) mean[j] += Xb(i, j);
    mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < na; ++i) sd[j] += std::pow(Xa(i, j) - mean[j], 2);
    for (std::size_t i = 0; i < nb; ++i) sd[j] += std::pow(Xb(i, j) - mean[j], 2);
    sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
  }
  std::vector<std::size_t> used;
  std::vector<std::string> cols{"(intercept)"};
  for (std::size_t j = 0; j < p; ++j) {
    if (sd[j] > 0) {
      used.push_back(j);
      cols.push_back(names[j]);
    }
  }
  Eigen::MatrixXd D(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(used.size()) + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    D(r, 0) = 1.0;
    for (std::size_t k = 0; k < used.size(); ++k) {
      const std::size_t j = used[k];
      const double x = i < na ? Xa(i, j) : Xb(i - na, j);
      D(r, static_cast<Eigen::Index>(k) + 1) = (x - mean[j]) / sd[j];
    }
    y[r] = i < na ? 1.0 : 0.0;
  }
  require_full_rank(D, cols, "membership logit");
  const LogitFit fit = fit_logit(D, y, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)));
  if (fit.status == LogitStatus::separated) throw NumericalError("membership logit: samples are separable");
  if (fit.status != LogitStatus::converged) throw NumericalError("membership logit did not converge");
  const Eigen::VectorXd eta = D * fit.coef;

  std::vector<double> sa(na), sb(nb);
  for (std::size_t i = 0; i < na; ++i) sa[i] = logistic(eta[static_cast<Eigen::Index>(i)]);
  for (std::size_t i = 0; i < nb; ++i) sb[i] = logistic(eta[static_cast<Eigen::Index>(na + i)]);
  return match_on_scores(std::move(sa), std::move(sb), radius);
}

/// 100 |m_a - m_b| / sqrt((s_a^2 + s_b^2) / 2). Variances are p(1-p) when
/// every value is 0 or 1, otherwise sample variances. Returns +inf when the
/// pooled variance is zero but the means differ.
inline double standardized_difference(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("standardized difference needs non-empty samples");
  bool binary = true;
  for (double v : a) binary &= v == 0.0 || v == 1.0;
  for (double v : b) binary &= v == 0.0 || v == 1.0;
  const double ma = sample_mean(a), mb = sample_mean(b);
  const double va = binary ? ma * (1 - ma) : std::pow(sample_sd(a), 2);
  const double vb = binary ? mb * (1 - mb) : std::pow(sample_sd(b), 2);
  const double pooled = std::sqrt((va + vb) / 2);
  const double diff = std::abs(ma - mb);
  if (diff == 0.0) return 0.0;
  if (pooled == 0.0) return std::numeric_limits<double>::infinity();
  return 100.0 * diff / pooled;
}

inline double standardized_difference(const Dataset& a, const Dataset& b, const std::string& feature) {
  const auto xa = a.features({feature}), xb = b.features({feature});
  std::vector<double> va(a.size()), vb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) va[i] = xa(i, 0);
  for (std::size_t i = 0; i < b.size(); ++i) vb[i] = xb(i, 0);
  return standardized_difference(va, vb);
}

struct SweepEntry {
  double radius = 0.0;
  std::size_t matched_a = 0;
  std::size_t matched_b = 0;  // distinct B units evaluated
  bool empty = false;
  std::optional<ValueReport> report;
};

/// Evaluates a frozen rule on B restricted, for each radius, to the distinct
/// B units matched to some A unit; radius infinity uses all of B. B's scores
/// come from nuisances fitted on all of B.
inline std::vector<SweepEntry> transfer_with_radius_sweep(const Rule& rule, const Dataset& a, const Dataset& b,
                                                          const std::vector<double>& radii, const NuisanceSpec& spec,
                                                          const std::string& outcome,
                                                          const std::vector<std::string>& features = {},
                                                          std::size_t threads = 1) {
  const MatchResult full = caliper_match(a, b, std::numeric_limits<double>::infinity(), features);
  const ScoreSet scores = score_dataset(b, spec, outcome, threads);
  const auto actions = predict_all(rule, b);
  std::vector<SweepEntry> out;
  for (double r : radii) {
    if (!(r > 0.0)) throw ValidationError("caliper radius must be positive");
    SweepEntry e;
    e.radius = r;
    if (std::isinf(r)) {
      e.matched_a = full.pairs.size();
      e.matched_b = b.size();
      e.report = evaluate(scores, actions, b.cost());
    } else {
      const MatchResult m = full.restrict(r);
      e.matched_a = m.pairs.size();
      const auto ub = m.unique_b();
      e.matched_b = ub.size();
      if (ub.empty()) {
        e.empty = true;
      } else {
        std::vector<int> act;
        for (auto i : ub) act.push_back(actions[i]);
        e.report = evaluate(scores.subset(ub), act, b.cost());
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepEntry>& sweep, const std::string& comment = "") {
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "radius,matched_a,matched_b,empty,share_treated,value,value_se,gain_vs_all,gain_vs_all_se,gain_vs_none,"
         "gain_vs_none_se,gain_vs_random,gain_vs_random_se\n";
  for (const auto& e : sweep) {
    out << (std::isinf(e.radius) ? std::string("inf") : csv::format_double(e.radius)) << ',' << e.matched_a << ','
        << e.matched_b << ',' << (e.empty ? 1 : 0);
    if (e.report) {
      const auto& r = *e.report;
      for (double v : {r.share_treated, r.value.value, r.value.se, r.gain_all.value, r.gain_all.se,
                       r.gain_none.value, r.gain_none.se, r.gain_random.value, r.gain_random.se}) {
        out << ',' << csv::format_double(v);
      }
    } else {
      out << ",,,,,,,,,";
    }
    out << '\n';
  }
}

}  // namespace ptarget
