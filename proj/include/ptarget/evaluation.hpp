#pragma once

// Policy value and gain estimators with standard errors, significance
// stars, and aligned-text report tables.

#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/scores.hpp"

namespace ptarget {

struct Estimate {
  double value = 0.0;
  double se = 0.0;

  nlohmann::json to_json() const { return {{"estimate", value}, {"se", se}}; }
};

struct FoldDetail {
  std::size_t fold = 0;
  std::size_t n = 0;
  double share_treated = 0.0;
  double value = 0.0, gain_all = 0.0, gain_none = 0.0, gain_random = 0.0;
  nlohmann::json rule;

  nlohmann::json to_json() const {
    nlohmann::json j{{"fold", fold},           {"n", n},
                     {"share_treated", share_treated}, {"value", value},
                     {"gain_vs_all", gain_all}, {"gain_vs_none", gain_none},
                     {"gain_vs_random", gain_random}};
    if (!rule.is_null()) j["rule"] = rule;
    return j;
  }
};

/// P = value of the rule; Q1, Q-1, Qr = gains over treating everyone,
/// treating no one, and treating a random half.
struct ValueReport {
  std::string outcome;
  std::size_t n = 0;
  double cost = 0.0;
  double share_treated = 0.0;
  Estimate value, gain_all, gain_none, gain_random;
  // Per-unit contributions whose means are the estimates above.
  std::vector<double> c_value, c_all, c_none, c_random;
  std::vector<FoldDetail> folds;

  nlohmann::json to_json() const {
    nlohmann::json j{{"outcome", outcome},
                     {"n", n},
                     {"cost", cost},
                     {"share_treated", share_treated},
                     {"value", value.to_json()},
                     {"gain_vs_all", gain_all.to_json()},
                     {"gain_vs_none", gain_none.to_json()},
                     {"gain_vs_random", gain_random.to_json()}};
    if (!folds.empty()) {
      j["folds"] = nlohmann::json::array();
      for (const auto& f : folds) j["folds"].push_back(f.to_json());
    }
    return j;
  }
};

namespace detail {

inline Estimate mean_and_se(std::span<const double> v) {
  return {sample_mean(v), sample_sd(v) / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

/// Sample-analogue estimates:
///   P   = mean[Gamma_i(pi_i) - 1{pi_i = 1} c]
///   Q1  = mean[(pi_i - 1)/2 (Gamma_i - c)]
///   Q-1 = mean[(1 + pi_i)/2 (Gamma_i - c)]
///   Qr  = mean[pi_i (Gamma_i - c)] / 2
/// Each SE is sd(contribution)/sqrt(N).
inline ValueReport evaluate(const ScoreSet& scores, std::span<const int> actions, double cost) {
  const std::size_t n = scores.size();
  if (actions.size() != n) {
    throw ValidationError("assignments (" + std::to_string(actions.size()) + ") not aligned with scores (" +
                          std::to_string(n) + ")");
  }
  if (n == 0) throw ValidationError("cannot evaluate a rule on zero units");
  ValueReport rep;
  rep.outcome = scores.outcome;
  rep.n = n;
  rep.cost = cost;
  rep.c_value.resize(n);
  rep.c_all.resize(n);
  rep.c_none.resize(n);
  rep.c_random.resize(n);
  std::size_t treated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = actions[i];
    if (a != kTreat && a != kControl) throw ValidationError("assignment must be -1 or 1");
    treated += a == kTreat;
    const double net = scores.gamma[i] - cost;
    rep.c_value[i] = scores.arm_score(i, a) - (a == kTreat ? cost : 0.0);
    rep.c_all[i] = (a - 1) / 2.0 * net;
    rep.c_none[i] = (1 + a) / 2.0 * net;
    rep.c_random[i] = a * net / 2.0;
  }
  rep.share_treated = static_cast<double>(treated) / static_cast<double>(n);
  rep.value = detail::mean_and_se(rep.c_value);
  rep.gain_all = detail::mean_and_se(rep.c_all);
  rep.gain_none = detail::mean_and_se(rep.c_none);
  rep.gain_random = detail::mean_and_se(rep.c_random);
  return rep;
}

// Two-sided normal critical values at 10%, 5%, 1%.
inline constexpr double kZ10 = 1.6448536269514722;
inline constexpr double kZ05 = 1.959963984540054;
inline constexpr double kZ01 = 2.5758293035489004;

inline std::string stars(double estimate, double se) {
  if (estimate == 0.0) return "";
  if (se == 0.0) return "***";
  const double z = std::abs(estimate / se);
  if (z > kZ01) return "***";
  if (z > kZ05) return "**";
  if (z > kZ10) return "*";
  return "";
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.000" || s == "-0.0") s.erase(0, 1);
  return s;
}

/// "2.14***"
inline std::string format_estimate(const Estimate& e, int digits = 2) {
  return fixed(e.value, digits) + stars(e.value, e.se);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct LabeledReport {
  std::string label;
  ValueReport report;
};

/// Aligned text table: share treated, value, and the three gains with SEs
/// in parentheses below each estimate.
inline std::string report_table(const std::vector<LabeledReport>& reports) {
  const int first = 18, width = 14;
  std::ostringstream out;
  auto cell = [&](const std::string& s) {
    out << std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 1, ' ') << s;
  };
  out << std::string(first, ' ');
  for (const auto& r : reports) cell(r.label);
  out << '\n';
  auto row = [&](const std::string& name, auto get) {
    out << name << std::string(first > static_cast<int>(name.size()) ? first - name.size() : 1, ' ');
    for (const auto& r : reports) cell(format_estimate(get(r.report)));
    out << '\n' << std::string(first, ' ');
    for (const auto& r : reports) cell("(" + fixed(get(r.report).se, 2) + ")");
    out << '\n';
  };
  out << "Share treated" << std::string(first - 13, ' ');
  for (const auto& r : reports) cell(fixed(r.report.share_treated, 3));
  out << '\n';
  row("Value", [](const ValueReport& v) { return v.value; });
  row("vs all-gift", [](const ValueReport& v) { return v.gain_all; });
  row("vs no-gift", [](const ValueReport& v) { return v.gain_none; });
  row("vs random-gift", [](const ValueReport& v) { return v.gain_random; });
  out << "N" << std::string(first - 1, ' ');
  for (const auto& r : reports) cell(std::to_string(r.report.n));
  out << '\n';
  out << "Stars: *** p<0.01, ** p<0.05, * p<0.10 (two-sided normal).\n";
  return out.str();
}

}  // namespace ptarget
