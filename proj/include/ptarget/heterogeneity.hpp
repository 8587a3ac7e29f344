#pragma once

// Effect heterogeneity diagnostics built on an interacted linear model
// y ~ [1, x, T, T*x]: sorted-effect curves with multiplier-bootstrap uniform
// bands, a best-linear-predictor test, and extreme-group summaries.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/evaluation.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/nuisance.hpp"
#include "ptarget/parallel.hpp"
#include "ptarget/rng.hpp"
#include "ptarget/scores.hpp"

namespace ptarget {

/// Interacted OLS fit; the CATE of unit i is coef[T] + sum_j coef[T*x_j] x_ij.
struct InteractedModel {
  std::vector<std::string> features;
  Eigen::VectorXd coef;

  double cate(std::span<const double> x) const {
    const Eigen::Index p = static_cast<Eigen::Index>(features.size());
    double c = coef[p + 1];
    for (Eigen::Index j = 0; j < p; ++j) c += coef[p + 2 + j] * x[static_cast<std::size_t>(j)];
    return c;
  }
};

namespace detail {

inline Eigen::MatrixXd interacted_design(const FeatureMatrix& X, std::span<const Unit> units) {
  const auto n = static_cast<Eigen::Index>(X.rows());
  const auto p = static_cast<Eigen::Index>(X.cols());
  Eigen::MatrixXd D(n, 2 * p + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = units[static_cast<std::size_t>(i)].d == kTreat ? 1.0 : 0.0;
    D(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double x = X(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      D(i, 1 + j) = x;
      D(i, p + 2 + j) = t * x;
    }
    D(i, p + 1) = t;
  }
  return D;
}

inline std::vector<std::string> interacted_names(const std::vector<std::string>& f) {
  std::vector<std::string> n{"(intercept)"};
  n.insert(n.end(), f.begin(), f.end());
  n.push_back("treated");
  for (const auto& x : f) n.push_back("treated*" + x);
  return n;
}

/// Linear interpolation between order statistics (the usual "type 7").
inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

inline OlsFit fit_interacted_ols(const FeatureMatrix& X, std::span<const Unit> units, std::span<const double> y,
                                 Eigen::MatrixXd* design = nullptr) {
  Eigen::MatrixXd D = detail::interacted_design(X, units);
  Eigen::VectorXd yv(D.rows());
  for (Eigen::Index i = 0; i < D.rows(); ++i) yv[i] = y[static_cast<std::size_t>(i)];
  OlsFit fit = ols(D, yv, detail::interacted_names(X.names()), "interacted OLS");
  if (design) *design = std::move(D);
  return fit;
}

inline std::vector<double> percentile_grid(int lo = 5, int hi = 95, int step = 1) {
  std::vector<double> g;
  for (int u = lo; u <= hi; u += step) g.push_back(u);
  return g;
}

/// How the uniform band is formed from the multiplier draws.
///   rearranged: sup-t band for the unit-level CATEs (studentized per unit),
///     then lower and upper endpoints sorted separately. Sorting is a
///     contraction, so the band covers the sorted truth whenever the unit
///     band covers the unit CATEs; this stays valid when effects tie.
///   grid: each draw's CATEs are re-sorted and the sup-t is taken over the
///     percentile grid, studentized per grid point. Narrower, but it
///     under-covers at the tails when the true curve is flat.
enum class BandMethod { rearranged, grid };

inline std::string to_string(BandMethod m) { return m == BandMethod::grid ? "grid" : "rearranged"; }

inline BandMethod parse_band_method(const std::string& s) {
  if (s == "rearranged") return BandMethod::rearranged;
  if (s == "grid") return BandMethod::grid;
  throw ValidationError("unknown band method '" + s + "' (rearranged, grid)");
}

struct SortedEffectsCurve {
  std::vector<double> grid;  // percentiles in (0, 100)
  std::vector<double> estimate, lower, upper;
  double critical_value = 0.0;
  std::size_t reps = 0;
  double level = 0.95;
  BandMethod band = BandMethod::rearranged;

  void write_csv(std::ostream& out, const std::string& comment = "") const {
    if (!comment.empty()) out << "# " << comment << "\n";
    out << "percentile,estimate,lo,hi\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
      out << csv::format_double(grid[k]) << ',' << csv::format_double(estimate[k]) << ','
          << csv::format_double(lower[k]) << ',' << csv::format_double(upper[k]) << '\n';
    }
  }

  nlohmann::json to_json() const {
    return {{"grid", grid},   {"estimate", estimate}, {"lower", lower},
            {"upper", upper}, {"reps", reps},         {"critical_value", critical_value},
            {"level", level}, {"band", to_string(band)}};
  }
};

/// Percentiles of the fitted CATE distribution with a 95% uniform band. Each
/// bootstrap draw perturbs the coefficients by (X'X)^-1 sum_i xi_i X_i e_i,
/// xi_i standard normal; the critical value is the 95% quantile of the
/// maximal studentized deviation (see BandMethod).
inline SortedEffectsCurve sorted_effects(const Dataset& data, const std::string& outcome,
                                         const std::vector<double>& grid, std::size_t reps, std::uint64_t seed,
                                         std::size_t threads = 1, const std::vector<std::string>& features = {},
                                         BandMethod band = BandMethod::rearranged) {
  if (reps < 100) throw ValidationError("sorted effects need at least 100 bootstrap replications");
  if (grid.empty()) throw ValidationError("percentile grid is empty");
  for (double u : grid) {
    if (!(u > 0 && u < 100)) throw ValidationError("percentiles must lie strictly between 0 and 100");
  }
  const FeatureMatrix X = data.features(features.empty() ? data.schema().features : features);
  const auto y = data.outcome(outcome);
  Eigen::MatrixXd D;
  const OlsFit fit = fit_interacted_ols(X, data.units(), y, &D);
  const auto n = static_cast<std::size_t>(D.rows());
  const Eigen::Index p = static_cast<Eigen::Index>(X.cols());
  // L_i: row selecting the treated block.
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(D.rows(), D.cols());
  L.col(p + 1).setOnes();
  L.rightCols(p) = D.middleCols(1, p);

  auto percentiles = [&](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::vector<double> q(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) q[k] = detail::quantile_sorted(v, grid[k] / 100.0);
    return q;
  };
  auto as_vector = [](const Eigen::VectorXd& c) { return std::vector<double>(c.data(), c.data() + c.size()); };

  SortedEffectsCurve out;
  out.grid = grid;
  out.reps = reps;
  out.band = band;
  const Eigen::VectorXd cate = L * fit.coef;
  out.estimate = percentiles(as_vector(cate));

  const Eigen::MatrixXd scaled = D.array().colwise() * fit.residuals.array();  // rows X_i e_i
  std::vector<Eigen::VectorXd> delta(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Engine eng = make_engine(seed, r);
    Eigen::VectorXd xi(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) xi[static_cast<Eigen::Index>(i)] = standard_normal(eng);
    delta[r] = fit.xtx_inv * (scaled.transpose() * xi);
  });

  auto critical = [&](std::vector<double> tmax) {
    std::sort(tmax.begin(), tmax.end());
    return detail::quantile_sorted(tmax, out.level);
  };
  const std::size_t g = grid.size();
  out.lower.resize(g);
  out.upper.resize(g);

  if (band == BandMethod::grid) {
    std::vector<std::vector<double>> boot(reps);
    parallel_for(reps, threads, [&](std::size_t r) { boot[r] = percentiles(as_vector(cate + L * delta[r])); });
    std::vector<double> sd(g, 0.0);
    for (std::size_t k = 0; k < g; ++k) {
      double m = 0, ss = 0;
      for (std::size_t r = 0; r < reps; ++r) m += boot[r][k];
      m /= static_cast<double>(reps);
      for (std::size_t r = 0; r < reps; ++r) ss += (boot[r][k] - m) * (boot[r][k] - m);
      sd[k] = std::sqrt(ss / static_cast<double>(reps - 1));
    }
    std::vector<double> tmax(reps, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t k = 0; k < g; ++k) {
        if (sd[k] > 0) tmax[r] = std::max(tmax[r], std::abs(boot[r][k] - out.estimate[k]) / sd[k]);
      }
    }
    out.critical_value = critical(std::move(tmax));
    for (std::size_t k = 0; k < g; ++k) {
      out.lower[k] = out.estimate[k] - out.critical_value * sd[k];
      out.upper[k] = out.estimate[k] + out.critical_value * sd[k];
    }
    return out;
  }

  // Unit-level sd from the bootstrap covariance of the coefficient draws.
  const Eigen::Index k = D.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (const auto& d : delta) mean += d;
  mean /= static_cast<double>(reps);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
  for (const auto& d : delta) cov += (d - mean) * (d - mean).transpose();
  cov /= static_cast<double>(reps - 1);
  const Eigen::VectorXd sd = ((L * cov).array() * L.array()).rowwise().sum().max(0.0).sqrt();
  std::vector<double> tmax(reps, 0.0);
  parallel_for(reps, threads, [&](std::size_t r) {
    const Eigen::VectorXd dev = L * delta[r];
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (sd[ii] > 0) m = std::max(m, std::abs(dev[ii]) / sd[ii]);
    }
    tmax[r] = m;
  });
  out.critical_value = critical(std::move(tmax));
  out.lower = percentiles(as_vector(cate - out.critical_value * sd));
  out.upper = percentiles(as_vector(cate + out.critical_value * sd));
  return out;
}

struct BlpCoefficient {
  double estimate = 0.0;
  double se = 0.0;
  double p_value = 1.0;  // one-sided, H1: coefficient > 0
  bool defined = true;

  nlohmann::json to_json() const {
    if (!defined) return {{"defined", false}};
    return {{"estimate", estimate}, {"se", se}, {"p_value", p_value}, {"defined", true}};
  }
};

struct BlpTestReport {
  BlpCoefficient average_effect;
  BlpCoefficient heterogeneity;
  std::string note;

  nlohmann::json to_json() const {
    nlohmann::json j{{"average_effect", average_effect.to_json()}, {"heterogeneity_loading", heterogeneity.to_json()}};
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

/// Regresses the AIPW score on [1, proxy - mean(proxy)] with HC1 SEs.
inline BlpTestReport blp_regression(std::span<const double> gamma, std::span<const double> proxy) {
  if (gamma.size() != proxy.size() || gamma.size() < 3) throw ValidationError("BLP inputs misaligned or too short");
  const std::size_t n = gamma.size();
  const double pm = sample_mean(proxy);
  const double psd = sample_sd(proxy);
  const double gsd = sample_sd(gamma);
  BlpTestReport rep;
  auto one_sided = [](double est, double se) {
    if (se > 0) return 1.0 - normal_cdf(est / se);
    return est > 0 ? 0.0 : (est < 0 ? 1.0 : 0.5);
  };
  if (psd <= 1e-10 * std::max(1.0, std::abs(pm)) || gsd == 0.0) {
    const double m = sample_mean(gamma);
    const double se = gsd / std::sqrt(static_cast<double>(n));
    rep.average_effect = {m, se, one_sided(m, se), true};
    rep.heterogeneity.defined = false;
    rep.note = psd <= 1e-10 * std::max(1.0, std::abs(pm)) ? "proxy has no variation; loading undefined"
                                                          : "score has no variation; loading undefined";
    return rep;
  }
  Eigen::MatrixXd D(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    D(static_cast<Eigen::Index>(i), 0) = 1.0;
    D(static_cast<Eigen::Index>(i), 1) = proxy[i] - pm;
    y[static_cast<Eigen::Index>(i)] = gamma[i];
  }
  const OlsFit fit = ols(D, y, {"(intercept)", "proxy"}, "BLP regression");
  const Eigen::MatrixXd cov = hc1_covariance(D, fit);
  const double se0 = std::sqrt(cov(0, 0)), se1 = std::sqrt(cov(1, 1));
  rep.average_effect = {fit.coef[0], se0, one_sided(fit.coef[0], se0), true};
  rep.heterogeneity = {fit.coef[1], se1, one_sided(fit.coef[1], se1), true};
  return rep;
}

/// Cross-fitted interacted-OLS CATE proxy: each fold predicted from a fit on
/// the other folds.
inline std::vector<double> crossfit_cate_proxy(const Dataset& data, const std::string& outcome, std::size_t k,
                                               std::uint64_t seed, const std::vector<std::string>& features = {}) {
  const auto names = features.empty() ? data.schema().features : features;
  const FeatureMatrix X = data.features(names);
  const auto y = data.outcome(outcome);
  const auto folds = split_folds(data, k, seed);
  std::vector<double> proxy(data.size());
  for (std::size_t f = 0; f < k; ++f) {
    try {
      const auto train = fold_members(folds, f, false);
      const auto test = fold_members(folds, f, true);
      std::vector<Unit> tu;
      std::vector<double> ty;
      for (auto i : train) {
        tu.push_back(data[i]);
        ty.push_back(y[i]);
      }
      const OlsFit fit = fit_interacted_ols(X.select_rows(train), tu, ty);
      const InteractedModel model{names, fit.coef};
      for (auto i : test) proxy[i] = model.cate(X.row(i));
    } catch (...) {
      rethrow_with_prefix("cross-fitting fold " + std::to_string(f) + ": ");
    }
  }
  return proxy;
}

inline BlpTestReport blp_test(const Dataset& data, const std::string& outcome, std::size_t k, std::uint64_t seed,
                              const NuisanceSpec& nuisance = {}, std::size_t threads = 1) {
  const ScoreSet scores = score_dataset(data, nuisance, outcome, threads);
  const auto proxy = crossfit_cate_proxy(data, outcome, k, seed);
  return blp_regression(scores.gamma, proxy);
}

struct GroupContrast {
  std::string feature;
  double mean_top = 0, se_top = 0, mean_bottom = 0, se_bottom = 0, difference = 0, se_difference = 0;
};

struct ExtremeGroupSummary {
  double q = 0.1;
  std::size_t group_size = 0;
  std::vector<GroupContrast> rows;
  bool multiple_testing_corrected = false;

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& g : rows) {
      r.push_back({{"feature", g.feature},
                   {"mean_top", g.mean_top},
                   {"se_top", g.se_top},
                   {"mean_bottom", g.mean_bottom},
                   {"se_bottom", g.se_bottom},
                   {"difference", g.difference},
                   {"se_difference", g.se_difference}});
    }
    return {{"q", q},
            {"group_size", group_size},
            {"rows", r},
            {"multiple_testing_corrected", multiple_testing_corrected}};
  }
};

/// Feature means of the floor(qN) units with the largest and the smallest
/// fitted CATE. Per-feature SEs only; no joint correction.
inline ExtremeGroupSummary extreme_group_summary(const Dataset& data, const std::string& outcome, double q,
                                                 const std::vector<std::string>& features = {}) {
  if (!(q > 0.0 && q < 0.5)) throw ValidationError("tail fraction must lie in (0, 0.5)");
  const auto names = features.empty() ? data.schema().features : features;
  const FeatureMatrix X = data.features(names);
  const auto y = data.outcome(outcome);
  const OlsFit fit = fit_interacted_ols(X, data.units(), y);
  const InteractedModel model{names, fit.coef};
  const std::size_t n = data.size();
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = model.cate(X.row(i));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
  ExtremeGroupSummary out;
  out.q = q;
  out.group_size = static_cast<std::size_t>(std::floor(q * static_cast<double>(n)));
  if (out.group_size < 2) throw ValidationError("extreme groups need at least two units each");
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> top, bottom;
    for (std::size_t k = 0; k < out.group_size; ++k) {
      bottom.push_back(X(order[k], j));
      top.push_back(X(order[n - 1 - k], j));
    }
    GroupContrast g;
    g.feature = names[j];
    const double m = static_cast<double>(out.group_size);
    g.mean_top = sample_mean(top);
    g.se_top = sample_sd(top) / std::sqrt(m);
    g.mean_bottom = sample_mean(bottom);
    g.se_bottom = sample_sd(bottom) / std::sqrt(m);
    g.difference = g.mean_top - g.mean_bottom;
    g.se_difference = std::hypot(g.se_top, g.se_bottom);
    out.rows.push_back(g);
  }
  return out;
}

/// Vector plot of a sorted-effects curve with its band and a horizontal
/// line at `cost`.
inline std::string sorted_effects_svg(const SortedEffectsCurve& curve, double cost, const std::string& title = "") {
  const double w = 640, h = 420, ml = 60, mr = 20, mt = 30, mb = 50;
  double lo = cost, hi = cost;
  for (std::size_t k = 0; k < curve.grid.size(); ++k) {
    lo = std::min(lo, curve.lower[k]);
    hi = std::max(hi, curve.upper[k]);
  }
  if (hi - lo < 1e-12) {
    lo -= 1;
    hi += 1;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double x0 = curve.grid.front(), x1 = curve.grid.back() > x0 ? curve.grid.back() : x0 + 1;
  auto px = [&](double u) { return ml + (u - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double v) { return mt + (hi - v) / (hi - lo) * (h - mt - mb); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<polygon fill=\"#c6dbef\" stroke=\"none\" points=\"";
  for (std::size_t k = 0; k < curve.grid.size(); ++k) s << num(px(curve.grid[k])) << ',' << num(py(curve.upper[k])) << ' ';
  for (std::size_t k = curve.grid.size(); k-- > 0;) s << num(px(curve.grid[k])) << ',' << num(py(curve.lower[k])) << ' ';
  s << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < curve.grid.size(); ++k) s << num(px(curve.grid[k])) << ',' << num(py(curve.estimate[k])) << ' ';
  s << "\"/>\n";
  s << "<line x1=\"" << ml << "\" x2=\"" << w - mr << "\" y1=\"" << num(py(cost)) << "\" y2=\"" << num(py(cost))
    << "\" stroke=\"#cb181d\" stroke-dasharray=\"6,4\"/>\n";
  s << "<text x=\"" << w - mr << "\" y=\"" << num(py(cost) - 4) << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#cb181d\">cost "
    << num(cost) << "</text>\n";
  s << "<line x1=\"" << ml << "\" x2=\"" << ml << "\" y1=\"" << mt << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << ml << "\" x2=\"" << w - mr << "\" y1=\"" << h - mb << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    s << "<text x=\"" << ml - 6 << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\" font-size=\"11\">" << num(v)
      << "</text>\n";
    const double u = x0 + (x1 - x0) * t / 4.0;
    s << "<text x=\"" << num(px(u)) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << num(u) << "</text>\n";
  }
  s << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">percentile</text>\n";
  s << "<text x=\"14\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
    << (mt + h - mb) / 2 << ")\">effect</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace ptarget
