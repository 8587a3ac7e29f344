#pragma once

// Nuisance models for the doubly robust score: the propensity score p(z) and
// the arm-specific outcome means mu_1(z), mu_-1(z), all functions of the
// stratum codes only.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/parallel.hpp"

namespace ptarget {

enum class DesignKind { main_effects, saturated };

inline std::string to_string(DesignKind k) {
  return k == DesignKind::main_effects ? "main" : "saturated";
}

inline DesignKind parse_design_kind(const std::string& s) {
  if (s == "main" || s == "main_effects") return DesignKind::main_effects;
  if (s == "saturated") return DesignKind::saturated;
  throw ValidationError("unknown stratum design '" + s + "' (expected main|saturated)");
}

/// Stratum label of every stratum variable of `u`, joined with '|', in schema
/// order. This is the cell key used by population propensity tables.
inline std::string cell_key(const Schema& schema, const Unit& u) {
  std::string key;
  for (std::size_t s = 0; s < schema.strata.size(); ++s) {
    if (s) key += '|';
    key += schema.strata[s].labels[u.z[s]];
  }
  return key;
}

/// Dummy-coded stratum design. Levels and cells are keyed by label so a design
/// learned on one dataset applies to another with a different code book.
class StratumDesign {
 public:
  static StratumDesign fit(const Dataset& train, DesignKind kind) {
    StratumDesign d;
    d.kind_ = kind;
    const Schema& s = train.schema();
    for (const auto& v : s.strata) d.strata_.push_back(v.name);
    if (kind == DesignKind::main_effects) {
      d.levels_.resize(s.strata.size());
      for (std::size_t k = 0; k < s.strata.size(); ++k) {
        std::vector<bool> seen(s.strata[k].category_count(), false);
        for (const auto& u : train.units()) seen[u.z[k]] = true;
        for (std::size_t c = 0; c < seen.size(); ++c) {
          if (seen[c]) d.levels_[k].push_back(s.strata[k].labels[c]);
        }
      }
    } else {
      std::map<std::vector<int>, bool> cells;
      for (const auto& u : train.units()) cells[u.z] = true;
      for (const auto& [codes, _] : cells) {
        std::vector<std::string> labels;
        for (std::size_t k = 0; k < codes.size(); ++k) labels.push_back(s.strata[k].labels[codes[k]]);
        d.cells_.push_back(std::move(labels));
      }
    }
    return d;
  }

  DesignKind kind() const { return kind_; }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names{"(intercept)"};
    if (kind_ == DesignKind::main_effects) {
      for (std::size_t k = 0; k < strata_.size(); ++k) {
        for (std::size_t l = 1; l < levels_[k].size(); ++l) {
          names.push_back(strata_[k] + "=" + levels_[k][l]);
        }
      }
    } else {
      for (std::size_t c = 1; c < cells_.size(); ++c) names.push_back(cell_name(c));
    }
    return names;
  }

  Eigen::Index columns() const { return static_cast<Eigen::Index>(column_names().size()); }

  Eigen::MatrixXd matrix(const Schema& schema, std::span<const Unit> units) const {
    const auto map = strata_map(schema);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(units.size()), columns());
    for (std::size_t i = 0; i < units.size(); ++i) {
      fill_row(schema, map, units[i], X.row(static_cast<Eigen::Index>(i)));
    }
    return X;
  }

  Eigen::MatrixXd matrix(const Dataset& data) const { return matrix(data.schema(), data.units()); }

  /// Groups whose units must contain both arms for a logit on this design to
  /// have a finite maximum: every level (main effects) or every cell.
  std::vector<std::string> group_names() const {
    std::vector<std::string> g;
    if (kind_ == DesignKind::main_effects) {
      for (std::size_t k = 0; k < strata_.size(); ++k) {
        for (const auto& l : levels_[k]) g.push_back(strata_[k] + "=" + l);
      }
    } else {
      for (std::size_t c = 0; c < cells_.size(); ++c) g.push_back(cell_name(c));
    }
    return g;
  }

  /// Group memberships of unit `u` (indices into group_names()).
  std::vector<std::size_t> groups_of(const Schema& schema, const Unit& u) const {
    const auto map = strata_map(schema);
    std::vector<std::size_t> g;
    if (kind_ == DesignKind::main_effects) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < strata_.size(); ++k) {
        g.push_back(offset + level_index(k, schema.strata[map[k]].labels[u.z[map[k]]]));
        offset += levels_[k].size();
      }
    } else {
      g.push_back(cell_index(schema, map, u));
    }
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}, {"strata", strata_}, {"columns", column_names()}};
    if (kind_ == DesignKind::main_effects) {
      j["levels"] = levels_;
    } else {
      j["cells"] = cells_;
    }
    return j;
  }

 private:
  std::vector<std::size_t> strata_map(const Schema& schema) const {
    std::vector<std::size_t> map;
    for (const auto& name : strata_) {
      auto it = std::find_if(schema.strata.begin(), schema.strata.end(),
                             [&](const StratumVariable& v) { return v.name == name; });
      if (it == schema.strata.end()) throw ValidationError("dataset lacks stratum variable '" + name + "'");
      map.push_back(static_cast<std::size_t>(it - schema.strata.begin()));
    }
    return map;
  }

  std::size_t level_index(std::size_t k, const std::string& label) const {
    auto it = std::find(levels_[k].begin(), levels_[k].end(), label);
    if (it == levels_[k].end()) {
      throw ValidationError("stratum level " + strata_[k] + "=" + label + " was not seen when fitting");
    }
    return static_cast<std::size_t>(it - levels_[k].begin());
  }

  std::size_t cell_index(const Schema& schema, const std::vector<std::size_t>& map, const Unit& u) const {
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < strata_.size(); ++k) {
      labels.push_back(schema.strata[map[k]].labels[u.z[map[k]]]);
    }
    auto it = std::find(cells_.begin(), cells_.end(), labels);
    if (it == cells_.end()) {
      std::string name;
      for (const auto& l : labels) name += (name.empty() ? "" : "|") + l;
      throw ValidationError("stratum cell [" + name + "] was not seen when fitting");
    }
    return static_cast<std::size_t>(it - cells_.begin());
  }

  std::string cell_name(std::size_t c) const {
    std::string name = "cell[";
    for (std::size_t k = 0; k < strata_.size(); ++k) {
      name += (k ? "," : "") + strata_[k] + "=" + cells_[c][k];
    }
    return name + "]";
  }

  template <typename Row>
  void fill_row(const Schema& schema, const std::vector<std::size_t>& map, const Unit& u, Row row) const {
    row(0) = 1.0;
    if (kind_ == DesignKind::main_effects) {
      Eigen::Index col = 1;
      for (std::size_t k = 0; k < strata_.size(); ++k) {
        const std::size_t l = level_index(k, schema.strata[map[k]].labels[u.z[map[k]]]);
        if (l > 0) row(col + static_cast<Eigen::Index>(l) - 1) = 1.0;
        col += static_cast<Eigen::Index>(levels_[k].size()) - 1;
      }
    } else {
      const std::size_t c = cell_index(schema, map, u);
      if (c > 0) row(static_cast<Eigen::Index>(c)) = 1.0;
    }
  }

  DesignKind kind_ = DesignKind::main_effects;
  std::vector<std::string> strata_;
  std::vector<std::vector<std::string>> levels_;
  std::vector<std::vector<std::string>> cells_;
};

// ---------------------------------------------------------------------------

class PropensityModel {
 public:
  enum class Source { logit, population };

  static PropensityModel from_logit(StratumDesign design, Eigen::VectorXd coef, double floor) {
    PropensityModel m;
    m.source_ = Source::logit;
    m.design_ = std::move(design);
    m.coef_ = std::move(coef);
    m.floor_ = floor;
    return m;
  }

  static PropensityModel from_table(std::map<std::string, double> table) {
    PropensityModel m;
    m.source_ = Source::population;
    m.table_ = std::move(table);
    return m;
  }

  Source source() const { return source_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  double floor() const { return floor_; }

  std::vector<double> predict(const Schema& schema, std::span<const Unit> units) const {
    std::vector<double> p(units.size());
    if (source_ == Source::population) {
      for (std::size_t i = 0; i < units.size(); ++i) p[i] = lookup(cell_key(schema, units[i]));
      return p;
    }
    const Eigen::VectorXd eta = design_.matrix(schema, units) * coef_;
    for (std::size_t i = 0; i < units.size(); ++i) {
      p[i] = std::clamp(logistic(eta[static_cast<Eigen::Index>(i)]), floor_, 1.0 - floor_);
    }
    return p;
  }

  std::vector<double> predict(const Dataset& data) const { return predict(data.schema(), data.units()); }

  nlohmann::json to_json() const {
    if (source_ == Source::population) return {{"source", "population"}, {"table", table_}};
    std::vector<double> coef(coef_.data(), coef_.data() + coef_.size());
    return {{"source", "logit"}, {"design", design_.to_json()}, {"coefficients", coef}, {"floor", floor_}};
  }

 private:
  double lookup(const std::string& key) const {
    auto it = table_.find(key);
    if (it == table_.end()) throw ValidationError("population propensity table lacks cell '" + key + "'");
    return it->second;
  }

  Source source_ = Source::logit;
  StratumDesign design_;
  Eigen::VectorXd coef_;
  double floor_ = 0.01;
  std::map<std::string, double> table_;
};

/// Logit propensity model on the stratum design. Cells (levels, for main
/// effects) holding only one arm make the MLE diverge and are rejected.
inline PropensityModel fit_propensity_logit(const Dataset& data, DesignKind kind, double floor = 0.01) {
  if (!(floor >= 0.0 && floor < 0.5)) throw ValidationError("propensity floor must lie in [0, 0.5)");
  StratumDesign design = StratumDesign::fit(data, kind);
  const auto groups = design.group_names();
  std::vector<std::size_t> treated(groups.size(), 0), total(groups.size(), 0);
  for (const auto& u : data.units()) {
    for (auto g : design.groups_of(data.schema(), u)) {
      ++total[g];
      treated[g] += u.d == kTreat;
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (treated[g] == 0 || treated[g] == total[g]) {
      throw NumericalError("propensity logit: separation in cell " + groups[g] + " (" +
                           std::to_string(treated[g]) + " of " + std::to_string(total[g]) + " treated)");
    }
  }
  const Eigen::MatrixXd X = design.matrix(data);
  require_full_rank(X, design.column_names(), "propensity logit");
  Eigen::VectorXd y(X.rows());
  for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Eigen::Index>(i)] = data[i].d == kTreat;
  const LogitFit fit = fit_logit(X, y, Eigen::VectorXd::Ones(X.rows()));
  if (fit.status == LogitStatus::separated) throw NumericalError("propensity logit: quasi-complete separation");
  if (fit.status != LogitStatus::converged) {
    throw NumericalError("propensity logit: no convergence after " + std::to_string(fit.iterations) + " iterations");
  }
  return PropensityModel::from_logit(std::move(design), fit.coef, floor);
}

/// Fixed assignment probabilities per stratum cell (key: labels joined by '|').
inline PropensityModel fit_propensity_population(const Dataset& data, const std::map<std::string, double>& table) {
  for (const auto& [key, p] : table) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("population propensity for '" + key + "' must lie in (0,1)");
  }
  for (const auto& u : data.units()) {
    const auto key = cell_key(data.schema(), u);
    if (!table.count(key)) throw ValidationError("population propensity table lacks cell '" + key + "'");
  }
  return PropensityModel::from_table(table);
}

class OutcomeModel {
 public:
  OutcomeModel() = default;
  OutcomeModel(StratumDesign design, Eigen::VectorXd treated, Eigen::VectorXd control, double var_treated,
               double var_control)
      : design_(std::move(design)),
        treated_(std::move(treated)),
        control_(std::move(control)),
        var_treated_(var_treated),
        var_control_(var_control) {}

  /// (mu_1, mu_-1) per unit.
  std::pair<std::vector<double>, std::vector<double>> predict(const Schema& schema,
                                                              std::span<const Unit> units) const {
    const Eigen::MatrixXd X = design_.matrix(schema, units);
    const Eigen::VectorXd m1 = X * treated_, m0 = X * control_;
    return {std::vector<double>(m1.data(), m1.data() + m1.size()),
            std::vector<double>(m0.data(), m0.data() + m0.size())};
  }

  std::pair<std::vector<double>, std::vector<double>> predict(const Dataset& data) const {
    return predict(data.schema(), data.units());
  }

  const Eigen::VectorXd& treated_coefficients() const { return treated_; }
  const Eigen::VectorXd& control_coefficients() const { return control_; }

  nlohmann::json to_json() const {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"design", design_.to_json()},
            {"treated", vec(treated_)},
            {"control", vec(control_)},
            {"residual_variance_treated", var_treated_},
            {"residual_variance_control", var_control_}};
  }

 private:
  StratumDesign design_;
  Eigen::VectorXd treated_, control_;
  double var_treated_ = 0.0, var_control_ = 0.0;
};

/// Separate least-squares fits of the outcome on the stratum design within
/// the treated and the control arm.
inline OutcomeModel fit_outcome_means(const Dataset& data, DesignKind kind, const std::string& outcome) {
  StratumDesign design = StratumDesign::fit(data, kind);
  const Eigen::MatrixXd X = design.matrix(data);
  const auto y = data.outcome(outcome);
  const auto names = design.column_names();
  auto arm_fit = [&](int arm, double& resid_var) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].d == arm) rows.push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd Xa(rows.size(), X.cols());
    Eigen::VectorXd ya(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Xa.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
      ya[static_cast<Eigen::Index>(r)] = y[static_cast<std::size_t>(rows[r])];
    }
    const OlsFit f = ols(Xa, ya, names, arm == kTreat ? "outcome OLS (treated arm)" : "outcome OLS (control arm)");
    const double dof = static_cast<double>(Xa.rows() - Xa.cols());
    resid_var = dof > 0 ? f.residuals.squaredNorm() / dof : 0.0;
    return f.coef;
  };
  double v1 = 0, v0 = 0;
  Eigen::VectorXd b1 = arm_fit(kTreat, v1);
  Eigen::VectorXd b0 = arm_fit(kControl, v0);
  return OutcomeModel(std::move(design), std::move(b1), std::move(b0), v1, v0);
}

// ---------------------------------------------------------------------------

struct NuisanceSpec {
  enum class Propensity { logit, population };
  Propensity propensity = Propensity::logit;
  DesignKind design = DesignKind::main_effects;
  double floor = 0.01;
  std::map<std::string, double> population_table;
  /// 0 = plug-in (fit and predict on the same data); >= 2 = cross-fitted.
  std::size_t crossfit_folds = 0;
  std::uint64_t crossfit_seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"propensity", propensity == Propensity::logit ? "logit" : "population"},
                     {"design", to_string(design)},
                     {"floor", floor},
                     {"crossfit_folds", crossfit_folds},
                     {"crossfit_seed", crossfit_seed}};
    if (propensity == Propensity::population) j["population_table"] = population_table;
    return j;
  }
};

struct FittedNuisance {
  PropensityModel propensity;
  OutcomeModel outcome;
};

struct NuisancePredictions {
  std::vector<double> p, mu1, mu0;
};

inline FittedNuisance fit_nuisance(const Dataset& train, const NuisanceSpec& spec, const std::string& outcome) {
  PropensityModel pm = spec.propensity == NuisanceSpec::Propensity::logit
                           ? fit_propensity_logit(train, spec.design, spec.floor)
                           : fit_propensity_population(train, spec.population_table);
  return {std::move(pm), fit_outcome_means(train, spec.design, outcome)};
}

inline NuisancePredictions predict_nuisance(const FittedNuisance& f, const Schema& schema,
                                            std::span<const Unit> units) {
  NuisancePredictions out;
  out.p = f.propensity.predict(schema, units);
  std::tie(out.mu1, out.mu0) = f.outcome.predict(schema, units);
  return out;
}

inline NuisancePredictions predict_nuisance(const FittedNuisance& f, const Dataset& data) {
  return predict_nuisance(f, data.schema(), data.units());
}

/// Out-of-fold nuisance predictions: unit i is predicted by models fitted on
/// every fold except fold(i).
inline NuisancePredictions cross_fit(const Dataset& data, std::size_t k, std::uint64_t seed,
                                     const NuisanceSpec& spec, const std::string& outcome,
                                     std::size_t threads = 1) {
  const auto folds = split_folds(data, k, seed);
  NuisancePredictions out{std::vector<double>(data.size()), std::vector<double>(data.size()),
                          std::vector<double>(data.size())};
  parallel_for(k, threads, [&](std::size_t f) {
    try {
      const auto train_idx = fold_members(folds, f, false);
      const auto test_idx = fold_members(folds, f, true);
      std::vector<Unit> train_units;
      for (auto i : train_idx) train_units.push_back(data[i]);
      std::vector<Unit> test_units;
      for (auto i : test_idx) test_units.push_back(data[i]);
      std::size_t treated = 0;
      for (const auto& u : train_units) treated += u.d == kTreat;
      if (treated == 0 || treated == train_units.size()) {
        throw ValidationError("training complement has only one treatment arm");
      }
      const Dataset train(data.schema(), std::move(train_units), data.cost());
      const FittedNuisance fitted = fit_nuisance(train, spec, outcome);
      const NuisancePredictions pred = predict_nuisance(fitted, data.schema(), test_units);
      for (std::size_t r = 0; r < test_idx.size(); ++r) {
        out.p[test_idx[r]] = pred.p[r];
        out.mu1[test_idx[r]] = pred.mu1[r];
        out.mu0[test_idx[r]] = pred.mu0[r];
      }
    } catch (...) {
      rethrow_with_prefix("cross-fitting fold " + std::to_string(f) + ": ");
    }
  });
  return out;
}

/// Nuisance predictions for plug-in or cross-fitted use, per `spec`.
inline NuisancePredictions nuisance_predictions(const Dataset& data, const NuisanceSpec& spec,
                                                const std::string& outcome, std::size_t threads = 1) {
  if (spec.crossfit_folds >= 2) return cross_fit(data, spec.crossfit_folds, spec.crossfit_seed, spec, outcome, threads);
  if (spec.crossfit_folds == 1) throw ValidationError("cross-fitting needs at least 2 folds");
  return predict_nuisance(fit_nuisance(data, spec, outcome), data);
}

}  // namespace ptarget
