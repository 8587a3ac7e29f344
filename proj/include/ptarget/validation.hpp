#pragma once

// K-fold out-of-sample evaluation of a learner and evaluation of a frozen
// rule on another dataset.

#include <algorithm>
#include <string>
#include <vector>

#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/evaluation.hpp"
#include "ptarget/learners.hpp"
#include "ptarget/nuisance.hpp"
#include "ptarget/parallel.hpp"
#include "ptarget/scores.hpp"

namespace ptarget {

struct CrossValidationConfig {
  LearnerConfig learner;
  NuisanceSpec nuisance;
  std::string outcome = "y";
  std::vector<std::string> features;  // empty: all schema features
  std::size_t k = 20;
  std::uint64_t seed = 0;
};

/// For each fold: nuisances and the rule are fitted on the other K-1 folds;
/// the held-out fold is scored with the complement's nuisance models and the
/// rule is evaluated there. Estimates are averaged over folds; SEs use the
/// pooled per-unit contributions of all held-out units.
inline ValueReport cross_validate(const Dataset& data, const CrossValidationConfig& cfg, std::size_t threads = 1) {
  cfg.learner.validate();
  const auto folds = split_folds(data, cfg.k, cfg.seed);
  const auto features = cfg.features.empty() ? data.schema().features : cfg.features;
  data.features(features);  // validates names up front

  std::vector<ValueReport> per_fold(cfg.k);
  std::vector<nlohmann::json> rules(cfg.k);
  parallel_for(cfg.k, threads, [&](std::size_t f) {
    try {
      const auto train_idx = fold_members(folds, f, false);
      const auto test_idx = fold_members(folds, f, true);
      const Dataset train = data.subset(train_idx);
      const ScoreSet train_scores = score_dataset(train, cfg.nuisance, cfg.outcome);
      const LearnedRule learned = learn_rule(train_scores.net_reward, train.features(features), cfg.learner);

      const FittedNuisance fitted = fit_nuisance(train, cfg.nuisance, cfg.outcome);
      std::vector<Unit> test_units;
      test_units.reserve(test_idx.size());
      for (auto i : test_idx) test_units.push_back(data[i]);
      const auto nuis = predict_nuisance(fitted, data.schema(), test_units);
      const ScoreSet test_scores = compute_aipw(data.schema(), test_units, nuis, cfg.outcome, data.cost());

      FeatureMatrix Xtest(test_units.size(), rule_features(learned.rule));
      const auto& sf = data.schema().features;
      std::vector<std::size_t> cols;
      for (const auto& name : rule_features(learned.rule)) {
        cols.push_back(static_cast<std::size_t>(std::find(sf.begin(), sf.end(), name) - sf.begin()));
      }
      for (std::size_t r = 0; r < test_units.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) Xtest(r, c) = test_units[r].x[cols[c]];
      }
      per_fold[f] = evaluate(test_scores, predict_all(learned.rule, Xtest), data.cost());
      rules[f] = rule_to_json(learned.rule);
    } catch (...) {
      rethrow_with_prefix("cross-validation fold " + std::to_string(f) + ": ");
    }
  });

  ValueReport out;
  out.outcome = cfg.outcome;
  out.cost = data.cost();
  double share = 0, v = 0, qa = 0, qn = 0, qr = 0;
  for (std::size_t f = 0; f < cfg.k; ++f) {
    const auto& r = per_fold[f];
    share += r.share_treated;
    v += r.value.value;
    qa += r.gain_all.value;
    qn += r.gain_none.value;
    qr += r.gain_random.value;
    out.c_value.insert(out.c_value.end(), r.c_value.begin(), r.c_value.end());
    out.c_all.insert(out.c_all.end(), r.c_all.begin(), r.c_all.end());
    out.c_none.insert(out.c_none.end(), r.c_none.begin(), r.c_none.end());
    out.c_random.insert(out.c_random.end(), r.c_random.begin(), r.c_random.end());
    out.folds.push_back({f, r.n, r.share_treated, r.value.value, r.gain_all.value, r.gain_none.value,
                         r.gain_random.value, rules[f]});
  }
  const double k = static_cast<double>(cfg.k);
  out.n = out.c_value.size();
  out.share_treated = share / k;
  auto pooled_se = [](const std::vector<double>& c) {
    return sample_sd(c) / std::sqrt(static_cast<double>(c.size()));
  };
  out.value = {v / k, pooled_se(out.c_value)};
  out.gain_all = {qa / k, pooled_se(out.c_all)};
  out.gain_none = {qn / k, pooled_se(out.c_none)};
  out.gain_random = {qr / k, pooled_se(out.c_random)};
  return out;
}

/// Applies a frozen rule to `target`, scored with nuisances fitted on
/// `target` itself.
inline ValueReport transfer_evaluate(const Rule& rule, const Dataset& target, const NuisanceSpec& spec,
                                     const std::string& outcome, std::size_t threads = 1) {
  const FeatureMatrix X = target.features(rule_features(rule));
  const ScoreSet scores = score_dataset(target, spec, outcome, threads);
  return evaluate(scores, predict_all(rule, X), target.cost());
}

}  // namespace ptarget
