#pragma once

// Command-line front end: simulate, fit-nuisance, score, learn, evaluate,
// crossval, transfer, sorted-effects, blp-test, match, report.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptarget/ptarget.hpp"

namespace ptarget::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical (key-sorted, compact) JSON of a run configuration.
inline std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(csv::trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!csv::trim(cur).empty()) out.push_back(csv::trim(cur));
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  return f;
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

struct DataOptions {
  std::string path;
  std::string outcome = "y";
  std::string y_column = "y";
  std::string coding = "pm1";
  std::string extra_outcomes;
  double cost = 1.16;

  void add(CLI::App* app, const std::string& flag = "--data") {
    app->add_option(flag, path, "input CSV (id, y, d, z_*, x_*, y2_*)")->required();
    add_common(app);
  }
  void add_common(CLI::App* app) {
    app->add_option("--outcome", outcome, "outcome column to analyse");
    app->add_option("--y-column", y_column, "primary outcome column");
    app->add_option("--coding", coding, "treatment coding: pm1 (-1/1) or 01")->check(CLI::IsMember({"pm1", "01"}));
    app->add_option("--extra-outcomes", extra_outcomes, "comma-separated extra outcome columns");
    app->add_option("--cost", cost, "cost per treated unit");
  }
  CsvConfig csv_config() const {
    CsvConfig c;
    c.outcome_column = y_column;
    c.coding = coding == "01" ? TreatmentCoding::zero_one : TreatmentCoding::plus_minus_one;
    c.extra_outcomes = split_list(extra_outcomes);
    c.cost = cost;
    return c;
  }
  Dataset load(const std::string& p) const { return load_csv(p, csv_config()); }
  Dataset load() const { return load(path); }
  json to_json() const {
    return {{"outcome", outcome}, {"y_column", y_column}, {"coding", coding}, {"extra_outcomes", extra_outcomes},
            {"cost", cost}};
  }
};

struct NuisanceOptions {
  std::string propensity = "logit";
  std::string design = "main";
  double floor = 0.01;
  std::string population_table;
  std::size_t crossfit = 0;

  void add(CLI::App* app) {
    app->add_option("--propensity", propensity, "logit or population")->check(CLI::IsMember({"logit", "population"}));
    app->add_option("--design", design, "stratum design: main or saturated")->check(CLI::IsMember({"main", "saturated"}));
    app->add_option("--floor", floor, "propensity clipping floor");
    app->add_option("--population-table", population_table, "JSON map cell -> assignment probability");
    app->add_option("--crossfit", crossfit, "cross-fitting folds for nuisances (0 = plug-in)");
  }
  NuisanceSpec spec(std::uint64_t seed) const {
    NuisanceSpec s;
    s.propensity = propensity == "population" ? NuisanceSpec::Propensity::population : NuisanceSpec::Propensity::logit;
    s.design = parse_design_kind(design);
    if (!(floor > 0.0 && floor < 0.5)) throw ValidationError("--floor must lie in (0, 0.5)");
    s.floor = floor;
    if (s.propensity == NuisanceSpec::Propensity::population) {
      if (population_table.empty()) throw ValidationError("--propensity population needs --population-table");
      s.population_table = read_json_file(population_table).get<std::map<std::string, double>>();
    }
    if (crossfit == 1) throw ValidationError("--crossfit must be 0 or at least 2");
    s.crossfit_folds = crossfit;
    s.crossfit_seed = derive_seed(seed, 0x6E7569);
    return s;
  }
};

struct LearnerOptions {
  std::string learner = "exact-tree";
  int depth = 2;
  std::size_t min_leaf = 10;
  std::string logit_spec = "baseline";
  int action = 1;
  std::string features;

  void add(CLI::App* app) {
    app->add_option("--learner", learner, "exact-tree, greedy, greedy-cv, weighted-logit, constant");
    app->add_option("--depth", depth, "tree depth (exact search: 1..3)");
    app->add_option("--min-leaf", min_leaf, "greedy minimum leaf size");
    app->add_option("--logit-spec", logit_spec, "baseline or flexible")->check(CLI::IsMember({"baseline", "flexible"}));
    app->add_option("--action", action, "action of the constant learner (-1 or 1)");
    app->add_option("--features", features, "comma-separated features used by the rule (default: all)");
  }
  LearnerConfig config(std::uint64_t seed) const {
    LearnerConfig c;
    c.kind = parse_learner_kind(learner);
    c.depth = depth;
    c.min_leaf = min_leaf;
    c.logit_spec = logit_spec == "flexible" ? LogitSpec::flexible : LogitSpec::baseline;
    c.constant_action = action;
    c.seed = derive_seed(seed, 0x6376);
    c.validate();
    return c;
  }
};

struct Runner {
  std::ostream& out;
  std::ostream& err;
  std::string command;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::string header(const json& config) const {
    return "ptarget " + command + " config_hash=" + config_hash(config) + " seed=" + std::to_string(seed);
  }

  json envelope(const json& config) const {
    return {{"command", command}, {"config_hash", config_hash(config)}, {"seed", seed}, {"config", config}};
  }
};

inline Rule load_rule(const std::string& path) {
  const json j = read_json_file(path);
  return rule_from_json(j.contains("rule") ? j.at("rule") : j);
}

inline ValueReport report_from_json(const json& j) {
  const json& r = j.contains("report") ? j.at("report") : j;
  ValueReport v;
  v.outcome = r.value("outcome", std::string("y"));
  v.n = r.value("n", std::size_t{0});
  v.cost = r.value("cost", 0.0);
  v.share_treated = r.at("share_treated").get<double>();
  auto est = [&](const char* k) { return Estimate{r.at(k).at("estimate").get<double>(), r.at(k).at("se").get<double>()}; };
  v.value = est("value");
  v.gain_all = est("gain_vs_all");
  v.gain_none = est("gain_vs_none");
  v.gain_random = est("gain_vs_random");
  return v;
}

inline std::vector<double> parse_radii(const std::string& s) {
  std::vector<double> r;
  for (const auto& t : split_list(s)) {
    if (t == "inf" || t == "infinity") {
      r.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    double v;
    if (!csv::parse_double(t, v) || !(v > 0)) throw ValidationError("invalid radius '" + t + "'");
    r.push_back(v);
  }
  if (r.empty()) throw ValidationError("no radii given");
  return r;
}

inline std::vector<double> parse_grid(const std::string& s) {
  int lo = 5, hi = 95, step = 1;
  if (std::sscanf(s.c_str(), "%d:%d:%d", &lo, &hi, &step) != 3 || step < 1 || lo < 1 || hi > 99 || lo > hi) {
    throw ValidationError("grid must look like LO:HI:STEP with 1 <= LO <= HI <= 99");
  }
  return percentile_grid(lo, hi, step);
}

/// Moves `--config FILE` values in front of the command-line arguments so
/// explicit flags (parsed later, last value wins) override the file.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;
  const json cfg = read_json_file(config_path);
  if (!cfg.is_object()) throw ValidationError("config file must hold a JSON object");
  std::vector<std::string> out;
  std::size_t insert_at = rest.empty() ? 0 : 1;  // after the subcommand name
  out.insert(out.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at));
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      out.push_back(flag);
      out.push_back(joined);
    } else if (value.is_number()) {
      out.push_back(flag);
      out.push_back(value.dump());
    } else {
      throw ValidationError("config key '" + key + "' has an unsupported value");
    }
  }
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at), rest.end());
  return out;
}

inline int run(const std::vector<std::string>& raw_args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  bool json_errors = false;
  for (const auto& a : raw_args) json_errors |= a == "--json-errors";
  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    if (json_errors) {
      err << json{{"error", kind}, {"message", msg}, {"exit_code", code}}.dump() << '\n';
    } else {
      err << "error: " << msg << '\n';
    }
    return code;
  };

  CLI::App app{"Policy targeting with AIPW scores and exact policy trees", "ptarget"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Runner r{out, err, "", 0, 1};
  DataOptions data;
  NuisanceOptions nuis;
  LearnerOptions learn;
  std::string out_path, truth_path, spec_name = "paper-analog", spec_out, rule_path, table_path, source_path;
  std::string radii = "0.05,0.1,0.25,inf", sweep_out, plot_path, grid = "5:95:1", data_b, inputs, labels;
  std::string band = "rearranged";
  std::size_t n = 20000, k = 20, reps = 500;
  double radius = 0.1;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", r.seed, "master seed");
    sub->add_option("--threads", r.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub->add_flag("--json-errors", json_errors, "machine-readable diagnostics on stderr");
  };

  auto* sim = app.add_subcommand("simulate", "generate a synthetic campaign with ground truth");
  sim->add_option("--spec", spec_name, "preset (two-group, paper-analog, cold-list) or DGP JSON file");
  sim->add_option("--n", n, "number of units");
  sim->add_option("--out", out_path, "data CSV")->required();
  sim->add_option("--truth", truth_path, "truth sidecar CSV (default: <out>.truth.csv)");
  sim->add_option("--spec-out", spec_out, "write the resolved DGP spec as JSON");
  common(sim);

  auto* fitn = app.add_subcommand("fit-nuisance", "fit propensity and outcome-mean models");
  data.add(fitn);
  nuis.add(fitn);
  fitn->add_option("--out", out_path, "model JSON")->required();
  common(fitn);

  auto* score = app.add_subcommand("score", "AIPW scores and ATE estimates");
  data.add(score);
  nuis.add(score);
  score->add_option("--out", out_path, "scores CSV");
  common(score);

  auto* lrn = app.add_subcommand("learn", "learn a targeting rule");
  lrn->add_option("--data", data.path, "input CSV");
  data.add_common(lrn);
  nuis.add(lrn);
  learn.add(lrn);
  lrn->add_option("--out", out_path, "rule JSON");
  common(lrn);

  auto* evl = app.add_subcommand("evaluate", "evaluate a rule in sample");
  data.add(evl);
  nuis.add(evl);
  evl->add_option("--rule", rule_path, "rule JSON")->required();
  evl->add_option("--out", out_path, "report JSON");
  common(evl);

  auto* cv = app.add_subcommand("crossval", "K-fold out-of-sample evaluation of a learner");
  data.add(cv);
  nuis.add(cv);
  learn.add(cv);
  cv->add_option("--k", k, "number of folds");
  cv->add_option("--out", out_path, "report JSON");
  cv->add_option("--table", table_path, "report table (text)");
  common(cv);

  auto* tr = app.add_subcommand("transfer", "evaluate a frozen rule on another dataset");
  data.add(tr);
  nuis.add(tr);
  tr->add_option("--rule", rule_path, "rule JSON")->required();
  tr->add_option("--source", source_path, "sample the rule was learned on; enables the caliper sweep");
  tr->add_option("--radii", radii, "caliper radii for the sweep (inf = all units)");
  tr->add_option("--sweep-out", sweep_out, "sweep CSV");
  tr->add_option("--out", out_path, "report JSON");
  common(tr);

  auto* se = app.add_subcommand("sorted-effects", "sorted CATE percentiles with uniform bands");
  data.add(se);
  se->add_option("--reps", reps, "bootstrap replications");
  se->add_option("--grid", grid, "percentile grid LO:HI:STEP");
  se->add_option("--band", band, "uniform band: rearranged (valid under ties) or grid")
      ->check(CLI::IsMember({"rearranged", "grid"}));
  se->add_option("--out", out_path, "curve CSV (percentile, estimate, lo, hi)");
  se->add_option("--plot", plot_path, "SVG plot");
  common(se);

  auto* blp = app.add_subcommand("blp-test", "best-linear-predictor heterogeneity test");
  data.add(blp);
  nuis.add(blp);
  blp->add_option("--k", k, "cross-fitting folds for the CATE proxy");
  blp->add_option("--out", out_path, "report JSON");
  common(blp);

  auto* mt = app.add_subcommand("match", "caliper matching of sample A to sample B");
  mt->add_option("--data-a", data.path, "sample A CSV")->required();
  mt->add_option("--data-b", data_b, "sample B CSV")->required();
  data.add_common(mt);
  mt->add_option("--radius", radius, "caliper radius");
  mt->add_option("--out", out_path, "matched pairs CSV (a_id, b_id, distance)");
  mt->add_option("--balance-out", table_path, "balance JSON (standardized differences)");
  common(mt);

  auto* rep = app.add_subcommand("report", "comparison table from report JSON files");
  rep->add_option("--inputs", inputs, "comma-separated report JSON files")->required();
  rep->add_option("--labels", labels, "comma-separated column labels");
  rep->add_option("--out", out_path, "table file");
  common(rep);

  std::vector<std::string> args;
  try {
    std::vector<std::string> tail(raw_args.begin() + (raw_args.empty() ? 0 : 1), raw_args.end());
    args = expand_config(tail);
  } catch (const ValidationError& e) {
    return fail(kExitInput, "validation", e.what());
  }
  std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return fail(kExitInput, "usage", e.what());
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    auto ns_json = [&](const NuisanceSpec& s) { return s.to_json(); };

    if (sim->parsed()) {
      r.command = "simulate";
      DgpSpec spec = (spec_name.find(".json") != std::string::npos) ? DgpSpec::from_json(read_json_file(spec_name))
                                                                       : preset_spec(spec_name);
      const json config{{"spec", spec.to_json()}, {"n", n}};
      if (truth_path.empty()) {
        truth_path = out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".csv"
                         ? out_path.substr(0, out_path.size() - 4) + ".truth.csv"
                         : out_path + ".truth.csv";
      }
      const Simulation s = generate(spec, n, r.seed, r.threads);
      {
        auto f = open_out(out_path);
        write_csv(f, s.data, r.header(config));
      }
      {
        auto f = open_out(truth_path);
        write_truth_csv(f, s.truth, r.header(config));
      }
      if (!spec_out.empty()) write_json_file(spec_out, spec.to_json());
      out << "simulate: " << n << " units of '" << spec.name << "' -> " << out_path << " (truth " << truth_path
          << "), treated " << s.data.treated_count() << '\n';
      return kExitOk;
    }

    if (rep->parsed()) {
      r.command = "report";
      const auto files = split_list(inputs);
      auto names = split_list(labels);
      std::vector<LabeledReport> reports;
      for (std::size_t i = 0; i < files.size(); ++i) {
        reports.push_back({i < names.size() ? names[i] : files[i], report_from_json(read_json_file(files[i]))});
      }
      const std::string table = report_table(reports);
      if (!out_path.empty()) {
        auto f = open_out(out_path);
        f << table;
      }
      out << table;
      return kExitOk;
    }

    if (lrn->parsed() || cv->parsed()) {
      // Learner settings are checked before any data is read.
      learn.config(r.seed);
    }

    if (mt->parsed()) {
      r.command = "match";
      const json config{{"data", data.to_json()}, {"radius", radius}};
      const Dataset a = data.load(), b = data.load(data_b);
      const MatchResult m = caliper_match(a, b, radius);
      if (!out_path.empty()) {
        auto f = open_out(out_path);
        m.write_csv(f, a, b, r.header(config));
      }
      std::vector<std::size_t> ia, ib;
      for (const auto& p : m.pairs) {
        ia.push_back(p.a);
        ib.push_back(p.b);
      }
      json balance = json::array();
      for (const auto& f : shared_features(a, b)) {
        json row{{"feature", f}, {"full", standardized_difference(a, b, f)}};
        if (!m.pairs.empty()) row["matched"] = standardized_difference(a.subset(ia), b.subset(ib), f);
        balance.push_back(row);
      }
      if (!table_path.empty()) {
        json j = r.envelope(config);
        j["matched_pairs"] = m.pairs.size();
        j["unmatched_a"] = m.unmatched_a;
        j["unique_b"] = m.unique_b().size();
        j["balance"] = balance;
        write_json_file(table_path, j);
      }
      out << "match: " << m.pairs.size() << " of " << a.size() << " A units matched within radius " << radius
          << " (" << m.unique_b().size() << " distinct B units)\n";
      return kExitOk;
    }

    const Dataset d = data.load();
    if (d.schema().outcome != data.outcome) d.outcome(data.outcome);  // unknown outcome -> error
    const NuisanceSpec ns = nuis.spec(r.seed);
    json base{{"data", data.to_json()}, {"nuisance", ns_json(ns)}};

    if (fitn->parsed()) {
      r.command = "fit-nuisance";
      const FittedNuisance fitted = fit_nuisance(d, ns, data.outcome);
      json j = r.envelope(base);
      j["propensity"] = fitted.propensity.to_json();
      j["outcome_model"] = fitted.outcome.to_json();
      j["schema"] = d.schema_json();
      write_json_file(out_path, j);
      out << "fit-nuisance: models for '" << data.outcome << "' on " << d.size() << " units -> " << out_path << '\n';
      return kExitOk;
    }

    if (score->parsed()) {
      r.command = "score";
      const ScoreSet s = score_dataset(d, ns, data.outcome, r.threads);
      if (!out_path.empty()) {
        auto f = open_out(out_path);
        write_scores_csv(f, s, r.header(base));
      }
      const AipwAte a = estimate_ate_aipw(s);
      const AteEstimate o = estimate_ate_ols(d, std::nullopt, data.outcome);
      out << "score: AIPW ATE " << fixed(a.estimate, 3) << " (" << fixed(a.se, 3) << "), net of cost "
          << fixed(a.net, 3) << "; OLS ATE " << fixed(o.estimate, 3) << " (" << fixed(o.se, 3) << ")\n";
      return kExitOk;
    }

    if (lrn->parsed()) {
      r.command = "learn";
      const LearnerConfig lc = learn.config(r.seed);
      json config = base;
      config["learner"] = lc.to_json();
      config["features"] = learn.features;
      const auto feats = learn.features.empty() ? d.schema().features : split_list(learn.features);
      const ScoreSet s = score_dataset(d, ns, data.outcome, r.threads);
      const LearnedRule lr = learn_rule(s.net_reward, d.features(feats), lc, r.threads);
      if (!out_path.empty()) {
        json j = r.envelope(config);
        j["rule"] = rule_to_json(lr.rule);
        j["report"] = lr.report.to_json();
        write_json_file(out_path, j);
      }
      out << "learn: objective " << csv::format_double(lr.report.objective) << ", " << lr.report.candidate_splits
          << " candidate splits, " << fixed(elapsed(), 2) << " s" << (lr.report.warning ? " [warning: " + lr.report.note + "]" : "")
          << '\n';
      return kExitOk;
    }

    if (evl->parsed()) {
      r.command = "evaluate";
      const Rule rule = load_rule(rule_path);
      json config = base;
      config["rule"] = rule_to_json(rule);
      const ValueReport v = transfer_evaluate(rule, d, ns, data.outcome, r.threads);
      if (!out_path.empty()) {
        json j = r.envelope(config);
        j["report"] = v.to_json();
        write_json_file(out_path, j);
      }
      out << report_table({{"rule", v}});
      return kExitOk;
    }

    if (cv->parsed()) {
      r.command = "crossval";
      CrossValidationConfig cc;
      cc.learner = learn.config(r.seed);
      cc.nuisance = ns;
      cc.outcome = data.outcome;
      cc.features = split_list(learn.features);
      cc.k = k;
      cc.seed = r.seed;
      json config = base;
      config["learner"] = cc.learner.to_json();
      config["features"] = learn.features;
      config["k"] = k;
      const ValueReport v = cross_validate(d, cc, r.threads);
      const std::string table = report_table({{"rule", v}});
      if (!out_path.empty()) {
        json j = r.envelope(config);
        j["report"] = v.to_json();
        write_json_file(out_path, j);
      }
      if (!table_path.empty()) {
        auto f = open_out(table_path);
        f << "# " << r.header(config) << '\n' << table;
      }
      out << table;
      return kExitOk;
    }

    if (tr->parsed()) {
      r.command = "transfer";
      const Rule rule = load_rule(rule_path);
      json config = base;
      config["rule"] = rule_to_json(rule);
      const ValueReport v = transfer_evaluate(rule, d, ns, data.outcome, r.threads);
      json j = r.envelope(config);
      j["report"] = v.to_json();
      if (!source_path.empty()) {
        const Dataset a = data.load(source_path);
        const auto sweep = transfer_with_radius_sweep(rule, a, d, parse_radii(radii), ns, data.outcome,
                                                      rule_features(rule), r.threads);
        if (!sweep_out.empty()) {
          config["radii"] = radii;
          auto f = open_out(sweep_out);
          write_sweep_csv(f, sweep, r.header(config));
        }
        for (const auto& e : sweep) {
          out << "radius " << (std::isinf(e.radius) ? std::string("inf") : fixed(e.radius, 3)) << ": "
              << e.matched_b << " B units";
          if (e.report) out << ", gain vs no-gift " << format_estimate(e.report->gain_none);
          out << '\n';
        }
      }
      if (!out_path.empty()) write_json_file(out_path, j);
      out << report_table({{"transfer", v}});
      return kExitOk;
    }

    if (se->parsed()) {
      r.command = "sorted-effects";
      const json config{{"data", data.to_json()}, {"reps", reps}, {"grid", grid}, {"band", band}};
      const SortedEffectsCurve c =
          sorted_effects(d, data.outcome, parse_grid(grid), reps, r.seed, r.threads, {}, parse_band_method(band));
      if (!out_path.empty()) {
        auto f = open_out(out_path);
        c.write_csv(f, r.header(config));
      }
      if (!plot_path.empty()) {
        auto f = open_out(plot_path);
        f << sorted_effects_svg(c, d.cost(), "Sorted effects (" + data.outcome + ")");
      }
      out << "sorted-effects: " << c.grid.size() << " percentiles, effect range " << fixed(c.estimate.front(), 2)
          << " .. " << fixed(c.estimate.back(), 2) << ", uniform critical value " << fixed(c.critical_value, 3)
          << '\n';
      return kExitOk;
    }

    if (blp->parsed()) {
      r.command = "blp-test";
      json config = base;
      config["k"] = k;
      const BlpTestReport b = blp_test(d, data.outcome, k, r.seed, ns, r.threads);
      if (!out_path.empty()) {
        json j = r.envelope(config);
        j["report"] = b.to_json();
        write_json_file(out_path, j);
      }
      out << "blp-test: average effect " << fixed(b.average_effect.estimate, 3) << " (p=" << fixed(b.average_effect.p_value, 4)
          << "), heterogeneity loading "
          << (b.heterogeneity.defined ? fixed(b.heterogeneity.estimate, 3) + " (p=" + fixed(b.heterogeneity.p_value, 4) + ")"
                                      : std::string("undefined"))
          << '\n';
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    return fail(kExitInput, "validation", e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, "numerical", e.what());
  } catch (const json::exception& e) {
    return fail(kExitInput, "validation", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
  return fail(kExitInput, "usage", "no subcommand");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace ptarget::cli
