#pragma once

// Experimental dataset: units with outcome, +/-1 treatment, stratum codes and
// heterogeneity features; CSV ingestion/export and seeded fold splitting.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ptarget/error.hpp"
#include "ptarget/rng.hpp"

namespace ptarget {

inline constexpr int kTreat = 1;
inline constexpr int kControl = -1;

/// A categorical stratum variable; `labels[code]` is the original file value.
struct StratumVariable {
  std::string name;
  std::vector<std::string> labels;

  std::size_t category_count() const { return labels.size(); }
};

struct Schema {
  std::string outcome = "y";
  std::vector<std::string> features;
  std::vector<StratumVariable> strata;
  std::vector<std::string> extra_outcomes;

  std::size_t feature_index(std::string_view name) const {
    for (std::size_t j = 0; j < features.size(); ++j) {
      if (features[j] == name) return j;
    }
    throw ValidationError("unknown feature '" + std::string(name) + "'");
  }
};

struct Unit {
  std::string id;
  double y = 0.0;
  int d = kControl;
  std::vector<int> z;
  std::vector<double> x;
  std::vector<double> extra;  // aligned with Schema::extra_outcomes
};

/// Dense row-major feature matrix with column names.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::vector<std::string> names)
      : rows_(rows), names_(std::move(names)), values_(rows_ * names_.size()) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols(), cols()};
  }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(idx.size(), names_);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy_n(values_.begin() + idx[r] * cols(), cols(), out.values_.begin() + r * cols());
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::vector<std::string> names_;
  std::vector<double> values_;
};

class Dataset {
 public:
  Dataset(Schema schema, std::vector<Unit> units, double cost)
      : schema_(std::move(schema)), units_(std::move(units)), cost_(cost) {
    validate();
  }

  const Schema& schema() const { return schema_; }
  std::span<const Unit> units() const { return units_; }
  const Unit& operator[](std::size_t i) const { return units_[i]; }
  std::size_t size() const { return units_.size(); }
  double cost() const { return cost_; }

  Dataset with_cost(double cost) const { return Dataset(schema_, units_, cost); }

  /// Values of the primary outcome or of a named extra outcome.
  std::vector<double> outcome(std::string_view name) const {
    std::vector<double> out(size());
    if (name == schema_.outcome) {
      for (std::size_t i = 0; i < size(); ++i) out[i] = units_[i].y;
      return out;
    }
    for (std::size_t k = 0; k < schema_.extra_outcomes.size(); ++k) {
      if (schema_.extra_outcomes[k] == name) {
        for (std::size_t i = 0; i < size(); ++i) out[i] = units_[i].extra[k];
        return out;
      }
    }
    throw ValidationError("unknown outcome '" + std::string(name) + "'");
  }

  std::vector<int> treatments() const {
    std::vector<int> d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = units_[i].d;
    return d;
  }

  FeatureMatrix features() const { return features(schema_.features); }

  /// Feature matrix over `names` (any order); all must exist in the schema.
  FeatureMatrix features(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    std::vector<std::string> missing;
    for (const auto& n : names) {
      auto it = std::find(schema_.features.begin(), schema_.features.end(), n);
      if (it == schema_.features.end()) {
        missing.push_back(n);
      } else {
        cols.push_back(static_cast<std::size_t>(it - schema_.features.begin()));
      }
    }
    if (!missing.empty()) {
      std::string msg = "dataset lacks features:";
      for (const auto& m : missing) msg += " " + m;
      throw ValidationError(msg);
    }
    FeatureMatrix fm(size(), names);
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) fm(i, j) = units_[i].x[cols[j]];
    }
    return fm;
  }

  /// Rows `idx` in the given order (duplicates allowed).
  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<Unit> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(units_.at(i));
    return Dataset(schema_, std::move(out), cost_);
  }

  /// Same units restricted to the named features.
  Dataset select_features(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    for (const auto& n : names) cols.push_back(schema_.feature_index(n));
    Schema s = schema_;
    s.features = names;
    std::vector<Unit> out = units_;
    for (auto& u : out) {
      std::vector<double> x;
      for (auto c : cols) x.push_back(u.x[c]);
      u.x = std::move(x);
    }
    return Dataset(std::move(s), std::move(out), cost_);
  }

  std::size_t treated_count() const {
    return static_cast<std::size_t>(
        std::count_if(units_.begin(), units_.end(), [](const Unit& u) { return u.d == kTreat; }));
  }

  /// Schema and code book as JSON.
  nlohmann::json schema_json() const {
    nlohmann::json strata = nlohmann::json::array();
    for (const auto& s : schema_.strata) {
      nlohmann::json book = nlohmann::json::object();
      for (std::size_t c = 0; c < s.labels.size(); ++c) book[s.labels[c]] = c;
      strata.push_back({{"name", s.name}, {"categories", s.labels.size()}, {"codebook", book}});
    }
    return {{"outcome", schema_.outcome},
            {"features", schema_.features},
            {"strata", strata},
            {"extra_outcomes", schema_.extra_outcomes},
            {"cost", cost_},
            {"rows", size()}};
  }

 private:
  void validate() const {
    if (units_.empty()) throw ValidationError("dataset has zero rows");
    if (!(cost_ >= 0.0) || !std::isfinite(cost_)) {
      throw ValidationError("treatment cost must be a finite non-negative number");
    }
    std::set<std::string> names;
    for (const auto& f : schema_.features) {
      if (!names.insert(f).second) throw ValidationError("duplicate feature name '" + f + "'");
    }
    std::set<std::string> outcomes{schema_.outcome};
    for (const auto& o : schema_.extra_outcomes) {
      if (!outcomes.insert(o).second) throw ValidationError("duplicate outcome name '" + o + "'");
    }
    for (const auto& o : outcomes) {
      if (names.count(o)) throw ValidationError("outcome '" + o + "' collides with a feature name");
    }
    bool any_treated = false, any_control = false;
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const Unit& u = units_[i];
      const std::string where = " (unit " + u.id + ", row " + std::to_string(i + 1) + ")";
      if (u.d != kTreat && u.d != kControl) throw ValidationError("treatment must be -1 or +1" + where);
      any_treated |= u.d == kTreat;
      any_control |= u.d == kControl;
      if (!std::isfinite(u.y)) throw ValidationError("non-finite outcome" + where);
      if (u.z.size() != schema_.strata.size() || u.x.size() != schema_.features.size() ||
          u.extra.size() != schema_.extra_outcomes.size()) {
        throw ValidationError("unit does not match schema" + where);
      }
      for (std::size_t s = 0; s < u.z.size(); ++s) {
        if (u.z[s] < 0 || static_cast<std::size_t>(u.z[s]) >= schema_.strata[s].category_count()) {
          throw ValidationError("stratum code out of range for " + schema_.strata[s].name + where);
        }
      }
      for (double v : u.x) {
        if (!std::isfinite(v)) throw ValidationError("non-finite feature value" + where);
      }
      for (double v : u.extra) {
        if (!std::isfinite(v)) throw ValidationError("non-finite extra outcome" + where);
      }
    }
    if (!any_treated || !any_control) {
      throw ValidationError("dataset needs at least one treated and one control unit");
    }
  }

  Schema schema_;
  std::vector<Unit> units_;
  double cost_;
};

// ---------------------------------------------------------------------------
// CSV

enum class TreatmentCoding { plus_minus_one, zero_one };

struct CsvConfig {
  std::string id_column = "id";
  std::string outcome_column = "y";
  std::string treatment_column = "d";
  TreatmentCoding coding = TreatmentCoding::plus_minus_one;
  std::string stratum_prefix = "z_";
  std::string feature_prefix = "x_";
  std::string extra_outcome_prefix = "y2_";
  std::vector<std::string> extra_outcomes;  // explicit columns beyond the prefix
  double cost = 1.16;
};

namespace csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline bool parse_double(std::string_view text, double& out) {
  std::string t = trim(std::string(text));
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

/// Round-trip formatting of a binary64 value (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Reads the next data line, skipping blank lines and '#' comment lines.
inline bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace csv

inline Dataset read_csv(std::istream& in, const CsvConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  if (!csv::next_line(in, line, line_no)) throw ValidationError("CSV has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = csv::split_record(line);
  for (auto& h : header) h = csv::trim(h);

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = find_col(config.id_column);
  const std::size_t y_col = find_col(config.outcome_column);
  const std::size_t d_col = find_col(config.treatment_column);

  Schema schema;
  schema.outcome = config.outcome_column;
  std::vector<std::size_t> z_cols, x_cols, extra_cols;
  auto starts_with = [](const std::string& s, const std::string& p) {
    return !p.empty() && s.size() > p.size() && s.compare(0, p.size(), p) == 0;
  };
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == id_col || c == y_col || c == d_col) continue;
    const auto& h = header[c];
    if (starts_with(h, config.stratum_prefix)) {
      z_cols.push_back(c);
      schema.strata.push_back({h, {}});
    } else if (starts_with(h, config.feature_prefix)) {
      x_cols.push_back(c);
      schema.features.push_back(h);
    } else if (starts_with(h, config.extra_outcome_prefix)) {
      extra_cols.push_back(c);
      schema.extra_outcomes.push_back(h);
    }
  }
  for (const auto& name : config.extra_outcomes) {
    if (std::find(schema.extra_outcomes.begin(), schema.extra_outcomes.end(), name) !=
        schema.extra_outcomes.end()) {
      continue;
    }
    extra_cols.push_back(find_col(name));
    schema.extra_outcomes.push_back(name);
  }

  std::vector<std::unordered_map<std::string, int>> books(z_cols.size());
  std::vector<Unit> units;
  std::size_t row = 0;
  while (csv::next_line(in, line, line_no)) {
    ++row;
    auto cells = csv::split_record(line);
    const std::string where = " at row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
    if (cells.size() != header.size()) {
      throw ValidationError("expected " + std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()) + where);
    }
    auto number = [&](std::size_t c) {
      double v;
      if (!csv::parse_double(cells[c], v)) {
        throw ValidationError("unparsable or non-finite value '" + cells[c] + "' in column '" +
                              header[c] + "'" + where);
      }
      return v;
    };
    Unit u;
    u.id = csv::trim(cells[id_col]);
    u.y = number(y_col);
    const double dv = number(d_col);
    if (config.coding == TreatmentCoding::zero_one) {
      if (dv == 1.0) {
        u.d = kTreat;
      } else if (dv == 0.0) {
        u.d = kControl;
      } else {
        throw ValidationError("treatment value outside {0,1} coding" + where);
      }
    } else {
      if (dv == 1.0) {
        u.d = kTreat;
      } else if (dv == -1.0) {
        u.d = kControl;
      } else {
        throw ValidationError("treatment value outside {-1,1} coding" + where);
      }
    }
    for (std::size_t s = 0; s < z_cols.size(); ++s) {
      std::string label = csv::trim(cells[z_cols[s]]);
      if (label.empty()) throw ValidationError("empty stratum value in '" + header[z_cols[s]] + "'" + where);
      auto [it, inserted] = books[s].try_emplace(label, static_cast<int>(schema.strata[s].labels.size()));
      if (inserted) schema.strata[s].labels.push_back(label);
      u.z.push_back(it->second);
    }
    for (auto c : x_cols) u.x.push_back(number(c));
    for (auto c : extra_cols) u.extra.push_back(number(c));
    units.push_back(std::move(u));
  }
  if (units.empty()) throw ValidationError("CSV has zero data rows");
  return Dataset(std::move(schema), std::move(units), config.cost);
}

inline Dataset load_csv(const std::string& path, const CsvConfig& config = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, config);
}

/// Writes the canonical CSV layout: id, outcome, d (+/-1), z_*, x_*, extras.
/// `comment`, when non-empty, is written as a leading '#' line.
inline void write_csv(std::ostream& out, const Dataset& data, const std::string& comment = "") {
  const Schema& s = data.schema();
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "id," << s.outcome << ",d";
  for (const auto& z : s.strata) out << ',' << csv::quote_if_needed(z.name);
  for (const auto& x : s.features) out << ',' << csv::quote_if_needed(x);
  for (const auto& e : s.extra_outcomes) out << ',' << csv::quote_if_needed(e);
  out << '\n';
  for (const auto& u : data.units()) {
    out << csv::quote_if_needed(u.id) << ',' << csv::format_double(u.y) << ',' << u.d;
    for (std::size_t k = 0; k < u.z.size(); ++k) {
      out << ',' << csv::quote_if_needed(s.strata[k].labels[u.z[k]]);
    }
    for (double v : u.x) out << ',' << csv::format_double(v);
    for (double v : u.extra) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Folds

/// Per-unit fold index in [0, k). A seeded uniform permutation is cut into k
/// contiguous blocks; the first N mod k blocks get one extra unit.
inline std::vector<std::size_t> split_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw ValidationError("fold count must satisfy 2 <= k <= N (k=" + std::to_string(k) +
                          ", N=" + std::to_string(n) + ")");
  }
  Engine eng = make_engine(seed, 0x466F6C6473ULL);
  auto perm = random_permutation(n, eng);
  std::vector<std::size_t> fold(n);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t r = 0; r < len; ++r) fold[perm[pos++]] = f;
  }
  return fold;
}

inline std::vector<std::size_t> split_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  return split_folds(data.size(), k, seed);
}

/// Indices of units in fold `f` (held out) or not in it (training).
inline std::vector<std::size_t> fold_members(std::span<const std::size_t> folds, std::size_t f,
                                             bool in_fold) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if ((folds[i] == f) == in_fold) idx.push_back(i);
  }
  return idx;
}

}  // namespace ptarget
