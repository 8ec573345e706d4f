#pragma once

// Datasets: the two synthetic generators, RFC-4180 CSV ingestion,
// preprocessing (median/mode imputation, standardisation, one-hot) and
// seeded train/test splits. Preprocessing is always fitted on the rows it is
// given and recorded so it can be replayed on held-out rows.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sparxnet/error.hpp"
#include "sparxnet/io.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

namespace sparxnet {

enum class Task { regression, binary };

inline const char* to_string(Task t) { return t == Task::regression ? "regression" : "binary"; }

inline Task task_from_string(std::string_view s) {
  if (s == "regression") return Task::regression;
  if (s == "binary") return Task::binary;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

/// How one source column became one or more model columns.
struct ColumnTransform {
  enum class Kind { numeric, categorical };

  std::string source;
  Kind kind = Kind::numeric;
  // numeric
  double impute = 0.0;  // training median
  double mean = 0.0;
  double scale = 1.0;   // population std; 0 for constant columns
  // categorical
  std::string mode;
  std::vector<std::string> categories;  // sorted; one output column each
};

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  Task task = Task::regression;
  std::vector<ColumnTransform> preprocessing;
  std::vector<std::size_t> true_features;  // synthetic data only

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }

  void check() const {
    if (x.rows() != y.size()) throw DimensionError("feature rows and target length disagree");
    if (static_cast<std::size_t>(x.cols()) != feature_names.size())
      throw DimensionError("feature name count disagrees with column count");
    if (task == Task::binary)
      for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0) throw InvalidArgument("binary targets must be 0 or 1");
  }

  /// Rows in the given order; metadata copied.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
    out.y.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= rows()) throw DimensionError("row index out of range");
      out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(indices[i]));
      out.y(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(indices[i]));
    }
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.task = task;
    out.preprocessing = preprocessing;
    out.true_features = true_features;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Synthetic generators

/// Noise-free single-variable target x^2 + 2 sin x + 3.
inline double single_var_target(double x) { return x * x + 2.0 * std::sin(x) + 3.0; }

/// Noise-free multi-variable target sin a + 2b^2 - 3c^2 + 4e^d - 5e^e.
inline double multi_var_target(std::span<const double, 5> t) {
  return std::sin(t[0]) + 2.0 * t[1] * t[1] - 3.0 * t[2] * t[2] + 4.0 * std::exp(t[3]) -
         5.0 * std::exp(t[4]);
}

/// One Uniform[-1,1] feature at column `true_position` among `noisy`
/// standard-normal features; y = x^2 + 2 sin x + 3 + N(0, noise_sigma^2).
inline Dataset gen_single_var(std::size_t n, std::size_t noisy, double noise_sigma,
                              std::size_t true_position, std::uint64_t seed) {
  if (true_position > noisy) throw InvalidArgument("true feature position must be <= noisy feature count");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  Rng rng = Rng(seed).substream(0x5176);
  const std::size_t d = noisy + 1;
  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double signal = rng.uniform(-1.0, 1.0);
    for (std::size_t c = 0; c < d; ++c)
      data.x(r, static_cast<Eigen::Index>(c)) = c == true_position ? signal : rng.normal();
    data.y(r) = single_var_target(signal) + noise_sigma * rng.normal();
  }
  for (std::size_t c = 0; c < d; ++c) data.feature_names.push_back("x" + std::to_string(c));
  data.true_features = {true_position};
  return data;
}

/// Five informative standard-normal features interleaved at seeded random
/// columns among `noisy` standard-normal noise features. `true_features[j]`
/// is the column feeding the j-th term of the target.
inline Dataset gen_multi_var(std::size_t n, std::size_t noisy = 5, std::uint64_t seed = 0) {
  if (n < 1) throw InvalidArgument("need at least one row");
  constexpr std::size_t informative = 5;
  const std::size_t d = informative + noisy;
  Rng rng = Rng(seed).substream(0x3017);
  std::vector<std::size_t> columns(d);
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(columns));

  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < d; ++c) data.x(r, static_cast<Eigen::Index>(c)) = rng.normal();
    std::array<double, informative> terms{};
    for (std::size_t j = 0; j < informative; ++j) terms[j] = data.x(r, static_cast<Eigen::Index>(columns[j]));
    data.y(r) = multi_var_target(terms);
  }
  for (std::size_t c = 0; c < d; ++c) data.feature_names.push_back("x" + std::to_string(c));
  data.true_features.assign(columns.begin(), columns.begin() + informative);
  return data;
}

// ---------------------------------------------------------------------------
// CSV

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<std::string>>> rows;  // nullopt = missing
  std::vector<std::size_t> line_numbers;                      // first line of each record

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

struct CsvSchema {
  std::string target = "y";
  std::optional<std::string> positive_label;  // set => binary task
  std::set<std::string> categorical;
  std::set<std::string> ignored;

  Task task() const { return positive_label ? Task::binary : Task::regression; }
};

/// RFC-4180 parsing: comma separated, double-quote quoting with "" escapes,
/// CRLF or LF records, embedded newlines inside quotes. Empty cells are
/// missing. The first record is the header.
inline RawTable parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::vector<std::optional<std::string>>> records;
  std::vector<std::size_t> lines;
  std::vector<std::optional<std::string>> record;
  std::string cell;
  bool quoted_cell = false;
  bool in_quotes = false;
  bool record_open = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_cell = [&] {
    if (cell.empty()) record.emplace_back(std::nullopt);
    else record.emplace_back(std::move(cell));
    cell.clear();
    quoted_cell = false;
  };
  auto end_record = [&] {
    end_cell();
    const bool blank = record.size() == 1 && !record.front().has_value();
    if (!blank) {
      records.push_back(std::move(record));
      lines.push_back(record_line);
    }
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!record_open) {
      record_open = true;
      record_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!cell.empty() || quoted_cell)
          throw ParseError("line " + std::to_string(line) + ": stray quote inside unquoted field");
        in_quotes = true;
        quoted_cell = true;
        break;
      case ',':
        end_cell();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        cell.push_back(c);
    }
  }
  if (in_quotes) throw ParseError("line " + std::to_string(record_line) + ": unterminated quoted field");
  if (record_open) end_record();

  if (records.empty()) throw ParseError("CSV has no header row");
  RawTable table;
  for (auto& h : records.front()) {
    if (!h) throw ParseError("line 1: empty column name in header");
    table.header.push_back(*h);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw ParseError("line " + std::to_string(lines[r]) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(records[r].size()));
    table.rows.push_back(std::move(records[r]));
    table.line_numbers.push_back(lines[r]);
  }
  return table;
}

/// Parse `path` and check the schema's columns exist.
inline RawTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  RawTable table = parse_csv(io::read_text(path));
  if (!table.column(schema.target)) throw ParseError("unknown target column '" + schema.target + "'");
  for (const auto& name : schema.categorical)
    if (!table.column(name)) throw ParseError("unknown categorical column '" + name + "'");
  return table;
}

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population mean and std of `v`.
inline std::pair<double, double> moments(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

inline double standardize_value(double x, const ColumnTransform& t) {
  return t.scale > 0.0 ? (x - t.mean) / t.scale : 0.0;
}

}  // namespace detail

/// Fit one transform per feature column of `raw` on the given rows.
inline std::vector<ColumnTransform> fit_preprocessing(const RawTable& raw, const CsvSchema& schema,
                                                      std::span<const std::size_t> rows) {
  std::vector<ColumnTransform> transforms;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    const auto& name = raw.header[c];
    if (name == schema.target || schema.ignored.contains(name)) continue;
    ColumnTransform t;
    t.source = name;
    if (schema.categorical.contains(name)) {
      t.kind = ColumnTransform::Kind::categorical;
      std::map<std::string, std::size_t> counts;
      for (auto r : rows)
        if (const auto& cell = raw.rows[r][c]) ++counts[*cell];
      if (counts.empty()) throw InvalidArgument("column '" + name + "' is entirely missing");
      std::size_t best = 0;
      for (const auto& [value, count] : counts) {
        t.categories.push_back(value);
        if (count > best) {  // map order: ties resolve to the smallest value
          best = count;
          t.mode = value;
        }
      }
    } else {
      std::vector<double> values;
      for (auto r : rows) {
        const auto& cell = raw.rows[r][c];
        if (!cell) continue;
        const auto v = detail::parse_number(*cell);
        if (!v)
          throw ParseError("line " + std::to_string(raw.line_numbers[r]) + ": column '" + name +
                           "' value '" + *cell + "' is not numeric");
        values.push_back(*v);
      }
      if (values.empty()) throw InvalidArgument("column '" + name + "' is entirely missing");
      t.impute = detail::median(values);
      std::vector<double> imputed = values;
      imputed.resize(rows.size(), t.impute);
      std::tie(t.mean, t.scale) = detail::moments(imputed);
      // Constant columns map to zero.
      if (!(t.scale > 1e-12 * std::max(1.0, std::abs(t.mean)))) t.scale = 0.0;
    }
    transforms.push_back(std::move(t));
  }
  return transforms;
}

/// Apply recorded transforms to the given rows of `raw`.
inline Dataset apply_preprocessing(const RawTable& raw, const CsvSchema& schema,
                                   std::span<const ColumnTransform> transforms,
                                   std::span<const std::size_t> rows) {
  const auto target_col = raw.column(schema.target);
  if (!target_col) throw ParseError("unknown target column '" + schema.target + "'");
  Dataset data;
  data.task = schema.task();
  data.target_name = schema.target;
  data.preprocessing.assign(transforms.begin(), transforms.end());

  std::vector<std::size_t> source_cols;
  std::size_t width = 0;
  for (const auto& t : transforms) {
    const auto col = raw.column(t.source);
    if (!col) throw ParseError("column '" + t.source + "' missing from table");
    source_cols.push_back(*col);
    if (t.kind == ColumnTransform::Kind::numeric) {
      data.feature_names.push_back(t.source);
      ++width;
    } else {
      for (const auto& cat : t.categories) data.feature_names.push_back(t.source + "=" + cat);
      width += t.categories.size();
    }
  }

  data.x = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& record = raw.rows[rows[i]];
    const auto line = raw.line_numbers[rows[i]];
    const auto r = static_cast<Eigen::Index>(i);
    const auto& target = record[*target_col];
    if (!target) throw ParseError("line " + std::to_string(line) + ": missing target");
    if (data.task == Task::binary) {
      data.y(r) = *target == *schema.positive_label ? 1.0 : 0.0;
    } else {
      const auto v = detail::parse_number(*target);
      if (!v) throw ParseError("line " + std::to_string(line) + ": target '" + *target + "' is not numeric");
      data.y(r) = *v;
    }
    Eigen::Index out = 0;
    for (std::size_t t = 0; t < transforms.size(); ++t) {
      const auto& tr = transforms[t];
      const auto& cell = record[source_cols[t]];
      if (tr.kind == ColumnTransform::Kind::numeric) {
        double v = tr.impute;
        if (cell) {
          const auto parsed = detail::parse_number(*cell);
          if (!parsed)
            throw ParseError("line " + std::to_string(line) + ": column '" + tr.source + "' value '" +
                             *cell + "' is not numeric");
          v = *parsed;
        }
        data.x(r, out++) = detail::standardize_value(v, tr);
      } else {
        const std::string& value = cell ? *cell : tr.mode;
        // Categories unseen during fitting encode as all zeros.
        for (const auto& cat : tr.categories) data.x(r, out++) = cat == value ? 1.0 : 0.0;
      }
    }
  }
  return data;
}

/// Fit and apply on every row.
inline Dataset preprocess(const RawTable& raw, const CsvSchema& schema) {
  std::vector<std::size_t> all(raw.rows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto transforms = fit_preprocessing(raw, schema, all);
  return apply_preprocessing(raw, schema, transforms, all);
}

/// Standardise every column of `train` in place with population moments
/// fitted on `train`, and apply the same map to `others`.
inline std::vector<ColumnTransform> standardize(Dataset& train, std::span<Dataset* const> others = {}) {
  std::vector<ColumnTransform> transforms;
  for (Eigen::Index c = 0; c < train.x.cols(); ++c) {
    std::vector<double> column(train.x.col(c).begin(), train.x.col(c).end());
    ColumnTransform t;
    t.source = train.feature_names[static_cast<std::size_t>(c)];
    std::tie(t.mean, t.scale) = detail::moments(column);
    t.impute = t.mean;
    if (!(t.scale > 1e-12 * std::max(1.0, std::abs(t.mean)))) t.scale = 0.0;
    for (Eigen::Index r = 0; r < train.x.rows(); ++r) train.x(r, c) = detail::standardize_value(train.x(r, c), t);
    for (auto* other : others)
      for (Eigen::Index r = 0; r < other->x.rows(); ++r)
        other->x(r, c) = detail::standardize_value(other->x(r, c), t);
    transforms.push_back(std::move(t));
  }
  train.preprocessing = transforms;
  for (auto* other : others) other->preprocessing = transforms;
  return transforms;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double test_fraction = 0.2;
  bool stratified = false;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle split. With `stratified`, each class in `labels` is split
/// separately with round(fraction * class size) rows going to test.
inline SplitIndices split_indices(std::size_t n, std::span<const double> labels, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw InvalidArgument("test fraction must be in (0, 1)");
  Rng rng = Rng(spec.seed).substream(0x5B11);
  SplitIndices out;
  auto take = [&](std::vector<std::size_t> pool, const std::string& what) {
    if (pool.size() < 2) throw InvalidArgument(what + " has fewer than 2 rows; cannot split");
    rng.shuffle(std::span<std::size_t>(pool));
    auto test_count = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(pool.size())));
    test_count = std::clamp<std::size_t>(test_count, 1, pool.size() - 1);
    out.test.insert(out.test.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(test_count));
    out.train.insert(out.train.end(), pool.begin() + static_cast<std::ptrdiff_t>(test_count), pool.end());
  };
  if (spec.stratified) {
    if (labels.size() != n) throw DimensionError("stratified split needs one label per row");
    std::map<double, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < n; ++i) classes[labels[i]].push_back(i);
    for (auto& [label, members] : classes) {
      std::ostringstream name;
      name << "class " << label;
      take(std::move(members), name.str());
    }
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(std::move(all), "dataset");
  }
  return out;
}

/// Row split of an already-numeric dataset. Preprocessing records are copied
/// unchanged; refit with `standardize` when needed.
inline std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  data.check();
  std::span<const double> labels(data.y.data(), static_cast<std::size_t>(data.y.size()));
  const auto idx = split_indices(data.rows(), labels, spec);
  return {data.subset(idx.train), data.subset(idx.test)};
}

/// Split raw rows, fit preprocessing on the train side only, apply to both.
inline std::pair<Dataset, Dataset> split(const RawTable& raw, const CsvSchema& schema, const SplitSpec& spec) {
  std::vector<double> labels;
  if (spec.stratified) {
    const auto target = raw.column(schema.target);
    if (!target) throw ParseError("unknown target column '" + schema.target + "'");
    for (const auto& row : raw.rows) {
      const auto& cell = row[*target];
      if (schema.positive_label) labels.push_back(cell && *cell == *schema.positive_label ? 1.0 : 0.0);
      else labels.push_back(cell ? detail::parse_number(*cell).value_or(0.0) : 0.0);
    }
  }
  const auto idx = split_indices(raw.rows.size(), labels, spec);
  const auto transforms = fit_preprocessing(raw, schema, idx.train);
  return {apply_preprocessing(raw, schema, transforms, idx.train),
          apply_preprocessing(raw, schema, transforms, idx.test)};
}

// ---------------------------------------------------------------------------
// Dataset files: CSV (features then target) plus a JSON sidecar at <path>.json

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline nlohmann::json to_json(const ColumnTransform& t) {
  nlohmann::json j{{"source", t.source}};
  if (t.kind == ColumnTransform::Kind::numeric) {
    j["kind"] = "numeric";
    j["impute"] = t.impute;
    j["mean"] = t.mean;
    j["scale"] = t.scale;
  } else {
    j["kind"] = "categorical";
    j["mode"] = t.mode;
    j["categories"] = t.categories;
  }
  return j;
}

inline ColumnTransform column_transform_from_json(const nlohmann::json& j) {
  ColumnTransform t;
  t.source = j.at("source").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "numeric") {
    t.impute = j.at("impute").get<double>();
    t.mean = j.at("mean").get<double>();
    t.scale = j.at("scale").get<double>();
  } else if (kind == "categorical") {
    t.kind = ColumnTransform::Kind::categorical;
    t.mode = j.at("mode").get<std::string>();
    t.categories = j.at("categories").get<std::vector<std::string>>();
  } else {
    throw ParseError("unknown column transform kind '" + kind + "'");
  }
  return t;
}

inline nlohmann::json dataset_sidecar(const Dataset& data) {
  nlohmann::json j;
  j["task"] = to_string(data.task);
  j["target"] = data.target_name;
  j["feature_names"] = data.feature_names;
  j["rows"] = data.rows();
  j["true_features"] = data.true_features;
  auto& pre = j["preprocessing"] = nlohmann::json::array();
  for (const auto& t : data.preprocessing) pre.push_back(to_json(t));
  return j;
}

inline std::string dataset_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : data.feature_names) out += detail::csv_escape(name) + ",";
  out += detail::csv_escape(data.target_name) + "\n";
  for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.x.cols(); ++c) out += detail::format_double(data.x(r, c)) + ",";
    out += detail::format_double(data.y(r)) + "\n";
  }
  return out;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".json");
}

inline void write_dataset(const std::filesystem::path& csv, const Dataset& data) {
  data.check();
  io::write_text(csv, dataset_csv(data));
  io::write_text(sidecar_path(csv), io::dump_json(dataset_sidecar(data)));
}

/// Schema implied by a dataset file: the sidecar when present, otherwise a
/// regression on the last column.
inline CsvSchema schema_for(const std::filesystem::path& csv) {
  CsvSchema schema;
  const auto side = sidecar_path(csv);
  if (std::filesystem::exists(side)) {
    const auto j = io::read_json(side);
    schema.target = j.at("target").get<std::string>();
    if (j.value("task", std::string("regression")) == "binary") schema.positive_label = "1";
    return schema;
  }
  const auto table = parse_csv(io::read_text(csv));
  schema.target = table.header.back();
  return schema;
}

/// Read a numeric dataset written by write_dataset. Values are taken as-is.
inline Dataset load_dataset(const std::filesystem::path& csv) {
  const auto table = parse_csv(io::read_text(csv));
  Dataset data;
  const auto side = sidecar_path(csv);
  nlohmann::json meta;
  if (std::filesystem::exists(side)) meta = io::read_json(side);
  data.target_name = meta.value("target", table.header.back());
  data.task = task_from_string(meta.value("task", std::string("regression")));
  if (meta.contains("true_features")) data.true_features = meta["true_features"].get<std::vector<std::size_t>>();
  if (meta.contains("preprocessing"))
    for (const auto& t : meta["preprocessing"]) data.preprocessing.push_back(column_transform_from_json(t));
  const auto target = table.column(data.target_name);
  if (!target) throw ParseError("unknown target column '" + data.target_name + "'");
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != *target) {
      cols.push_back(c);
      data.feature_names.push_back(table.header[c]);
    }
  data.x.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  data.y.resize(static_cast<Eigen::Index>(table.rows.size()));
  auto number = [&](std::size_t r, std::size_t c) {
    const auto& cell = table.rows[r][c];
    const auto v = cell ? detail::parse_number(*cell) : std::nullopt;
    if (!v) throw ParseError("line " + std::to_string(table.line_numbers[r]) + ": non-numeric or missing value");
    return *v;
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      data.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = number(r, cols[i]);
    data.y(static_cast<Eigen::Index>(r)) = number(r, *target);
  }
  data.check();
  return data;
}

}  // namespace sparxnet
