#pragma once

// Command-line front end. Every subcommand resolves its settings as
// command-line flags over an optional JSON config file over defaults, writes
// its outputs as files, and records a run manifest next to them.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparxnet/baselines.hpp"
#include "sparxnet/bounds.hpp"
#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/evalmetrics.hpp"
#include "sparxnet/io.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/serialize.hpp"
#include "sparxnet/train.hpp"

namespace sparxnet::cli {

inline constexpr const char* tool_version = "0.1.0";

/// Bad arguments or settings: exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// 64-bit FNV-1a of a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;                     // resolved settings
  std::map<std::string, std::string> inputs;  // path -> fnv1a64 of contents
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string tool_version = cli::tool_version;
  double wall_clock_seconds = 0.0;
  std::string started_at;  // UTC, ISO 8601

  nlohmann::json to_json() const {
    return {{"command", command},
            {"argv", argv},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs},
            {"seed", seed},
            {"tool_version", tool_version},
            {"wall_clock_seconds", wall_clock_seconds},
            {"started_at", started_at}};
  }
};

namespace detail {

enum class Kind { integer, real, text, integers, reals, texts, flag };

/// One setting: flag `--name-with-dashes`, config key `name_with_underscores`.
struct Setting {
  std::string key;
  Kind kind;
  nlohmann::json fallback;  // null = no default
  std::string help;
};

inline std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

inline nlohmann::json convert(const Setting& s, const std::vector<std::string>& values) {
  const auto one = [&]() -> const std::string& {
    if (values.size() != 1) throw UsageError(flag_name(s.key) + " takes exactly one value");
    return values.front();
  };
  const auto integer = [&](const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw UsageError(flag_name(s.key) + ": '" + v + "' is not a non-negative integer");
    return out;
  };
  const auto real = [&](const std::string& v) {
    const auto parsed = sparxnet::detail::parse_number(v);
    if (!parsed || !std::isfinite(*parsed)) throw UsageError(flag_name(s.key) + ": '" + v + "' is not a finite number");
    return *parsed;
  };
  switch (s.kind) {
    case Kind::integer:
      return integer(one());
    case Kind::real:
      return real(one());
    case Kind::reals: {
      auto arr = nlohmann::json::array();
      for (const auto& v : values) arr.push_back(real(v));
      return arr;
    }
    case Kind::text:
      return one();
    case Kind::integers: {
      auto arr = nlohmann::json::array();
      for (const auto& v : values) arr.push_back(integer(v));
      return arr;
    }
    case Kind::texts:
      return values;
    case Kind::flag:
      return true;
  }
  return nullptr;
}

/// Type check of a config-file value against its setting.
inline void check_config_value(const Setting& s, const nlohmann::json& v) {
  bool ok = v.is_null();
  switch (s.kind) {
    case Kind::integer: ok = ok || v.is_number_unsigned(); break;
    case Kind::real: ok = ok || v.is_number(); break;
    case Kind::text: ok = ok || v.is_string(); break;
    case Kind::integers:
      ok = ok || (v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number_unsigned(); }));
      break;
    case Kind::reals:
      ok = ok || (v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number(); }));
      break;
    case Kind::texts:
      ok = ok || (v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_string(); }));
      break;
    case Kind::flag: ok = ok || v.is_boolean(); break;
  }
  if (!ok) throw UsageError("config key '" + s.key + "' has the wrong type");
}

/// Settings of one subcommand bound to CLI11 options.
class Command {
 public:
  Command(CLI::App& parent, std::string name, std::string description, std::vector<Setting> settings)
      : settings_(std::move(settings)) {
    app_ = parent.add_subcommand(std::move(name), std::move(description));
    app_->add_option("--config", config_path_, "JSON file of settings (flags take precedence)");
    app_->add_option("--manifest", manifest_path_, "Where to write the run manifest");
    for (const auto& s : settings_) {
      auto& slot = raw_[s.key];
      std::string help = s.help;
      if (!s.fallback.is_null()) help += " [default: " + s.fallback.dump() + "]";
      if (s.kind == Kind::flag) {
        flags_[s.key] = app_->add_flag(flag_name(s.key))->description(help);
      } else {
        auto* opt = app_->add_option(flag_name(s.key), slot, help);
        if (s.kind == Kind::integers || s.kind == Kind::reals || s.kind == Kind::texts) opt->expected(1, -1);
        else opt->expected(1);
        flags_[s.key] = opt;
      }
    }
  }

  CLI::App* app() const { return app_; }
  const std::string& manifest_path() const { return manifest_path_; }
  const std::string& config_path() const { return config_path_; }

  /// Defaults, overlaid by the config file, overlaid by given flags.
  nlohmann::json resolve() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& s : settings_) out[s.key] = s.fallback;
    if (!config_path_.empty()) {
      nlohmann::json file;
      try {
        file = io::read_json(config_path_);
      } catch (const Error& e) {
        throw UsageError(std::string("cannot read config: ") + e.what());
      }
      if (!file.is_object()) throw UsageError("config file must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        const auto it = std::find_if(settings_.begin(), settings_.end(), [&](const Setting& s) { return s.key == key; });
        if (it == settings_.end()) throw UsageError("unknown config key '" + key + "'");
        check_config_value(*it, value);
        out[key] = value;
      }
    }
    for (const auto& s : settings_)
      if (flags_.at(s.key)->count() > 0) out[s.key] = convert(s, raw_.at(s.key));
    return out;
  }

 private:
  CLI::App* app_ = nullptr;
  std::vector<Setting> settings_;
  std::map<std::string, std::vector<std::string>> raw_;
  std::map<std::string, CLI::Option*> flags_;
  std::string config_path_;
  std::string manifest_path_;
};

/// Typed access to resolved settings.
class Settings {
 public:
  explicit Settings(nlohmann::json j) : j_(std::move(j)) {}

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key) const {
    if (!has(key)) throw UsageError(flag_name(key) + " is required");
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError(flag_name(key) + " has the wrong type");
    }
  }

  template <class T>
  std::optional<T> maybe(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  const nlohmann::json& json() const { return j_; }

 private:
  nlohmann::json j_;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Collects inputs and outputs of one run and writes the manifest.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, const Settings& settings)
      : started_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.argv = std::move(argv);
    manifest_.config = settings.json();
    manifest_.seed = settings.has("seed") ? settings.get<std::uint64_t>("seed") : 0;
    manifest_.started_at = utc_now();
  }

  std::string read_input(const std::filesystem::path& path) {
    auto text = io::read_text(path);
    manifest_.inputs[path.string()] = "fnv1a64:" + hex64(fnv1a64(text));
    return text;
  }

  /// Hash a file read through some other loader.
  void note_input(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) read_input(path);
  }

  void write(const std::filesystem::path& path, const std::string& text) {
    io::write_text(path, text);
    manifest_.outputs.push_back(path.string());
  }

  void finish(const std::filesystem::path& manifest_path) {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    io::write_text(manifest_path, io::dump_json(manifest_.to_json()));
  }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point started_;
};

// ---------------------------------------------------------------------------
// Shared setting groups

inline std::vector<Setting> data_settings() {
  return {{"data", Kind::text, nullptr, "Dataset CSV"},
          {"target", Kind::text, nullptr, "Target column (default: sidecar or last column)"},
          {"positive", Kind::text, nullptr, "Positive class label; makes the task binary"},
          {"categorical", Kind::texts, nlohmann::json::array(), "Categorical columns (one-hot encoded)"},
          {"ignore", Kind::texts, nlohmann::json::array(), "Columns to drop"},
          {"test_fraction", Kind::real, 0.2, "Held-out test fraction"}};
}

inline std::vector<Setting> model_settings() {
  return {{"model", Kind::text, "sparxnet", "sparxnet | fcn | lasso | ridge | logreg"},
          {"pathways", Kind::integer, 1, "Pathway count K"},
          {"hidden", Kind::integers, std::vector<std::size_t>(6, 128), "Hidden layer widths"},
          {"dropout", Kind::real, 0.1, "Dropout rate"},
          {"tau0", Kind::real, 1.0, "Initial routing temperature"},
          {"floor", Kind::real, 0.01, "Final temperature as a fraction of the initial one"},
          {"iterations", Kind::integer, 2000, "Training iterations"},
          {"batch_size", Kind::integer, 64, "Mini-batch size"},
          {"lr", Kind::real, nullptr, "Learning rate (default 0.001; logreg 0.1)"},
          {"val_fraction", Kind::real, 0.2, "Validation fraction of the training split"},
          {"eval_every", Kind::integer, 10, "Evaluation interval"},
          {"loss_cap", Kind::real, 1e6, "Truncation cap B of the regression loss"},
          {"lipschitz_grid", Kind::integer, 10001, "Grid points for pathway Lipschitz estimates"},
          {"lambda", Kind::real, nullptr, "Lasso/ridge penalty (default: chosen on a validation split)"}};
}

inline std::vector<Setting> concat(std::initializer_list<std::vector<Setting>> groups) {
  std::vector<Setting> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

inline Setting seed_setting() { return {"seed", Kind::integer, 0, "Random seed"}; }

// ---------------------------------------------------------------------------
// Data loading

struct LoadedData {
  Dataset train;
  Dataset test;
  std::optional<std::string> positive_label;
};

/// Train/test split of a dataset file. Files with a sidecar are numeric and
/// used as-is; other CSVs are preprocessed with parameters fitted on the
/// train side.
inline LoadedData load_split(const Settings& s, Run& run) {
  const std::filesystem::path path = s.get<std::string>("data");
  const auto seed = s.get<std::uint64_t>("seed");
  const auto fraction = s.get<double>("test_fraction");
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("--test-fraction must be in (0, 1)");
  LoadedData out;
  const auto text = run.read_input(path);
  if (std::filesystem::exists(sidecar_path(path))) {
    run.note_input(sidecar_path(path));
    const auto data = load_dataset(path);
    if (s.has("target") && s.get<std::string>("target") != data.target_name)
      throw UsageError("--target disagrees with the dataset sidecar ('" + data.target_name + "')");
    if (data.task == Task::binary) out.positive_label = "1";
    std::tie(out.train, out.test) = split(data, SplitSpec{fraction, data.task == Task::binary, seed});
    return out;
  }
  const auto table = parse_csv(text);
  if (table.header.empty()) throw ParseError("empty CSV");
  CsvSchema schema;
  schema.target = s.maybe<std::string>("target").value_or(table.header.back());
  schema.positive_label = s.maybe<std::string>("positive");
  for (const auto& c : s.get<std::vector<std::string>>("categorical")) schema.categorical.insert(c);
  for (const auto& c : s.get<std::vector<std::string>>("ignore")) schema.ignored.insert(c);
  if (!table.column(schema.target)) throw ParseError("unknown target column '" + schema.target + "'");
  for (const auto& c : schema.categorical)
    if (!table.column(c)) throw ParseError("unknown categorical column '" + c + "'");
  out.positive_label = schema.positive_label;
  std::tie(out.train, out.test) = split(table, schema, SplitSpec{fraction, schema.task() == Task::binary, seed});
  return out;
}

/// Whole dataset file prepared for an existing model.
inline Dataset load_for_model(const std::filesystem::path& path, const ModelFile& model, Run& run) {
  const auto text = run.read_input(path);
  Dataset data;
  if (std::filesystem::exists(sidecar_path(path)) || model.preprocessing.empty()) {
    run.note_input(sidecar_path(path));
    data = load_dataset(path);
  } else {
    const auto table = parse_csv(text);
    CsvSchema schema;
    schema.target = model.target;
    schema.positive_label = model.positive_label;
    for (const auto& t : model.preprocessing)
      if (t.kind == ColumnTransform::Kind::categorical) schema.categorical.insert(t.source);
    std::vector<std::size_t> all(table.rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    data = apply_preprocessing(table, schema, model.preprocessing, all);
  }
  if (data.feature_names != model.feature_names)
    throw InvalidArgument("dataset columns do not match the model's features");
  if (data.task != model.task) throw InvalidArgument("dataset task does not match the model");
  return data;
}

inline LossSpec loss_for(Task task, const Settings& s) {
  return task == Task::binary ? LossSpec::binary_cross_entropy() : LossSpec::truncated_square(s.get<double>("loss_cap"));
}

inline ModelConfig model_config_from(const Settings& s) {
  ModelConfig c;
  c.pathways = s.get<std::size_t>("pathways");
  c.pathway_hidden = s.get<std::vector<std::size_t>>("hidden");
  c.dropout = s.get<double>("dropout");
  c.temperature.initial = s.get<double>("tau0");
  c.temperature.floor_fraction = s.get<double>("floor");
  c.seed = s.get<std::uint64_t>("seed");
  return c;
}

inline TrainConfig train_config_from(const Settings& s, Task task) {
  TrainConfig c;
  c.iterations = s.get<std::size_t>("iterations");
  c.batch_size = s.get<std::size_t>("batch_size");
  c.learning_rate = s.maybe<double>("lr").value_or(1e-3);
  c.validation_fraction = s.get<double>("val_fraction");
  c.eval_every = s.get<std::size_t>("eval_every");
  c.seed = s.get<std::uint64_t>("seed");
  c.loss = loss_for(task, s);
  c.lipschitz_grid = s.get<std::size_t>("lipschitz_grid");
  return c;
}

inline nlohmann::json task_metrics_json(const Dataset& data, const Vector& predictions) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : sparxnet::detail::task_metrics(data, predictions)) j[name] = value;
  j["rows"] = data.rows();
  return j;
}

/// Fit the requested model on `loaded.train`, write model, reports and metrics into `dir`.
inline void fit_and_write(const Settings& s, const LoadedData& loaded, const std::filesystem::path& dir, Run& run) {
  const auto& train_set = loaded.train;
  const auto kind = model_kind_from_string(s.get<std::string>("model"));
  ModelFile m;
  m.kind = kind;
  describe_training_data(m, train_set);
  m.positive_label = loaded.positive_label;
  m.loss = loss_for(train_set.task, s);
  const auto seed = s.get<std::uint64_t>("seed");
  nlohmann::json metrics;
  metrics["model"] = to_string(kind);
  metrics["task"] = to_string(train_set.task);

  switch (kind) {
    case ModelFile::Kind::sparxnet: {
      const auto result = train(model_config_from(s), train_config_from(s, train_set.task), train_set);
      m.config = result.config;
      m.params = result.params;
      m.tau_final = result.report.tau_final;
      run.write(dir / "report.json", io::dump_json(to_json(result.report)));
      run.write(dir / "trace.csv", trace_csv(result.report));
      auto names = nlohmann::json::array();
      for (const auto& sel : result.report.selection) names.push_back(train_set.feature_names[sel.feature]);
      metrics["selected_features"] = names;
      break;
    }
    case ModelFile::Kind::fcn: {
      FcnConfig fc{s.get<std::vector<std::size_t>>("hidden"), s.get<double>("dropout"), seed};
      const auto result = fcn_fit(fc, train_config_from(s, train_set.task), train_set);
      m.fcn_config = fc;
      m.network = result.net;
      run.write(dir / "report.json", io::dump_json(to_json(result.report)));
      run.write(dir / "trace.csv", trace_csv(result.report));
      break;
    }
    case ModelFile::Kind::lasso:
    case ModelFile::Kind::ridge: {
      if (train_set.task != Task::regression) throw InvalidArgument("lasso and ridge need a regression target");
      const bool lasso = kind == ModelFile::Kind::lasso;
      if (const auto lambda = s.maybe<double>("lambda")) {
        m.linear = lasso ? lasso_fit(train_set.x, train_set.y, *lambda) : ridge_fit(train_set.x, train_set.y, *lambda);
      } else {
        m.linear = lasso ? lasso_select(train_set, seed) : ridge_select(train_set, seed);
      }
      metrics["lambda"] = m.linear.lambda;
      break;
    }
    case ModelFile::Kind::logreg:
      if (train_set.task != Task::binary) throw InvalidArgument("logreg needs a binary target (use --positive)");
      m.linear = logreg_fit(train_set.x, train_set.y, s.get<std::size_t>("iterations"), s.maybe<double>("lr").value_or(0.1));
      break;
  }
  metrics["train"] = task_metrics_json(train_set, m.predict(train_set.x));
  metrics["test"] = task_metrics_json(loaded.test, m.predict(loaded.test.x));
  run.write(dir / "model.json", io::dump_json(to_json(m)));
  run.write(dir / "metrics.json", io::dump_json(metrics));
}

// ---------------------------------------------------------------------------
// Subcommands

inline void run_synth(const Settings& s, const std::string& kind, Run& run) {
  const std::filesystem::path out = s.get<std::string>("out");
  const auto n = s.get<std::size_t>("n");
  const auto seed = s.get<std::uint64_t>("seed");
  Dataset data;
  if (kind == "single") {
    const auto noisy = s.maybe<std::size_t>("noisy").value_or(2);
    const auto position = s.maybe<std::size_t>("position").value_or(noisy / 2);
    data = gen_single_var(n, noisy, s.get<double>("sigma"), position, seed);
  } else {
    data = gen_multi_var(n, s.maybe<std::size_t>("noisy").value_or(5), seed);
  }
  data.check();
  run.write(out, dataset_csv(data));
  run.write(sidecar_path(out), io::dump_json(dataset_sidecar(data)));
}

inline void run_hpo(const Settings& s, Run& run) {
  const std::filesystem::path dir = s.get<std::string>("out");
  const auto loaded = load_split(s, run);
  const auto& train_set = loaded.train;
  const auto kind = model_kind_from_string(s.get<std::string>("model"));
  HpoSpace space;
  const auto range = [&](const std::string& key) {
    const auto v = s.get<std::vector<double>>(key);
    if (v.size() != 2) throw UsageError(flag_name(key) + " takes two values");
    return Range{v[0], v[1]};
  };
  space.dropout = range("dropout_range");
  space.learning_rate = range("lr_range");
  space.temperature = range("tau0_range");
  space.trials = s.get<std::size_t>("trials");
  const auto seed = s.get<std::uint64_t>("seed");
  auto tc = train_config_from(s, train_set.task);

  std::vector<HpoTrial> leaderboard;
  nlohmann::json best = nlohmann::json::object();
  for (const auto* key : {"model", "pathways", "hidden", "floor", "iterations", "batch_size", "val_fraction",
                          "eval_every", "loss_cap"})
    best[key] = s.json().at(key);
  if (kind == ModelFile::Kind::sparxnet) {
    const auto r = random_search_hpo(space, model_config_from(s), tc, train_set, seed, s.get<std::size_t>("threads"));
    leaderboard = r.leaderboard;
    best["dropout"] = r.model.dropout;
    best["tau0"] = r.model.temperature.initial;
    best["lr"] = r.train.learning_rate;
  } else if (kind == ModelFile::Kind::fcn) {
    FcnConfig fc{s.get<std::vector<std::size_t>>("hidden"), s.get<double>("dropout"), seed};
    const auto [bf, bt] = fcn_random_search(space, fc, tc, train_set, seed, &leaderboard);
    best["dropout"] = bf.dropout;
    best["lr"] = bt.learning_rate;
  } else {
    throw UsageError("hpo supports --model sparxnet or fcn");
  }
  auto board = nlohmann::json::array();
  for (const auto& t : leaderboard) board.push_back(to_json(t));
  run.write(dir / "leaderboard.json", io::dump_json(board));
  run.write(dir / "leaderboard.csv", leaderboard_csv(leaderboard));
  run.write(dir / "best_config.json", io::dump_json(best));
  if (s.get<bool>("refit")) {
    auto merged = s.json();
    for (const auto& [k, v] : best.items()) merged[k] = v;
    fit_and_write(Settings(merged), loaded, dir, run);
  }
}

inline void run_eval(const Settings& s, Run& run) {
  const std::filesystem::path dir = s.get<std::string>("out");
  const std::filesystem::path model_path = s.get<std::string>("model_file");
  run.note_input(model_path);
  const auto model = read_model(model_path);
  const auto data = load_for_model(s.get<std::string>("data"), model, run);
  const Vector scores = model.predict(data.x);
  nlohmann::json metrics = task_metrics_json(data, scores);
  metrics["model"] = to_string(model.kind);
  metrics["task"] = to_string(model.task);
  std::string csv = model.task == Task::binary ? "row,target,logit,probability\n" : "row,target,prediction\n";
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    csv += std::to_string(i) + "," + sparxnet::detail::format_double(data.y(i)) + "," +
           sparxnet::detail::format_double(scores(i));
    if (model.task == Task::binary)
      csv += "," + sparxnet::detail::format_double(sparxnet::detail::sigmoid(Vector::Constant(1, scores(i)))(0));
    csv += "\n";
  }
  run.write(dir / "metrics.json", io::dump_json(metrics));
  run.write(dir / "predictions.csv", csv);
}

/// Bound inputs measured on a model file: chi from the recorded training
/// ranges, L from the pathways over [-chi, chi], Gamma = sum |theta|.
inline bounds::BoundInputs inputs_from_model_file(const ModelFile& m, double delta, std::size_t grid) {
  if (m.kind != ModelFile::Kind::sparxnet) throw InvalidArgument("bound inputs need a sparxnet model file");
  bounds::BoundInputs in;
  in.pathways = static_cast<double>(m.params.pathway_count());
  in.features = static_cast<double>(m.params.feature_count());
  in.samples = static_cast<double>(m.train_rows);
  in.chi = 0.0;
  for (const auto& r : m.feature_ranges) in.chi = std::max({in.chi, std::abs(r.lo), std::abs(r.hi)});
  const auto lips = bounds::pathway_lipschitz(m.params, in.chi, grid);
  in.lipschitz = *std::max_element(lips.begin(), lips.end());
  in.gamma = m.params.theta.cwiseAbs().sum();
  std::tie(in.loss_lipschitz, in.loss_bound) = bounds::loss_constants(m.loss, in.chi, in.lipschitz, in.gamma);
  in.delta = delta;
  return in;
}

inline void run_bound(const Settings& s, Run& run, std::ostream& out) {
  if (s.has("inputs") && s.has("model")) throw UsageError("use either --inputs or --model, not both");
  bounds::BoundInputs in;
  bool base = false;
  if (s.has("inputs")) {
    const std::filesystem::path p = s.get<std::string>("inputs");
    run.note_input(p);
    in = sparxnet::detail::parse_guard("bound inputs", [&] { return bounds::bound_inputs_from_json(io::read_json(p)); });
    base = true;
  } else if (s.has("model")) {
    const std::filesystem::path p = s.get<std::string>("model");
    run.note_input(p);
    in = inputs_from_model_file(read_model(p), s.maybe<double>("delta").value_or(0.05), s.get<std::size_t>("lipschitz_grid"));
    base = true;
  }
  const std::pair<const char*, double bounds::BoundInputs::*> fields[] = {
      {"k", &bounds::BoundInputs::pathways},      {"d", &bounds::BoundInputs::features},
      {"n", &bounds::BoundInputs::samples},       {"chi", &bounds::BoundInputs::chi},
      {"lip", &bounds::BoundInputs::lipschitz},   {"gamma", &bounds::BoundInputs::gamma},
      {"loss_lip", &bounds::BoundInputs::loss_lipschitz}, {"loss_bound", &bounds::BoundInputs::loss_bound},
      {"delta", &bounds::BoundInputs::delta}};
  for (const auto& [key, member] : fields) {
    if (s.has(key)) in.*member = s.get<double>(key);
    else if (!base && std::string(key) != "delta") throw UsageError(flag_name(key) + " is required without --inputs or --model");
  }
  try {
    in.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto report = bounds::bound_report(in, s.maybe<double>("target_risk"));
  const auto text = io::dump_json(report);
  out << text;
  if (s.has("out")) run.write(s.get<std::string>("out"), text);
}

inline ModelFile read_sparx_model(const Settings& s, Run& run) {
  const std::filesystem::path path = s.get<std::string>("model_file");
  run.note_input(path);
  auto m = read_model(path);
  if (m.kind != ModelFile::Kind::sparxnet) throw InvalidArgument("this command needs a sparxnet model file");
  return m;
}

inline void run_export_curves(const Settings& s, Run& run) {
  const auto m = read_sparx_model(s, run);
  const auto curves = export_pathway_curves(m.params, m.tau_final, m.feature_ranges, s.get<std::size_t>("samples"));
  run.write(s.get<std::string>("out"), curves_csv(curves, m.feature_names));
}

inline void run_saturation(const Settings& s, Run& run) {
  const auto m = read_sparx_model(s, run);
  const double tau = s.maybe<double>("tau").value_or(m.tau_final);
  if (!(tau > 0.0)) throw UsageError("--tau must be positive");
  run.write(s.get<std::string>("out"), saturation_csv(m.params, tau, m.feature_names));
}

}  // namespace detail

/// Run the command line `args` (args[0] is the program name).
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using detail::Kind;
  using detail::Setting;
  CLI::App app{"Sparse pathway networks for tabular data: training, baselines, evaluation and bound reports",
               "sparxnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  std::string synth_kind;
  detail::Command synth(app, "synth", "Generate a synthetic dataset (CSV plus JSON sidecar)",
                        {detail::seed_setting(),
                         {"n", Kind::integer, 1000, "Rows"},
                         {"noisy", Kind::integer, nullptr, "Noise feature count (default: single 2, multi 5)"},
                         {"sigma", Kind::real, 0.05, "Target noise standard deviation (single)"},
                         {"position", Kind::integer, nullptr, "Column of the true feature (single; default middle)"},
                         {"out", Kind::text, nullptr, "Output CSV"}});
  synth.app()->add_option("kind", synth_kind, "single | multi")->required()->check(CLI::IsMember({"single", "multi"}));

  detail::Command train_cmd(app, "train", "Train a model on a dataset file and score it on a held-out split",
                            detail::concat({{detail::seed_setting()},
                                            detail::data_settings(),
                                            detail::model_settings(),
                                            {{"out", Kind::text, nullptr, "Output directory"}}}));

  detail::Command hpo(
      app, "hpo", "Random search over dropout, learning rate and initial temperature",
      detail::concat({{detail::seed_setting()},
                      detail::data_settings(),
                      detail::model_settings(),
                      {{"trials", Kind::integer, 20, "Trial count"},
                       {"threads", Kind::integer, 1, "Parallel trials"},
                       {"dropout_range", Kind::reals, nlohmann::json{0.1, 0.5}, "Dropout range"},
                       {"lr_range", Kind::reals, nlohmann::json{0.001, 0.01}, "Learning-rate range (log-uniform)"},
                       {"tau0_range", Kind::reals, nlohmann::json{0.1, 100.0}, "Initial temperature range (log-uniform)"},
                       {"refit", Kind::flag, false, "Train the best configuration and write it like `train`"},
                       {"out", Kind::text, nullptr, "Output directory"}}}));

  detail::Command eval(app, "eval", "Score a model file on a dataset file",
                       {detail::seed_setting(),
                        {"model_file", Kind::text, nullptr, "Model JSON"},
                        {"data", Kind::text, nullptr, "Dataset CSV"},
                        {"out", Kind::text, nullptr, "Output directory"}});

  detail::Command bound(app, "bound", "Evaluate the generalization bound chain",
                        {detail::seed_setting(),
                         {"k", Kind::real, nullptr, "Pathways K"},
                         {"d", Kind::real, nullptr, "Input features d"},
                         {"n", Kind::real, nullptr, "Training samples N"},
                         {"chi", Kind::real, nullptr, "Max-norm bound on inputs"},
                         {"lip", Kind::real, nullptr, "Lipschitz bound L on pathway functions"},
                         {"gamma", Kind::real, nullptr, "Bound Gamma on sum |theta_k|"},
                         {"loss_lip", Kind::real, nullptr, "Loss Lipschitz constant"},
                         {"loss_bound", Kind::real, nullptr, "Loss bound B"},
                         {"delta", Kind::real, nullptr, "Failure probability (default 0.05)"},
                         {"inputs", Kind::text, nullptr, "JSON document of bound inputs"},
                         {"model", Kind::text, nullptr, "SparXnet model file to measure inputs from"},
                         {"lipschitz_grid", Kind::integer, 10001, "Grid points for Lipschitz estimates"},
                         {"target_risk", Kind::real, nullptr, "Also report the sample size reaching this excess risk"},
                         {"out", Kind::text, nullptr, "Also write the report here"}});

  detail::Command curves(app, "export-curves", "Write theta_k * f_k(t) over each selected feature's range",
                         {detail::seed_setting(),
                          {"model_file", Kind::text, nullptr, "SparXnet model JSON"},
                          {"samples", Kind::integer, 200, "Grid points per curve"},
                          {"out", Kind::text, nullptr, "Output CSV"}});

  detail::Command heat(app, "saturation", "Write the K x d routing weight matrix",
                       {detail::seed_setting(),
                        {"model_file", Kind::text, nullptr, "SparXnet model JSON"},
                        {"tau", Kind::real, nullptr, "Temperature (default: the model's final one)"},
                        {"out", Kind::text, nullptr, "Output CSV"}});

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  const std::vector<detail::Command*> commands{&synth, &train_cmd, &hpo, &eval, &bound, &curves, &heat};
  detail::Command* cmd = nullptr;
  for (auto* c : commands)
    if (c->app()->parsed()) cmd = c;
  const std::string name = cmd->app()->get_name();

  try {
    nlohmann::json resolved = cmd->resolve();
    if (cmd == &synth) resolved["kind"] = synth_kind;
    const detail::Settings settings(resolved);
    detail::Run run(name, std::vector<std::string>(args.begin() + 1, args.end()), settings);

    // Where outputs go decides the default manifest location.
    std::filesystem::path manifest = cmd->manifest_path();
    const auto out_path = settings.maybe<std::string>("out");
    const bool dir_output = cmd == &train_cmd || cmd == &hpo || cmd == &eval;
    if (cmd != &bound && !out_path) throw UsageError("--out is required");
    if (manifest.empty()) {
      if (!out_path) manifest = name + ".manifest.json";
      else if (dir_output) manifest = std::filesystem::path(*out_path) / "manifest.json";
      else manifest = *out_path + ".manifest.json";
    }
    if (dir_output) std::filesystem::create_directories(*out_path);

    if (cmd == &synth) detail::run_synth(settings, synth_kind, run);
    else if (cmd == &train_cmd) detail::fit_and_write(settings, detail::load_split(settings, run), *out_path, run);
    else if (cmd == &hpo) detail::run_hpo(settings, run);
    else if (cmd == &eval) detail::run_eval(settings, run);
    else if (cmd == &bound) detail::run_bound(settings, run, out);
    else if (cmd == &curves) detail::run_export_curves(settings, run);
    else detail::run_saturation(settings, run);
    run.finish(manifest);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << cmd->app()->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return dispatch(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace sparxnet::cli
