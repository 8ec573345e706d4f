#pragma once

// JSON documents for trained models and training reports, and the loss-trace
// CSV. Reals are written with 17 significant digits (see io::dump_json) so a
// write/read round trip is exact.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparxnet/baselines.hpp"
#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/io.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/train.hpp"

namespace sparxnet {

using nlohmann::json;

namespace detail {

inline json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Vector row = m.row(r).transpose();
    rows.push_back(vector_json(row));
  }
  return rows;
}

inline Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError("expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("expected a non-empty array of rows");
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw ParseError("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

/// Run `f`, converting JSON access failures into ParseError.
template <class F>
auto parse_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

inline json to_json(const MlpParams& p) {
  json layers = json::array();
  for (const auto& layer : p.layers)
    layers.push_back({{"weight", detail::matrix_json(layer.weight)}, {"bias", detail::vector_json(layer.bias)}});
  return {{"layers", layers}};
}

inline MlpParams mlp_params_from_json(const json& j) {
  MlpParams p;
  for (const auto& layer : j.at("layers"))
    p.layers.push_back({detail::matrix_from_json(layer.at("weight")), detail::vector_from_json(layer.at("bias"))});
  p.check();
  return p;
}

inline json to_json(const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::binary_cross_entropy) return {{"kind", "binary_cross_entropy"}};
  return {{"kind", "truncated_square"}, {"cap", loss.cap}};
}

inline LossSpec loss_spec_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "binary_cross_entropy") return LossSpec::binary_cross_entropy();
  if (kind == "truncated_square") return LossSpec::truncated_square(j.at("cap").get<double>());
  throw ParseError("unknown loss kind '" + kind + "'");
}

inline json to_json(const ModelConfig& c) {
  return {{"pathways", c.pathways},
          {"features", c.features},
          {"pathway_hidden", c.pathway_hidden},
          {"dropout", c.dropout},
          {"temperature",
           {{"initial", c.temperature.initial},
            {"iterations", c.temperature.iterations},
            {"floor_fraction", c.temperature.floor_fraction}}},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.pathways = j.value("pathways", c.pathways);
  c.features = j.value("features", c.features);
  c.pathway_hidden = j.value("pathway_hidden", c.pathway_hidden);
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("temperature")) {
    const auto& t = j.at("temperature");
    c.temperature.initial = t.value("initial", c.temperature.initial);
    c.temperature.iterations = t.value("iterations", c.temperature.iterations);
    c.temperature.floor_fraction = t.value("floor_fraction", c.temperature.floor_fraction);
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},       {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"validation_fraction", c.validation_fraction},
          {"eval_every", c.eval_every},       {"seed", c.seed},
          {"loss", to_json(c.loss)},          {"lipschitz_grid", c.lipschitz_grid}};
}

inline json to_json(const LinearModel& m) {
  const char* penalty = m.penalty == LinearModel::Penalty::lasso   ? "lasso"
                        : m.penalty == LinearModel::Penalty::ridge ? "ridge"
                                                                   : "none";
  return {{"coefficients", detail::vector_json(m.coefficients)},
          {"intercept", m.intercept},
          {"regularization", {{"kind", penalty}, {"lambda", m.lambda}}},
          {"link", m.link == LinearModel::Link::logistic ? "logistic" : "identity"}};
}

inline LinearModel linear_model_from_json(const json& j) {
  LinearModel m;
  m.coefficients = detail::vector_from_json(j.at("coefficients"));
  m.intercept = j.at("intercept").get<double>();
  const auto& reg = j.at("regularization");
  const auto kind = reg.at("kind").get<std::string>();
  if (kind == "lasso") m.penalty = LinearModel::Penalty::lasso;
  else if (kind == "ridge") m.penalty = LinearModel::Penalty::ridge;
  else if (kind == "none") m.penalty = LinearModel::Penalty::none;
  else throw ParseError("unknown regularization '" + kind + "'");
  m.lambda = reg.at("lambda").get<double>();
  const auto link = j.at("link").get<std::string>();
  if (link == "logistic") m.link = LinearModel::Link::logistic;
  else if (link == "identity") m.link = LinearModel::Link::identity;
  else throw ParseError("unknown link '" + link + "'");
  return m;
}

inline json to_json(const ModelParams& p) {
  json pathways = json::array();
  for (const auto& net : p.pathways) pathways.push_back(to_json(net));
  return {{"routing_logits", detail::matrix_json(p.routing_logits)},
          {"pathways", pathways},
          {"theta", detail::vector_json(p.theta)},
          {"beta", p.beta}};
}

inline ModelParams model_params_from_json(const json& j) {
  ModelParams p;
  p.routing_logits = detail::matrix_from_json(j.at("routing_logits"));
  for (const auto& net : j.at("pathways")) p.pathways.push_back(mlp_params_from_json(net));
  p.theta = detail::vector_from_json(j.at("theta"));
  p.beta = j.at("beta").get<double>();
  p.check();
  return p;
}

// ---------------------------------------------------------------------------
// Model files

/// A trained model of any supported kind plus what is needed to apply it to
/// raw data: task, target, preprocessing and observed feature ranges.
struct ModelFile {
  enum class Kind { sparxnet, fcn, lasso, ridge, logreg };

  Kind kind = Kind::sparxnet;
  // sparxnet
  ModelConfig config;
  ModelParams params;
  double tau_final = 1.0;
  // fcn
  FcnConfig fcn_config;
  MlpParams network;
  // linear
  LinearModel linear;

  Task task = Task::regression;
  std::string target = "y";
  std::optional<std::string> positive_label;
  std::vector<std::string> feature_names;
  std::vector<ColumnTransform> preprocessing;
  std::vector<FeatureRange> feature_ranges;  // observed on the training inputs
  LossSpec loss = LossSpec::truncated_square(1e6);
  std::size_t train_rows = 0;

  std::size_t feature_count() const { return feature_names.size(); }

  /// Regression value or classification logit.
  Vector predict(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != feature_count())
      throw DimensionError("model expects " + std::to_string(feature_count()) + " features, got " +
                           std::to_string(x.cols()));
    switch (kind) {
      case Kind::sparxnet:
        return sparxnet::predict(params, x, tau_final);
      case Kind::fcn:
        return fcn_predict(network, x);
      default:
        return linear.decision(x);
    }
  }
};

inline const char* to_string(ModelFile::Kind k) {
  switch (k) {
    case ModelFile::Kind::sparxnet: return "sparxnet";
    case ModelFile::Kind::fcn: return "fcn";
    case ModelFile::Kind::lasso: return "lasso";
    case ModelFile::Kind::ridge: return "ridge";
    case ModelFile::Kind::logreg: return "logreg";
  }
  return "unknown";
}

inline ModelFile::Kind model_kind_from_string(std::string_view s) {
  for (auto k : {ModelFile::Kind::sparxnet, ModelFile::Kind::fcn, ModelFile::Kind::lasso, ModelFile::Kind::ridge,
                 ModelFile::Kind::logreg})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

/// Observed [min, max] of each column.
inline std::vector<FeatureRange> feature_ranges(const Matrix& x) {
  std::vector<FeatureRange> out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (x.rows() == 0) out.push_back({0.0, 0.0});
    else out.push_back({x.col(c).minCoeff(), x.col(c).maxCoeff()});
  }
  return out;
}

/// Data description fields filled from the training set.
inline void describe_training_data(ModelFile& m, const Dataset& train) {
  m.task = train.task;
  m.target = train.target_name;
  m.feature_names = train.feature_names;
  m.preprocessing = train.preprocessing;
  m.feature_ranges = feature_ranges(train.x);
  m.train_rows = train.rows();
}

inline json to_json(const ModelFile& m) {
  json j;
  j["kind"] = to_string(m.kind);
  switch (m.kind) {
    case ModelFile::Kind::sparxnet: {
      j["config"] = to_json(m.config);
      const auto p = to_json(m.params);
      for (const auto& [k, v] : p.items()) j[k] = v;
      j["tau_final"] = m.tau_final;
      break;
    }
    case ModelFile::Kind::fcn:
      j["config"] = {{"hidden", m.fcn_config.hidden}, {"dropout", m.fcn_config.dropout}, {"seed", m.fcn_config.seed}};
      j["network"] = to_json(m.network);
      break;
    default:
      j["linear"] = to_json(m.linear);
      break;
  }
  j["task"] = to_string(m.task);
  j["target"] = m.target;
  j["positive_label"] = m.positive_label ? json(*m.positive_label) : json();
  j["feature_names"] = m.feature_names;
  auto& pre = j["preprocessing"] = json::array();
  for (const auto& t : m.preprocessing) pre.push_back(to_json(t));
  auto& ranges = j["feature_ranges"] = json::array();
  for (const auto& r : m.feature_ranges) ranges.push_back({r.lo, r.hi});
  j["loss"] = to_json(m.loss);
  j["train_rows"] = m.train_rows;
  return j;
}

inline ModelFile model_file_from_json(const json& j) {
  return detail::parse_guard("model file", [&] {
    ModelFile m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    switch (m.kind) {
      case ModelFile::Kind::sparxnet:
        m.config = model_config_from_json(j.at("config"));
        m.params = model_params_from_json(j);
        m.tau_final = j.at("tau_final").get<double>();
        if (!(m.tau_final > 0.0)) throw ParseError("model file: tau_final must be positive");
        break;
      case ModelFile::Kind::fcn: {
        const auto& c = j.at("config");
        m.fcn_config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
        m.fcn_config.dropout = c.at("dropout").get<double>();
        m.fcn_config.seed = c.at("seed").get<std::uint64_t>();
        m.network = mlp_params_from_json(j.at("network"));
        break;
      }
      default:
        m.linear = linear_model_from_json(j.at("linear"));
        break;
    }
    m.task = task_from_string(j.at("task").get<std::string>());
    m.target = j.at("target").get<std::string>();
    if (!j.at("positive_label").is_null()) m.positive_label = j.at("positive_label").get<std::string>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& t : j.at("preprocessing")) m.preprocessing.push_back(column_transform_from_json(t));
    for (const auto& r : j.at("feature_ranges")) m.feature_ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    m.loss = loss_spec_from_json(j.at("loss"));
    m.train_rows = j.at("train_rows").get<std::size_t>();

    const std::size_t d = m.feature_names.size();
    if (m.feature_ranges.size() != d) throw ParseError("model file: one feature range per feature required");
    const std::size_t model_d = m.kind == ModelFile::Kind::sparxnet ? m.params.feature_count()
                                : m.kind == ModelFile::Kind::fcn    ? m.network.input_width()
                                                                    : static_cast<std::size_t>(m.linear.coefficients.size());
    if (model_d != d) throw ParseError("model file: parameter shapes disagree with the feature list");
    if (m.kind == ModelFile::Kind::fcn && m.network.output_width() != 1)
      throw ParseError("model file: network must have one output");
    return m;
  });
}

inline void write_model(const std::filesystem::path& path, const ModelFile& m) {
  io::write_text(path, io::dump_json(to_json(m)));
}

inline ModelFile read_model(const std::filesystem::path& path) {
  try {
    return model_file_from_json(io::read_json(path));
  } catch (const DimensionError& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const TrainReport& r) {
  json j;
  auto& trace = j["trace"] = json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"iteration", t.iteration}, {"train_loss", t.train_loss}, {"val_loss", t.val_loss}, {"tau", t.tau}});
  j["best_iteration"] = r.best_iteration;
  j["best_val_loss"] = r.best_val_loss;
  j["metrics"] = r.metrics;
  auto& sel = j["selection"] = json::array();
  for (std::size_t k = 0; k < r.selection.size(); ++k)
    sel.push_back({{"pathway", k},
                   {"feature", r.selection[k].feature},
                   {"weight", r.selection[k].weight},
                   {"row", detail::vector_json(r.selection[k].row)}});
  j["saturation"] = detail::vector_json(r.saturation);
  j["theta_l1"] = r.theta_l1;
  j["lipschitz"] = r.lipschitz;
  j["chi"] = r.chi;
  j["tau_final"] = r.tau_final;
  j["seed"] = r.seed;
  return j;
}

inline std::string trace_csv(const TrainReport& r) {
  std::string out = "iteration,train_loss,val_loss,tau\n";
  for (const auto& t : r.trace)
    out += std::to_string(t.iteration) + "," + detail::format_double(t.train_loss) + "," +
           detail::format_double(t.val_loss) + "," + detail::format_double(t.tau) + "\n";
  return out;
}

inline json to_json(const HpoTrial& t) {
  return {{"trial", t.index},
          {"dropout", t.dropout},
          {"learning_rate", t.learning_rate},
          {"temperature", t.temperature},
          {"val_loss", t.val_loss},
          {"best_iteration", t.best_iteration}};
}

inline std::string leaderboard_csv(const std::vector<HpoTrial>& trials) {
  std::string out = "rank,trial,dropout,learning_rate,temperature,val_loss,best_iteration\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    out += std::to_string(i + 1) + "," + std::to_string(t.index) + "," + detail::format_double(t.dropout) + "," +
           detail::format_double(t.learning_rate) + "," + detail::format_double(t.temperature) + "," +
           detail::format_double(t.val_loss) + "," + std::to_string(t.best_iteration) + "\n";
  }
  return out;
}

/// K x d routing softmax at `tau` as CSV: one row per pathway, one column per feature.
inline std::string saturation_csv(const ModelParams& p, double tau, const std::vector<std::string>& feature_names) {
  if (feature_names.size() != p.feature_count()) throw DimensionError("feature name count disagrees with the model");
  std::string out = "pathway";
  for (const auto& n : feature_names) out += "," + detail::csv_escape(n);
  out += "\n";
  const Matrix w = routing_matrix(p, tau);
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    out += std::to_string(k);
    for (Eigen::Index u = 0; u < w.cols(); ++u) out += "," + detail::format_double(w(k, u));
    out += "\n";
  }
  return out;
}

inline std::string curves_csv(const std::vector<PathwayCurve>& curves, const std::vector<std::string>& feature_names) {
  std::string out = "pathway,feature,feature_name,input,value\n";
  for (const auto& c : curves)
    for (const auto& pt : c.points)
      out += std::to_string(c.pathway) + "," + std::to_string(c.feature) + "," +
             detail::csv_escape(c.feature < feature_names.size() ? feature_names[c.feature] : "") + "," +
             detail::format_double(pt.input) + "," + detail::format_double(pt.value) + "\n";
  return out;
}

}  // namespace sparxnet
