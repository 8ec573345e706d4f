#pragma once

// SparXnet: K pathways, each routed to the input through a temperature
// softmax over its own row of logits, transformed by a scalar MLP f_k, and
// combined linearly:
//
//   F(x) = beta + sum_k theta_k * f_k( sum_u W^k_u x_u ),
//   W^k  = softmax(w^k / tau).
//
// The temperature is an argument of every call; the schedule lives in train.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "sparxnet/error.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

namespace sparxnet {

/// Geometric decay from `initial` to `floor_fraction * initial` over `iterations`.
struct TemperatureSchedule {
  double initial = 1.0;
  std::size_t iterations = 2000;
  double floor_fraction = 0.01;

  void validate() const {
    if (!(initial > 0.0)) throw InvalidArgument("initial temperature must be positive");
    if (!(floor_fraction > 0.0 && floor_fraction <= 1.0))
      throw InvalidArgument("temperature floor fraction must be in (0, 1]");
    if (iterations == 0) throw InvalidArgument("temperature schedule needs at least one iteration");
  }
};

struct ModelConfig {
  std::size_t pathways = 1;  // K
  std::size_t features = 1;  // d
  std::vector<std::size_t> pathway_hidden = {128, 128, 128, 128, 128, 128};
  double dropout = 0.1;
  TemperatureSchedule temperature;
  std::uint64_t seed = 0;

  void validate() const {
    if (pathways < 1 || pathways > features)
      throw InvalidArgument("pathway count must satisfy 1 <= K <= d");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
    for (auto w : pathway_hidden)
      if (w == 0) throw InvalidArgument("hidden widths must be positive");
    temperature.validate();
  }

  std::vector<std::size_t> pathway_widths() const {
    std::vector<std::size_t> widths{1};
    widths.insert(widths.end(), pathway_hidden.begin(), pathway_hidden.end());
    widths.push_back(1);
    return widths;
  }
};

struct ModelParams {
  Matrix routing_logits;            // K x d
  std::vector<MlpParams> pathways;  // K networks, 1 -> 1
  Vector theta;                     // K
  double beta = 0.0;

  std::size_t pathway_count() const { return static_cast<std::size_t>(routing_logits.rows()); }
  std::size_t feature_count() const { return static_cast<std::size_t>(routing_logits.cols()); }

  void check() const {
    const auto k = routing_logits.rows();
    if (k == 0 || routing_logits.cols() == 0) throw DimensionError("empty routing matrix");
    if (static_cast<Eigen::Index>(pathways.size()) != k || theta.size() != k)
      throw DimensionError("pathway count disagrees between routing, networks and theta");
    for (std::size_t i = 0; i < pathways.size(); ++i) {
      pathways[i].check();
      if (pathways[i].input_width() != 1 || pathways[i].output_width() != 1)
        throw DimensionError("pathway " + std::to_string(i) + " must map one scalar to one scalar");
    }
  }

  /// Same shapes, all values zero.
  ModelParams zeros_like() const {
    ModelParams z;
    z.routing_logits = Matrix::Zero(routing_logits.rows(), routing_logits.cols());
    z.pathways = pathways;
    for (auto& p : z.pathways)
      for (auto& layer : p.layers) {
        layer.weight.setZero();
        layer.bias.setZero();
      }
    z.theta = Vector::Zero(theta.size());
    z.beta = 0.0;
    return z;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.routing_logits.rows() == b.routing_logits.rows() &&
           a.routing_logits.cols() == b.routing_logits.cols() &&
           a.routing_logits == b.routing_logits && a.pathways == b.pathways &&
           a.theta.size() == b.theta.size() && a.theta == b.theta && a.beta == b.beta;
  }
};

/// Views over routing logits, every pathway block, theta and beta, in that order.
inline std::vector<std::span<double>> parameter_blocks(ModelParams& p) {
  std::vector<std::span<double>> blocks;
  blocks.emplace_back(p.routing_logits.data(), static_cast<std::size_t>(p.routing_logits.size()));
  for (auto& net : p.pathways) append_blocks(net, blocks);
  blocks.emplace_back(p.theta.data(), static_cast<std::size_t>(p.theta.size()));
  blocks.emplace_back(&p.beta, 1);
  return blocks;
}

/// Zero logits (uniform routing), He-uniform pathways, theta_k = 1/K, beta = 0.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  const auto k = static_cast<Eigen::Index>(config.pathways);
  p.routing_logits = Matrix::Zero(k, static_cast<Eigen::Index>(config.features));
  Rng rng = Rng(config.seed).substream(0x1A17);
  const auto widths = config.pathway_widths();
  for (std::size_t i = 0; i < config.pathways; ++i) {
    auto net = MlpParams::zeros(widths);
    he_uniform_init(net, rng);
    p.pathways.push_back(std::move(net));
  }
  p.theta = Vector::Constant(k, 1.0 / static_cast<double>(config.pathways));
  return p;
}

namespace detail {

// Sum whose result does not depend on the order of `terms` (they are sorted
// first), so permuting features leaves routed inputs bit-identical.
inline double order_free_sum(std::span<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace detail

/// softmax(logits / tau), max-shifted.
template <class Row>
Vector routing_softmax(const Row& logits, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
  const auto d = static_cast<Eigen::Index>(logits.size());
  if (d == 0) throw DimensionError("empty logit row");
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index u = 0; u < d; ++u) {
    if (!std::isfinite(static_cast<double>(logits[u]))) throw InvalidArgument("logits must be finite");
    top = std::max(top, static_cast<double>(logits[u]));
  }
  Vector w(d);
  std::vector<double> terms(static_cast<std::size_t>(d));
  for (Eigen::Index u = 0; u < d; ++u) {
    // Clamped so far-from-max entries stay strictly positive after underflow.
    w(u) = std::max(std::exp((static_cast<double>(logits[u]) - top) / tau), std::numeric_limits<double>::denorm_min());
    terms[static_cast<std::size_t>(u)] = w(u);
  }
  const double total = detail::order_free_sum(terms);
  w /= total;
  return w;
}

inline Vector routing_softmax(std::span<const double> logits, double tau) {
  return routing_softmax(Eigen::Map<const Vector>(logits.data(), static_cast<Eigen::Index>(logits.size())), tau);
}

/// K x d matrix of softmax rows.
inline Matrix routing_matrix(const ModelParams& p, double tau) {
  Matrix r(p.routing_logits.rows(), p.routing_logits.cols());
  for (Eigen::Index k = 0; k < r.rows(); ++k) r.row(k) = routing_softmax(p.routing_logits.row(k), tau).transpose();
  return r;
}

struct ModelTape {
  Matrix inputs;           // B x d
  Matrix routing;          // K x d
  Matrix pathway_inputs;   // B x K
  Matrix pathway_outputs;  // B x K
  std::vector<MlpTape> pathway_tapes;
  double tau = 1.0;
};

struct ModelForward {
  Vector output;  // F(x) per row
  ModelTape tape;
};

/// Batched forward pass (one sample per row of `x`). Binary tasks read the
/// output as a logit; the class probability is the logistic map of it.
inline ModelForward sparx_forward(const ModelParams& p, const Matrix& x, double tau, double dropout,
                                  Mode mode, Rng* rng = nullptr) {
  p.check();
  if (static_cast<std::size_t>(x.cols()) != p.feature_count())
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(p.feature_count()));
  const auto batch = x.rows();
  const auto k_count = p.routing_logits.rows();
  const auto d = x.cols();

  ModelForward out;
  auto& tape = out.tape;
  tape.tau = tau;
  tape.inputs = x;
  tape.routing = routing_matrix(p, tau);
  tape.pathway_inputs.resize(batch, k_count);
  std::vector<double> terms(static_cast<std::size_t>(d));
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index k = 0; k < k_count; ++k) {
      for (Eigen::Index u = 0; u < d; ++u)
        terms[static_cast<std::size_t>(u)] = tape.routing(k, u) * x(b, u);
      tape.pathway_inputs(b, k) = detail::order_free_sum(terms);
    }

  tape.pathway_outputs.resize(batch, k_count);
  tape.pathway_tapes.reserve(static_cast<std::size_t>(k_count));
  for (Eigen::Index k = 0; k < k_count; ++k) {
    Matrix column = tape.pathway_inputs.col(k);
    auto result = mlp_forward(p.pathways[static_cast<std::size_t>(k)], column, dropout, mode, rng);
    tape.pathway_outputs.col(k) = result.y.col(0);
    tape.pathway_tapes.push_back(std::move(result.tape));
  }
  out.output = Vector::Constant(batch, p.beta);
  for (Eigen::Index k = 0; k < k_count; ++k) out.output += p.theta(k) * tape.pathway_outputs.col(k);
  return out;
}

/// Eval-mode predictions.
inline Vector predict(const ModelParams& p, const Matrix& x, double tau) {
  return sparx_forward(p, x, tau, 0.0, Mode::eval).output;
}

inline double predict(const ModelParams& p, const Vector& x, double tau) {
  Matrix row = x.transpose();
  return predict(p, row, tau)(0);
}

/// Gradient of sum_b upstream_b * F(x_b) with respect to every parameter,
/// returned with the shapes of ModelParams.
inline ModelParams sparx_backward(const ModelParams& p, const ModelTape& tape, const Vector& upstream) {
  p.check();
  const auto k_count = p.routing_logits.rows();
  if (tape.inputs.rows() != upstream.size() || tape.pathway_outputs.cols() != k_count ||
      static_cast<Eigen::Index>(tape.pathway_tapes.size()) != k_count ||
      tape.inputs.cols() != p.routing_logits.cols())
    throw DimensionError("tape does not match parameters or upstream gradient");

  ModelParams g = p.zeros_like();
  g.beta = upstream.sum();
  g.theta = tape.pathway_outputs.transpose() * upstream;

  Matrix dz(tape.inputs.rows(), k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    Matrix up = p.theta(k) * upstream;
    auto net_grad = mlp_backward(p.pathways[ks], tape.pathway_tapes[ks], up);
    g.pathways[ks] = std::move(net_grad.params);
    dz.col(k) = net_grad.input.col(0);
  }

  // dF/dW^k_u, then through the softmax Jacobian (delta_uv W_u - W_u W_v) / tau.
  const Matrix d_routing = dz.transpose() * tape.inputs;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto w = tape.routing.row(k);
    const double inner = w.dot(d_routing.row(k));
    g.routing_logits.row(k) = (w.array() * (d_routing.row(k).array() - inner) / tape.tau).matrix();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Interpretability read-outs

struct PathwaySelection {
  std::size_t feature = 0;  // argmax of the softmax row, lowest index on ties
  double weight = 0.0;      // softmax value at that index
  Vector row;               // full softmax row
};

using FeatureSelection = std::vector<PathwaySelection>;

/// Per pathway, the feature carrying the largest routing weight. The argmax
/// is taken over logits (softmax is monotone), which keeps it independent of
/// tau even when distinct weights round to the same double.
inline FeatureSelection selected_features(const ModelParams& p, double tau) {
  FeatureSelection selection;
  for (Eigen::Index k = 0; k < p.routing_logits.rows(); ++k) {
    PathwaySelection s;
    s.row = routing_softmax(p.routing_logits.row(k), tau);
    Eigen::Index best = 0;
    for (Eigen::Index u = 1; u < p.routing_logits.cols(); ++u)
      if (p.routing_logits(k, u) > p.routing_logits(k, best)) best = u;
    s.feature = static_cast<std::size_t>(best);
    s.weight = s.row(best);
    selection.push_back(std::move(s));
  }
  return selection;
}

/// Max softmax weight of each pathway.
inline Vector saturation(const ModelParams& p, double tau) {
  Vector out(p.routing_logits.rows());
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = routing_softmax(p.routing_logits.row(k), tau).maxCoeff();
  return out;
}

/// theta_k * f_k(t) at each t.
inline Vector pathway_term(const ModelParams& p, std::size_t k, std::span<const double> t) {
  if (k >= p.pathways.size()) throw DimensionError("pathway index out of range");
  Matrix column(static_cast<Eigen::Index>(t.size()), 1);
  for (std::size_t i = 0; i < t.size(); ++i) column(static_cast<Eigen::Index>(i), 0) = t[i];
  return p.theta(static_cast<Eigen::Index>(k)) * mlp_forward(p.pathways[k], column, 0.0, Mode::eval).y.col(0);
}

struct CurvePoint {
  double input;
  double value;
};

struct PathwayCurve {
  std::size_t pathway = 0;
  std::size_t feature = 0;
  std::vector<CurvePoint> points;
};

struct FeatureRange {
  double lo;
  double hi;
};

/// For each pathway, theta_k * f_k(t) on a uniform grid over the observed
/// range of the pathway's selected feature.
inline std::vector<PathwayCurve> export_pathway_curves(const ModelParams& p, double tau,
                                                       std::span<const FeatureRange> feature_ranges,
                                                       std::size_t samples_per_curve) {
  if (samples_per_curve < 2) throw InvalidArgument("curves need at least two samples");
  if (feature_ranges.size() != p.feature_count())
    throw DimensionError("one range per input feature is required");
  const auto selection = selected_features(p, tau);
  std::vector<PathwayCurve> curves;
  for (std::size_t k = 0; k < selection.size(); ++k) {
    const auto range = feature_ranges[selection[k].feature];
    if (!(range.hi > range.lo) || !std::isfinite(range.lo) || !std::isfinite(range.hi))
      throw InvalidArgument("empty range for feature " + std::to_string(selection[k].feature));
    std::vector<double> grid(samples_per_curve);
    const double span = range.hi - range.lo;
    for (std::size_t i = 0; i < samples_per_curve; ++i)
      grid[i] = range.lo + span * static_cast<double>(i) / static_cast<double>(samples_per_curve - 1);
    grid.back() = range.hi;
    const Vector values = pathway_term(p, k, grid);
    PathwayCurve curve{k, selection[k].feature, {}};
    for (std::size_t i = 0; i < samples_per_curve; ++i)
      curve.points.push_back({grid[i], values(static_cast<Eigen::Index>(i))});
    curves.push_back(std::move(curve));
  }
  return curves;
}

}  // namespace sparxnet
