#pragma once

// Dense numeric core: ReLU MLPs with inverted dropout, hand-written reverse
// mode for that fixed topology, scalar losses, and Adam.
//
// Batches are row-major matrices with one sample per row. Layer weights are
// stored (out x in), so a layer computes Z = X * W^T + 1 b^T.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparxnet/error.hpp"
#include "sparxnet/rng.hpp"

namespace sparxnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Mode { train, eval };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// ReLU on every hidden layer, identity on the last one.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// Zero-initialised network with the given widths {in, hidden..., out}.
  static MlpParams zeros(std::span<const std::size_t> widths) {
    detail::require(widths.size() >= 2, "an MLP needs at least input and output widths");
    MlpParams p;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      detail::require(widths[i] > 0 && widths[i + 1] > 0, "MLP widths must be positive");
      p.layers.push_back({Matrix::Zero(static_cast<Eigen::Index>(widths[i + 1]),
                                       static_cast<Eigen::Index>(widths[i])),
                          Vector::Zero(static_cast<Eigen::Index>(widths[i + 1]))});
    }
    return p;
  }

  std::size_t input_width() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
  }
  std::size_t output_width() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
  }

  /// Throws DimensionError naming the first layer that does not chain.
  void check() const {
    if (layers.empty()) throw DimensionError("MLP has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& layer = layers[i];
      if (layer.bias.size() != layer.weight.rows())
        throw DimensionError("bias length " + std::to_string(layer.bias.size()) +
                                 " != weight rows " + std::to_string(layer.weight.rows()),
                             i);
      if (i > 0 && layer.weight.cols() != layers[i - 1].weight.rows())
        throw DimensionError("weight cols " + std::to_string(layer.weight.cols()) +
                                 " != previous layer width " +
                                 std::to_string(layers[i - 1].weight.rows()),
                             i);
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
          x.weight != y.weight || x.bias != y.bias)
        return false;
    }
    return true;
  }
};

/// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
inline void he_uniform_init(MlpParams& p, Rng& rng) {
  for (auto& layer : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = rng.uniform(-limit, limit);
    layer.bias.setZero();
  }
}

/// Everything backward needs from one forward pass.
struct MlpTape {
  std::vector<Matrix> inputs;       // input to each layer (inputs[0] is the batch)
  std::vector<Matrix> preactivation;  // hidden layers only
  std::vector<Matrix> dropout_scale;  // hidden layers only; empty in eval mode
  std::size_t layer_count = 0;
};

struct MlpOutput {
  Matrix y;
  MlpTape tape;
};

/// Forward pass over a batch (one sample per row). In train mode with a
/// positive rate, each hidden activation is multiplied by an inverted-dropout
/// mask (kept units scaled by 1/(1-rate)); masks are drawn from `rng` in
/// row-major order, layer by layer.
inline MlpOutput mlp_forward(const MlpParams& p, const Matrix& x, double dropout, Mode mode,
                             Rng* rng = nullptr) {
  p.check();
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
  if (static_cast<std::size_t>(x.cols()) != p.input_width())
    throw DimensionError("input width " + std::to_string(x.cols()) + " != expected " +
                             std::to_string(p.input_width()),
                         0);
  const bool masked = mode == Mode::train && dropout > 0.0;
  if (mode == Mode::train && rng == nullptr)
    throw InvalidArgument("train-mode forward requires a random stream");

  MlpOutput out;
  auto& tape = out.tape;
  tape.layer_count = p.layers.size();
  tape.inputs.reserve(p.layers.size());
  tape.inputs.push_back(x);
  const double keep_scale = 1.0 / (1.0 - dropout);

  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& layer = p.layers[i];
    Matrix z = tape.inputs.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (i + 1 == p.layers.size()) {
      out.y = std::move(z);
      break;
    }
    Matrix h = z.cwiseMax(0.0);
    if (masked) {
      // Each 64-bit draw supplies two 32-bit uniforms.
      Matrix scale(h.rows(), h.cols());
      const auto threshold = static_cast<std::uint64_t>(dropout * 0x1.0p32);
      std::uint64_t bits = 0;
      for (Eigen::Index j = 0; j < scale.size(); ++j) {
        if (j % 2 == 0) bits = rng->next_u64();
        const std::uint64_t draw = (j % 2 == 0) ? (bits & 0xFFFFFFFFu) : (bits >> 32);
        scale.data()[j] = draw < threshold ? 0.0 : keep_scale;
      }
      h.array() *= scale.array();
      tape.dropout_scale.push_back(std::move(scale));
    }
    tape.preactivation.push_back(std::move(z));
    tape.inputs.push_back(std::move(h));
  }
  return out;
}

/// Single-sample convenience overload.
inline Vector mlp_forward(const MlpParams& p, const Vector& x, double dropout = 0.0,
                          Mode mode = Mode::eval, Rng* rng = nullptr) {
  Matrix row = x.transpose();
  return mlp_forward(p, row, dropout, mode, rng).y.row(0).transpose();
}

struct MlpGradient {
  MlpParams params;  // summed over the batch
  Matrix input;      // d(loss)/d(input), one row per sample
};

/// Reverse-mode gradient for the pass recorded in `tape`, given
/// d(loss)/d(y) as `upstream` (batch x out).
inline MlpGradient mlp_backward(const MlpParams& p, const MlpTape& tape, const Matrix& upstream) {
  if (tape.layer_count != p.layers.size() || tape.inputs.size() != p.layers.size() ||
      tape.preactivation.size() + 1 != p.layers.size())
    throw DimensionError("tape was not produced by these parameters");
  const bool masked = !tape.dropout_scale.empty();
  if (upstream.rows() != tape.inputs.front().rows() ||
      static_cast<std::size_t>(upstream.cols()) != p.output_width())
    throw DimensionError("upstream gradient shape does not match the output",
                         p.layers.size() - 1);

  MlpGradient grad;
  grad.params.layers.resize(p.layers.size());
  Matrix delta = upstream;
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    const auto& layer = p.layers[i];
    const Matrix& input = tape.inputs[i];
    if (input.cols() != layer.weight.cols())
      throw DimensionError("tape activation width does not match weight", i);
    auto& g = grad.params.layers[i];
    g.weight.noalias() = delta.transpose() * input;
    g.bias = delta.colwise().sum().transpose();
    Matrix below = delta * layer.weight;
    if (i == 0) {
      grad.input = std::move(below);
      break;
    }
    const std::size_t hidden = i - 1;
    if (masked) below.array() *= tape.dropout_scale[hidden].array();
    below.array() *= (tape.preactivation[hidden].array() > 0.0).cast<double>();
    delta = std::move(below);
  }
  return grad;
}

/// Mutable views over every parameter block, in a fixed order.
inline void append_blocks(MlpParams& p, std::vector<std::span<double>>& blocks) {
  for (auto& layer : p.layers) {
    blocks.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    blocks.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

// ---------------------------------------------------------------------------
// Losses

struct LossSpec {
  enum class Kind { truncated_square, binary_cross_entropy };

  Kind kind = Kind::truncated_square;
  double cap = 1e6;  // B, truncated square only

  static LossSpec truncated_square(double cap) { return {Kind::truncated_square, cap}; }
  static LossSpec binary_cross_entropy() { return {Kind::binary_cross_entropy, 0.0}; }

  void validate() const {
    if (kind == Kind::truncated_square && !(cap > 0.0))
      throw InvalidArgument("truncated-square cap B must be positive");
  }
};

struct LossValue {
  double value;
  double gradient;  // d value / d prediction
};

/// Truncated square min(|y - yhat|^2, B) (gradient 0 on the capped branch,
/// including the boundary), or binary cross-entropy on a logit s:
/// l(s,0) = log(1 + e^s), l(s,1) = log(1 + e^-s).
inline LossValue loss_eval(const LossSpec& spec, double prediction, double target) {
  if (spec.kind == LossSpec::Kind::truncated_square) {
    spec.validate();
    const double diff = prediction - target;
    const double squared = diff * diff;
    if (squared >= spec.cap) return {spec.cap, 0.0};
    return {squared, 2.0 * diff};
  }
  if (target != 0.0 && target != 1.0)
    throw InvalidArgument("binary cross-entropy target must be 0 or 1");
  const double signed_logit = target == 0.0 ? prediction : -prediction;
  const double value = std::max(signed_logit, 0.0) + std::log1p(std::exp(-std::abs(prediction)));
  double sigmoid;
  if (prediction >= 0.0) {
    sigmoid = 1.0 / (1.0 + std::exp(-prediction));
  } else {
    const double e = std::exp(prediction);
    sigmoid = e / (1.0 + e);
  }
  return {value, sigmoid - target};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;

  /// Accumulators shaped like `blocks`.
  AdamState(const AdamConfig& config, std::span<const std::span<double>> blocks)
      : config_(config) {
    for (const auto& b : blocks) {
      first_.emplace_back(b.size(), 0.0);
      second_.emplace_back(b.size(), 0.0);
    }
  }

  const AdamConfig& config() const { return config_; }
  std::size_t step() const { return step_; }

  /// Bias-corrected Adam update of `params` in place.
  void update(std::span<const std::span<double>> params,
              std::span<const std::span<double>> grads) {
    if (params.size() != first_.size() || grads.size() != first_.size())
      throw DimensionError("Adam: block count mismatch");
    for (std::size_t b = 0; b < params.size(); ++b)
      if (params[b].size() != first_[b].size() || grads[b].size() != first_[b].size())
        throw DimensionError("Adam: block " + std::to_string(b) + " size mismatch");

    ++step_;
    const double t = static_cast<double>(step_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& m = first_[b];
      auto& v = second_[b];
      const auto& g = grads[b];
      auto& p = params[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
  }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

inline void adam_step(AdamState& state, std::span<const std::span<double>> params,
                      std::span<const std::span<double>> grads) {
  state.update(params, grads);
}

}  // namespace sparxnet
