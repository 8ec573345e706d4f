#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Formula oracles evaluate in 50-digit decimal arithmetic; gradient oracles
// use central finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "sparxnet/bounds.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

namespace oracle {

using Big = boost::multiprecision::cpp_dec_float_50;
using sparxnet::bounds::BoundInputs;

inline Big big(double v) { return Big(v); }
inline Big log2(const Big& x) { return log(x) / log(Big(2)); }
inline double rel_error(double value, const Big& reference) {
  const Big diff = abs(Big(value) - reference);
  const Big scale = abs(reference);
  return scale == 0 ? diff.convert_to<double>() : (diff / scale).convert_to<double>();
}

inline Big lip_cover_log(double c, double l, double eps) {
  const Big r = big(c) * big(l) / big(eps);
  return (2 * r + 2) * log(4 * r + 2);
}

inline Big maurey_cover_log2(double a, double b, double n, double eps) {
  const Big A = big(a), B = big(b), N = big(n), E = big(eps);
  return 36 * A * A * B * B / (E * E) * log2(8 * A * B * N / E + 6 * N + 1);
}

inline Big class_cover_log(const BoundInputs& in, double eps) {
  const Big chi = big(in.chi), L = big(in.lipschitz), G = big(in.gamma), K = big(in.pathways);
  const Big d = big(in.features), N = big(in.samples), E = big(eps);
  return (216 * K * chi * chi * L * L * G * G / (E * E) + 3) * log2(12 * chi * G * L * d * N / E + 6 * d * N + 1);
}

inline Big rademacher_bound(const BoundInputs& in) {
  const Big chi = big(in.chi), L = big(in.lipschitz), G = big(in.gamma), K = big(in.pathways);
  const Big d = big(in.features), N = big(in.samples);
  return 12 / sqrt(N) * (15 * chi * L * G * sqrt(K) + 3) * sqrt(log2(12 * d * N * N * (chi * L * G + 1))) * log(N);
}

inline Big deviation_term(const BoundInputs& in) {
  return 6 * big(in.loss_bound) * sqrt(log(2 / big(in.delta)) / (2 * big(in.samples)));
}

inline Big excess_risk(const BoundInputs& in) {
  // Theorem form: (24 script-L / sqrt N)[...] + deviation.
  const Big chi = big(in.chi), L = big(in.lipschitz), G = big(in.gamma), K = big(in.pathways);
  const Big d = big(in.features), N = big(in.samples);
  return 24 * big(in.loss_lipschitz) / sqrt(N) * (15 * chi * L * G * sqrt(K) + 3) *
             sqrt(log2(12 * d * N * N * (chi * L * G + 1))) * log(N) +
         oracle::deviation_term(in);
}

inline Big l1_ball_cover_log(double beta, double d, double eps) {
  const Big r = big(beta) / big(eps);
  return ceil(r * r) * log(2 * big(d));
}

/// Random admissible bound inputs with moderate magnitudes.
inline BoundInputs random_inputs(sparxnet::Rng& rng) {
  BoundInputs in;
  in.features = static_cast<double>(1 + rng.below(50));
  in.pathways = static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(in.features)));
  in.samples = static_cast<double>(2 + rng.below(100000));
  in.chi = rng.log_uniform(0.01, 10.0);
  in.lipschitz = rng.log_uniform(0.01, 10.0);
  in.gamma = rng.log_uniform(0.01, 10.0);
  in.loss_lipschitz = rng.log_uniform(0.01, 10.0);
  in.loss_bound = rng.log_uniform(0.01, 10.0);
  in.delta = rng.uniform(0.001, 0.5);
  return in;
}

// ---------------------------------------------------------------------------
// Gradients

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Max relative error between `analytic` and central differences of
/// `objective` over every entry of `blocks` (h = 1e-5).
inline double fd_max_error(std::vector<std::span<double>> blocks, std::vector<std::span<double>> analytic,
                           const std::function<double()>& objective, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double saved = blocks[b][i];
      blocks[b][i] = saved + h;
      const double up = objective();
      blocks[b][i] = saved - h;
      const double down = objective();
      blocks[b][i] = saved;
      worst = std::max(worst, grad_rel_error(analytic[b][i], (up - down) / (2.0 * h)));
    }
  return worst;
}

/// Random small model: non-zero logits, He-uniform pathways with random
/// biases, random theta and beta.
inline sparxnet::ModelParams random_model(std::size_t k, std::size_t d, std::vector<std::size_t> hidden,
                                          sparxnet::Rng& rng) {
  sparxnet::ModelConfig c;
  c.pathways = k;
  c.features = d;
  c.pathway_hidden = std::move(hidden);
  c.seed = rng.next_u64();
  auto p = sparxnet::init_params(c);
  for (Eigen::Index i = 0; i < p.routing_logits.size(); ++i) p.routing_logits.data()[i] = rng.normal();
  for (auto& net : p.pathways)
    for (auto& layer : net.layers)
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.5, 0.5);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = rng.normal();
  p.beta = rng.normal();
  return p;
}

/// Max relative error of sparx_backward against finite differences of
/// sum_i w_i F(x_i) in eval mode.
inline double model_fd_error(sparxnet::ModelParams p, const sparxnet::Matrix& x, const sparxnet::Vector& weights,
                             double tau) {
  const auto fwd = sparxnet::sparx_forward(p, x, tau, 0.0, sparxnet::Mode::eval, nullptr);
  auto grad = sparxnet::sparx_backward(p, fwd.tape, weights);
  auto objective = [&] { return weights.dot(sparxnet::predict(p, x, tau)); };
  return fd_max_error(sparxnet::parameter_blocks(p), sparxnet::parameter_blocks(grad), objective);
}

// ---------------------------------------------------------------------------
// Metrics

/// AUC by enumerating every positive/negative pair.
inline double auc_pairs(std::span<const double> scores, std::span<const double> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[i] == 1.0 && labels[j] == 0.0) {
        pairs += 1.0;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace oracle
