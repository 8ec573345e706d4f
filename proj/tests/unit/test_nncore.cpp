#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

using namespace sparxnet;

namespace {

MlpParams hand_net() {
  MlpParams p;
  Matrix w1(2, 1);
  w1 << 1, -1;
  Vector b1(2);
  b1 << 0, 1;
  Matrix w2(1, 2);
  w2 << 2, 3;
  Vector b2(1);
  b2 << -1;
  p.layers = {{w1, b1}, {w2, b2}};
  return p;
}

MlpParams random_net(std::vector<std::size_t> widths, Rng& rng) {
  auto p = MlpParams::zeros(widths);
  he_uniform_init(p, rng);
  for (auto& layer : p.layers)
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.3, 0.3);
  return p;
}

}  // namespace

TEST(MlpForward, IdentityLayer) {
  MlpParams p;
  p.layers = {{Matrix::Constant(1, 1, 1.0), Vector::Zero(1)}};
  EXPECT_EQ(mlp_forward(p, Vector::Constant(1, 7.0))(0), 7.0);
}

TEST(MlpForward, ZeroNetwork) {
  const std::size_t w[] = {3, 5, 5, 1};
  const auto p = MlpParams::zeros(w);
  Vector x(3);
  x << 1.5, -2, 9;
  EXPECT_EQ(mlp_forward(p, x)(0), 0.0);
}

TEST(MlpForward, HandEvaluatedNet) { EXPECT_EQ(mlp_forward(hand_net(), Vector::Constant(1, 2.0))(0), 3.0); }

TEST(MlpForward, DimensionErrorNamesLayer) {
  auto p = hand_net();
  p.layers[1].weight = Matrix::Zero(1, 3);
  try {
    p.check();
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.layer(), 1u);
  }
  EXPECT_THROW(mlp_forward(hand_net(), Vector(Vector::Zero(2))), DimensionError);
}

TEST(MlpForward, Preconditions) {
  EXPECT_THROW(mlp_forward(hand_net(), Vector(Vector::Zero(1)), 1.0), InvalidArgument);
  EXPECT_THROW(mlp_forward(hand_net(), Vector(Vector::Zero(1)), 0.5, Mode::train, nullptr), InvalidArgument);
}

TEST(MlpForward, EvalModeIgnoresDropout) {
  Rng rng(3);
  const auto p = random_net({2, 8, 8, 1}, rng);
  Matrix x = Matrix::Random(5, 2);
  EXPECT_EQ(mlp_forward(p, x, 0.4, Mode::eval).y, mlp_forward(p, x, 0.0, Mode::eval).y);
}

TEST(MlpForward, InvertedDropoutPreservesExpectation) {
  // Linear output of a single hidden layer: E[train] = eval exactly in expectation.
  Rng init(11);
  const auto p = random_net({1, 16, 1}, init);
  Matrix x(1, 1);
  x << 0.8;
  const double eval = mlp_forward(p, x, 0.0, Mode::eval).y(0, 0);
  Rng rng(12);
  double sum = 0.0;
  const int passes = 20000;
  for (int i = 0; i < passes; ++i) sum += mlp_forward(p, x, 0.3, Mode::train, &rng).y(0, 0);
  EXPECT_NEAR(sum / passes, eval, 0.01 * std::abs(eval));
}

TEST(MlpBackward, LinearProductRule) {
  MlpParams p;
  p.layers = {{Matrix::Constant(1, 1, 2.5), Vector::Zero(1)}};
  Matrix x(1, 1);
  x << 4.0;
  const auto fwd = mlp_forward(p, x, 0.0, Mode::eval);
  const auto g = mlp_backward(p, fwd.tape, Matrix::Constant(1, 1, 1.0));
  EXPECT_EQ(g.params.layers[0].weight(0, 0), 4.0);
  EXPECT_EQ(g.input(0, 0), 2.5);
}

TEST(MlpBackward, ZeroUpstream) {
  Rng rng(5);
  const auto p = random_net({3, 4, 4, 1}, rng);
  const Matrix x = Matrix::Random(6, 3);
  const auto fwd = mlp_forward(p, x, 0.0, Mode::eval);
  const auto g = mlp_backward(p, fwd.tape, Matrix::Zero(6, 1));
  for (const auto& layer : g.params.layers) {
    EXPECT_EQ(layer.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(layer.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(g.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpBackward, FiniteDifferencesEvalMode) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_net({3, 6, 5, 2}, rng);
    Matrix x(4, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Matrix up(4, 2);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.normal();
    const auto fwd = mlp_forward(p, x, 0.0, Mode::eval);
    auto g = mlp_backward(p, fwd.tape, up);
    auto objective = [&] { return (mlp_forward(p, x, 0.0, Mode::eval).y.array() * up.array()).sum(); };
    std::vector<std::span<double>> blocks, grads;
    append_blocks(p, blocks);
    append_blocks(g.params, grads);
    EXPECT_LT(oracle::fd_max_error(blocks, grads, objective), 1e-4);
    // Input gradient.
    std::vector<std::span<double>> xb{std::span<double>(x.data(), static_cast<std::size_t>(x.size()))};
    std::vector<std::span<double>> gb{std::span<double>(g.input.data(), static_cast<std::size_t>(g.input.size()))};
    EXPECT_LT(oracle::fd_max_error(xb, gb, objective), 1e-4);
  }
}

TEST(MlpBackward, FiniteDifferencesWithFixedMask) {
  // Gradients are exact for the realised mask: replay the same stream.
  Rng init(8);
  auto p = random_net({2, 6, 6, 1}, init);
  Matrix x = Matrix::Random(5, 2);
  const Matrix up = Matrix::Constant(5, 1, 1.0);
  auto run = [&] {
    Rng rng(99);
    return mlp_forward(p, x, 0.25, Mode::train, &rng);
  };
  const auto fwd = run();
  auto g = mlp_backward(p, fwd.tape, up);
  auto objective = [&] { return run().y.sum(); };
  std::vector<std::span<double>> blocks, grads;
  append_blocks(p, blocks);
  append_blocks(g.params, grads);
  EXPECT_LT(oracle::fd_max_error(blocks, grads, objective), 1e-4);
}

TEST(MlpBackward, TapeMismatch) {
  Rng rng(1);
  const auto a = random_net({1, 3, 1}, rng);
  const auto b = random_net({1, 3, 3, 1}, rng);
  const auto fwd = mlp_forward(a, Matrix(Matrix::Zero(2, 1)), 0.0, Mode::eval);
  EXPECT_THROW(mlp_backward(b, fwd.tape, Matrix::Zero(2, 1)), DimensionError);
}

TEST(Loss, TruncatedSquare) {
  const auto spec = LossSpec::truncated_square(1.0);
  auto lv = loss_eval(spec, 2.0, 2.0);
  EXPECT_EQ(lv.value, 0.0);
  EXPECT_EQ(lv.gradient, 0.0);
  lv = loss_eval(spec, 5.0, 0.0);
  EXPECT_EQ(lv.value, 1.0);
  EXPECT_EQ(lv.gradient, 0.0);
  // Tie at the cap takes the truncated branch.
  lv = loss_eval(spec, 1.0, 0.0);
  EXPECT_EQ(lv.value, 1.0);
  EXPECT_EQ(lv.gradient, 0.0);
  // Continuity at the boundary and never above B.
  EXPECT_NEAR(loss_eval(spec, 1.0 - 1e-12, 0.0).value, 1.0, 1e-11);
  for (double d = -3; d <= 3; d += 0.01) EXPECT_LE(loss_eval(spec, d, 0.0).value, 1.0);
  lv = loss_eval(LossSpec::truncated_square(100), 3.0, 1.0);
  EXPECT_EQ(lv.value, 4.0);
  EXPECT_EQ(lv.gradient, 4.0);
}

TEST(Loss, CrossEntropy) {
  const auto spec = LossSpec::binary_cross_entropy();
  const auto lv = loss_eval(spec, 0.0, 1.0);
  EXPECT_NEAR(lv.value, std::numbers::ln2, 1e-15);
  EXPECT_EQ(lv.gradient, -0.5);
  for (double s : {-800.0, -30.0, -1.5, 0.0, 0.3, 12.0, 800.0}) {
    EXPECT_EQ(loss_eval(spec, s, 0.0).value, loss_eval(spec, -s, 1.0).value);
    EXPECT_TRUE(std::isfinite(loss_eval(spec, s, 0.0).value));
  }
  EXPECT_NEAR(loss_eval(spec, 800.0, 0.0).value, 800.0, 1e-9);
  EXPECT_NEAR(loss_eval(spec, 2.0, 0.0).value, std::log1p(std::exp(2.0)), 1e-15);
  EXPECT_THROW(loss_eval(spec, 0.0, 0.5), InvalidArgument);
  EXPECT_THROW(LossSpec::truncated_square(0.0).validate(), InvalidArgument);
}

TEST(Loss, GradientMatchesFiniteDifference) {
  for (const auto& spec : {LossSpec::truncated_square(10.0), LossSpec::binary_cross_entropy()})
    for (double s : {-2.0, -0.3, 0.7, 1.9}) {
      const double t = spec.kind == LossSpec::Kind::binary_cross_entropy ? 1.0 : 0.5;
      const double h = 1e-6;
      const double numeric = (loss_eval(spec, s + h, t).value - loss_eval(spec, s - h, t).value) / (2 * h);
      EXPECT_NEAR(loss_eval(spec, s, t).gradient, numeric, 1e-7);
    }
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  std::vector<std::span<double>> pb{p}, gb{g};
  AdamState state(AdamConfig{}, pb);
  adam_step(state, pb, gb);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(state.step(), 1u);
}

TEST(Adam, FirstStepHandComputed) {
  std::vector<double> p{0.0}, g{1.0};
  std::vector<std::span<double>> pb{p}, gb{g};
  AdamConfig config;
  config.learning_rate = 0.1;
  AdamState state(config, pb);
  adam_step(state, pb, gb);
  // m_hat = 1, v_hat = 1: update = -0.1 / (1 + 1e-8).
  EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-17);
}

TEST(Adam, SymmetricUpdates) {
  std::vector<double> p{0.5, 0.5}, g{0.3, 0.3};
  std::vector<std::span<double>> pb{p}, gb{g};
  AdamState state(AdamConfig{}, pb);
  for (int i = 0; i < 5; ++i) adam_step(state, pb, gb);
  EXPECT_EQ(p[0], p[1]);
}

TEST(Adam, ShapeMismatch) {
  std::vector<double> p{0.0, 1.0}, g{1.0};
  std::vector<std::span<double>> pb{p}, gb{g};
  AdamState state(AdamConfig{}, pb);
  EXPECT_THROW(adam_step(state, pb, gb), DimensionError);
}
