#pragma once

// Comparison models: Lasso (cyclic coordinate descent), Ridge (normal
// equations), logistic regression (full-batch gradient descent) and a plain
// fully connected network trained by the same loop as SparXnet.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/train.hpp"

namespace sparxnet {

struct LinearModel {
  enum class Penalty { none, lasso, ridge };
  enum class Link { identity, logistic };

  Vector coefficients;
  double intercept = 0.0;
  Penalty penalty = Penalty::none;
  double lambda = 0.0;
  Link link = Link::identity;

  /// Linear predictor (the logit for logistic models).
  Vector decision(const Matrix& x) const {
    if (x.cols() != coefficients.size()) throw DimensionError("linear model: feature count mismatch");
    return (x * coefficients).array() + intercept;
  }
};

namespace detail {

inline void require_finite(const Matrix& x, const Vector& y) {
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("inputs must be finite");
  if (x.rows() != y.size()) throw DimensionError("feature rows and target length disagree");
  if (x.rows() == 0) throw InvalidArgument("need at least one row");
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline double lasso_objective(const Vector& residual, const Vector& beta, double lambda) {
  return residual.squaredNorm() / (2.0 * static_cast<double>(residual.size())) + lambda * beta.cwiseAbs().sum();
}

}  // namespace detail

/// Minimises (1/2N)||y - X beta - b||^2 + lambda ||beta||_1 by cyclic
/// coordinate descent in ascending column order; the intercept is
/// unpenalised and refreshed after every sweep. Stops when the largest
/// coordinate change in a sweep is below `tol`. If `objective_trace` is given
/// it receives the objective after every sweep.
inline LinearModel lasso_fit(const Matrix& x, const Vector& y, double lambda, std::size_t max_sweeps = 10000,
                             double tol = 1e-10, std::vector<double>* objective_trace = nullptr) {
  detail::require_finite(x, y);
  if (!(lambda >= 0.0)) throw InvalidArgument("lasso: lambda must be non-negative");
  const auto n = static_cast<double>(x.rows());
  const auto d = x.cols();
  LinearModel m;
  m.penalty = LinearModel::Penalty::lasso;
  m.lambda = lambda;
  m.coefficients = Vector::Zero(d);
  m.intercept = y.mean();
  Vector residual = y.array() - m.intercept;
  Vector col_scale(d);
  for (Eigen::Index j = 0; j < d; ++j) col_scale(j) = x.col(j).squaredNorm() / n;

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_scale(j) == 0.0) continue;
      const double old = m.coefficients(j);
      const double rho = x.col(j).dot(residual) / n + col_scale(j) * old;
      const double updated = detail::soft_threshold(rho, lambda) / col_scale(j);
      if (updated != old) {
        residual -= (updated - old) * x.col(j);
        m.coefficients(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    const double shift = residual.mean();
    m.intercept += shift;
    residual.array() -= shift;
    max_change = std::max(max_change, std::abs(shift));
    if (objective_trace) objective_trace->push_back(detail::lasso_objective(residual, m.coefficients, lambda));
    if (max_change < tol) break;
  }
  return m;
}

/// Solves (Xc^T Xc / N + lambda I) beta = Xc^T yc / N on centred data by
/// Cholesky; intercept = mean(y) - mean(X) beta.
inline LinearModel ridge_fit(const Matrix& x, const Vector& y, double lambda) {
  detail::require_finite(x, y);
  if (!(lambda >= 0.0)) throw InvalidArgument("ridge: lambda must be non-negative");
  const auto n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Eigen::MatrixXd gram = (xc.transpose() * xc) / n;
  gram.diagonal().array() += lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12)
    throw InvalidArgument("ridge: normal equations are singular (collinear features with lambda = 0?)");
  LinearModel m;
  m.penalty = LinearModel::Penalty::ridge;
  m.lambda = lambda;
  m.coefficients = llt.solve(Vector(xc.transpose() * yc / n));
  m.intercept = y_mean - x_mean.dot(m.coefficients);
  return m;
}

namespace detail {

inline Vector sigmoid(const Vector& z) {
  Vector p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) >= 0.0) {
      p(i) = 1.0 / (1.0 + std::exp(-z(i)));
    } else {
      const double e = std::exp(z(i));
      p(i) = e / (1.0 + e);
    }
  }
  return p;
}

inline void require_binary(const Vector& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw InvalidArgument("logistic regression targets must be 0 or 1");
}

}  // namespace detail

/// Mean binary cross-entropy of a logistic model.
inline double logreg_loss(const LinearModel& m, const Matrix& x, const Vector& y) {
  const Vector z = m.decision(x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += loss_eval(LossSpec::binary_cross_entropy(), z(i), y(i)).value;
  return total / static_cast<double>(z.size());
}

struct LogregGradient {
  Vector coefficients;  // X^T (p - y) / N
  double intercept;     // mean(p - y)
};

inline LogregGradient logreg_gradient(const LinearModel& m, const Matrix& x, const Vector& y) {
  const Vector diff = detail::sigmoid(m.decision(x)) - y;
  const auto n = static_cast<double>(x.rows());
  return {x.transpose() * diff / n, diff.sum() / n};
}

/// Full-batch gradient descent on mean cross-entropy from zero coefficients.
inline LinearModel logreg_fit(const Matrix& x, const Vector& y, std::size_t iterations = 2000, double lr = 0.1,
                              std::vector<double>* loss_trace = nullptr) {
  detail::require_finite(x, y);
  detail::require_binary(y);
  if (!(lr > 0.0)) throw InvalidArgument("logistic regression: learning rate must be positive");
  LinearModel m;
  m.link = LinearModel::Link::logistic;
  m.coefficients = Vector::Zero(x.cols());
  for (std::size_t it = 0; it < iterations; ++it) {
    if (loss_trace) loss_trace->push_back(logreg_loss(m, x, y));
    const auto g = logreg_gradient(m, x, y);
    m.coefficients -= lr * g.coefficients;
    m.intercept -= lr * g.intercept;
  }
  if (loss_trace) loss_trace->push_back(logreg_loss(m, x, y));
  return m;
}

/// 20-point log grid 1e-4 .. 1.
inline std::vector<double> lasso_lambda_grid(std::size_t points = 20, double lo = 1e-4, double hi = 1.0) {
  std::vector<double> grid;
  for (std::size_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))));
  }
  return grid;
}

/// Pick lambda from `grid` by validation MSE on a held-out fraction of `data`,
/// then refit on all of it. `fit(x, y, lambda)` returns a LinearModel.
template <class Fit>
LinearModel select_lambda(const Dataset& data, std::uint64_t seed, Fit&& fit, double validation_fraction = 0.2,
                          const std::vector<double>& grid = lasso_lambda_grid()) {
  if (grid.empty()) throw InvalidArgument("lambda grid must be non-empty");
  auto [train_part, val] = split(data, SplitSpec{validation_fraction, false, seed ^ 0x1A550ull});
  double best_lambda = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    const double err = mse(fit(train_part.x, train_part.y, lambda).decision(val.x), val.y);
    if (err < best) {
      best = err;
      best_lambda = lambda;
    }
  }
  return fit(data.x, data.y, best_lambda);
}

inline LinearModel lasso_select(const Dataset& data, std::uint64_t seed, double validation_fraction = 0.2,
                                const std::vector<double>& grid = lasso_lambda_grid()) {
  return select_lambda(
      data, seed, [](const Matrix& x, const Vector& y, double lambda) { return lasso_fit(x, y, lambda, 10000, 1e-10); },
      validation_fraction, grid);
}

inline LinearModel ridge_select(const Dataset& data, std::uint64_t seed, double validation_fraction = 0.2,
                                const std::vector<double>& grid = lasso_lambda_grid()) {
  return select_lambda(
      data, seed, [](const Matrix& x, const Vector& y, double lambda) { return ridge_fit(x, y, lambda); },
      validation_fraction, grid);
}

// ---------------------------------------------------------------------------
// Fully connected network

struct FcnConfig {
  std::vector<std::size_t> hidden = {128, 128, 128, 128, 128, 128};
  double dropout = 0.1;
  std::uint64_t seed = 0;
};

struct FcnResult {
  MlpParams net;
  FcnConfig config;
  TrainReport report;
};

namespace detail {

struct FcnLearner {
  const FcnConfig& config;

  double temperature(std::size_t) const { return 0.0; }

  struct Forward {
    Vector output;
    MlpTape tape;
  };
  Forward forward(const MlpParams& p, const Matrix& x, std::size_t, Mode mode, Rng* rng) const {
    auto r = mlp_forward(p, x, config.dropout, mode, rng);
    return {r.y.col(0), std::move(r.tape)};
  }
  MlpParams backward(const MlpParams& p, const MlpTape& tape, const Vector& upstream) const {
    return mlp_backward(p, tape, Matrix(upstream)).params;
  }
  std::vector<std::span<double>> blocks(MlpParams& p) const {
    std::vector<std::span<double>> b;
    append_blocks(p, b);
    return b;
  }
  Vector predict(const MlpParams& p, const Matrix& x, std::size_t) const {
    return mlp_forward(p, x, 0.0, Mode::eval).y.col(0);
  }
};

}  // namespace detail

inline Vector fcn_predict(const MlpParams& net, const Matrix& x) { return mlp_forward(net, x, 0.0, Mode::eval).y.col(0); }

/// MLP d -> hidden... -> 1 under the SparXnet training loop (no routing, no temperature).
inline FcnResult fcn_fit(const FcnConfig& config, const TrainConfig& train_config, const Dataset& data) {
  const auto started = std::chrono::steady_clock::now();
  train_config.validate();
  data.check();
  detail::check_task(data, train_config.loss);
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");

  auto [fit, val] = detail::validation_split(data, train_config.validation_fraction, train_config.seed);
  std::vector<std::size_t> widths{data.features()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(1);
  MlpParams net = MlpParams::zeros(widths);
  Rng init = Rng(config.seed).substream(0x1A17);
  he_uniform_init(net, init);
  net.layers.back().bias(0) = detail::initial_offset(fit);

  detail::FcnLearner learner{config};
  const auto loop = detail::run_loop(learner, net, train_config, fit, val);

  FcnResult result;
  result.config = config;
  auto& report = result.report;
  report.trace = loop.trace;
  report.best_iteration = loop.best_iteration;
  report.best_val_loss = loop.best_val_loss;
  report.metrics["train_loss"] = loop.best_train_loss;
  report.metrics["val_loss"] = loop.best_val_loss;
  for (const auto& [name, value] : detail::task_metrics(val, fcn_predict(net, val.x)))
    report.metrics["val_" + name] = value;
  report.seed = train_config.seed;
  result.net = std::move(net);
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

/// Random search over dropout and learning rate for the FCN (temperature unused).
inline std::pair<FcnConfig, TrainConfig> fcn_random_search(const HpoSpace& space, const FcnConfig& config,
                                                           const TrainConfig& train_config, const Dataset& data,
                                                           std::uint64_t seed, std::vector<HpoTrial>* leaderboard = nullptr,
                                                           std::size_t threads = 1) {
  space.validate();
  Rng rng = Rng(seed).substream(0xFC4);
  std::vector<HpoTrial> trials;
  for (std::size_t i = 0; i < space.trials; ++i) {
    auto t = sample_trial(space, rng);
    t.index = i;
    trials.push_back(t);
  }
  detail::run_trials(trials, threads, [&](HpoTrial& t) {
    FcnConfig fc = config;
    fc.dropout = t.dropout;
    TrainConfig tc = train_config;
    tc.learning_rate = t.learning_rate;
    try {
      const auto r = fcn_fit(fc, tc, data);
      t.val_loss = r.report.best_val_loss;
      t.best_iteration = r.report.best_iteration;
    } catch (const TrainingError&) {
      t.val_loss = std::numeric_limits<double>::infinity();
    }
  });
  detail::rank(trials);
  FcnConfig best = config;
  best.dropout = trials.front().dropout;
  TrainConfig best_train = train_config;
  best_train.learning_rate = trials.front().learning_rate;
  if (leaderboard) *leaderboard = trials;
  return {best, best_train};
}

}  // namespace sparxnet
