#pragma once

// Mini-batch training with geometric temperature annealing, checkpointing on
// validation loss, and seeded random-search tuning.
//
// Iterations are numbered 1..T. Update i runs at tau(i), so the first update
// sees (almost) tau0 and the last one exactly floor_fraction * tau0;
// evaluation after update i uses the same tau(i).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sparxnet/bounds.hpp"
#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/evalmetrics.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

namespace sparxnet {

struct TrainConfig {
  std::size_t iterations = 2000;  // T
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  LossSpec loss;
  std::size_t lipschitz_grid = 10001;  // grid for the report's Lipschitz estimates

  void validate() const {
    if (iterations < 1) throw InvalidArgument("training needs at least one iteration");
    if (batch_size < 1) throw InvalidArgument("batch size must be positive");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw InvalidArgument("validation fraction must be in (0, 1)");
    if (eval_every < 1) throw InvalidArgument("eval_every must be positive");
    if (lipschitz_grid < 2) throw InvalidArgument("Lipschitz grid needs at least two points");
    loss.validate();
  }
};

/// tau0 * floor_fraction^(t / T).
inline double temperature_at(const TemperatureSchedule& schedule, std::size_t t) {
  schedule.validate();
  if (t > schedule.iterations) throw InvalidArgument("iteration outside the temperature schedule");
  if (t == 0) return schedule.initial;
  if (t == schedule.iterations) return schedule.initial * schedule.floor_fraction;
  return schedule.initial *
         std::pow(schedule.floor_fraction, static_cast<double>(t) / static_cast<double>(schedule.iterations));
}

struct TracePoint {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double tau = 0.0;
};

struct TrainReport {
  std::vector<TracePoint> trace;  // one point per eval_every updates, plus the last
  std::size_t best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::map<std::string, double> metrics;  // at the checkpoint
  FeatureSelection selection;
  Vector saturation;
  double theta_l1 = 0.0;
  std::vector<double> lipschitz;  // per pathway, over [-chi, chi]
  double chi = 0.0;
  double tau_final = 0.0;          // temperature of the returned checkpoint
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;  // not serialised
};

struct TrainResult {
  ModelParams params;
  ModelConfig config;  // with temperature.iterations synchronised to T
  TrainReport report;
};

namespace detail {

/// Fit/validation split of a training set; stratified for binary tasks.
inline std::pair<Dataset, Dataset> validation_split(const Dataset& data, double fraction, std::uint64_t seed) {
  SplitSpec spec{fraction, data.task == Task::binary, seed ^ 0x7A11DA7Eull};
  return split(data, spec);
}

inline double mean_loss(const LossSpec& loss, const Vector& predictions, const Vector& targets) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) total += loss_eval(loss, predictions(i), targets(i)).value;
  return total / static_cast<double>(predictions.size());
}

/// Initial read-out offset: target mean (regression) or clamped log-odds (binary).
inline double initial_offset(const Dataset& data) {
  const double mean = data.y.mean();
  if (data.task == Task::regression) return mean;
  const double p = std::clamp(mean, 1e-3, 1.0 - 1e-3);
  return std::log(p / (1.0 - p));
}

inline void check_task(const Dataset& data, const LossSpec& loss) {
  const bool bce = loss.kind == LossSpec::Kind::binary_cross_entropy;
  if (bce != (data.task == Task::binary))
    throw InvalidArgument("loss does not match the dataset task (binary needs cross-entropy, regression truncated square)");
}

inline std::map<std::string, double> task_metrics(const Dataset& data, const Vector& predictions) {
  std::map<std::string, double> m;
  if (data.task == Task::regression) {
    m["mse"] = mse(predictions, data.y);
  } else {
    const double positives = data.y.sum();
    if (positives > 0.0 && positives < static_cast<double>(data.y.size())) m["auc"] = auc(predictions, data.y);
  }
  return m;
}

struct LoopOutcome {
  std::vector<TracePoint> trace;
  std::size_t best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_train_loss = 0.0;
};

/// Generic mini-batch loop. `Learner` supplies
///   forward(params, X, iteration, Mode, Rng*) -> {Vector output, tape}
///   backward(params, tape, upstream) -> gradient shaped like params
///   blocks(params&) -> vector<span<double>>
///   predict(params, X, iteration) -> Vector
/// `params` ends holding the best-validation checkpoint.
template <class Learner, class Params>
LoopOutcome run_loop(Learner& learner, Params& params, const TrainConfig& tc, const Dataset& fit,
                     const Dataset& val) {
  Rng shuffle_rng = Rng(tc.seed).substream(0x5EED);
  Rng dropout_rng = Rng(tc.seed).substream(0xD209);
  AdamConfig adam_config;
  adam_config.learning_rate = tc.learning_rate;
  auto blocks = learner.blocks(params);
  AdamState adam(adam_config, blocks);

  const std::size_t n = fit.rows();
  const std::size_t batch = std::min(tc.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n;  // forces a shuffle on the first step

  LoopOutcome out;
  Params best = params;
  Matrix xb(static_cast<Eigen::Index>(batch), fit.x.cols());
  Vector yb(static_cast<Eigen::Index>(batch));

  for (std::size_t it = 1; it <= tc.iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const auto row = static_cast<Eigen::Index>(order[cursor++]);
      xb.row(static_cast<Eigen::Index>(b)) = fit.x.row(row);
      yb(static_cast<Eigen::Index>(b)) = fit.y(row);
    }
    auto fwd = learner.forward(params, xb, it, Mode::train, &dropout_rng);
    Vector upstream(static_cast<Eigen::Index>(batch));
    double batch_loss = 0.0;
    for (Eigen::Index b = 0; b < upstream.size(); ++b) {
      const auto lv = loss_eval(tc.loss, fwd.output(b), yb(b));
      batch_loss += lv.value;
      upstream(b) = lv.gradient / static_cast<double>(batch);
    }
    if (!std::isfinite(batch_loss)) throw TrainingError("non-finite training loss", it);
    auto grad = learner.backward(params, fwd.tape, upstream);
    auto grad_blocks = learner.blocks(grad);
    adam.update(blocks, grad_blocks);

    if (it % tc.eval_every == 0 || it == tc.iterations) {
      TracePoint point;
      point.iteration = it;
      point.tau = learner.temperature(it);
      point.train_loss = mean_loss(tc.loss, learner.predict(params, fit.x, it), fit.y);
      point.val_loss = mean_loss(tc.loss, learner.predict(params, val.x, it), val.y);
      if (!std::isfinite(point.train_loss) || !std::isfinite(point.val_loss))
        throw TrainingError("non-finite evaluation loss", it);
      out.trace.push_back(point);
      if (point.val_loss < out.best_val_loss) {
        out.best_val_loss = point.val_loss;
        out.best_train_loss = point.train_loss;
        out.best_iteration = it;
        best = params;
      }
    }
  }
  params = std::move(best);
  return out;
}

struct SparxLearner {
  const ModelConfig& config;

  double temperature(std::size_t it) const { return temperature_at(config.temperature, it); }

  ModelForward forward(const ModelParams& p, const Matrix& x, std::size_t it, Mode mode, Rng* rng) const {
    return sparx_forward(p, x, temperature(it), config.dropout, mode, rng);
  }
  ModelParams backward(const ModelParams& p, const ModelTape& tape, const Vector& upstream) const {
    return sparx_backward(p, tape, upstream);
  }
  std::vector<std::span<double>> blocks(ModelParams& p) const { return parameter_blocks(p); }
  Vector predict(const ModelParams& p, const Matrix& x, std::size_t it) const {
    return sparxnet::predict(p, x, temperature(it));
  }
};

}  // namespace detail

/// Train SparXnet on `data`, holding out `validation_fraction` of it for
/// checkpoint selection. Deterministic in (model_config.seed, train_config.seed).
inline TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, const Dataset& data) {
  const auto started = std::chrono::steady_clock::now();
  train_config.validate();
  data.check();
  detail::check_task(data, train_config.loss);
  ModelConfig config = model_config;
  config.features = data.features();
  config.temperature.iterations = train_config.iterations;
  config.validate();

  auto [fit, val] = detail::validation_split(data, train_config.validation_fraction, train_config.seed);
  ModelParams params = init_params(config);
  params.beta = detail::initial_offset(fit);

  detail::SparxLearner learner{config};
  const auto loop = detail::run_loop(learner, params, train_config, fit, val);

  TrainResult result;
  result.config = config;
  auto& report = result.report;
  report.trace = loop.trace;
  report.best_iteration = loop.best_iteration;
  report.best_val_loss = loop.best_val_loss;
  report.tau_final = temperature_at(config.temperature, loop.best_iteration);
  report.metrics["train_loss"] = loop.best_train_loss;
  report.metrics["val_loss"] = loop.best_val_loss;
  for (const auto& [name, value] : detail::task_metrics(val, predict(params, val.x, report.tau_final)))
    report.metrics["val_" + name] = value;
  report.selection = selected_features(params, report.tau_final);
  report.saturation = saturation(params, report.tau_final);
  report.theta_l1 = params.theta.cwiseAbs().sum();
  report.chi = data.x.size() ? data.x.cwiseAbs().maxCoeff() : 0.0;
  report.lipschitz = bounds::pathway_lipschitz(params, report.chi, train_config.lipschitz_grid);
  report.seed = train_config.seed;
  result.params = std::move(params);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// ---------------------------------------------------------------------------
// Random search

struct Range {
  double lo;
  double hi;
};

struct HpoSpace {
  Range dropout{0.1, 0.5};
  Range learning_rate{0.001, 0.01};  // log-uniform
  Range temperature{0.1, 100.0};     // log-uniform
  std::size_t trials = 20;

  void validate() const {
    if (trials < 1) throw InvalidArgument("random search needs at least one trial");
    for (const auto& r : {dropout, learning_rate, temperature})
      if (!(r.lo < r.hi)) throw InvalidArgument("search range lower bound must be below upper bound");
    if (!(dropout.lo >= 0.0 && dropout.hi < 1.0)) throw InvalidArgument("dropout range must lie in [0, 1)");
    if (!(learning_rate.lo > 0.0 && temperature.lo > 0.0))
      throw InvalidArgument("log-uniform ranges must be positive");
  }
};

struct HpoTrial {
  std::size_t index = 0;
  double dropout = 0.0;
  double learning_rate = 0.0;
  double temperature = 0.0;
  double val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_iteration = 0;
};

/// Draw one configuration: dropout uniform, learning rate and temperature log-uniform.
inline HpoTrial sample_trial(const HpoSpace& space, Rng& rng) {
  HpoTrial t;
  t.dropout = rng.uniform(space.dropout.lo, space.dropout.hi);
  t.learning_rate = std::clamp(rng.log_uniform(space.learning_rate.lo, space.learning_rate.hi),
                               space.learning_rate.lo, space.learning_rate.hi);
  t.temperature = std::clamp(rng.log_uniform(space.temperature.lo, space.temperature.hi), space.temperature.lo,
                             space.temperature.hi);
  return t;
}

struct HpoResult {
  ModelConfig model;
  TrainConfig train;
  std::vector<HpoTrial> leaderboard;  // ascending validation loss, then trial index
};

namespace detail {

/// Evaluate `trials` with `run(trial)` on up to `threads` workers.
template <class Run>
void run_trials(std::vector<HpoTrial>& trials, std::size_t threads, Run&& run) {
  threads = std::max<std::size_t>(1, std::min(threads, trials.size()));
  if (threads == 1) {
    for (auto& t : trials) run(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(trials.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < trials.size(); i = next++) {
        try {
          run(trials[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline void rank(std::vector<HpoTrial>& trials) {
  std::sort(trials.begin(), trials.end(), [](const HpoTrial& a, const HpoTrial& b) {
    if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
    return a.index < b.index;
  });
}

}  // namespace detail

/// Seeded random search over dropout, learning rate and initial temperature.
/// Every trial trains with the same data split and seeds; only the sampled
/// hyperparameters differ. Trials diverging to non-finite loss rank last.
inline HpoResult random_search_hpo(const HpoSpace& space, const ModelConfig& model_config,
                                   const TrainConfig& train_config, const Dataset& data, std::uint64_t seed,
                                   std::size_t threads = 1) {
  space.validate();
  Rng rng = Rng(seed).substream(0x4890);
  std::vector<HpoTrial> trials;
  for (std::size_t i = 0; i < space.trials; ++i) {
    auto t = sample_trial(space, rng);
    t.index = i;
    trials.push_back(t);
  }
  detail::run_trials(trials, threads, [&](HpoTrial& t) {
    ModelConfig mc = model_config;
    mc.dropout = t.dropout;
    mc.temperature.initial = t.temperature;
    TrainConfig tc = train_config;
    tc.learning_rate = t.learning_rate;
    tc.lipschitz_grid = 2;
    try {
      const auto r = train(mc, tc, data);
      t.val_loss = r.report.best_val_loss;
      t.best_iteration = r.report.best_iteration;
    } catch (const TrainingError&) {
      t.val_loss = std::numeric_limits<double>::infinity();
    }
  });
  detail::rank(trials);

  HpoResult result;
  result.leaderboard = trials;
  result.model = model_config;
  result.model.dropout = trials.front().dropout;
  result.model.temperature.initial = trials.front().temperature;
  result.train = train_config;
  result.train.learning_rate = trials.front().learning_rate;
  return result;
}

}  // namespace sparxnet
