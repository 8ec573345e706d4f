#pragma once

// Generalisation-bound calculator for the SparXnet function class
//
//   F(x) = sum_k theta_k f_k(<W^k, x>),  ||f_k||_Lip <= L,  sum|theta_k| <= Gamma,
//   W^k_u > 0,  sum_u W^k_u <= 1,  |x|_max <= chi.
//
// The class has no bias term; a trained model's beta is treated as absorbed
// into the loss bound B and its Lipschitz constant.
//
// Log bases follow the derivation symbol for symbol: natural log in
// lip_cover_log, l1_ball_cover_log, the ln N factor and the confidence term;
// log2 in the Maurey and class covers and under the square root of the
// Rademacher bound.
//
// class_cover_log uses the last line of the cover derivation, which keeps
// Gamma inside the logarithm (the headline statement of that bound drops it).
//
// excess_risk_bound bounds l(f_hat) - l(f*) (population risks), which is
// what the derivation establishes; the headline theorem phrases the left
// side with the empirical risk of f_hat instead.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "sparxnet/error.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"

namespace sparxnet::bounds {

struct BoundInputs {
  double pathways = 1;      // K
  double features = 1;      // d
  double samples = 2;       // N
  double chi = 1;           // max-norm bound on inputs
  double lipschitz = 1;     // L
  double gamma = 1;         // bound on sum |theta_k|
  double loss_lipschitz = 1;  // script L
  double loss_bound = 1;    // B
  double delta = 0.05;

  /// Counts must be >= 1 with K <= d; the reals non-negative (zero gives the
  /// degenerate limits); delta in (0, 1).
  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!(pathways >= 1 && features >= 1 && samples >= 1))
      throw InvalidArgument("K, d and N must be at least 1");
    if (pathways > features) throw InvalidArgument("K must not exceed d");
    for (double v : {chi, lipschitz, gamma, loss_lipschitz, loss_bound})
      if (!(v >= 0.0) || !finite(v)) throw InvalidArgument("bound inputs must be finite and non-negative");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must be in (0, 1)");
  }
};

/// log N(F_L, eps, sup-norm) for L-Lipschitz maps [-C,C] -> [-CL,CL]:
/// (2CL/eps + 2) ln(4CL/eps + 2).
inline double lip_cover_log(double c, double lipschitz, double eps) {
  if (!(c > 0.0)) throw InvalidArgument("lip_cover_log: C must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("lip_cover_log: eps must be positive");
  if (!(lipschitz >= 0.0)) throw InvalidArgument("lip_cover_log: L must be non-negative");
  const double r = c * lipschitz / eps;
  return (2.0 * r + 2.0) * std::log(4.0 * r + 2.0);
}

/// log2 N(U_{a,b}(X), eps, sup over N points) <= (36 a^2 b^2 / eps^2) log2(8abN/eps + 6N + 1).
inline double maurey_cover_log2(double a, double b, double n, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("maurey_cover_log2: eps must be positive");
  if (!(a >= 0.0 && b >= 0.0)) throw InvalidArgument("maurey_cover_log2: a and b must be non-negative");
  if (!(n >= 1.0)) throw InvalidArgument("maurey_cover_log2: N must be at least 1");
  const double ab = a * b;
  return 36.0 * ab * ab / (eps * eps) * std::log2(8.0 * ab * n / eps + 6.0 * n + 1.0);
}

/// Sup-norm cover of the whole class on N points:
/// (216 K chi^2 L^2 Gamma^2 / eps^2 + 3) log2(12 chi Gamma L d N / eps + 6dN + 1).
inline double class_cover_log(const BoundInputs& in, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("class_cover_log: eps must be positive");
  in.validate();
  const double scale = in.chi * in.lipschitz * in.gamma;
  const double dn = in.features * in.samples;
  return (216.0 * in.pathways * scale * scale / (eps * eps) + 3.0) *
         std::log2(12.0 * scale * dn / eps + 6.0 * dn + 1.0);
}

/// Empirical Rademacher complexity bound
/// (12/sqrt N)(15 chi L Gamma sqrt K + 3) sqrt(log2(12 d N^2 (chi L Gamma + 1))) ln N.
inline double rademacher_bound(const BoundInputs& in) {
  in.validate();
  if (!(in.samples >= 2)) throw InvalidArgument("rademacher_bound: N must be at least 2");
  const double scale = in.chi * in.lipschitz * in.gamma;
  const double n = in.samples;
  return 12.0 / std::sqrt(n) * (15.0 * scale * std::sqrt(in.pathways) + 3.0) *
         std::sqrt(std::log2(12.0 * in.features * n * n * (scale + 1.0))) * std::log(n);
}

/// 6B sqrt(ln(2/delta) / (2N)).
inline double deviation_term(const BoundInputs& in) {
  in.validate();
  return 6.0 * in.loss_bound * std::sqrt(std::log(2.0 / in.delta) / (2.0 * in.samples));
}

/// Excess-risk bound: 2 script-L * rademacher_bound + deviation_term.
inline double excess_risk_bound(const BoundInputs& in) {
  return 2.0 * in.loss_lipschitz * rademacher_bound(in) + deviation_term(in);
}

/// Smallest N >= 2 with excess_risk_bound <= target, by doubling then
/// bisection. inputs.samples is ignored. The result satisfies
/// bound(N) <= target < bound(max(2, N/2)) whenever N > 2.
inline std::uint64_t sample_complexity(BoundInputs in, double target) {
  if (!(target > 0.0)) throw InvalidArgument("sample_complexity: target must be positive");
  auto bound_at = [&](std::uint64_t n) {
    in.samples = static_cast<double>(n);
    return excess_risk_bound(in);
  };
  if (bound_at(2) <= target) return 2;
  std::uint64_t lo = 2;  // bound(lo) > target
  std::uint64_t hi = 4;
  constexpr std::uint64_t limit = std::uint64_t{1} << 62;
  while (bound_at(hi) > target) {
    if (hi >= limit) throw InvalidArgument("sample_complexity: target unreachable below 2^62 samples");
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (bound_at(mid) <= target) hi = mid;
    else lo = mid;
  }
  return hi;
}

/// 4 alpha + (12/sqrt N) * integral_alpha^1 sqrt(cover_log(eps)) d eps,
/// integrated by adaptive Gauss-Kronrod in log(eps) (the integrand behaves
/// like 1/eps for the class cover, so it is nearly constant in that variable).
inline double dudley_numeric(const std::function<double(double)>& cover_log, double n,
                             std::optional<double> alpha = std::nullopt) {
  if (!(n >= 1.0)) throw InvalidArgument("dudley_numeric: N must be at least 1");
  const double a = alpha.value_or(1.0 / n);
  if (!(a > 0.0)) throw InvalidArgument("dudley_numeric: alpha must be positive");
  if (a >= 1.0) return 4.0 * a;
  auto integrand = [&](double s) {
    const double eps = std::exp(s);
    const double c = cover_log(eps);
    if (!std::isfinite(c) || c < 0.0) throw InvalidArgument("dudley_numeric: cover log must be finite and non-negative");
    return std::sqrt(c) * eps;
  };
  double error = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, std::log(a), 0.0, 20, 1e-10, &error);
  if (!std::isfinite(integral)) throw InvalidArgument("dudley_numeric: integral is not finite");
  return 4.0 * a + 12.0 / std::sqrt(n) * integral;
}

/// Dudley integral of the class cover for these inputs.
inline double dudley_class(const BoundInputs& in) {
  return dudley_numeric([&](double eps) { return class_cover_log(in, eps); }, in.samples);
}

struct EmpiricalRadEstimate {
  double estimate = 0.0;
  std::size_t draws = 0;           // sign vectors averaged
  std::size_t function_count = 0;
  std::uint64_t seed = 0;
  bool exhaustive = false;
};

/// E_sigma max_f (1/N) sum_i sigma_i f(x_i) for a finite family given as an
/// F x N matrix of evaluations. Exhaustive mode (N <= 20) averages all 2^N
/// sign vectors exactly; otherwise `draws` vectors come from a seeded stream.
inline EmpiricalRadEstimate empirical_rademacher(const Matrix& values, std::size_t draws, std::uint64_t seed,
                                                 bool exhaustive = false) {
  if (values.rows() == 0) throw InvalidArgument("empirical_rademacher: empty function set");
  const auto n = static_cast<std::size_t>(values.cols());
  if (n == 0) throw InvalidArgument("empirical_rademacher: empty sample");
  EmpiricalRadEstimate out;
  out.function_count = static_cast<std::size_t>(values.rows());
  out.seed = seed;
  out.exhaustive = exhaustive;

  Vector sigma(values.cols());
  auto sup = [&] { return (values * sigma).maxCoeff() / static_cast<double>(n); };
  double total = 0.0;
  if (exhaustive) {
    if (n > 20) throw InvalidArgument("empirical_rademacher: exhaustive mode needs N <= 20");
    const std::uint64_t patterns = std::uint64_t{1} << n;
    for (std::uint64_t m = 0; m < patterns; ++m) {
      for (std::size_t i = 0; i < n; ++i) sigma(static_cast<Eigen::Index>(i)) = (m >> i) & 1u ? 1.0 : -1.0;
      total += sup();
    }
    out.draws = static_cast<std::size_t>(patterns);
  } else {
    if (draws < 1) throw InvalidArgument("empirical_rademacher: need at least one draw");
    Rng rng = Rng(seed).substream(0x5A5A);
    for (std::size_t m = 0; m < draws; ++m) {
      for (std::size_t i = 0; i < n; ++i)
        sigma(static_cast<Eigen::Index>(i)) = rng.next_u64() >> 63 ? 1.0 : -1.0;
      total += sup();
    }
    out.draws = draws;
  }
  out.estimate = total / static_cast<double>(out.draws);
  return out;
}

/// max over adjacent grid points of |f(t_{i+1}) - f(t_i)| / dt on a uniform
/// grid over [lo, hi]. `f` is either scalar (double -> double) or batched
/// (span<const double> -> Vector).
template <class F>
double estimate_lipschitz(F&& f, double lo, double hi, std::size_t grid_points = 10001) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw InvalidArgument("estimate_lipschitz: degenerate range");
  if (grid_points < 2) throw InvalidArgument("estimate_lipschitz: need at least two grid points");
  std::vector<double> grid(grid_points);
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  for (std::size_t i = 0; i < grid_points; ++i) grid[i] = lo + step * static_cast<double>(i);
  grid.back() = hi;
  std::vector<double> values(grid_points);
  if constexpr (std::is_invocable_r_v<double, F, double>) {
    for (std::size_t i = 0; i < grid_points; ++i) values[i] = f(grid[i]);
  } else {
    const Vector batch = f(std::span<const double>(grid));
    if (static_cast<std::size_t>(batch.size()) != grid_points)
      throw DimensionError("estimate_lipschitz: sampler returned the wrong number of values");
    for (std::size_t i = 0; i < grid_points; ++i) values[i] = batch(static_cast<Eigen::Index>(i));
  }
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < grid_points; ++i)
    best = std::max(best, std::abs(values[i + 1] - values[i]) / (grid[i + 1] - grid[i]));
  return best;
}

/// ceil(beta^2 / eps^2) ln(2d): L1-ball cover in L2. Not used by the chain
/// above; kept for completeness.
inline double l1_ball_cover_log(double beta, double d, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("l1_ball_cover_log: eps must be positive");
  if (!(beta >= 0.0)) throw InvalidArgument("l1_ball_cover_log: beta must be non-negative");
  if (!(d >= 1.0)) throw InvalidArgument("l1_ball_cover_log: d must be at least 1");
  const double r = beta / eps;
  return std::ceil(r * r) * std::log(2.0 * d);
}

// ---------------------------------------------------------------------------
// Reports

/// Pathway Lipschitz estimates over [-chi, chi] (f_k alone, without theta_k).
inline std::vector<double> pathway_lipschitz(const ModelParams& p, double chi, std::size_t grid_points = 10001) {
  std::vector<double> out;
  const double half = chi > 0.0 ? chi : 1.0;
  for (const auto& net : p.pathways) {
    out.push_back(estimate_lipschitz(
        [&](std::span<const double> t) {
          Matrix column(static_cast<Eigen::Index>(t.size()), 1);
          for (std::size_t i = 0; i < t.size(); ++i) column(static_cast<Eigen::Index>(i), 0) = t[i];
          return Vector(mlp_forward(net, column, 0.0, Mode::eval).y.col(0));
        },
        -half, half, grid_points));
  }
  return out;
}

/// Loss constants per LossSpec: truncated square gives script-L = 2 sqrt(B)
/// and bound B; cross-entropy gives script-L = 1 and bound ln(1 + e^{chi L Gamma}),
/// the largest loss a class member can incur.
inline std::pair<double, double> loss_constants(const LossSpec& loss, double chi, double lipschitz, double gamma) {
  if (loss.kind == LossSpec::Kind::truncated_square) return {2.0 * std::sqrt(loss.cap), loss.cap};
  const double s = chi * lipschitz * gamma;
  return {1.0, s + std::log1p(std::exp(-s))};
}

/// Bound inputs measured on a trained model: chi = max |x| over the training
/// inputs, L = max pathway Lipschitz estimate, Gamma = sum |theta_k|.
inline BoundInputs inputs_from_model(const ModelParams& p, const Matrix& train_x, const LossSpec& loss,
                                     double delta = 0.05, std::size_t grid_points = 10001) {
  BoundInputs in;
  in.pathways = static_cast<double>(p.pathway_count());
  in.features = static_cast<double>(p.feature_count());
  in.samples = static_cast<double>(train_x.rows());
  in.chi = train_x.size() ? train_x.cwiseAbs().maxCoeff() : 0.0;
  const auto lips = pathway_lipschitz(p, in.chi, grid_points);
  in.lipschitz = lips.empty() ? 0.0 : *std::max_element(lips.begin(), lips.end());
  in.gamma = p.theta.cwiseAbs().sum();
  std::tie(in.loss_lipschitz, in.loss_bound) = loss_constants(loss, in.chi, in.lipschitz, in.gamma);
  in.delta = delta;
  return in;
}

inline nlohmann::json to_json(const BoundInputs& in) {
  return {{"K", in.pathways},     {"d", in.features},          {"N", in.samples},
          {"chi", in.chi},        {"L", in.lipschitz},         {"gamma", in.gamma},
          {"loss_lipschitz", in.loss_lipschitz}, {"loss_bound", in.loss_bound}, {"delta", in.delta}};
}

inline BoundInputs bound_inputs_from_json(const nlohmann::json& j) {
  BoundInputs in;
  auto get = [&](const char* key, double fallback) { return j.contains(key) ? j.at(key).get<double>() : fallback; };
  in.pathways = get("K", in.pathways);
  in.features = get("d", in.features);
  in.samples = get("N", in.samples);
  in.chi = get("chi", in.chi);
  in.lipschitz = get("L", in.lipschitz);
  in.gamma = get("gamma", in.gamma);
  in.loss_lipschitz = get("loss_lipschitz", in.loss_lipschitz);
  in.loss_bound = get("loss_bound", in.loss_bound);
  in.delta = get("delta", in.delta);
  in.validate();
  return in;
}

/// Every intermediate quantity of the bound chain.
inline nlohmann::json bound_report(const BoundInputs& in, std::optional<double> target_excess_risk = std::nullopt) {
  in.validate();
  nlohmann::json r;
  r["inputs"] = to_json(in);
  const double alpha = 1.0 / in.samples;
  r["class_cover_log_at_eps_1"] = class_cover_log(in, 1.0);
  r["class_cover_log_at_alpha"] = class_cover_log(in, alpha);
  r["lip_cover_log_at_eps_1"] = in.chi > 0.0 ? nlohmann::json(lip_cover_log(in.chi, in.lipschitz, 1.0)) : nlohmann::json();
  r["dudley_alpha"] = alpha;
  const double rad = rademacher_bound(in);
  r["dudley_numeric"] = dudley_class(in);
  r["rademacher_bound"] = rad;
  r["uniform_deviation"] = in.loss_lipschitz * rad + 0.5 * deviation_term(in);
  r["deviation_term"] = deviation_term(in);
  r["excess_risk"] = excess_risk_bound(in);
  if (target_excess_risk) {
    r["target_excess_risk"] = *target_excess_risk;
    r["sample_complexity"] = sample_complexity(in, *target_excess_risk);
  }
  r["notes"] = {
      "excess_risk bounds population risk of the empirical minimiser minus that of the class optimum",
      "class cover keeps Gamma inside the logarithm",
      "model bias beta is not part of the bounded class"};
  return r;
}

}  // namespace sparxnet::bounds
