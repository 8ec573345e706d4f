#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sparxnet/evalmetrics.hpp"

using namespace sparxnet;

namespace {

std::span<const double> view(const std::vector<double>& v) { return {v.data(), v.size()}; }

}  // namespace

TEST(Mse, Examples) {
  const std::vector<double> p{1, 2, 3}, t{2, 2, 5};
  EXPECT_EQ(mse(view(p), view(p)), 0.0);
  EXPECT_EQ(mse(view(std::vector<double>{0, 0}), view(std::vector<double>{1, -1})), 1.0);
  EXPECT_DOUBLE_EQ(mse(view(p), view(t)), 5.0 / 3.0);
  std::vector<double> ps = p, ts = t;
  for (auto& v : ps) v += 0.25;
  for (auto& v : ts) v += 0.25;
  EXPECT_DOUBLE_EQ(mse(view(ps), view(ts)), mse(view(p), view(t)));
  EXPECT_THROW(mse(view(std::vector<double>{}), view(std::vector<double>{})), InvalidArgument);
  EXPECT_THROW(mse(view(p), view(std::vector<double>{1})), DimensionError);
}

TEST(Auc, Examples) {
  const std::vector<double> labels{0, 0, 1, 1};
  EXPECT_EQ(auc(view(std::vector<double>{0.1, 0.2, 0.3, 0.4}), view(labels)), 1.0);
  EXPECT_EQ(auc(view(std::vector<double>{0.5, 0.5, 0.5, 0.5}), view(labels)), 0.5);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  EXPECT_EQ(auc(view(s), view(labels)), oracle::auc_pairs(s, labels));
  EXPECT_EQ(auc(view(s), view(labels)), 0.75);
  EXPECT_THROW(auc(view(s), view(std::vector<double>{1, 1, 1, 1})), InvalidArgument);
  EXPECT_THROW(auc(view(s), view(std::vector<double>{0, 2, 1, 1})), InvalidArgument);
}

TEST(Auc, MatchesPairOracleAndSymmetry) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> scores(n), labels(n), negated(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force ties.
      scores[i] = std::round(rng.normal() * 4.0) / 4.0;
      labels[i] = static_cast<double>(rng.below(2));
      negated[i] = -scores[i];
    }
    labels[0] = 0.0;
    labels[1] = 1.0;
    EXPECT_DOUBLE_EQ(auc(view(scores), view(labels)), oracle::auc_pairs(scores, labels));
    EXPECT_NEAR(auc(view(scores), view(labels)) + auc(view(negated), view(labels)), 1.0, 1e-12);
    // Monotone transforms (logit to probability) leave AUC unchanged.
    std::vector<double> prob(n);
    for (std::size_t i = 0; i < n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-scores[i]));
    EXPECT_EQ(auc(view(prob), view(labels)), auc(view(scores), view(labels)));
  }
}

TEST(Recovery, Examples) {
  const std::vector<std::size_t> truth{1, 2, 3, 4, 5};
  EXPECT_EQ(recovery_rate(truth, truth).rate, 1.0);
  EXPECT_EQ(recovery_rate(std::vector<std::size_t>{0, 6}, truth).rate, 0.0);
  const auto r = recovery_rate(std::vector<std::size_t>{1, 1, 3}, truth);
  EXPECT_DOUBLE_EQ(r.rate, 0.4);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(recovery_rate(std::vector<std::size_t>{3, 1, 1}, truth).rate, r.rate);
  EXPECT_THROW(recovery_rate(truth, std::vector<std::size_t>{}), InvalidArgument);
}

TEST(Summary, SampleStd) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(summarize(std::vector<double>{7}).std, 0.0);
  const std::vector<ResultRow> rows{{"sparxnet", "single_j2", "mse", {1, 2}, {0.5, 1.5}}};
  const auto j = results_json(rows);
  EXPECT_EQ(j[0].at("mean").get<double>(), 1.0);
  EXPECT_EQ(results_csv(rows).substr(0, 33), "model,dataset,metric,seeds,mean,s");
}
