#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metalab/errors.hpp"
#include "metalab/losses.hpp"
#include "metalab/ops.hpp"

using namespace metalab;
using D = Tensor<double>;

namespace {

// Labels for one K-way N-shot Q-query episode per batch entry, in node layout.
std::vector<int> layout_labels(const EpisodeSpec& s) {
  std::vector<int> out;
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t k = 0; k < s.ways; ++k)
      for (std::size_t n = 0; n < s.shots; ++n) out.push_back(static_cast<int>(k));
    for (std::size_t k = 0; k < s.ways; ++k)
      for (std::size_t q = 0; q < s.queries; ++q) out.push_back(static_cast<int>(k));
  }
  return out;
}

D random_tensor(Shape shape, std::uint64_t seed, double lo, double hi, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return D(std::move(shape), v, grad);
}

double ce(const std::vector<double>& scores, int target) {
  double m = scores[0];
  for (double s : scores) m = std::max(m, s);
  double z = 0;
  for (double s : scores) z += std::exp(s - m);
  return -(scores[target] - m - std::log(z));
}

// Scalar reference of the edge loss: mean CE of per-class summed query-support edges.
double edge_oracle(const D& e, const std::vector<int>& labels, const EpisodeSpec& s) {
  const std::size_t t = s.images();
  double total = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t q = s.supports(); q < t; ++q) {
      std::vector<double> scores(s.ways, 0.0);
      for (std::size_t j = 0; j < s.supports(); ++j) scores[labels[b * t + j]] += e.at((b * t + q) * t + j);
      total += ce(scores, labels[b * t + q]);
      ++n;
    }
  return total / static_cast<double>(n);
}

double node_oracle(const D& v, const std::vector<int>& labels, const EpisodeSpec& s) {
  const std::size_t t = s.images(), d = v.dim(2);
  double total = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t q = s.supports(); q < t; ++q) {
      std::vector<double> scores(s.ways, 0.0);
      for (std::size_t j = 0; j < s.supports(); ++j) {
        double dist = 0;
        for (std::size_t k = 0; k < d; ++k) dist += std::abs(v.at((b * t + q) * d + k) - v.at((b * t + j) * d + k));
        scores[labels[b * t + j]] -= dist / static_cast<double>(s.shots);
      }
      total += ce(scores, labels[b * t + q]);
      ++n;
    }
  return total / static_cast<double>(n);
}

std::vector<DualGraphState<double>> random_history(const EpisodeSpec& s, std::size_t gens, std::size_t d,
                                                   std::uint64_t seed, bool grad = false) {
  const std::size_t t = s.images();
  std::vector<DualGraphState<double>> h(gens + 1);
  for (std::size_t g = 0; g <= gens; ++g) {
    h[g].v_light = random_tensor({s.batch, t, d}, seed + 10 * g, -1, 1, grad);
    h[g].v_color = random_tensor({s.batch, t, d}, seed + 10 * g + 1, -1, 1, grad);
    h[g].e_light = random_tensor({s.batch, t, t}, seed + 10 * g + 2, 0, 1, grad);
    h[g].e_color = random_tensor({s.batch, t, t}, seed + 10 * g + 3, 0, 1, grad);
    h[g].generation = g;
  }
  return h;
}

}  // namespace

TEST(EdgeLoss, UniformEdgesGiveLogK) {
  const EpisodeSpec s{5, 1, 1, 1};
  const auto labels = layout_labels(s);
  EXPECT_NEAR(edge_loss(D::full({1, 10, 10}, 0.5), labels, s).item(), std::log(5.0), 1e-12);
}

TEST(EdgeLoss, OneHotEdgesGiveKnownValue) {
  // Scores (1, 0, 0, 0, 0): CE = ln(1 + 4 / e).
  const EpisodeSpec s{5, 1, 1, 1};
  const auto labels = layout_labels(s);
  std::vector<double> e(100, 0.0);
  for (std::size_t q = 0; q < 5; ++q) e[(5 + q) * 10 + q] = 1.0;
  const double got = edge_loss(D({1, 10, 10}, e), labels, s).item();
  EXPECT_NEAR(got, 0.9048, 5e-5);
  EXPECT_NEAR(got, std::log(1.0 + 4.0 / std::exp(1.0)), 1e-12);
}

TEST(EdgeLoss, MatchesScalarOracle) {
  const EpisodeSpec s{3, 2, 2, 2};
  const auto labels = layout_labels(s);
  const D e = random_tensor({2, 12, 12}, 3, 0, 1);
  EXPECT_NEAR(edge_loss(e, labels, s).item(), edge_oracle(e, labels, s), 1e-12);
}

TEST(NodeLoss, SeparatedEmbeddingsGiveSmallLoss) {
  // Each query sits on its support; every other support is 10 away in L1.
  const EpisodeSpec s{5, 1, 1, 1};
  const auto labels = layout_labels(s);
  std::vector<double> v(10 * 5, 0.0);
  for (std::size_t k = 0; k < 5; ++k) v[k * 5 + k] = v[(5 + k) * 5 + k] = 5.0;
  const double loss = node_loss(D({1, 10, 5}, v), labels, s).item();
  EXPECT_LT(loss, 0.01);
  EXPECT_NEAR(loss, std::log(1.0 + 4.0 * std::exp(-10.0)), 1e-12);
}

TEST(NodeLoss, MatchesScalarOracleWithShotAveraging) {
  const EpisodeSpec s{4, 3, 1, 2};
  const auto labels = layout_labels(s);
  const D v = random_tensor({2, 16, 6}, 4, -1, 1);
  EXPECT_NEAR(node_loss(v, labels, s).item(), node_oracle(v, labels, s), 1e-12);
}

TEST(TotalLoss, HandWeightedSum) {
  const EpisodeSpec s{3, 1, 2, 2};
  const auto labels = layout_labels(s);
  const auto h = random_history(s, 4, 5, 100);
  LossWeights w;
  w.lambda = 0.3;
  w.beta = 0.7;
  w.gamma = 1.5;
  w.loss_gens = 3;
  const auto r = total_loss(h, labels, s, w);
  double want = 0;
  for (std::size_t g = 1; g <= 3; ++g) {
    want += 1.5 * (edge_oracle(h[g].e_light, labels, s) + 0.3 * edge_oracle(h[g].e_color, labels, s) +
                   0.7 * node_oracle(h[g].v_light, labels, s));
    EXPECT_NEAR(r.breakdown.light_edge[g - 1], edge_oracle(h[g].e_light, labels, s), 1e-12);
  }
  EXPECT_NEAR(r.total.item(), want, 1e-10);
  EXPECT_NEAR(r.breakdown.total, want, 1e-10);
  EXPECT_EQ(r.breakdown.node.size(), 3u);
}

TEST(TotalLoss, LinearInEachWeight) {
  const EpisodeSpec s{3, 1, 1, 1};
  const auto labels = layout_labels(s);
  const auto h = random_history(s, 3, 4, 200);
  auto total = [&](double lambda, double beta, double gamma) {
    LossWeights w;
    w.lambda = lambda;
    w.beta = beta;
    w.gamma = gamma;
    w.loss_gens = 3;
    return total_loss(h, labels, s, w).total.item();
  };
  const double base = total(0.1, 0.1, 1.0);
  const auto r = total_loss(h, labels, s, LossWeights{0.1, 0.1, 1.0, 3});
  EXPECT_NEAR(total(0.6, 0.1, 1.0) - base, 0.5 * r.breakdown.color_edge_sum(), 1e-10);
  EXPECT_NEAR(total(0.1, 0.4, 1.0) - base, 0.3 * r.breakdown.node_sum(), 1e-10);
  EXPECT_NEAR(total(0.1, 0.1, 2.5), 2.5 * base, 1e-10);
  EXPECT_NEAR(total(0.0, 0.0, 1.0), r.breakdown.light_edge_sum(), 1e-10);
}

TEST(TotalLoss, GammaRampWeightsGenerations) {
  LossWeights w;
  w.gamma = 2.0;
  w.loss_gens = 4;
  w.gamma_ramp = true;
  EXPECT_DOUBLE_EQ(w.gamma_at(1), 0.5);
  EXPECT_DOUBLE_EQ(w.gamma_at(4), 2.0);
  w.gamma_ramp = false;
  EXPECT_DOUBLE_EQ(w.gamma_at(1), 2.0);
}

TEST(TotalLoss, LaterGenerationsAreGatedOut) {
  const EpisodeSpec s{5, 1, 1, 1};
  const auto labels = layout_labels(s);
  auto h = random_history(s, 5, 4, 300, true);
  const LossWeights w{0.1, 0.1, 1.0, 3};
  const auto r = total_loss(h, labels, s, w);
  r.total.backward();
  for (std::size_t g = 4; g <= 5; ++g)
    for (const D* t : {&h[g].v_light, &h[g].v_color, &h[g].e_light, &h[g].e_color})
      for (double x : t->grad()) ASSERT_EQ(x, 0.0) << "generation " << g;
  double seen = 0;
  for (double x : h[3].e_light.grad()) seen += std::abs(x);
  EXPECT_GT(seen, 0.0);

  // Replacing generations 4 and 5 leaves the loss unchanged.
  auto h2 = random_history(s, 5, 4, 300);
  const auto other = random_history(s, 5, 4, 999);
  h2[4] = other[4];
  h2[5] = other[5];
  const auto r2 = total_loss(h2, labels, s, w);
  EXPECT_EQ(r2.total.item(), r.total.item());
}

TEST(TotalLoss, RejectsBadConfiguration) {
  const EpisodeSpec s{5, 1, 1, 1};
  const auto labels = layout_labels(s);
  const auto h = random_history(s, 2, 4, 400);
  EXPECT_THROW(total_loss(h, labels, s, LossWeights{0.1, 0.1, 1.0, 3}), ConfigError);
  EXPECT_THROW(total_loss(h, labels, s, LossWeights{-0.1, 0.1, 1.0, 1}), ConfigError);
  EXPECT_THROW(total_loss(h, labels, s, LossWeights{0.1, 0.1, 1.0, 0}), ConfigError);
  const std::vector<int> short_labels(5, 0);
  EXPECT_THROW(edge_loss(h[1].e_light, short_labels, s), ShapeError);
}

TEST(QueryAccuracy, CountsCorrectQueries) {
  const EpisodeSpec s{2, 1, 2, 1};
  const auto labels = layout_labels(s);  // supports 0,1; queries 0,0,1,1
  std::vector<double> e(36, 0.0);
  auto set = [&](std::size_t i, std::size_t j, double v) { e[i * 6 + j] = v; };
  set(2, 0, 0.9);  // correct
  set(3, 1, 0.9);  // wrong
  set(4, 1, 0.8);  // correct
  set(5, 0, 0.1);  // wrong
  EXPECT_DOUBLE_EQ(query_accuracy(D({1, 6, 6}, e), labels, s), 0.5);
}
