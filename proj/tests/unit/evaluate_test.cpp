#include <gtest/gtest.h>

#include <cmath>

#include "metalab/dataset.hpp"
#include "metalab/errors.hpp"
#include "metalab/evaluate.hpp"

using namespace metalab;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.net = LabNetConfig{2, 8, 16};
  c.generations = 2;
  return c;
}

const Dataset& tiny_data() {
  static const Dataset ds = make_synthetic_dataset({20, 4, 16, 2});
  return ds;
}

}  // namespace

TEST(Summarize, TwoEpisodes) {
  const std::vector<double> acc{1.0, 0.5};
  const auto r = summarize_accuracies(acc);
  EXPECT_DOUBLE_EQ(r.mean, 0.75);
  EXPECT_NEAR(r.ci95, 0.490, 5e-4);
  EXPECT_NEAR(r.ci95, 1.96 * std::sqrt(0.125) / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(r.episodes, 2u);
}

TEST(Summarize, ConstantAccuracyHasZeroInterval) {
  const std::vector<double> acc(7, 1.0);
  const auto r = summarize_accuracies(acc);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.ci95, 0.0);
  const std::vector<double> one{1.0};
  EXPECT_THROW(summarize_accuracies(one), PreconditionError);
}

TEST(Evaluate, DeterministicAndWorkerInvariant) {
  const MetaLabModel<float> model(tiny_model(), 3);
  const EpisodeSpec spec{5, 1, 1, 1};
  const auto a = episode_accuracies(model, tiny_data().test, spec, 6, 11, 1);
  const auto b = episode_accuracies(model, tiny_data().test, spec, 6, 11, 1);
  const auto c = episode_accuracies(model, tiny_data().test, spec, 6, 11, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  for (double x : a) {
    // Five queries per episode.
    EXPECT_NEAR(x * 5.0, std::round(x * 5.0), 1e-12);
  }
  const auto r = evaluate(model, tiny_data().test, spec, 6, 11, 2);
  EXPECT_EQ(r.episodes, 6u);
  EXPECT_DOUBLE_EQ(r.mean, summarize_accuracies(a).mean);
}

TEST(Evaluate, EpisodeStreamsDoNotDependOnEpisodeCount) {
  const MetaLabModel<float> model(tiny_model(), 4);
  const EpisodeSpec spec{5, 1, 1, 1};
  const auto few = episode_accuracies(model, tiny_data().val, spec, 3, 5);
  const auto more = episode_accuracies(model, tiny_data().val, spec, 5, 5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(few[i], more[i]);
}

TEST(Evaluate, RejectsImpossibleEpisodes) {
  const MetaLabModel<float> model(tiny_model(), 5);
  EXPECT_THROW(evaluate(model, tiny_data().test, EpisodeSpec{6, 1, 1, 1}, 2, 0), ConfigError);
}
