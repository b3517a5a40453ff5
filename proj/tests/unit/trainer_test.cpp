#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>

#include "metalab/checkpoint.hpp"
#include "metalab/dataset.hpp"
#include "metalab/evaluate.hpp"
#include "metalab/trainer.hpp"

using namespace metalab;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.net = LabNetConfig{2, 8, 16};
  c.generations = 3;
  return c;
}

const Dataset& tiny_data() {
  static const Dataset ds = make_synthetic_dataset({20, 4, 16, 2});
  return ds;
}

TrainOptions tiny_options() {
  TrainOptions o;
  o.spec = EpisodeSpec{5, 1, 1, 2};
  o.weights.loss_gens = 3;
  o.iters = 4;
  o.val_every = 2;
  o.val_episodes = 3;
  o.seed = 8;
  return o;
}

std::vector<std::vector<float>> values(const ParamStore<float>& s) {
  std::vector<std::vector<float>> out;
  for (const auto& n : s.names()) out.emplace_back(s.get(n).data().begin(), s.get(n).data().end());
  return out;
}

}  // namespace

TEST(MetaTrainStep, ZeroLearningRateChangesNothing) {
  MetaLabModel<float> model(tiny_model(), 1);
  const auto before = values(model.params());
  AdamConfig cfg;
  cfg.lr = 0.0;
  Adam<float> adam(model.params(), cfg);
  auto rng = stream_rng(1, 0);
  const auto batch = sample_episode(tiny_data().train, EpisodeSpec{5, 1, 1, 2}, rng);
  const auto loss = meta_train_step(model, batch, LossWeights{}, adam);
  EXPECT_TRUE(std::isfinite(loss.total));
  EXPECT_EQ(values(model.params()), before);
}

TEST(MetaTrainStep, OverfitsOneBatch) {
  MetaLabModel<float> model(tiny_model(), 2);
  AdamConfig cfg;
  cfg.lr = 3e-3;
  Adam<float> adam(model.params(), cfg);
  auto rng = stream_rng(2, 0);
  const auto batch = sample_episode(tiny_data().train, EpisodeSpec{5, 1, 1, 2}, rng);
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i) losses.push_back(meta_train_step(model, batch, LossWeights{}, adam).total);
  // Bounded edge scores keep the 3-generation loss above about 3, so ask for a 20% drop.
  EXPECT_LT(losses.back(), 0.8 * losses.front());
  for (std::size_t i = 5; i < losses.size(); i += 5) EXPECT_LT(losses[i], losses[i - 5]) << i;
  double late = 0, early = 0;
  for (int i = 0; i < 10; ++i) {
    early += losses[i];
    late += losses[40 + i];
  }
  EXPECT_LT(late, early);
}

TEST(Train, MetricsSchemaAndValidationCadence) {
  MetaLabModel<float> model(tiny_model(), 3);
  std::vector<MetricsRecord> recs;
  const auto summary = train(model, tiny_data(), tiny_options(), [&](const MetricsRecord& r) { recs.push_back(r); });
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(summary.iterations, 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto j = nlohmann::json::parse(recs[i].to_json());
    for (const char* key : {"iter", "loss_total", "loss_light_edge", "loss_color_edge", "loss_node", "val_acc", "ci95",
                            "wall_ms"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["iter"].get<std::size_t>(), i + 1);
    EXPECT_EQ(j["val_acc"].is_null(), (i + 1) % 2 != 0);
    EXPECT_NEAR(j["loss_total"].get<double>(),
                recs[i].loss_light_edge + 0.1 * recs[i].loss_color_edge + 0.1 * recs[i].loss_node, 1e-4);
  }
  EXPECT_GE(summary.best_val_acc, 0.0);
  EXPECT_TRUE(summary.best_iter == 2 || summary.best_iter == 4);
}

TEST(Train, DeterministicApartFromWallClock) {
  std::vector<std::string> runs[2];
  for (auto& out : runs) {
    MetaLabModel<float> model(tiny_model(), 4);
    train(model, tiny_data(), tiny_options(), [&](const MetricsRecord& r) {
      MetricsRecord copy = r;
      copy.wall_ms = 0;
      out.push_back(copy.to_json());
    });
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Train, EarlyStopAndCheckpoint) {
  const auto path = std::filesystem::temp_directory_path() / "metalab_train_test.ckpt";
  std::filesystem::remove(path);
  MetaLabModel<float> model(tiny_model(), 5);
  TrainOptions o = tiny_options();
  o.early_stop_acc = 1e-9;  // any validation run stops training
  o.checkpoint = path;
  std::size_t calls = 0;
  const auto s = train(model, tiny_data(), o, [&](const MetricsRecord&) { ++calls; });
  EXPECT_TRUE(s.stopped_early);
  EXPECT_EQ(calls, 2u);
  ASSERT_TRUE(std::filesystem::exists(path));

  // The checkpoint holds the restored best parameters.
  MetaLabModel<float> other(tiny_model(), 99);
  load_checkpoint(path, other.params());
  EXPECT_EQ(values(other.params()), values(model.params()));
  std::filesystem::remove(path);
}

TEST(Train, FinalStateSavedWithoutValidation) {
  const auto path = std::filesystem::temp_directory_path() / "metalab_train_final.ckpt";
  std::filesystem::remove(path);
  MetaLabModel<float> model(tiny_model(), 6);
  TrainOptions o = tiny_options();
  o.val_every = 0;
  o.iters = 2;
  o.checkpoint = path;
  const auto s = train(model, tiny_data(), o);
  EXPECT_LT(s.best_val_acc, 0.0);
  MetaLabModel<float> other(tiny_model(), 98);
  load_checkpoint(path, other.params());
  EXPECT_EQ(values(other.params()), values(model.params()));
  std::filesystem::remove(path);
}
