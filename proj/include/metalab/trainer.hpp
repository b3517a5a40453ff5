#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "metalab/episode.hpp"
#include "metalab/evaluate.hpp"
#include "metalab/losses.hpp"
#include "metalab/model.hpp"
#include "metalab/param_store.hpp"

namespace metalab {

struct TrainOptions {
  EpisodeSpec spec;
  LossWeights weights;
  AdamConfig adam;
  std::size_t iters = 500;
  std::size_t val_every = 50;  // 0 disables validation
  std::size_t val_episodes = 100;
  std::uint64_t seed = 0;
  // Stop once validation accuracy reaches this value; 0 disables.
  double early_stop_acc = 0.0;
  // Best-validation checkpoint (parameters + optimizer state), or the final
  // state when validation never ran; empty disables.
  std::filesystem::path checkpoint;
  std::size_t workers = 1;
};

struct MetricsRecord {
  std::size_t iter = 0;
  double loss_total = 0.0;
  double loss_light_edge = 0.0;  // summed over gated generations
  double loss_color_edge = 0.0;
  double loss_node = 0.0;
  std::optional<double> val_acc;  // only on validation iterations
  std::optional<double> ci95;
  double wall_ms = 0.0;  // since training started

  // One JSON object; absent validation values are null.
  std::string to_json() const;
};

struct TrainSummary {
  std::size_t iterations = 0;
  double best_val_acc = -1.0;
  std::size_t best_iter = 0;
  bool stopped_early = false;
};

// Runs up to options.iters meta-train steps with periodic validation on
// dataset.val. When validation ran, the best-validation parameters are
// restored into `model` before returning.
template <typename T>
TrainSummary train(MetaLabModel<T>& model, const Dataset& dataset, const TrainOptions& options,
                   const std::function<void(const MetricsRecord&)>& sink = {});

}  // namespace metalab
