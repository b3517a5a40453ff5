#pragma once

// LabNet encoder + LabGNN classifier behind one parameter store.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "metalab/colorspace.hpp"
#include "metalab/episode.hpp"
#include "metalab/labgnn.hpp"
#include "metalab/labnet.hpp"
#include "metalab/losses.hpp"
#include "metalab/param_store.hpp"

namespace metalab {

struct ModelConfig {
  LabNetConfig net;
  std::size_t generations = 5;
  color::NormMode norm_mode = color::NormMode::kNormalized;
};

template <typename T>
class MetaLabModel {
 public:
  // Parameters are drawn from a generator seeded with `seed`: LabNet first,
  // then LabGNN.
  MetaLabModel(const ModelConfig& config, std::uint64_t seed);
  MetaLabModel(const MetaLabModel&) = delete;
  MetaLabModel& operator=(const MetaLabModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const LabNet<T>& encoder() const { return *net_; }
  const LabGnnParams<T>& graph() const { return gnn_; }

  // Colour transform of the episode images followed by both embedding tiers.
  GroupedEmbedding<T> embed(const EpisodeBatch& batch) const;
  // History of config().generations + 1 states.
  std::vector<DualGraphState<T>> forward(const EpisodeBatch& batch) const;

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  std::unique_ptr<LabNet<T>> net_;
  LabGnnParams<T> gnn_;
};

// Forward, total loss, backward and one optimizer update. Throws NumericError
// (with the loss components in the message) on a non-finite loss, before any
// parameter is touched.
template <typename T>
LossBreakdown meta_train_step(MetaLabModel<T>& model, const EpisodeBatch& batch,
                              const LossWeights& weights, Adam<T>& optimizer);

extern template class MetaLabModel<float>;
extern template class MetaLabModel<double>;

}  // namespace metalab
