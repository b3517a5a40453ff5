#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "metalab/episode.hpp"
#include "metalab/labgnn.hpp"
#include "metalab/tensor.hpp"

namespace metalab {

struct LossWeights {
  double lambda = 0.1;  // color-edge coefficient
  double beta = 0.1;    // node coefficient
  double gamma = 1.0;   // generation factor
  std::size_t loss_gens = 3;  // gate: generations 1..loss_gens contribute
  // When set, generation g is weighted gamma * g / loss_gens instead of gamma.
  bool gamma_ramp = false;

  double gamma_at(std::size_t generation) const;
  // Throws ConfigError on negative weights or loss_gens outside [1, generations].
  void validate(std::size_t generations) const;
};

struct LossBreakdown {
  // Index g - 1 holds generation g, for g = 1..loss_gens.
  std::vector<double> node;
  std::vector<double> light_edge;
  std::vector<double> color_edge;
  double total = 0.0;
  // Query accuracy of the final light edges.
  double accuracy = 0.0;

  double light_edge_sum() const;
  double color_edge_sum() const;
  double node_sum() const;
};

// Mean over queries and episodes of CE(-(L1 distance to supports) . H / N).
// v_light [B x T x d]; labels [B x T] in the episode layout of `spec`.
template <typename T>
Tensor<T> node_loss(const Tensor<T>& v_light, std::span<const int> labels,
                    const EpisodeSpec& spec);

// Mean over queries and episodes of CE(e[query, supports] . H).
template <typename T>
Tensor<T> edge_loss(const Tensor<T>& edges, std::span<const int> labels, const EpisodeSpec& spec);

// Class scores for every query, [B * KQ x K] with rows batch-major.
template <typename T>
Tensor<T> query_support_scores(const Tensor<T>& node_by_node, std::span<const int> labels,
                               const EpisodeSpec& spec);

template <typename T>
struct LossResult {
  Tensor<T> total;
  LossBreakdown breakdown;
};

// Sum over generations 1..loss_gens of gamma_g (L^L + lambda L^C + beta L^V).
// Later generations are not touched, so they receive no gradient.
template <typename T>
LossResult<T> total_loss(const std::vector<DualGraphState<T>>& history,
                         std::span<const int> labels, const EpisodeSpec& spec,
                         const LossWeights& weights);

// Fraction of queries whose predicted class (from `e_light`) matches the label.
template <typename T>
double query_accuracy(const Tensor<T>& e_light, std::span<const int> labels,
                      const EpisodeSpec& spec);

}  // namespace metalab
