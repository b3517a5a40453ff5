#include "metalab/losses.hpp"

#include <cmath>
#include <numeric>

#include "metalab/errors.hpp"
#include "metalab/ops.hpp"

namespace metalab {
namespace {

void check_labels(std::span<const int> labels, const EpisodeSpec& spec) {
  if (labels.size() != spec.batch * spec.images()) {
    throw ShapeError("loss: expected " + std::to_string(spec.batch * spec.images()) +
                     " labels, got " + std::to_string(labels.size()));
  }
}

std::vector<int> query_labels(std::span<const int> labels, const EpisodeSpec& spec) {
  std::vector<int> out;
  const std::size_t t = spec.images();
  for (std::size_t b = 0; b < spec.batch; ++b)
    for (std::size_t i = spec.supports(); i < t; ++i) out.push_back(labels[b * t + i]);
  return out;
}

}  // namespace

double LossWeights::gamma_at(std::size_t generation) const {
  if (!gamma_ramp) return gamma;
  return gamma * static_cast<double>(generation) / static_cast<double>(loss_gens);
}

void LossWeights::validate(std::size_t generations) const {
  if (lambda < 0 || beta < 0 || gamma < 0) throw ConfigError("loss weights must be >= 0");
  if (loss_gens < 1 || loss_gens > generations) {
    throw ConfigError("loss_gens " + std::to_string(loss_gens) + " must lie in [1, generations=" +
                      std::to_string(generations) + "]");
  }
}

double LossBreakdown::light_edge_sum() const {
  return std::accumulate(light_edge.begin(), light_edge.end(), 0.0);
}
double LossBreakdown::color_edge_sum() const {
  return std::accumulate(color_edge.begin(), color_edge.end(), 0.0);
}
double LossBreakdown::node_sum() const { return std::accumulate(node.begin(), node.end(), 0.0); }

template <typename T>
Tensor<T> query_support_scores(const Tensor<T>& node_by_node, std::span<const int> labels,
                               const EpisodeSpec& spec) {
  check_labels(labels, spec);
  const std::size_t t = spec.images(), s = spec.supports(), k = spec.ways;
  if (node_by_node.shape() != Shape{spec.batch, t, t}) {
    throw ShapeError("loss: node matrix " + shape_str(node_by_node.shape()) +
                     " does not match the episode layout");
  }
  std::vector<int> support;
  for (std::size_t b = 0; b < spec.batch; ++b)
    for (std::size_t i = 0; i < s; ++i) support.push_back(labels[b * t + i]);
  const Tensor<T> h = reshape(one_hot<T>(support, k), {spec.batch, s, k});
  const Tensor<T> block = narrow(narrow(node_by_node, 1, s, t - s), 2, 0, s);
  return reshape(bmm(block, h), {spec.batch * (t - s), k});
}

template <typename T>
Tensor<T> node_loss(const Tensor<T>& v_light, std::span<const int> labels,
                    const EpisodeSpec& spec) {
  const Tensor<T> scores = query_support_scores(pairwise_l1(v_light), labels, spec);
  const auto targets = query_labels(labels, spec);
  return softmax_cross_entropy(scale(scores, T(-1) / static_cast<T>(spec.shots)), targets);
}

template <typename T>
Tensor<T> edge_loss(const Tensor<T>& edges, std::span<const int> labels, const EpisodeSpec& spec) {
  const auto targets = query_labels(labels, spec);
  return softmax_cross_entropy(query_support_scores(edges, labels, spec), targets);
}

template <typename T>
LossResult<T> total_loss(const std::vector<DualGraphState<T>>& history,
                         std::span<const int> labels, const EpisodeSpec& spec,
                         const LossWeights& weights) {
  if (history.size() < 2) throw ConfigError("total_loss: history has no generations");
  weights.validate(history.size() - 1);
  LossResult<T> result;
  for (std::size_t g = 1; g <= weights.loss_gens; ++g) {
    const auto& state = history[g];
    const Tensor<T> l_light = edge_loss(state.e_light, labels, spec);
    const Tensor<T> l_color = edge_loss(state.e_color, labels, spec);
    const Tensor<T> l_node = node_loss(state.v_light, labels, spec);
    const T gamma = static_cast<T>(weights.gamma_at(g));
    Tensor<T> term = add(add(l_light, scale(l_color, static_cast<T>(weights.lambda))),
                         scale(l_node, static_cast<T>(weights.beta)));
    term = scale(term, gamma);
    result.total = result.total.defined() ? add(result.total, term) : term;
    result.breakdown.light_edge.push_back(static_cast<double>(l_light.item()));
    result.breakdown.color_edge.push_back(static_cast<double>(l_color.item()));
    result.breakdown.node.push_back(static_cast<double>(l_node.item()));
  }
  result.breakdown.total = static_cast<double>(result.total.item());

  result.breakdown.accuracy = query_accuracy(history.back().e_light, labels, spec);
  return result;
}

template <typename T>
double query_accuracy(const Tensor<T>& e_light, std::span<const int> labels,
                      const EpisodeSpec& spec) {
  check_labels(labels, spec);
  const std::size_t t = spec.images();
  std::vector<int> support;
  for (std::size_t b = 0; b < spec.batch; ++b)
    for (std::size_t i = 0; i < spec.supports(); ++i) support.push_back(labels[b * t + i]);
  const Prediction pred = predict(e_light, support, spec.ways);
  const auto targets = query_labels(labels, spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) correct += pred.labels[i] == targets[i];
  return static_cast<double>(correct) / static_cast<double>(targets.size());
}

#define METALAB_INSTANTIATE_LOSSES(T)                                                          \
  template Tensor<T> query_support_scores(const Tensor<T>&, std::span<const int>,              \
                                          const EpisodeSpec&);                                 \
  template Tensor<T> node_loss(const Tensor<T>&, std::span<const int>, const EpisodeSpec&);    \
  template Tensor<T> edge_loss(const Tensor<T>&, std::span<const int>, const EpisodeSpec&);    \
  template LossResult<T> total_loss(const std::vector<DualGraphState<T>>&,                     \
                                    std::span<const int>, const EpisodeSpec&,                  \
                                    const LossWeights&);                                       \
  template double query_accuracy(const Tensor<T>&, std::span<const int>, const EpisodeSpec&);

METALAB_INSTANTIATE_LOSSES(float)
METALAB_INSTANTIATE_LOSSES(double)

#undef METALAB_INSTANTIATE_LOSSES

}  // namespace metalab
