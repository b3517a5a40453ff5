#pragma once

// Dual-graph classifier. A light graph and a color graph share the node set of
// one episode; each generation runs E^L -> V^C -> E^C -> V^L and the final
// light edges score the queries against the labelled supports.

#include <cstddef>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metalab/labnet.hpp"
#include "metalab/param_store.hpp"
#include "metalab/tensor.hpp"

namespace metalab {

template <typename T>
struct DualGraphState {
  Tensor<T> v_light;  // [B x T x d]
  Tensor<T> v_color;  // [B x T x d]
  Tensor<T> e_light;  // [B x T x T]
  Tensor<T> e_color;  // [B x T x T]
  std::size_t generation = 0;
};

// Interacter: |v_i - v_j| -> affine d->d -> BN over all pairs -> ReLU -> affine d->1 -> sigmoid.
template <typename T>
struct SimilarityParams {
  Tensor<T> fc1_w, fc1_b, bn_gamma, bn_beta, fc2_w, fc2_b;
};

// [aggregated ; previous] (2d) -> affine -> ReLU -> affine (d).
template <typename T>
struct AggregatorParams {
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct LabGnnParams {
  SimilarityParams<T> sim_light;  // F_LS
  SimilarityParams<T> sim_color;  // F_CS
  AggregatorParams<T> layering;   // F_CL
  AggregatorParams<T> gradient;   // F_LG
};

// Registers "labgnn.sim_{light,color}.{fc1,bn,fc2}.*" and "labgnn.{cl,lg}.{fc1,fc2}.*"
// with fan-in uniform weights and BN gamma = 1, beta = 0.
template <typename T>
LabGnnParams<T> register_labgnn(std::size_t embed_dim, ParamStore<T>& store, std::mt19937_64& rng);

// V [B x T x d] -> S [B x T x T], symmetric, diagonal 1, off-diagonal in (0,1).
template <typename T>
Tensor<T> similarity(const Tensor<T>& v, const SimilarityParams<T>& params);

template <typename T>
void init_nodes(const GroupedEmbedding<T>& emb, DualGraphState<T>& state);
template <typename T>
void init_edges(const GroupedEmbedding<T>& emb, const LabGnnParams<T>& params,
                DualGraphState<T>& state);

// e_new = diag1(similarity(v) * e_prev).
template <typename T>
Tensor<T> update_edges(const Tensor<T>& v, const Tensor<T>& e_prev,
                       const SimilarityParams<T>& params);
// v_new = MLP([rownorm(diag1(e)) . v_prev ; v_prev]).
template <typename T>
Tensor<T> aggregate(const Tensor<T>& e, const Tensor<T>& v_prev, const AggregatorParams<T>& params);

template <typename T>
Tensor<T> update_light_edges(const DualGraphState<T>& prev, const LabGnnParams<T>& params) {
  return update_edges(prev.v_light, prev.e_light, params.sim_light);
}
template <typename T>
Tensor<T> color_layering(const Tensor<T>& e_light, const Tensor<T>& v_color_prev,
                         const LabGnnParams<T>& params) {
  return aggregate(e_light, v_color_prev, params.layering);
}
template <typename T>
Tensor<T> update_color_edges(const Tensor<T>& v_color, const Tensor<T>& e_color_prev,
                             const LabGnnParams<T>& params) {
  return update_edges(v_color, e_color_prev, params.sim_color);
}
template <typename T>
Tensor<T> light_gradient(const Tensor<T>& e_color, const Tensor<T>& v_light_prev,
                         const LabGnnParams<T>& params) {
  return aggregate(e_color, v_light_prev, params.gradient);
}

// One generation of the E^L -> V^C -> E^C -> V^L cycle.
template <typename T>
DualGraphState<T> step_generation(const DualGraphState<T>& prev, const LabGnnParams<T>& params);

// History of length generations + 1; entry 0 is the initial state.
template <typename T>
std::vector<DualGraphState<T>> run_generations(const GroupedEmbedding<T>& emb,
                                               std::size_t generations,
                                               const LabGnnParams<T>& params);

struct Prediction {
  std::size_t batch = 0;
  std::size_t queries = 0;
  std::size_t classes = 0;
  std::vector<double> scores;  // [batch x queries x classes]
  std::vector<int> labels;     // [batch x queries]
};

// e_light [B x T x T]; support_labels [B x S] for nodes [0, S); queries are
// nodes [S, T). score[q][c] = sum_j e[q][j] [y_j == c]; ties go to the lowest class.
template <typename T>
Prediction predict(const Tensor<T>& e_light, std::span<const int> support_labels,
                   std::size_t classes);

// One JSON object per (generation, episode) with both edge matrices. Throws
// PreconditionError when T > 10.
template <typename T>
void write_trace(std::ostream& out, const std::vector<DualGraphState<T>>& history);

}  // namespace metalab
