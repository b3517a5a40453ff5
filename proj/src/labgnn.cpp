#include "metalab/labgnn.hpp"

#include <json.hpp>

#include "metalab/errors.hpp"
#include "metalab/ops.hpp"

namespace metalab {
namespace {

template <typename T>
SimilarityParams<T> register_similarity(const std::string& prefix, std::size_t d,
                                        ParamStore<T>& store, std::mt19937_64& rng) {
  SimilarityParams<T> p;
  p.fc1_w = store.add(prefix + ".fc1.w", {d, d}, uniform_fan_in<T>(d * d, d, rng));
  p.fc1_b = store.add(prefix + ".fc1.b", {d}, uniform_fan_in<T>(d, d, rng));
  p.bn_gamma = store.add(prefix + ".bn.gamma", {d}, std::vector<T>(d, T(1)));
  p.bn_beta = store.add(prefix + ".bn.beta", {d}, std::vector<T>(d, T(0)));
  p.fc2_w = store.add(prefix + ".fc2.w", {1, d}, uniform_fan_in<T>(d, d, rng));
  p.fc2_b = store.add(prefix + ".fc2.b", {1}, uniform_fan_in<T>(1, d, rng));
  return p;
}

template <typename T>
AggregatorParams<T> register_aggregator(const std::string& prefix, std::size_t d,
                                        ParamStore<T>& store, std::mt19937_64& rng) {
  AggregatorParams<T> p;
  p.fc1_w = store.add(prefix + ".fc1.w", {d, 2 * d}, uniform_fan_in<T>(2 * d * d, 2 * d, rng));
  p.fc1_b = store.add(prefix + ".fc1.b", {d}, uniform_fan_in<T>(d, 2 * d, rng));
  p.fc2_w = store.add(prefix + ".fc2.w", {d, d}, uniform_fan_in<T>(d * d, d, rng));
  p.fc2_b = store.add(prefix + ".fc2.b", {d}, uniform_fan_in<T>(d, d, rng));
  return p;
}

template <typename T>
void check_nodes(const Tensor<T>& v, const char* what) {
  if (v.rank() != 3) throw ShapeError(std::string(what) + ": nodes must be [B x T x d], got " +
                                      shape_str(v.shape()));
}

template <typename T>
void check_edges(const Tensor<T>& e, const Tensor<T>& v, const char* what) {
  check_nodes(v, what);
  if (e.rank() != 3 || e.dim(0) != v.dim(0) || e.dim(1) != v.dim(1) || e.dim(2) != v.dim(1)) {
    throw ShapeError(std::string(what) + ": edges " + shape_str(e.shape()) +
                     " do not match nodes " + shape_str(v.shape()));
  }
}

}  // namespace

template <typename T>
LabGnnParams<T> register_labgnn(std::size_t embed_dim, ParamStore<T>& store,
                                std::mt19937_64& rng) {
  if (embed_dim == 0) throw ConfigError("LabGNN: embed_dim must be positive");
  LabGnnParams<T> p;
  p.sim_light = register_similarity("labgnn.sim_light", embed_dim, store, rng);
  p.sim_color = register_similarity("labgnn.sim_color", embed_dim, store, rng);
  p.layering = register_aggregator("labgnn.cl", embed_dim, store, rng);
  p.gradient = register_aggregator("labgnn.lg", embed_dim, store, rng);
  return p;
}

template <typename T>
Tensor<T> similarity(const Tensor<T>& v, const SimilarityParams<T>& params) {
  check_nodes(v, "similarity");
  const std::size_t batch = v.dim(0), n = v.dim(1), d = v.dim(2);
  if (n == 1) return Tensor<T>::full({batch, 1, 1}, T(1));
  const std::size_t pairs = batch * n * (n - 1) / 2;
  Tensor<T> h = linear(pair_abs_diff(v), params.fc1_w, params.fc1_b);
  // A single pair standardizes to zero, leaving only the BN shift.
  h = pairs >= 2 ? batch_norm(h, params.bn_gamma, params.bn_beta)
                 : reshape(params.bn_beta, {1, d});
  const Tensor<T> s = sigmoid(linear(relu(h), params.fc2_w, params.fc2_b));
  return pairs_to_symmetric(s, batch, n, T(1));
}

template <typename T>
void init_nodes(const GroupedEmbedding<T>& emb, DualGraphState<T>& state) {
  state.v_light = emb.ls_light;
  state.v_color = emb.ls_color;
}

template <typename T>
void init_edges(const GroupedEmbedding<T>& emb, const LabGnnParams<T>& params,
                DualGraphState<T>& state) {
  state.e_light = similarity(emb.pe_light, params.sim_light);
  state.e_color = similarity(emb.pe_color, params.sim_color);
}

template <typename T>
Tensor<T> update_edges(const Tensor<T>& v, const Tensor<T>& e_prev,
                       const SimilarityParams<T>& params) {
  check_edges(e_prev, v, "update_edges");
  return set_diagonal(mul(similarity(v, params), e_prev), T(1));
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& e, const Tensor<T>& v_prev,
                    const AggregatorParams<T>& params) {
  check_edges(e, v_prev, "aggregate");
  const std::size_t batch = v_prev.dim(0), n = v_prev.dim(1), d = v_prev.dim(2);
  const Tensor<T> weights = row_normalize(set_diagonal(e, T(1)));
  const Tensor<T> gathered = bmm(weights, v_prev);
  Tensor<T> h = reshape(concat<T>({gathered, v_prev}, 2), {batch * n, 2 * d});
  h = relu(linear(h, params.fc1_w, params.fc1_b));
  h = linear(h, params.fc2_w, params.fc2_b);
  return reshape(h, {batch, n, d});
}

template <typename T>
DualGraphState<T> step_generation(const DualGraphState<T>& prev, const LabGnnParams<T>& params) {
  DualGraphState<T> next;
  next.generation = prev.generation + 1;
  next.e_light = update_light_edges(prev, params);
  next.v_color = color_layering(next.e_light, prev.v_color, params);
  next.e_color = update_color_edges(next.v_color, prev.e_color, params);
  next.v_light = light_gradient(next.e_color, prev.v_light, params);
  return next;
}

template <typename T>
std::vector<DualGraphState<T>> run_generations(const GroupedEmbedding<T>& emb,
                                               std::size_t generations,
                                               const LabGnnParams<T>& params) {
  if (generations < 1) throw ConfigError("run_generations: generations must be >= 1");
  std::vector<DualGraphState<T>> history(1);
  init_nodes(emb, history[0]);
  init_edges(emb, params, history[0]);
  check_edges(history[0].e_light, history[0].v_light, "run_generations");
  for (std::size_t g = 1; g <= generations; ++g) {
    history.push_back(step_generation(history.back(), params));
  }
  return history;
}

template <typename T>
Prediction predict(const Tensor<T>& e_light, std::span<const int> support_labels,
                   std::size_t classes) {
  if (e_light.rank() != 3 || e_light.dim(1) != e_light.dim(2)) {
    throw ShapeError("predict: edges must be [B x T x T], got " + shape_str(e_light.shape()));
  }
  const std::size_t batch = e_light.dim(0), n = e_light.dim(1);
  if (batch == 0 || support_labels.size() % batch != 0) {
    throw ShapeError("predict: support labels do not split over the batch");
  }
  const std::size_t supports = support_labels.size() / batch;
  if (supports >= n) throw ShapeError("predict: episode has no query nodes");
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw PreconditionError("predict: support label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }
  Prediction p;
  p.batch = batch;
  p.queries = n - supports;
  p.classes = classes;
  p.scores.assign(batch * p.queries * classes, 0.0);
  p.labels.assign(batch * p.queries, 0);
  const auto e = e_light.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < p.queries; ++q) {
      double* row = &p.scores[(b * p.queries + q) * classes];
      const std::size_t i = supports + q;
      for (std::size_t j = 0; j < supports; ++j) {
        row[support_labels[b * supports + j]] += static_cast<double>(e[(b * n + i) * n + j]);
      }
      int best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (row[c] > row[best]) best = static_cast<int>(c);
      p.labels[b * p.queries + q] = best;
    }
  }
  return p;
}

template <typename T>
void write_trace(std::ostream& out, const std::vector<DualGraphState<T>>& history) {
  for (const auto& state : history) {
    const std::size_t batch = state.e_light.dim(0), n = state.e_light.dim(1);
    if (n > 10) throw PreconditionError("write_trace: only episodes with T <= 10 are traced");
    for (std::size_t b = 0; b < batch; ++b) {
      auto matrix = [&](const Tensor<T>& e) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
          nlohmann::json row = nlohmann::json::array();
          for (std::size_t j = 0; j < n; ++j) row.push_back(e.at((b * n + i) * n + j));
          rows.push_back(std::move(row));
        }
        return rows;
      };
      nlohmann::json line{{"generation", state.generation},
                          {"episode", b},
                          {"e_light", matrix(state.e_light)},
                          {"e_color", matrix(state.e_color)}};
      out << line.dump() << '\n';
    }
  }
}

#define METALAB_INSTANTIATE_LABGNN(T)                                                           \
  template LabGnnParams<T> register_labgnn(std::size_t, ParamStore<T>&, std::mt19937_64&);      \
  template Tensor<T> similarity(const Tensor<T>&, const SimilarityParams<T>&);                  \
  template void init_nodes(const GroupedEmbedding<T>&, DualGraphState<T>&);                     \
  template void init_edges(const GroupedEmbedding<T>&, const LabGnnParams<T>&,                  \
                           DualGraphState<T>&);                                                 \
  template Tensor<T> update_edges(const Tensor<T>&, const Tensor<T>&, const SimilarityParams<T>&); \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, const AggregatorParams<T>&); \
  template DualGraphState<T> step_generation(const DualGraphState<T>&, const LabGnnParams<T>&); \
  template std::vector<DualGraphState<T>> run_generations(const GroupedEmbedding<T>&,           \
                                                          std::size_t, const LabGnnParams<T>&); \
  template Prediction predict(const Tensor<T>&, std::span<const int>, std::size_t);             \
  template void write_trace(std::ostream&, const std::vector<DualGraphState<T>>&);

METALAB_INSTANTIATE_LABGNN(float)
METALAB_INSTANTIATE_LABGNN(double)

#undef METALAB_INSTANTIATE_LABGNN

}  // namespace metalab
