#include "metalab/model.hpp"

#include <cmath>
#include <sstream>

#include "metalab/errors.hpp"

namespace metalab {

template <typename T>
MetaLabModel<T>::MetaLabModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.generations < 1) throw ConfigError("model needs generations >= 1");
  std::mt19937_64 rng(seed);
  net_ = std::make_unique<LabNet<T>>(config_.net, store_, rng);
  gnn_ = register_labgnn<T>(config_.net.embed_dim, store_, rng);
}

template <typename T>
GroupedEmbedding<T> MetaLabModel<T>::embed(const EpisodeBatch& batch) const {
  const color::LlabBatch llab = color::rgb_to_llab(batch.images, config_.norm_mode);
  return net_->forward(llab_to_tensor<T>(llab), batch.spec.batch, batch.spec.images());
}

template <typename T>
std::vector<DualGraphState<T>> MetaLabModel<T>::forward(const EpisodeBatch& batch) const {
  return run_generations(embed(batch), config_.generations, gnn_);
}

template <typename T>
LossBreakdown meta_train_step(MetaLabModel<T>& model, const EpisodeBatch& batch,
                              const LossWeights& weights, Adam<T>& optimizer) {
  model.params().zero_grad();
  const auto history = model.forward(batch);
  LossResult<T> loss = total_loss(history, batch.labels, batch.spec, weights);
  if (!std::isfinite(loss.breakdown.total)) {
    std::ostringstream msg;
    msg << "non-finite training loss at optimizer step " << optimizer.step_count() + 1
        << ": total=" << loss.breakdown.total;
    for (std::size_t g = 0; g < loss.breakdown.node.size(); ++g) {
      msg << " | gen " << g + 1 << " light_edge=" << loss.breakdown.light_edge[g]
          << " color_edge=" << loss.breakdown.color_edge[g] << " node=" << loss.breakdown.node[g];
    }
    throw NumericError(msg.str());
  }
  loss.total.backward();
  optimizer.step();
  return loss.breakdown;
}

template class MetaLabModel<float>;
template class MetaLabModel<double>;
template LossBreakdown meta_train_step(MetaLabModel<float>&, const EpisodeBatch&,
                                       const LossWeights&, Adam<float>&);
template LossBreakdown meta_train_step(MetaLabModel<double>&, const EpisodeBatch&,
                                       const LossWeights&, Adam<double>&);

}  // namespace metalab
