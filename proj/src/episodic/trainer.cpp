#include "metalab/trainer.hpp"

#include <chrono>
#include <vector>

#include <json.hpp>

#include "metalab/checkpoint.hpp"

namespace metalab {
namespace {

// Validation episodes reuse one stream so successive validations are comparable.
constexpr std::uint64_t kValidationStream = 0x5eedULL;

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamStore<T>& store) {
  std::vector<std::vector<T>> out;
  for (const auto& name : store.names()) {
    const auto d = store.get(name).data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

template <typename T>
void restore(ParamStore<T>& store, const std::vector<std::vector<T>>& values) {
  std::size_t i = 0;
  for (const auto& name : store.names()) {
    auto d = store.get(name).mutable_data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
    ++i;
  }
}

}  // namespace

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["loss_total"] = loss_total;
  j["loss_light_edge"] = loss_light_edge;
  j["loss_color_edge"] = loss_color_edge;
  j["loss_node"] = loss_node;
  j["val_acc"] = val_acc ? nlohmann::ordered_json(*val_acc) : nlohmann::ordered_json(nullptr);
  j["ci95"] = ci95 ? nlohmann::ordered_json(*ci95) : nlohmann::ordered_json(nullptr);
  j["wall_ms"] = wall_ms;
  return j.dump();
}

template <typename T>
TrainSummary train(MetaLabModel<T>& model, const Dataset& dataset, const TrainOptions& options,
                   const std::function<void(const MetricsRecord&)>& sink) {
  options.spec.validate();
  options.weights.validate(model.config().generations);
  Adam<T> optimizer(model.params(), options.adam);
  auto rng = stream_rng(options.seed, 0);
  const auto start = std::chrono::steady_clock::now();

  TrainSummary summary;
  std::vector<std::vector<T>> best;
  for (std::size_t it = 1; it <= options.iters; ++it) {
    const EpisodeBatch batch = sample_episode(dataset.train, options.spec, rng);
    const LossBreakdown loss = meta_train_step(model, batch, options.weights, optimizer);
    summary.iterations = it;

    MetricsRecord rec;
    rec.iter = it;
    rec.loss_total = loss.total;
    rec.loss_light_edge = loss.light_edge_sum();
    rec.loss_color_edge = loss.color_edge_sum();
    rec.loss_node = loss.node_sum();

    bool stop = false;
    if (options.val_every && (it % options.val_every == 0 || it == options.iters)) {
      const AccuracyReport val =
          evaluate(model, dataset.val, options.spec, options.val_episodes,
                   options.seed ^ kValidationStream, options.workers);
      rec.val_acc = val.mean;
      rec.ci95 = val.ci95;
      if (val.mean > summary.best_val_acc) {
        summary.best_val_acc = val.mean;
        summary.best_iter = it;
        best = snapshot(model.params());
        if (!options.checkpoint.empty()) {
          save_checkpoint(options.checkpoint, model.params(), &optimizer);
        }
      }
      if (options.early_stop_acc > 0.0 && val.mean >= options.early_stop_acc) stop = true;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start).count();
    if (sink) sink(rec);
    if (stop) {
      summary.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) {
    restore(model.params(), best);
  } else if (!options.checkpoint.empty()) {
    save_checkpoint(options.checkpoint, model.params(), &optimizer);
  }
  return summary;
}

template TrainSummary train(MetaLabModel<float>&, const Dataset&, const TrainOptions&,
                            const std::function<void(const MetricsRecord&)>&);
template TrainSummary train(MetaLabModel<double>&, const Dataset&, const TrainOptions&,
                            const std::function<void(const MetricsRecord&)>&);

}  // namespace metalab
