#include "metalab/evaluate.hpp"

#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "metalab/errors.hpp"

namespace metalab {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

AccuracyReport summarize_accuracies(std::span<const double> accuracies) {
  const std::size_t n = accuracies.size();
  if (n < 2) throw PreconditionError("summarize_accuracies: need at least 2 episodes");
  const double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n)), n};
}

template <typename T>
std::vector<double> episode_accuracies(const MetaLabModel<T>& model, const ImageSet& split,
                                       EpisodeSpec spec, std::size_t episodes,
                                       std::uint64_t seed, std::size_t workers) {
  spec.batch = 1;
  spec.validate();
  workers = std::max<std::size_t>(1, std::min(workers, episodes));
  std::vector<double> acc(episodes, 0.0);
  std::vector<std::exception_ptr> errors(workers);

  auto run = [&](std::size_t worker) {
    try {
      NoGradGuard no_grad;
      for (std::size_t e = worker; e < episodes; e += workers) {
        auto rng = stream_rng(seed, e);
        const EpisodeBatch batch = sample_episode(split, spec, rng);
        const auto history = model.forward(batch);
        acc[e] = query_accuracy(history.back().e_light, batch.labels, spec);
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return acc;
}

template <typename T>
AccuracyReport evaluate(const MetaLabModel<T>& model, const ImageSet& split, EpisodeSpec spec,
                        std::size_t episodes, std::uint64_t seed, std::size_t workers) {
  if (episodes < 2) throw PreconditionError("evaluate: need at least 2 episodes");
  const auto acc = episode_accuracies(model, split, spec, episodes, seed, workers);
  return summarize_accuracies(acc);
}

template std::vector<double> episode_accuracies(const MetaLabModel<float>&, const ImageSet&,
                                                EpisodeSpec, std::size_t, std::uint64_t,
                                                std::size_t);
template std::vector<double> episode_accuracies(const MetaLabModel<double>&, const ImageSet&,
                                                EpisodeSpec, std::size_t, std::uint64_t,
                                                std::size_t);
template AccuracyReport evaluate(const MetaLabModel<float>&, const ImageSet&, EpisodeSpec,
                                 std::size_t, std::uint64_t, std::size_t);
template AccuracyReport evaluate(const MetaLabModel<double>&, const ImageSet&, EpisodeSpec,
                                 std::size_t, std::uint64_t, std::size_t);

}  // namespace metalab
