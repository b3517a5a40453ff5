#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "metalab/episode.hpp"
#include "metalab/model.hpp"

namespace metalab {

struct AccuracyReport {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(n)
  std::size_t episodes = 0;
};

// Throws PreconditionError for fewer than two accuracies.
AccuracyReport summarize_accuracies(std::span<const double> accuracies);

// Per-episode accuracies of `episodes` single-episode forwards. Episode e
// draws from its own generator seeded by (seed, e), so the result does not
// depend on `workers`.
template <typename T>
std::vector<double> episode_accuracies(const MetaLabModel<T>& model, const ImageSet& split,
                                       EpisodeSpec spec, std::size_t episodes,
                                       std::uint64_t seed, std::size_t workers = 1);

template <typename T>
AccuracyReport evaluate(const MetaLabModel<T>& model, const ImageSet& split, EpisodeSpec spec,
                        std::size_t episodes, std::uint64_t seed, std::size_t workers = 1);

// Generator for stream `index` under root `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index);

}  // namespace metalab
