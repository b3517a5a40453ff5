#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "metalab/colorspace.hpp"

namespace metalab {

struct EpisodeSpec {
  std::size_t ways = 5;     // K
  std::size_t shots = 1;    // N
  std::size_t queries = 1;  // Q, per class
  std::size_t batch = 1;    // B

  std::size_t images() const { return ways * (shots + queries); }
  std::size_t supports() const { return ways * shots; }
  std::size_t query_count() const { return ways * queries; }
  // Throws ConfigError unless K >= 2, N >= 1, Q >= 1, B >= 1.
  void validate() const;
};

// Images of one split, grouped by class. Each image is [3 x height x width]
// sRGB in [0,1].
struct ImageSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::vector<float>>> images;

  std::size_t classes() const { return images.size(); }
  std::size_t image_count() const;
};

struct Dataset {
  ImageSet train;
  ImageSet val;
  ImageSet test;
};

// Node layout per episode: supports [0, NK) class-major (class k, shot s at
// k * N + s), then queries [NK, T) class-major (class k, query q at NK + k * Q + q).
struct EpisodeBatch {
  EpisodeSpec spec;
  color::RgbBatch images;                // [B x T x 3 x H x W]
  std::vector<int> labels;               // [B x T], episode-local ids in [0, K)
  std::vector<std::vector<int>> class_map;  // [B][K] -> dataset class index

  std::vector<int> support_labels() const;  // [B x NK]
  std::vector<int> query_labels() const;    // [B x KQ]
};

// Draws K classes without replacement, then N + Q images per class without
// replacement, for each of the B episodes. Episode-local ids follow draw
// order. Throws ConfigError when the split is too small.
EpisodeBatch sample_episode(const ImageSet& split, const EpisodeSpec& spec, std::mt19937_64& rng);

}  // namespace metalab
