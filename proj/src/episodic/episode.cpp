#include "metalab/episode.hpp"

#include <algorithm>
#include <numeric>

#include "metalab/errors.hpp"

namespace metalab {

void EpisodeSpec::validate() const {
  if (ways < 2) throw ConfigError("episode needs K >= 2 ways, got " + std::to_string(ways));
  if (shots < 1) throw ConfigError("episode needs N >= 1 shots");
  if (queries < 1) throw ConfigError("episode needs Q >= 1 queries per class");
  if (batch < 1) throw ConfigError("episode batch B must be >= 1");
}

std::size_t ImageSet::image_count() const {
  std::size_t n = 0;
  for (const auto& c : images) n += c.size();
  return n;
}

std::vector<int> EpisodeBatch::support_labels() const {
  const std::size_t t = spec.images(), s = spec.supports();
  std::vector<int> out;
  out.reserve(spec.batch * s);
  for (std::size_t b = 0; b < spec.batch; ++b)
    for (std::size_t i = 0; i < s; ++i) out.push_back(labels[b * t + i]);
  return out;
}

std::vector<int> EpisodeBatch::query_labels() const {
  const std::size_t t = spec.images(), s = spec.supports();
  std::vector<int> out;
  out.reserve(spec.batch * (t - s));
  for (std::size_t b = 0; b < spec.batch; ++b)
    for (std::size_t i = s; i < t; ++i) out.push_back(labels[b * t + i]);
  return out;
}

EpisodeBatch sample_episode(const ImageSet& split, const EpisodeSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (split.classes() < spec.ways) {
    throw ConfigError("split has " + std::to_string(split.classes()) + " classes, episode needs " +
                      std::to_string(spec.ways));
  }
  const std::size_t per_class = spec.shots + spec.queries;
  for (std::size_t c = 0; c < split.classes(); ++c) {
    if (split.images[c].size() < per_class) {
      throw ConfigError("class " + split.class_names[c] + " has " +
                        std::to_string(split.images[c].size()) + " images, episode needs " +
                        std::to_string(per_class));
    }
  }

  const std::size_t t = spec.images(), s = spec.supports();
  const std::size_t plane = 3 * split.height * split.width;
  EpisodeBatch ep;
  ep.spec = spec;
  ep.images = color::RgbBatch(spec.batch, t, split.height, split.width);
  ep.labels.assign(spec.batch * t, 0);
  ep.class_map.resize(spec.batch);

  std::vector<std::size_t> classes(split.classes());
  for (std::size_t b = 0; b < spec.batch; ++b) {
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    std::shuffle(classes.begin(), classes.end(), rng);
    for (std::size_t k = 0; k < spec.ways; ++k) {
      const std::size_t cls = classes[k];
      ep.class_map[b].push_back(static_cast<int>(cls));
      std::vector<std::size_t> items(split.images[cls].size());
      std::iota(items.begin(), items.end(), std::size_t{0});
      std::shuffle(items.begin(), items.end(), rng);
      for (std::size_t r = 0; r < per_class; ++r) {
        const std::size_t node =
            r < spec.shots ? k * spec.shots + r : s + k * spec.queries + (r - spec.shots);
        const auto& src = split.images[cls][items[r]];
        std::copy(src.begin(), src.end(), ep.images.data.begin() + (b * t + node) * plane);
        ep.labels[b * t + node] = static_cast<int>(k);
      }
    }
  }
  return ep;
}

}  // namespace metalab
