#pragma once

// Desk-scale synthetic dataset and the on-disk root/{train,val,test}/<class>/<image>.png layout.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "metalab/episode.hpp"

namespace metalab {

enum class Shape2D { kDisc, kBar, kRing };

// Class centroid in LCh space plus the drawn shape.
struct ClassStyle {
  double hue_deg = 0.0;
  double lightness = 0.0;
  Shape2D shape = Shape2D::kDisc;
};

struct SyntheticConfig {
  std::size_t classes = 20;
  std::size_t per_class = 50;
  std::size_t size = 84;
  std::uint64_t seed = 0;
};

inline constexpr double kHueJitterDeg = 10.0;
inline constexpr double kLightnessJitter = 0.10;  // relative
inline constexpr double kSyntheticChroma = 40.0;
inline constexpr std::size_t kMaxSyntheticClasses = 48;

// Style of dataset class c (before the split shuffle): unique (hue band,
// lightness band) per class, shape c mod 3.
std::vector<ClassStyle> synthetic_class_styles(std::size_t classes);

// Renders classes * per_class images and splits the classes 50/25/25 into
// train/val/test after a seeded shuffle. Class names are "c<index>".
// Throws ConfigError when classes < 10 or classes > 48.
Dataset make_synthetic_dataset(const SyntheticConfig& config);

// One image of the given style, [3 x size x size] sRGB in [0,1].
std::vector<float> render_synthetic_image(const ClassStyle& style, std::size_t size,
                                          std::uint64_t seed);

void write_png(const std::filesystem::path& path, const std::vector<float>& chw,
               std::size_t height, std::size_t width);
// Decodes any 8/16-bit PNG to [3 x height x width] in [0,1].
std::vector<float> read_png(const std::filesystem::path& path, std::size_t& height,
                            std::size_t& width);
// Bilinear resampling (pixel centres aligned) of a [3 x h x w] image.
std::vector<float> resize_bilinear(const std::vector<float>& chw, std::size_t h, std::size_t w,
                                   std::size_t out_h, std::size_t out_w);

void save_dataset(const Dataset& dataset, const std::filesystem::path& root);
// Loads every split, resizing images to size x size. Classes and images are
// ordered by file name. Throws ConfigError when a split directory is missing.
Dataset load_dataset(const std::filesystem::path& root, std::size_t size);

}  // namespace metalab
