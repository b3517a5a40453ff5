#include "metalab/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "metalab/colorspace.hpp"
#include "metalab/errors.hpp"

namespace metalab {
namespace {

constexpr double kLightnessBands[3] = {30.0, 55.0, 80.0};

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

bool inside(Shape2D shape, double dx, double dy, double radius, double angle) {
  switch (shape) {
    case Shape2D::kDisc:
      return dx * dx + dy * dy <= radius * radius;
    case Shape2D::kRing: {
      const double r2 = dx * dx + dy * dy;
      const double inner = 0.55 * radius;
      return r2 <= radius * radius && r2 >= inner * inner;
    }
    case Shape2D::kBar: {
      const double u = std::cos(angle) * dx + std::sin(angle) * dy;
      const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
      return std::abs(u) <= radius && std::abs(v) <= 0.4 * radius;
    }
  }
  return false;
}

ImageSet render_split(const std::vector<std::size_t>& classes,
                      const std::vector<ClassStyle>& styles, const SyntheticConfig& config) {
  ImageSet set;
  set.height = set.width = config.size;
  for (std::size_t cls : classes) {
    set.class_names.push_back("c" + std::to_string(cls));
    std::vector<std::vector<float>> images;
    images.reserve(config.per_class);
    for (std::size_t i = 0; i < config.per_class; ++i) {
      const std::uint64_t image_seed = derived_rng(config.seed, cls, i)();
      images.push_back(render_synthetic_image(styles[cls], config.size, image_seed));
    }
    set.images.push_back(std::move(images));
  }
  return set;
}

std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool dirs) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (dirs ? entry.is_directory() : (entry.is_regular_file() && entry.path().extension() == ".png")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void save_split(const ImageSet& set, const std::filesystem::path& dir) {
  for (std::size_t c = 0; c < set.classes(); ++c) {
    const auto class_dir = dir / set.class_names[c];
    std::filesystem::create_directories(class_dir);
    for (std::size_t i = 0; i < set.images[c].size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.png", i);
      write_png(class_dir / name, set.images[c][i], set.height, set.width);
    }
  }
}

ImageSet load_split(const std::filesystem::path& dir, std::size_t size) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("dataset split directory missing: " + dir.string());
  }
  ImageSet set;
  set.height = set.width = size;
  for (const auto& class_dir : sorted_entries(dir, true)) {
    std::vector<std::vector<float>> images;
    for (const auto& file : sorted_entries(class_dir, false)) {
      std::size_t h = 0, w = 0;
      auto chw = read_png(file, h, w);
      if (h != size || w != size) chw = resize_bilinear(chw, h, w, size, size);
      images.push_back(std::move(chw));
    }
    if (images.empty()) continue;
    set.class_names.push_back(class_dir.filename().string());
    set.images.push_back(std::move(images));
  }
  return set;
}

}  // namespace

std::vector<ClassStyle> synthetic_class_styles(std::size_t classes) {
  if (classes > kMaxSyntheticClasses) {
    throw ConfigError("synthetic dataset supports at most " +
                      std::to_string(kMaxSyntheticClasses) + " classes, got " +
                      std::to_string(classes));
  }
  const std::size_t hues = classes <= 24 ? 8 : 16;
  std::vector<ClassStyle> styles(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    styles[c].hue_deg = 15.0 + 360.0 * static_cast<double>(c % hues) / static_cast<double>(hues);
    styles[c].lightness = kLightnessBands[c / hues];
    styles[c].shape = static_cast<Shape2D>(c % 3);
  }
  return styles;
}

std::vector<float> render_synthetic_image(const ClassStyle& style, std::size_t size,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);

  const double hue = (style.hue_deg + kHueJitterDeg * unit(rng)) * std::numbers::pi / 180.0;
  const double lightness = style.lightness * (1.0 + kLightnessJitter * unit(rng));
  const color::Rgb fg = color::lab_to_rgb_clamped(
      {lightness, kSyntheticChroma * std::cos(hue), kSyntheticChroma * std::sin(hue)});
  const double background = 0.5 + 0.1 * unit(rng);
  const double s = static_cast<double>(size);
  const double cx = 0.5 * s + 0.12 * s * unit(rng);
  const double cy = 0.5 * s + 0.12 * s * unit(rng);
  const double radius = 0.28 * s * (1.0 + 0.2 * unit(rng));
  const double angle = std::numbers::pi * 0.5 * (1.0 + unit(rng));

  const std::size_t plane = size * size;
  std::vector<float> chw(3 * plane);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const bool fg_pixel = inside(style.shape, dx, dy, radius, angle);
      const double base[3] = {fg_pixel ? fg.r : background, fg_pixel ? fg.g : background,
                              fg_pixel ? fg.b : background};
      for (std::size_t c = 0; c < 3; ++c) {
        chw[c * plane + y * size + x] =
            static_cast<float>(std::clamp(base[c] + noise(rng), 0.0, 1.0));
      }
    }
  }
  return chw;
}

Dataset make_synthetic_dataset(const SyntheticConfig& config) {
  if (config.classes < 10) {
    throw ConfigError("synthetic dataset needs >= 10 classes for disjoint splits, got " +
                      std::to_string(config.classes));
  }
  if (config.per_class == 0 || config.size == 0) {
    throw ConfigError("synthetic dataset needs positive per_class and size");
  }
  const auto styles = synthetic_class_styles(config.classes);
  std::vector<std::size_t> order(config.classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = config.classes / 2;
  const std::size_t n_val = config.classes / 4;
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<std::size_t>(order.begin() + from, order.begin() + to);
  };
  Dataset ds;
  ds.train = render_split(slice(0, n_train), styles, config);
  ds.val = render_split(slice(n_train, n_train + n_val), styles, config);
  ds.test = render_split(slice(n_train + n_val, config.classes), styles, config);
  return ds;
}

void write_png(const std::filesystem::path& path, const std::vector<float>& chw,
               std::size_t height, std::size_t width) {
  const std::size_t plane = height * width;
  if (chw.size() != 3 * plane) throw ShapeError("write_png: image is not 3 x H x W");
  std::vector<png_byte> rgb(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(chw[c * plane + i]), 0.0, 1.0);
      rgb[3 * i + c] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw ConfigError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::vector<float> read_png(const std::filesystem::path& path, std::size_t& height,
                            std::size_t& width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ConfigError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ConfigError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  height = image.height;
  width = image.width;
  const std::size_t plane = height * width;
  std::vector<float> chw(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) chw[c * plane + i] = rgb[3 * i + c] / 255.0f;
  return chw;
}

std::vector<float> resize_bilinear(const std::vector<float>& chw, std::size_t h, std::size_t w,
                                   std::size_t out_h, std::size_t out_w) {
  std::vector<float> out(3 * out_h * out_w);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const float* p = &chw[c * h * w];
        const double top = p[y0 * w + x0] * (1 - wx) + p[y0 * w + x1] * wx;
        const double bottom = p[y1 * w + x0] * (1 - wx) + p[y1 * w + x1] * wx;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  save_split(dataset.train, root / "train");
  save_split(dataset.val, root / "val");
  save_split(dataset.test, root / "test");
}

Dataset load_dataset(const std::filesystem::path& root, std::size_t size) {
  Dataset ds;
  ds.train = load_split(root / "train", size);
  ds.val = load_split(root / "val", size);
  ds.test = load_split(root / "test", size);
  return ds;
}

}  // namespace metalab
