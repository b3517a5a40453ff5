#pragma once

// sRGB (D65) -> CIE XYZ -> CIELab conversions and the four-channel LLAB
// input tensor consumed by the encoder.

#include <cstddef>
#include <vector>

namespace metalab::color {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

struct Xyz {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// Reference white: the sRGB matrix applied to linear (1, 1, 1).
Xyz d65_white();

/// Inverse sRGB companding of one component in [0, 1].
double srgb_decode(double c);
/// Forward sRGB companding of one linear component.
double srgb_encode(double c);

Xyz srgb_to_xyz(const Rgb& rgb);
Lab xyz_to_lab(const Xyz& xyz);
Xyz lab_to_xyz(const Lab& lab);
/// Linear matrix + companding, no gamut check; linear values below zero are
/// encoded with the linear branch so the map stays invertible.
Rgb xyz_to_srgb(const Xyz& xyz);

inline Lab rgb_to_lab(const Rgb& rgb) { return xyz_to_lab(srgb_to_xyz(rgb)); }
/// Throws GamutError when a component falls outside [-1e-4, 1 + 1e-4].
Rgb lab_to_rgb(const Lab& lab);
/// Same as lab_to_rgb but clamps into [0, 1] instead of throwing.
Rgb lab_to_rgb_clamped(const Lab& lab);

/// Three-channel image batch laid out [batch x images x 3 x height x width].
/// Used for sRGB, XYZ and Lab arrays alike.
struct ColorBatch {
  std::size_t batch = 0;
  std::size_t images = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  ColorBatch() = default;
  ColorBatch(std::size_t b, std::size_t t, std::size_t h, std::size_t w)
      : batch(b), images(t), height(h), width(w), data(b * t * 3 * h * w, 0.0) {}

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return data.size(); }
  double& at(std::size_t b, std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
    return data[(((b * images + t) * 3 + c) * height + y) * width + x];
  }
  double at(std::size_t b, std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return data[(((b * images + t) * 3 + c) * height + y) * width + x];
  }
};

using RgbBatch = ColorBatch;

enum class NormMode {
  // L / 100 in [0, 1]; a, b / 128 in [-1, 1).
  kNormalized,
  // L in [0, 100]; a, b in roughly [-128, 127].
  kRaw,
};

/// Four-channel batch [batch x images x 4 x height x width], channel order
/// (L, L, a, b).
struct LlabBatch {
  std::size_t batch = 0;
  std::size_t images = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  NormMode norm_mode = NormMode::kNormalized;
  std::vector<double> data;

  double at(std::size_t b, std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return data[(((b * images + t) * 4 + c) * height + y) * width + x];
  }
};

/// Throws PreconditionError naming the first component outside [0, 1].
ColorBatch srgb_to_xyz(const ColorBatch& rgb);
/// Throws PreconditionError on a negative component.
ColorBatch xyz_to_lab(const ColorBatch& xyz);
LlabBatch rgb_to_llab(const ColorBatch& rgb, NormMode mode = NormMode::kNormalized);
/// Exact inverse of srgb_to_xyz . xyz_to_lab; throws GamutError.
ColorBatch lab_to_rgb(const ColorBatch& lab);

}  // namespace metalab::color
