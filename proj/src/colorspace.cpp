#include "metalab/colorspace.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "metalab/errors.hpp"

namespace metalab::color {
namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

// IEC 61966-2-1 linear sRGB -> XYZ, D65.
constexpr Mat3 kRgbToXyz = {{
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
}};

constexpr double kDelta = 6.0 / 29.0;
constexpr double kDeltaCubed = kDelta * kDelta * kDelta;
constexpr double kLabOffset = 4.0 / 29.0;

Mat3 invert(const Mat3& m) {
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
  Mat3 inv{};
  inv[0][0] = c00 / det;
  inv[1][0] = c01 / det;
  inv[2][0] = c02 / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

const Mat3& xyz_to_rgb_matrix() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

double lab_f(double t) {
  return t > kDeltaCubed ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + kLabOffset;
}

double lab_f_inverse(double u) {
  return u > kDelta ? u * u * u : 3.0 * kDelta * kDelta * (u - kLabOffset);
}

std::string describe_index(const ColorBatch& batch, std::size_t flat) {
  const std::size_t plane = batch.plane();
  const std::size_t x = flat % batch.width;
  const std::size_t y = (flat / batch.width) % batch.height;
  const std::size_t c = (flat / plane) % 3;
  const std::size_t t = (flat / (plane * 3)) % batch.images;
  const std::size_t b = flat / (plane * 3 * batch.images);
  std::ostringstream out;
  out << "index " << flat << " (batch " << b << ", image " << t << ", channel " << c << ", y "
      << y << ", x " << x << ")";
  return out.str();
}

// Applies `fn` to every pixel triple of a batch, returning a new batch.
template <typename Fn>
ColorBatch map_pixels(const ColorBatch& in, Fn&& fn) {
  ColorBatch out(in.batch, in.images, in.height, in.width);
  const std::size_t plane = in.plane();
  for (std::size_t img = 0; img < in.batch * in.images; ++img) {
    const std::size_t base = img * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::array<double, 3> src = {in.data[base + p], in.data[base + plane + p],
                                         in.data[base + 2 * plane + p]};
      const std::array<double, 3> dst = fn(src, base + p);
      out.data[base + p] = dst[0];
      out.data[base + plane + p] = dst[1];
      out.data[base + 2 * plane + p] = dst[2];
    }
  }
  return out;
}

}  // namespace

double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_encode(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

Xyz d65_white() {
  const auto& m = kRgbToXyz;
  return {m[0][0] + m[0][1] + m[0][2], m[1][0] + m[1][1] + m[1][2], m[2][0] + m[2][1] + m[2][2]};
}

Xyz srgb_to_xyz(const Rgb& rgb) {
  const double r = srgb_decode(rgb.r);
  const double g = srgb_decode(rgb.g);
  const double b = srgb_decode(rgb.b);
  const auto& m = kRgbToXyz;
  return {m[0][0] * r + m[0][1] * g + m[0][2] * b, m[1][0] * r + m[1][1] * g + m[1][2] * b,
          m[2][0] * r + m[2][1] * g + m[2][2] * b};
}

Lab xyz_to_lab(const Xyz& xyz) {
  static const Xyz white = d65_white();
  const double fx = lab_f(xyz.x / white.x);
  const double fy = lab_f(xyz.y / white.y);
  const double fz = lab_f(xyz.z / white.z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Xyz lab_to_xyz(const Lab& lab) {
  static const Xyz white = d65_white();
  const double fy = (lab.l + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  return {white.x * lab_f_inverse(fx), white.y * lab_f_inverse(fy), white.z * lab_f_inverse(fz)};
}

Rgb xyz_to_srgb(const Xyz& xyz) {
  const auto& m = xyz_to_rgb_matrix();
  const double r = m[0][0] * xyz.x + m[0][1] * xyz.y + m[0][2] * xyz.z;
  const double g = m[1][0] * xyz.x + m[1][1] * xyz.y + m[1][2] * xyz.z;
  const double b = m[2][0] * xyz.x + m[2][1] * xyz.y + m[2][2] * xyz.z;
  return {srgb_encode(r), srgb_encode(g), srgb_encode(b)};
}

Rgb lab_to_rgb(const Lab& lab) {
  const Rgb rgb = xyz_to_srgb(lab_to_xyz(lab));
  constexpr double kLo = -1e-4;
  constexpr double kHi = 1.0 + 1e-4;
  for (double c : {rgb.r, rgb.g, rgb.b}) {
    if (!(c >= kLo && c <= kHi)) {
      std::ostringstream msg;
      msg << "Lab (" << lab.l << ", " << lab.a << ", " << lab.b << ") is outside the sRGB gamut";
      throw GamutError(msg.str());
    }
  }
  return rgb;
}

Rgb lab_to_rgb_clamped(const Lab& lab) {
  const Rgb rgb = xyz_to_srgb(lab_to_xyz(lab));
  auto clamp01 = [](double c) { return c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c); };
  return {clamp01(rgb.r), clamp01(rgb.g), clamp01(rgb.b)};
}

ColorBatch srgb_to_xyz(const ColorBatch& rgb) {
  for (std::size_t i = 0; i < rgb.data.size(); ++i) {
    const double v = rgb.data[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream msg;
      msg << "srgb_to_xyz: value " << v << " outside [0, 1] at " << describe_index(rgb, i);
      throw PreconditionError(msg.str());
    }
  }
  return map_pixels(rgb, [](const std::array<double, 3>& p, std::size_t) {
    const Xyz xyz = srgb_to_xyz(Rgb{p[0], p[1], p[2]});
    return std::array<double, 3>{xyz.x, xyz.y, xyz.z};
  });
}

ColorBatch xyz_to_lab(const ColorBatch& xyz) {
  for (std::size_t i = 0; i < xyz.data.size(); ++i) {
    if (!(xyz.data[i] >= 0.0)) {
      std::ostringstream msg;
      msg << "xyz_to_lab: negative XYZ component " << xyz.data[i] << " at "
          << describe_index(xyz, i);
      throw PreconditionError(msg.str());
    }
  }
  return map_pixels(xyz, [](const std::array<double, 3>& p, std::size_t) {
    const Lab lab = xyz_to_lab(Xyz{p[0], p[1], p[2]});
    return std::array<double, 3>{lab.l, lab.a, lab.b};
  });
}

LlabBatch rgb_to_llab(const ColorBatch& rgb, NormMode mode) {
  const ColorBatch lab = xyz_to_lab(srgb_to_xyz(rgb));
  LlabBatch out;
  out.batch = rgb.batch;
  out.images = rgb.images;
  out.height = rgb.height;
  out.width = rgb.width;
  out.norm_mode = mode;
  const std::size_t plane = rgb.plane();
  const std::size_t count = rgb.batch * rgb.images;
  out.data.resize(count * 4 * plane);
  const double l_scale = mode == NormMode::kNormalized ? 1.0 / 100.0 : 1.0;
  const double ab_scale = mode == NormMode::kNormalized ? 1.0 / 128.0 : 1.0;
  for (std::size_t img = 0; img < count; ++img) {
    const double* src = lab.data.data() + img * 3 * plane;
    double* dst = out.data.data() + img * 4 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double l = src[p] * l_scale;
      dst[p] = l;
      dst[plane + p] = l;
      dst[2 * plane + p] = src[plane + p] * ab_scale;
      dst[3 * plane + p] = src[2 * plane + p] * ab_scale;
    }
  }
  return out;
}

ColorBatch lab_to_rgb(const ColorBatch& lab) {
  return map_pixels(lab, [](const std::array<double, 3>& p, std::size_t) {
    const Rgb rgb = lab_to_rgb(Lab{p[0], p[1], p[2]});
    return std::array<double, 3>{rgb.r, rgb.g, rgb.b};
  });
}

}  // namespace metalab::color
