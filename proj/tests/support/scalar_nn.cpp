#include "support/scalar_nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Array4 conv2d(const Array4& x, const std::vector<double>& weight, const std::vector<double>& bias,
              std::size_t cout, std::size_t groups, std::size_t k, std::size_t stride,
              std::size_t pad) {
  const std::size_t cin_g = x.c / groups, cout_g = cout / groups;
  const std::size_t oh = (x.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (x.w + 2 * pad - k) / stride + 1;
  Array4 y(x.n, cout, oh, ow);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t o = 0; o < cout; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) ||
                    ix >= static_cast<long>(x.w))
                  continue;
                acc += weight[((o * cin_g + ci) * k + ky) * k + kx] *
                       x.at(i, g * cin_g + ci, static_cast<std::size_t>(iy),
                            static_cast<std::size_t>(ix));
              }
          y.at(i, o, oy, ox) = acc;
        }
    }
  return y;
}

Array4 batch_norm(const Array4& x, const std::vector<double>& gamma,
                  const std::vector<double>& beta, double eps) {
  Array4 y = x;
  const double count = static_cast<double>(x.n * x.h * x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.n; ++i)
      for (std::size_t r = 0; r < x.h; ++r)
        for (std::size_t s = 0; s < x.w; ++s) mean += x.at(i, ch, r, s);
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < x.n; ++i)
      for (std::size_t r = 0; r < x.h; ++r)
        for (std::size_t s = 0; s < x.w; ++s) var += std::pow(x.at(i, ch, r, s) - mean, 2);
    var /= count;
    for (std::size_t i = 0; i < x.n; ++i)
      for (std::size_t r = 0; r < x.h; ++r)
        for (std::size_t s = 0; s < x.w; ++s)
          y.at(i, ch, r, s) = gamma[ch] * (x.at(i, ch, r, s) - mean) / std::sqrt(var + eps) + beta[ch];
  }
  return y;
}

Array4 relu(const Array4& x) {
  Array4 y = x;
  for (auto& v : y.v) v = std::max(v, 0.0);
  return y;
}

Array4 max_pool(const Array4& x, std::size_t k, std::size_t stride) {
  const std::size_t oh = (x.h - k) / stride + 1, ow = (x.w - k) / stride + 1;
  Array4 y(x.n, x.c, oh, ow);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t ch = 0; ch < x.c; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
              m = std::max(m, x.at(i, ch, oy * stride + ky, ox * stride + kx));
          y.at(i, ch, oy, ox) = m;
        }
  return y;
}

std::vector<double> global_max(const Array4& x) {
  std::vector<double> out(x.n * x.c, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t ch = 0; ch < x.c; ++ch)
      for (std::size_t r = 0; r < x.h; ++r)
        for (std::size_t s = 0; s < x.w; ++s)
          out[i * x.c + ch] = std::max(out[i * x.c + ch], x.at(i, ch, r, s));
  return out;
}

std::vector<double> linear(const std::vector<double>& x, std::size_t n, std::size_t in,
                           const std::vector<double>& weight, const std::vector<double>& bias,
                           std::size_t out) {
  std::vector<double> y(n * out, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t j = 0; j < in; ++j) acc += x[i * in + j] * weight[o * in + j];
      y[i * out + o] = acc;
    }
  return y;
}

}  // namespace oracle
