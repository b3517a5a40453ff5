#pragma once

// Plain nested-loop versions of the encoder layers over NCHW double arrays.
// Written straight from the layer definitions, independent of the tensor
// library, and used as oracles.

#include <cstddef>
#include <vector>

namespace oracle {

struct Array4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Array4() = default;
  Array4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}
  double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
    return v[((i * c + ch) * h + y) * w + x];
  }
  double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const {
    return v[((i * c + ch) * h + y) * w + x];
  }
};

// weight [cout x cin/groups x k x k]; zero padding.
Array4 conv2d(const Array4& x, const std::vector<double>& weight, const std::vector<double>& bias,
              std::size_t cout, std::size_t groups, std::size_t k, std::size_t stride,
              std::size_t pad);
// Biased variance over (n, h, w) per channel.
Array4 batch_norm(const Array4& x, const std::vector<double>& gamma,
                  const std::vector<double>& beta, double eps = 1e-5);
Array4 relu(const Array4& x);
Array4 max_pool(const Array4& x, std::size_t k, std::size_t stride);
// [n x c] row-major.
std::vector<double> global_max(const Array4& x);
// x [n x in], weight [out x in] -> [n x out].
std::vector<double> linear(const std::vector<double>& x, std::size_t n, std::size_t in,
                           const std::vector<double>& weight, const std::vector<double>& bias,
                           std::size_t out);

}  // namespace oracle
