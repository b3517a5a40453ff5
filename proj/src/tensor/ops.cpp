#include "metalab/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "metalab/errors.hpp"

namespace metalab {
namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;
template <typename T>
using ImplPtr = std::shared_ptr<Impl<T>>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Grad buffer of an input, or nullptr when that input needs no gradient.
template <typename T>
T* grad_ptr(const ImplPtr<T>& p) {
  return (p && p->requires_grad && !p->grad.empty()) ? p->grad.data() : nullptr;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [ai = a.impl(), bi = b.impl()](const Impl<T>& self) {
                          const auto& g = self.grad;
                          if (T* ga = grad_ptr(ai))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          if (T* gb = grad_ptr(bi))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [ai = a.impl(), bi = b.impl()](const Impl<T>& self) {
                          const auto& g = self.grad;
                          if (T* ga = grad_ptr(ai))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          if (T* gb = grad_ptr(bi))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [ai = a.impl(), bi = b.impl()](const Impl<T>& self) {
                          const auto& g = self.grad;
                          if (T* ga = grad_ptr(ai))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
                          if (T* gb = grad_ptr(bi))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
  return make_result<T>(a.shape(), std::move(out), {a},
                        [ai = a.impl(), factor](const Impl<T>& self) {
                          const auto& g = self.grad;
                          if (T* ga = grad_ptr(ai))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>(x.shape(), std::move(out), {x}, [xi = x.impl()](const Impl<T>& self) {
    const auto& g = self.grad;
    if (T* gx = grad_ptr(xi))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (self.data[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xd[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [xi = x.impl()](const Impl<T>& self) {
    const auto& g = self.grad;
    if (T* gx = grad_ptr(xi))
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = self.data[i];
        gx[i] += g[i] * y * (T(1) - y);
      }
  });
}

// ---------------------------------------------------------------------------
// Reductions and layout

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>(Shape{1}, {total}, {x}, [xi = x.impl()](const Impl<T>& self) {
    if (T* gx = grad_ptr(xi)) {
      const T g = self.grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x}, [xi = x.impl()](const Impl<T>& self) {
    if (T* gx = grad_ptr(xi))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis)) {
    throw ShapeError("narrow: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const Shape& in_shape = x.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  const std::size_t extent = in_shape[axis];
  Shape out_shape = in_shape;
  out_shape[axis] = length;
  std::vector<T> out(outer * length * inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + (o * extent + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {x},
                        [xi = x.impl(), outer, inner, extent, start, length](const Impl<T>& self) {
                          T* gx = grad_ptr(xi);
                          if (!gx) return;
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* src = self.grad.data() + o * length * inner;
                            T* dst = gx + (o * extent + start) * inner;
                            for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    total += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<ImplPtr<T>> impls;
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t ext = p.dim(axis);
    const auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * ext * inner, ext * inner,
                  out.begin() + (o * total + offset) * inner);
    }
    offset += ext;
    impls.push_back(p.impl());
    extents.push_back(ext);
  }
  return make_result<T>(std::move(out_shape), std::move(out), parts,
                        [impls, extents, outer, inner, total](const Impl<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < impls.size(); ++k) {
                            const std::size_t ext = extents[k];
                            if (T* gp = grad_ptr(impls[k])) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* src = self.grad.data() + (o * total + off) * inner;
                                T* dst = gp + o * ext * inner;
                                for (std::size_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                              }
                            }
                            off += ext;
                          }
                        });
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ShapeError("bmm: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMapMat<T> am(a.data().data() + i * m * k, m, k);
    ConstMapMat<T> bm(b.data().data() + i * k * n, k, n);
    MapMat<T> cm(out.data() + i * m * n, m, n);
    cm.noalias() = am * bm;
  }
  return make_result<T>(Shape{batch, m, n}, std::move(out), {a, b},
                        [ai = a.impl(), bi = b.impl(), batch, m, k, n](const Impl<T>& self) {
                          T* ga = grad_ptr(ai);
                          T* gb = grad_ptr(bi);
                          for (std::size_t i = 0; i < batch; ++i) {
                            ConstMapMat<T> gc(self.grad.data() + i * m * n, m, n);
                            if (ga) {
                              ConstMapMat<T> bm(bi->data.data() + i * k * n, k, n);
                              MapMat<T>(ga + i * m * k, m, k).noalias() += gc * bm.transpose();
                            }
                            if (gb) {
                              ConstMapMat<T> am(ai->data.data() + i * m * k, m, k);
                              MapMat<T>(gb + i * k * n, k, n).noalias() += am.transpose() * gc;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = b.dim(1);
  return reshape(bmm(reshape(a, {1, m, a.dim(1)}), reshape(b, {1, b.dim(0), n})), {m, n});
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const std::size_t rows = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outf)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs " + std::to_string(outf) +
                     " outputs");
  }
  std::vector<T> out(rows * outf);
  {
    ConstMapMat<T> xm(x.data().data(), rows, in);
    ConstMapMat<T> wm(weight.data().data(), outf, in);
    MapMat<T> ym(out.data(), rows, outf);
    ym.noalias() = xm * wm.transpose();
    if (bias.defined()) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < outf; ++c) out[r * outf + c] += bias.data()[c];
    }
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
  return make_result<T>(
      Shape{rows, outf}, std::move(out), inputs,
      [xi = x.impl(), wi = weight.impl(), bi, rows, in, outf](const Impl<T>& self) {
        ConstMapMat<T> gy(self.grad.data(), rows, outf);
        if (T* gx = grad_ptr(xi)) {
          ConstMapMat<T> wm(wi->data.data(), outf, in);
          MapMat<T>(gx, rows, in).noalias() += gy * wm;
        }
        if (T* gw = grad_ptr(wi)) {
          ConstMapMat<T> xm(xi->data.data(), rows, in);
          MapMat<T>(gw, outf, in).noalias() += gy.transpose() * xm;
        }
        if (T* gb = grad_ptr(bi)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < outf; ++c) gb[c] += self.grad[r * outf + c];
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution, normalization, pooling

namespace {

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, groups, kernel, stride, padding;
  std::size_t out_h, out_w;
  std::size_t in_per_group() const { return in_ch / groups; }
  std::size_t out_per_group() const { return out_ch / groups; }
  std::size_t col_rows() const { return in_per_group() * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// cols [C*k*k x out_h*out_w] from one group's input planes [C x H x W].
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t channels = g.in_per_group(), k = g.kernel, n = g.col_cols();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0)
                                                                  : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t channels = g.in_per_group(), k = g.kernel, n = g.col_cols();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            dst[static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t groups, std::size_t stride, std::size_t padding) {
  require_rank("grouped_conv2d", x, 4);
  require_rank("grouped_conv2d", weight, 4);
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_ch = weight.dim(0);
  g.groups = groups;
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (groups == 0 || g.in_ch % groups != 0 || g.out_ch % groups != 0) {
    throw ShapeError("grouped_conv2d: channels " + std::to_string(g.in_ch) + " -> " +
                     std::to_string(g.out_ch) + " not divisible by groups " +
                     std::to_string(groups));
  }
  if (weight.dim(1) != g.in_per_group() || weight.dim(3) != g.kernel) {
    throw ShapeError("grouped_conv2d: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()) + " with " + std::to_string(groups) + " groups");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_ch)) {
    throw ShapeError("grouped_conv2d: bias " + shape_str(bias.shape()));
  }
  if (stride == 0 || g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
    throw ShapeError("grouped_conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;

  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  std::vector<T> out(g.batch * g.out_ch * out_plane);
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      im2col(xd + (n * g.in_ch + gi * cin_g) * in_plane, g, cols.data());
      ConstMapMat<T> wm(wd + gi * cout_g * g.col_rows(), cout_g, g.col_rows());
      ConstMapMat<T> cm(cols.data(), g.col_rows(), g.col_cols());
      MapMat<T> ym(out.data() + (n * g.out_ch + gi * cout_g) * out_plane, cout_g, out_plane);
      ym.noalias() = wm * cm;
    }
    if (bias.defined()) {
      for (std::size_t c = 0; c < g.out_ch; ++c) {
        T* plane = out.data() + (n * g.out_ch + c) * out_plane;
        const T bc = bias.data()[c];
        for (std::size_t p = 0; p < out_plane; ++p) plane[p] += bc;
      }
    }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
  return make_result<T>(
      Shape{g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), inputs,
      [xi = x.impl(), wi = weight.impl(), bi, g](const Impl<T>& self) {
        const std::size_t in_plane = g.height * g.width;
        const std::size_t out_plane = g.out_h * g.out_w;
        const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
        T* gx = grad_ptr(xi);
        T* gw = grad_ptr(wi);
        T* gb = grad_ptr(bi);
        std::vector<T> cols(g.col_rows() * g.col_cols());
        std::vector<T> dcols(gx ? cols.size() : 0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          for (std::size_t gi = 0; gi < g.groups; ++gi) {
            ConstMapMat<T> gy(self.grad.data() + (n * g.out_ch + gi * cout_g) * out_plane, cout_g,
                              out_plane);
            if (gw) {
              im2col(xi->data.data() + (n * g.in_ch + gi * cin_g) * in_plane, g, cols.data());
              ConstMapMat<T> cm(cols.data(), g.col_rows(), g.col_cols());
              MapMat<T>(gw + gi * cout_g * g.col_rows(), cout_g, g.col_rows()).noalias() +=
                  gy * cm.transpose();
            }
            if (gx) {
              ConstMapMat<T> wm(wi->data.data() + gi * cout_g * g.col_rows(), cout_g, g.col_rows());
              MapMat<T>(dcols.data(), g.col_rows(), g.col_cols()).noalias() = wm.transpose() * gy;
              col2im_add(dcols.data(), g, gx + (n * g.in_ch + gi * cin_g) * in_plane);
            }
          }
          if (gb) {
            for (std::size_t c = 0; c < g.out_ch; ++c) {
              const T* plane = self.grad.data() + (n * g.out_ch + c) * out_plane;
              T acc = T(0);
              for (std::size_t p = 0; p < out_plane; ++p) acc += plane[p];
              gb[c] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input rank < 2: " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw ShapeError("batch_norm: affine parameters do not match " + std::to_string(channels) +
                     " channels");
  }
  if (n < 2) {
    throw PreconditionError(
        "batch_norm: batch of " + std::to_string(n) +
        " sample; episodic statistics need >= 2, flatten episodes and images (B*T) into axis 0");
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t count = n * inner;
  const T* xd = x.data().data();
  std::vector<T> mean_c(channels, T(0));
  std::vector<T> inv_std(channels, T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    // Two-pass in double for stable statistics in float tensors.
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const T* p = xd + (s * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) acc += p[i];
    }
    const double mu = acc / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const T* p = xd + (s * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double d = p[i] - mu;
        var += d * d;
      }
    }
    var /= static_cast<double>(count);
    mean_c[c] = static_cast<T>(mu);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  }
  std::vector<T> out(x.numel());
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (s * channels + c) * inner;
      const T scale_c = gd[c] * inv_std[c];
      for (std::size_t i = 0; i < inner; ++i) {
        out[base + i] = (xd[base + i] - mean_c[c]) * scale_c + bd[c];
      }
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), mean_c, inv_std, n, channels,
       inner](const Impl<T>& self) {
        T* gx = grad_ptr(xi);
        T* ggamma = grad_ptr(gi);
        T* gbeta = grad_ptr(bi);
        const T* xd = xi->data.data();
        const T* gy = self.grad.data();
        const T count = static_cast<T>(n * inner);
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_g = T(0);
          T sum_gx = T(0);
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              const T xhat = (xd[base + i] - mean_c[c]) * inv_std[c];
              sum_g += gy[base + i];
              sum_gx += gy[base + i] * xhat;
            }
          }
          if (ggamma) ggamma[c] += sum_gx;
          if (gbeta) gbeta[c] += sum_g;
          if (gx) {
            const T k = gi->data[c] * inv_std[c] / count;
            for (std::size_t s = 0; s < n; ++s) {
              const std::size_t base = (s * channels + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                const T xhat = (xd[base + i] - mean_c[c]) * inv_std[c];
                gx[base + i] += k * (count * gy[base + i] - sum_g - xhat * sum_gx);
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  require_rank("max_pool2d", x, 4);
  const std::size_t n = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k == 0 || stride == 0 || h < k || w < k) {
    throw ShapeError("max_pool2d: window " + std::to_string(k) + " larger than input " +
                     shape_str(x.shape()));
  }
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  std::vector<T> out(n * channels * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  const T* xd = x.data().data();
  for (std::size_t plane = 0; plane < n * channels; ++plane) {
    const T* src = xd + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        T best_v = src[best];
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = best_v;
        argmax[o] = static_cast<std::uint32_t>(plane * h * w + best);
      }
    }
  }
  return make_result<T>(Shape{n, channels, oh, ow}, std::move(out), {x},
                        [xi = x.impl(), argmax = std::move(argmax)](const Impl<T>& self) {
                          if (T* gx = grad_ptr(xi))
                            for (std::size_t o = 0; o < argmax.size(); ++o)
                              gx[argmax[o]] += self.grad[o];
                        });
}

template <typename T>
Tensor<T> global_max_pool2d(const Tensor<T>& x) {
  require_rank("global_max_pool2d", x, 4);
  const std::size_t n = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (plane == 0) throw ShapeError("global_max_pool2d: empty spatial extent");
  std::vector<T> out(n * channels);
  std::vector<std::uint32_t> argmax(out.size());
  const T* xd = x.data().data();
  for (std::size_t p = 0; p < n * channels; ++p) {
    const T* src = xd + p * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i)
      if (src[i] > src[best]) best = i;
    out[p] = src[best];
    argmax[p] = static_cast<std::uint32_t>(p * plane + best);
  }
  return make_result<T>(Shape{n, channels}, std::move(out), {x},
                        [xi = x.impl(), argmax = std::move(argmax)](const Impl<T>& self) {
                          if (T* gx = grad_ptr(xi))
                            for (std::size_t o = 0; o < argmax.size(); ++o)
                              gx[argmax[o]] += self.grad[o];
                        });
}

// ---------------------------------------------------------------------------
// Graph helpers

template <typename T>
Tensor<T> pairwise_l1(const Tensor<T>& v) {
  if (v.rank() != 2 && v.rank() != 3) {
    throw ShapeError("pairwise_l1: expected [n x d] or [B x n x d], got " + shape_str(v.shape()));
  }
  const bool batched = v.rank() == 3;
  const std::size_t batch = batched ? v.dim(0) : 1;
  const std::size_t n = v.dim(batched ? 1 : 0), d = v.dim(batched ? 2 : 1);
  if (n == 0) throw ShapeError("pairwise_l1: no rows");
  std::vector<T> out(batch * n * n, T(0));
  const T* vd = v.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* vb = vd + b * n * d;
    T* ob = out.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        T acc = T(0);
        for (std::size_t k = 0; k < d; ++k) acc += std::abs(vb[i * d + k] - vb[j * d + k]);
        ob[i * n + j] = acc;
        ob[j * n + i] = acc;
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, n, n} : Shape{n, n};
  return make_result<T>(std::move(out_shape), std::move(out), {v},
                        [vi = v.impl(), batch, n, d](const Impl<T>& self) {
                          T* gv = grad_ptr(vi);
                          if (!gv) return;
                          const T* vd = vi->data.data();
                          for (std::size_t b = 0; b < batch; ++b) {
                            const T* vb = vd + b * n * d;
                            const T* gb = self.grad.data() + b * n * n;
                            T* gvb = gv + b * n * d;
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = i + 1; j < n; ++j) {
                                const T g = gb[i * n + j] + gb[j * n + i];
                                for (std::size_t k = 0; k < d; ++k) {
                                  const T s = g * sign_of(vb[i * d + k] - vb[j * d + k]);
                                  gvb[i * d + k] += s;
                                  gvb[j * d + k] -= s;
                                }
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> pair_abs_diff(const Tensor<T>& v) {
  require_rank("pair_abs_diff", v, 3);
  const std::size_t batch = v.dim(0), n = v.dim(1), d = v.dim(2);
  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<T> out(batch * pairs * d);
  const T* vd = v.data().data();
  std::size_t row = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* vb = vd + b * n * d;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++row) {
        for (std::size_t k = 0; k < d; ++k) out[row * d + k] = std::abs(vb[i * d + k] - vb[j * d + k]);
      }
    }
  }
  return make_result<T>(Shape{batch * pairs, d}, std::move(out), {v},
                        [vi = v.impl(), batch, n, d](const Impl<T>& self) {
                          T* gv = grad_ptr(vi);
                          if (!gv) return;
                          const T* vd = vi->data.data();
                          std::size_t row = 0;
                          for (std::size_t b = 0; b < batch; ++b) {
                            const T* vb = vd + b * n * d;
                            T* gvb = gv + b * n * d;
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = i + 1; j < n; ++j, ++row) {
                                for (std::size_t k = 0; k < d; ++k) {
                                  const T s = self.grad[row * d + k] *
                                              sign_of(vb[i * d + k] - vb[j * d + k]);
                                  gvb[i * d + k] += s;
                                  gvb[j * d + k] -= s;
                                }
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> pairs_to_symmetric(const Tensor<T>& s, std::size_t batch, std::size_t n, T diagonal) {
  const std::size_t pairs = n * (n - 1) / 2;
  if (s.numel() != batch * pairs) {
    throw ShapeError("pairs_to_symmetric: " + shape_str(s.shape()) + " does not hold " +
                     std::to_string(batch) + " x " + std::to_string(pairs) + " pairs");
  }
  std::vector<T> out(batch * n * n, T(0));
  const T* sd = s.data().data();
  std::size_t p = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    T* ob = out.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      ob[i * n + i] = diagonal;
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        ob[i * n + j] = sd[p];
        ob[j * n + i] = sd[p];
      }
    }
  }
  return make_result<T>(Shape{batch, n, n}, std::move(out), {s},
                        [si = s.impl(), batch, n](const Impl<T>& self) {
                          T* gs = grad_ptr(si);
                          if (!gs) return;
                          std::size_t p = 0;
                          for (std::size_t b = 0; b < batch; ++b) {
                            const T* gb = self.grad.data() + b * n * n;
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = i + 1; j < n; ++j, ++p)
                                gs[p] += gb[i * n + j] + gb[j * n + i];
                          }
                        });
}

template <typename T>
Tensor<T> set_diagonal(const Tensor<T>& e, T value) {
  if (e.rank() < 2 || e.dim(e.rank() - 1) != e.dim(e.rank() - 2)) {
    throw ShapeError("set_diagonal: expected [.. x n x n], got " + shape_str(e.shape()));
  }
  const std::size_t n = e.dim(e.rank() - 1);
  const std::size_t mats = e.numel() / (n * n);
  std::vector<T> out(e.data().begin(), e.data().end());
  for (std::size_t m = 0; m < mats; ++m)
    for (std::size_t i = 0; i < n; ++i) out[m * n * n + i * n + i] = value;
  return make_result<T>(e.shape(), std::move(out), {e}, [ei = e.impl(), n, mats](const Impl<T>& self) {
    T* ge = grad_ptr(ei);
    if (!ge) return;
    for (std::size_t m = 0; m < mats; ++m)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) ge[m * n * n + i * n + j] += self.grad[m * n * n + i * n + j];
  });
}

template <typename T>
Tensor<T> row_normalize(const Tensor<T>& e) {
  if (e.rank() < 1) throw ShapeError("row_normalize: scalar input");
  const std::size_t cols = e.dim(e.rank() - 1);
  const std::size_t rows = cols ? e.numel() / cols : 0;
  std::vector<T> out(e.numel());
  std::vector<T> sums(rows);
  const T* ed = e.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (std::size_t c = 0; c < cols; ++c) acc += ed[r * cols + c];
    if (!(acc > T(0)) || !std::isfinite(acc)) {
      throw NumericError("row_normalize: row " + std::to_string(r) + " has sum " +
                         std::to_string(static_cast<double>(acc)));
    }
    sums[r] = acc;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = ed[r * cols + c] / acc;
  }
  return make_result<T>(e.shape(), std::move(out), {e},
                        [ei = e.impl(), sums = std::move(sums), rows, cols](const Impl<T>& self) {
                          T* ge = grad_ptr(ei);
                          if (!ge) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            T dot = T(0);
                            for (std::size_t c = 0; c < cols; ++c)
                              dot += self.grad[r * cols + c] * self.data[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c)
                              ge[r * cols + c] += (self.grad[r * cols + c] - dot) / sums[r];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Classification

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  if (n == 0) throw ShapeError("softmax_cross_entropy: no rows");
  std::vector<T> probs(n * classes);
  std::vector<int> lab(labels.begin(), labels.end());
  const T* ld = logits.data().data();
  T total = T(0);
  for (std::size_t r = 0; r < n; ++r) {
    const int y = lab[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw PreconditionError("softmax_cross_entropy: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = ld + r * classes;
    const T mx = *std::max_element(row, row + classes);
    T z = T(0);
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const T log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - log_z);
    total += log_z - row[y];
  }
  const T loss = total / static_cast<T>(n);
  return make_result<T>(Shape{1}, {loss}, {logits},
                        [li = logits.impl(), probs = std::move(probs), lab = std::move(lab), n,
                         classes](const Impl<T>& self) {
                          T* gl = grad_ptr(li);
                          if (!gl) return;
                          const T g = self.grad[0] / static_cast<T>(n);
                          for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t c = 0; c < classes; ++c) {
                              const T target = static_cast<int>(c) == lab[r] ? T(1) : T(0);
                              gl[r * classes + c] += g * (probs[r * classes + c] - target);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<T> out(labels.size() * classes, T(0));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw PreconditionError("one_hot: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    out[r * classes + static_cast<std::size_t>(y)] = T(1);
  }
  return Tensor<T>(Shape{labels.size(), classes}, std::move(out), false);
}

#define METALAB_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> grouped_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                    std::size_t, std::size_t, std::size_t);                     \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> global_max_pool2d(const Tensor<T>&);                                       \
  template Tensor<T> pairwise_l1(const Tensor<T>&);                                             \
  template Tensor<T> pair_abs_diff(const Tensor<T>&);                                           \
  template Tensor<T> pairs_to_symmetric(const Tensor<T>&, std::size_t, std::size_t, T);         \
  template Tensor<T> set_diagonal(const Tensor<T>&, T);                                         \
  template Tensor<T> row_normalize(const Tensor<T>&);                                           \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);             \
  template Tensor<T> one_hot(std::span<const int>, std::size_t);

METALAB_INSTANTIATE_OPS(float)
METALAB_INSTANTIATE_OPS(double)

#undef METALAB_INSTANTIATE_OPS

}  // namespace metalab
