#include "metalab/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "metalab/errors.hpp"
#include "metalab/losses.hpp"
#include "metalab/model.hpp"
#include "metalab/ops.hpp"

namespace metalab {
namespace {

using D = double;
using Inputs = std::vector<Tensor<D>>;

struct Case {
  ScalarFunction fn;
  Inputs inputs;
};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  std::size_t dim(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Tensor<D> normal(Shape shape, bool requires_grad = true, double sd = 1.0) {
    std::normal_distribution<double> dist(0.0, sd);
    std::vector<D> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor<D>(std::move(shape), std::move(v), requires_grad);
  }
  Tensor<D> positive(Shape shape) {
    std::vector<D> v(shape_numel(shape));
    for (auto& x : v) x = uniform(0.5, 2.0);
    return Tensor<D>(std::move(shape), std::move(v), true);
  }
  Shape shape(std::size_t rank, std::size_t lo = 1, std::size_t hi = 4) {
    Shape s(rank);
    for (auto& d : s) d = dim(lo, hi);
    return s;
  }
  std::vector<int> labels(std::size_t n, std::size_t classes) {
    std::vector<int> out(n);
    for (auto& y : out) y = static_cast<int>(dim(0, classes - 1));
    return out;
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Random projection to a scalar so every output element carries its own weight.
Tensor<D> project(const Tensor<D>& out, const Tensor<D>& weights) { return sum(mul(out, weights)); }

using CaseFactory = std::function<Case(Draw&)>;

Case unary(Draw& d, std::function<Tensor<D>(const Tensor<D>&)> op, Tensor<D> x) {
  const Tensor<D> probe = op(x.detach());
  const Tensor<D> w = d.normal(probe.shape(), false);
  return {[op, w](const Inputs& in) { return project(op(in[0]), w); }, {x}};
}

std::vector<std::pair<std::string, CaseFactory>> primitive_cases() {
  std::vector<std::pair<std::string, CaseFactory>> cases;
  auto binary = [](std::function<Tensor<D>(const Tensor<D>&, const Tensor<D>&)> op) {
    return [op](Draw& d) {
      const Shape s = d.shape(d.dim(1, 3));
      const Tensor<D> w = d.normal(s, false);
      return Case{[op, w](const Inputs& in) { return project(op(in[0], in[1]), w); },
                  {d.normal(s), d.normal(s)}};
    };
  };
  cases.emplace_back("add", binary([](auto& a, auto& b) { return add(a, b); }));
  cases.emplace_back("sub", binary([](auto& a, auto& b) { return sub(a, b); }));
  cases.emplace_back("mul", binary([](auto& a, auto& b) { return mul(a, b); }));
  cases.emplace_back("scale", [](Draw& d) {
    const Shape s = d.shape(d.dim(1, 3));
    const double f = d.uniform(-2.0, 2.0);
    return unary(d, [f](const Tensor<D>& x) { return scale(x, f); }, d.normal(s));
  });
  cases.emplace_back("relu", [](Draw& d) {
    const Shape s = d.shape(d.dim(1, 3));
    return unary(d, [](const Tensor<D>& x) { return relu(x); }, d.normal(s));
  });
  cases.emplace_back("sigmoid", [](Draw& d) {
    const Shape s = d.shape(d.dim(1, 3));
    return unary(d, [](const Tensor<D>& x) { return sigmoid(x); }, d.normal(s, true, 3.0));
  });
  cases.emplace_back("sum", [](Draw& d) {
    const Shape s = d.shape(d.dim(1, 3));
    return Case{[](const Inputs& in) { return sum(mul(in[0], in[0])); }, {d.normal(s)}};
  });
  cases.emplace_back("mean", [](Draw& d) {
    const Shape s = d.shape(d.dim(1, 3));
    return Case{[](const Inputs& in) { return mean(mul(in[0], in[0])); }, {d.normal(s)}};
  });
  cases.emplace_back("reshape", [](Draw& d) {
    const Shape s = d.shape(3);
    const Shape t{s[2], s[0] * s[1]};
    return unary(d, [t](const Tensor<D>& x) { return reshape(x, t); }, d.normal(s));
  });
  cases.emplace_back("narrow", [](Draw& d) {
    const Shape s = d.shape(3, 2, 5);
    const std::size_t axis = d.dim(0, 2);
    const std::size_t start = d.dim(0, s[axis] - 1);
    const std::size_t len = d.dim(1, s[axis] - start);
    return unary(d, [=](const Tensor<D>& x) { return narrow(x, axis, start, len); },
                 d.normal(s));
  });
  cases.emplace_back("concat", [](Draw& d) {
    const Shape base = d.shape(3);
    const std::size_t axis = d.dim(0, 2);
    const std::size_t parts = d.dim(2, 3);
    Inputs in;
    Shape out = base;
    out[axis] = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      Shape s = base;
      s[axis] = d.dim(1, 3);
      out[axis] += s[axis];
      in.push_back(d.normal(s));
    }
    const Tensor<D> w = d.normal(out, false);
    return Case{[axis, w](const Inputs& x) { return project(concat(x, axis), w); }, in};
  });
  cases.emplace_back("matmul", [](Draw& d) {
    const std::size_t m = d.dim(1, 4), k = d.dim(1, 4), n = d.dim(1, 4);
    const Tensor<D> w = d.normal({m, n}, false);
    return Case{[w](const Inputs& in) { return project(matmul(in[0], in[1]), w); },
                {d.normal({m, k}), d.normal({k, n})}};
  });
  cases.emplace_back("bmm", [](Draw& d) {
    const std::size_t b = d.dim(1, 3), m = d.dim(1, 4), k = d.dim(1, 4), n = d.dim(1, 4);
    const Tensor<D> w = d.normal({b, m, n}, false);
    return Case{[w](const Inputs& in) { return project(bmm(in[0], in[1]), w); },
                {d.normal({b, m, k}), d.normal({b, k, n})}};
  });
  cases.emplace_back("linear", [](Draw& d) {
    const std::size_t n = d.dim(1, 4), in_f = d.dim(1, 5), out_f = d.dim(1, 5);
    const Tensor<D> w = d.normal({n, out_f}, false);
    if (d.dim(0, 1)) {
      return Case{[w](const Inputs& in) { return project(linear(in[0], in[1], in[2]), w); },
                  {d.normal({n, in_f}), d.normal({out_f, in_f}), d.normal({out_f})}};
    }
    return Case{[w](const Inputs& in) { return project(linear(in[0], in[1], Tensor<D>()), w); },
                {d.normal({n, in_f}), d.normal({out_f, in_f})}};
  });
  cases.emplace_back("grouped_conv2d", [](Draw& d) {
    const std::size_t groups = d.dim(1, 3), cin_g = d.dim(1, 2), cout_g = d.dim(1, 2);
    const std::size_t k = d.dim(1, 3), stride = d.dim(1, 2), pad = d.dim(0, 1);
    const std::size_t n = d.dim(1, 2), h = d.dim(3, 6), wdt = d.dim(3, 6);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wdt + 2 * pad - k) / stride + 1;
    const Tensor<D> w = d.normal({n, groups * cout_g, oh, ow}, false);
    return Case{[=](const Inputs& in) {
                  return project(grouped_conv2d(in[0], in[1], in[2], groups, stride, pad), w);
                },
                {d.normal({n, groups * cin_g, h, wdt}), d.normal({groups * cout_g, cin_g, k, k}),
                 d.normal({groups * cout_g})}};
  });
  cases.emplace_back("batch_norm", [](Draw& d) {
    const std::size_t n = d.dim(2, 4), c = d.dim(1, 3);
    Shape s{n, c};
    if (d.dim(0, 1)) {
      s.push_back(d.dim(1, 3));
      s.push_back(d.dim(1, 3));
    }
    const Tensor<D> w = d.normal(s, false);
    return Case{[w](const Inputs& in) { return project(batch_norm(in[0], in[1], in[2]), w); },
                {d.normal(s, true, 2.0), d.normal({c}), d.normal({c})}};
  });
  cases.emplace_back("max_pool2d", [](Draw& d) {
    const std::size_t k = d.dim(1, 3), stride = d.dim(1, 2);
    const Shape s{d.dim(1, 2), d.dim(1, 2), d.dim(k, 6), d.dim(k, 6)};
    return unary(d, [=](const Tensor<D>& x) { return max_pool2d(x, k, stride); },
                 d.normal(s));
  });
  cases.emplace_back("global_max_pool2d", [](Draw& d) {
    const Shape s = d.shape(4);
    return unary(d, [](const Tensor<D>& x) { return global_max_pool2d(x); }, d.normal(s));
  });
  cases.emplace_back("pairwise_l1", [](Draw& d) {
    Shape s{d.dim(1, 5), d.dim(1, 4)};
    if (d.dim(0, 1)) s.insert(s.begin(), d.dim(1, 3));
    return unary(d, [](const Tensor<D>& x) { return pairwise_l1(x); }, d.normal(s));
  });
  cases.emplace_back("pair_abs_diff", [](Draw& d) {
    const Shape s{d.dim(1, 3), d.dim(2, 5), d.dim(1, 4)};
    return unary(d, [](const Tensor<D>& x) { return pair_abs_diff(x); }, d.normal(s));
  });
  cases.emplace_back("pairs_to_symmetric", [](Draw& d) {
    const std::size_t b = d.dim(1, 3), n = d.dim(2, 5);
    const Shape s{b * n * (n - 1) / 2};
    return unary(d, [=](const Tensor<D>& x) { return pairs_to_symmetric(x, b, n, 1.0); },
                 d.normal(s));
  });
  cases.emplace_back("set_diagonal", [](Draw& d) {
    const std::size_t n = d.dim(1, 5);
    const Shape s{d.dim(1, 3), n, n};
    return unary(d, [](const Tensor<D>& x) { return set_diagonal(x, 1.0); }, d.normal(s));
  });
  cases.emplace_back("row_normalize", [](Draw& d) {
    const Shape s{d.dim(1, 3), d.dim(1, 5), d.dim(1, 5)};
    return unary(d, [](const Tensor<D>& x) { return row_normalize(x); }, d.positive(s));
  });
  cases.emplace_back("softmax_cross_entropy", [](Draw& d) {
    const std::size_t n = d.dim(1, 6), k = d.dim(2, 6);
    const auto labels = d.labels(n, k);
    return Case{[labels](const Inputs& in) { return softmax_cross_entropy(in[0], labels); },
                {d.normal({n, k}, true, 2.0)}};
  });
  cases.emplace_back("one_hot", [](Draw& d) {
    const std::size_t n = d.dim(1, 6), k = d.dim(2, 6);
    const Tensor<D> h = one_hot<D>(d.labels(n, k), k);
    return Case{[h](const Inputs& in) { return sum(mul(mul(in[0], in[0]), h)); },
                {d.normal({n, k})}};
  });
  return cases;
}

void merge(GradSuiteEntry& entry, const GradCheckResult& r) {
  ++entry.trials;
  entry.checked += r.checked;
  entry.skipped_kinks += r.skipped_kinks;
  entry.at_roundoff += r.at_roundoff;
  entry.strict_max_rel_error = std::max(entry.strict_max_rel_error, r.strict_max_rel_error);
  if (r.max_rel_error > entry.max_rel_error || (entry.worst.empty() && !r.worst.empty())) {
    entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
    entry.worst = r.worst;
  }
}

EpisodeBatch random_episode(std::size_t size, std::mt19937_64& rng) {
  EpisodeBatch ep;
  ep.spec = EpisodeSpec{2, 1, 1, 1};
  ep.images = color::RgbBatch(1, 4, size, size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& v : ep.images.data) v = unit(rng);
  ep.labels = {0, 1, 0, 1};
  ep.class_map = {{0, 1}};
  return ep;
}

}  // namespace

std::vector<GradSuiteEntry> run_primitive_gradchecks(std::size_t trials, std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  const auto cases = primitive_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradSuiteEntry entry;
    entry.name = cases[c].first;
    for (std::size_t t = 0; t < trials; ++t) {
      Draw draw(seed * 1000003ULL + c * 7919ULL + t);
      Case cs = cases[c].second(draw);
      GradCheckOptions opt;
      opt.seed = t;
      merge(entry, check_gradients(cs.fn, cs.inputs, opt));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

GradSuiteEntry run_end_to_end_gradcheck(const EndToEndGradOptions& options) {
  GradSuiteEntry entry;
  entry.name = "end_to_end_total_loss";
  for (std::size_t t = 0; t < options.trials; ++t) {
    ModelConfig mc;
    mc.net.hidden_h = options.hidden_h;
    mc.net.embed_dim = options.embed_dim;
    mc.net.image_size = options.image_size;
    mc.generations = options.generations;
    MetaLabModel<D> model(mc, options.seed * 1000003ULL + t);
    std::mt19937_64 rng(options.seed * 7919ULL + t);
    const EpisodeBatch ep = random_episode(options.image_size, rng);
    LossWeights weights;
    weights.loss_gens = std::min<std::size_t>(weights.loss_gens, options.generations);

    Inputs params;
    for (const auto& name : model.params().names()) params.push_back(model.params().get(name));
    // The inputs are the model's own parameter handles, perturbed in place.
    ScalarFunction fn = [&model, &ep, weights](const Inputs&) {
      return total_loss(model.forward(ep), ep.labels, ep.spec, weights).total;
    };
    GradCheckOptions opt;
    opt.max_coords_per_input = options.coords_per_tensor;
    opt.seed = options.seed + t;
    merge(entry, check_gradients(fn, params, opt));
  }
  return entry;
}

}  // namespace metalab
