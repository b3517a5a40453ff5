#include "metalab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "metalab/errors.hpp"

namespace metalab {
namespace {

double evaluate(const ScalarFunction& fn, const std::vector<Tensor<double>>& inputs,
                const char* where) {
  NoGradGuard guard;
  const Tensor<double> out = fn(inputs);
  const double v = out.item();
  if (!std::isfinite(v)) {
    throw NumericError(std::string("check_gradients: non-finite function value at ") + where);
  }
  return v;
}

}  // namespace

GradCheckResult check_gradients(const ScalarFunction& fn, const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options) {
  std::vector<Tensor<double>> args = inputs;
  for (auto& t : args) {
    if (!t.requires_grad()) throw PreconditionError("check_gradients: input without requires_grad");
    t.zero_grad();
  }
  Tensor<double> out = fn(args);
  const double f0 = out.item();
  if (!std::isfinite(f0)) throw NumericError("check_gradients: non-finite function value at x");
  out.backward();

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  const double h = options.step;
  for (std::size_t k = 0; k < args.size(); ++k) {
    auto& t = args[k];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
    }

    auto data = t.mutable_data();
    for (std::size_t idx : coords) {
      const double saved = data[idx];
      double f[5];  // f(x - 2h) .. f(x + 2h)
      f[2] = f0;
      for (int j : {-2, -1, 1, 2}) {
        data[idx] = saved + j * h;
        f[j + 2] = evaluate(fn, args, j < 0 ? "x - h" : "x + h");
      }
      data[idx] = saved;

      const double roundoff = options.roundoff_factor *
                              std::numeric_limits<double>::epsilon() *
                              std::max(1.0, std::abs(f0)) / h;
      if (options.kink_tolerance > 0.0) {
        double s[4];
        double smax = 1e-4;
        for (int j = 0; j < 4; ++j) {
          s[j] = (f[j + 1] - f[j]) / h;
          smax = std::max(smax, std::abs(s[j]));
        }
        const double bend = std::max(std::abs(s[2] - 2.0 * s[1] + s[0]),
                                     std::abs(s[3] - 2.0 * s[2] + s[1]));
        if (bend > options.kink_tolerance * smax + roundoff) {
          ++result.skipped_kinks;
          continue;
        }
      }
      const double numeric = (-f[4] + 8.0 * f[3] - 8.0 * f[1] + f[0]) / (12.0 * h);
      const double g = analytic[idx];
      const double diff = std::abs(g - numeric);
      const double denom =
          std::max({std::abs(g), std::abs(numeric), options.denominator_floor});
      const double rel = diff / denom;
      ++result.checked;
      result.strict_max_rel_error = std::max(result.strict_max_rel_error, rel);
      if (diff <= roundoff) {
        ++result.at_roundoff;
        continue;
      }
      if (rel > result.max_rel_error || result.worst.empty()) {
        std::ostringstream w;
        w << "input " << k << " coord " << idx << ": autodiff " << g << ", numeric " << numeric;
        result.worst = w.str();
        result.max_rel_error = std::max(result.max_rel_error, rel);
      }
    }
  }
  return result;
}

}  // namespace metalab
