#pragma once

// Central finite differences against reverse-mode gradients, in double.
// The numeric derivative uses the fourth-order stencil
//   (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metalab/tensor.hpp"

namespace metalab {

struct GradCheckOptions {
  double step = 1e-4;
  // Relative error denominator is max(|g|, denominator_floor) with
  // |g| = max(|autodiff|, |finite difference|).
  double denominator_floor = 1e-8;
  // The four one-sided slopes s_i over [x-2h, x+2h] of a smooth function have
  // second differences of order h^2 times the third derivative. A coordinate
  // is skipped as a kink (ReLU, max, |.|) when max |s_{i+2} - 2 s_{i+1} + s_i|
  // exceeds kink_tolerance * max(max_i |s_i|, 1e-4) plus the roundoff
  // allowance below. Zero disables the test.
  double kink_tolerance = 1e-6;
  // Absolute discrepancies up to roundoff_factor * eps * max(1, |f(x)|) / h are
  // what rounding in f alone can produce. Such coordinates count as passed and
  // are excluded from max_rel_error (they stay in strict_max_rel_error).
  double roundoff_factor = 10.0;
  // 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Same maximum without the roundoff allowance.
  double strict_max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t at_roundoff = 0;  // checked coordinates within the allowance
  // Input index, coordinate and both gradient values at the worst entry.
  std::string worst;
};

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// `fn` must return a single-element tensor. Inputs are perturbed in place and
// restored; they must require gradients. Throws NumericError on non-finite
// function values.
GradCheckResult check_gradients(const ScalarFunction& fn, const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options = {});

}  // namespace metalab
