#pragma once

// Randomized finite-difference checks of every differentiable primitive and of
// the full MetaLab loss, shared by the `gradcheck` command and the tests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "metalab/gradcheck.hpp"

namespace metalab {

struct GradSuiteEntry {
  std::string name;
  std::size_t trials = 0;
  double max_rel_error = 0.0;
  double strict_max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t at_roundoff = 0;
  std::string worst;
};

// One entry per primitive; each trial draws fresh shapes and values.
std::vector<GradSuiteEntry> run_primitive_gradchecks(std::size_t trials, std::uint64_t seed);

struct EndToEndGradOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  // Coordinates sampled per parameter tensor per trial (0 = all).
  std::size_t coords_per_tensor = 12;
  std::size_t image_size = 16;
  std::size_t hidden_h = 2;
  std::size_t embed_dim = 8;
  std::size_t generations = 2;
};

// L_total of a K=2, N=1, Q=1 episode (T = 4) with respect to every model
// parameter, in double precision.
GradSuiteEntry run_end_to_end_gradcheck(const EndToEndGradOptions& options);

}  // namespace metalab
