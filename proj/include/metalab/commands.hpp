#pragma once

// Subcommands of the metalab tool. Everything writes to the given streams so
// the commands can run in-process from tests.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "metalab/config.hpp"
#include "metalab/dataset.hpp"
#include "metalab/evaluate.hpp"

namespace metalab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// "synthetic" renders the synthetic dataset; anything else is loaded from disk.
Dataset resolve_dataset(const RunConfig& config);

struct EvalRow {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t queries = 0;
  AccuracyReport report;

  std::string to_json() const;
};

struct CurveRecord {
  std::string axis;
  std::size_t value = 0;
  double mean_acc = 0.0;
  double ci95 = 0.0;
  std::size_t episodes = 0;
  std::size_t train_iters = 0;
  double wall_ms = 0.0;

  std::string to_json() const;
};

inline const std::vector<std::string> kAblationAxes = {"hidden_h", "embed_dim", "generations"};

// Trains a fresh model per value of `axis` (same root seed) and evaluates it on
// the test split. For the generations axis the loss horizon is capped at the
// generation count. No checkpoints are written.
std::vector<CurveRecord> run_ablation(const RunConfig& config, const Dataset& dataset,
                                      const std::string& axis,
                                      const std::vector<std::size_t>& values,
                                      std::ostream* progress = nullptr);

// Full command line (argv[0] is the program name). Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace metalab
