#pragma once

// Run configuration shared by every command. Sources, highest precedence
// first: command-line flags, the METALAB_SEED environment variable (seed
// only), a flat `key = value` config file, built-in defaults.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "metalab/colorspace.hpp"
#include "metalab/episode.hpp"
#include "metalab/losses.hpp"
#include "metalab/model.hpp"
#include "metalab/trainer.hpp"

namespace metalab {

inline constexpr const char* kSeedEnvVar = "METALAB_SEED";

struct RunConfig {
  std::size_t k_way = 5;
  std::size_t n_shot = 1;
  std::size_t q_query = 1;
  std::size_t batch_episodes = 1;
  std::size_t hidden_h = 96;
  std::size_t embed_dim = 128;
  std::size_t image_size = 84;
  // Unset: chosen from q_query by default_generations().
  std::optional<std::size_t> generations;
  // Unset: 3, capped at the generation count.
  std::optional<std::size_t> loss_gens;
  double lambda = 0.1;
  double beta = 0.1;
  double gamma = 1.0;
  bool gamma_ramp = false;
  double lr = 1e-3;
  std::size_t train_iters = 500;
  std::size_t val_every = 50;
  std::size_t val_episodes = 100;
  double early_stop_acc = 0.0;
  std::size_t eval_episodes = 500;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  // "synthetic" or a directory in the root/{train,val,test}/<class>/<image>.png layout.
  std::string dataset = "synthetic";
  std::size_t synth_classes = 20;
  std::size_t synth_per_class = 50;
  std::uint64_t synth_seed = 0;
  color::NormMode norm_mode = color::NormMode::kNormalized;
  std::filesystem::path checkpoint = "metalab.ckpt";

  std::size_t resolved_generations() const;
  std::size_t resolved_loss_gens() const;
  EpisodeSpec episode_spec() const;
  LossWeights loss_weights() const;
  ModelConfig model_config() const;
  TrainOptions train_options() const;

  // Throws ConfigError on any inconsistent or out-of-range field.
  void validate() const;
};

// Generation count paired with a query count: 1 -> 5, up to 10 -> 10, more -> 15.
std::size_t default_generations(std::size_t q_query);

// Parses `key = value` lines; '#' starts a comment. Throws ConfigError on
// malformed lines and duplicate keys.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Applies one setting by its RunConfig field name. Throws ConfigError for an
// unknown key or an unparsable value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Every key accepted by apply_setting, in declaration order.
const std::vector<std::string>& config_keys();

std::string to_string(color::NormMode mode);

}  // namespace metalab
