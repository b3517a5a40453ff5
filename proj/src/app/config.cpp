#include "metalab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "metalab/errors.hpp"

namespace metalab {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::optional<std::size_t> parse_optional_size(const std::string& key, const std::string& value) {
  if (value == "auto") return std::nullopt;
  return parse_number<std::size_t>(key, value);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

#define SIZE_FIELD(name) \
  {#name, [](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_number<std::size_t>(k, v); }}
#define DOUBLE_FIELD(name) \
  {#name, [](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_number<double>(k, v); }}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      SIZE_FIELD(k_way),
      SIZE_FIELD(n_shot),
      SIZE_FIELD(q_query),
      SIZE_FIELD(batch_episodes),
      SIZE_FIELD(hidden_h),
      SIZE_FIELD(embed_dim),
      SIZE_FIELD(image_size),
      {"generations",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.generations = parse_optional_size(k, v);
       }},
      {"loss_gens",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.loss_gens = parse_optional_size(k, v);
       }},
      DOUBLE_FIELD(lambda),
      DOUBLE_FIELD(beta),
      DOUBLE_FIELD(gamma),
      {"gamma_ramp",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.gamma_ramp = parse_bool(k, v); }},
      DOUBLE_FIELD(lr),
      SIZE_FIELD(train_iters),
      SIZE_FIELD(val_every),
      SIZE_FIELD(val_episodes),
      DOUBLE_FIELD(early_stop_acc),
      SIZE_FIELD(eval_episodes),
      SIZE_FIELD(workers),
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"dataset", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      SIZE_FIELD(synth_classes),
      SIZE_FIELD(synth_per_class),
      {"synth_seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth_seed = parse_number<std::uint64_t>(k, v);
       }},
      {"norm_mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "normalized") {
           c.norm_mode = color::NormMode::kNormalized;
         } else if (v == "raw") {
           c.norm_mode = color::NormMode::kRaw;
         } else {
           throw ConfigError("config key '" + k + "': expected normalized or raw, got '" + v + "'");
         }
       }},
      {"checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD

}  // namespace

std::size_t default_generations(std::size_t q_query) {
  if (q_query <= 1) return 5;
  if (q_query <= 10) return 10;
  return 15;
}

std::size_t RunConfig::resolved_generations() const {
  return generations ? *generations : default_generations(q_query);
}

std::size_t RunConfig::resolved_loss_gens() const {
  return loss_gens ? *loss_gens : std::min<std::size_t>(3, resolved_generations());
}

EpisodeSpec RunConfig::episode_spec() const {
  return EpisodeSpec{k_way, n_shot, q_query, batch_episodes};
}

LossWeights RunConfig::loss_weights() const {
  LossWeights w;
  w.lambda = lambda;
  w.beta = beta;
  w.gamma = gamma;
  w.loss_gens = resolved_loss_gens();
  w.gamma_ramp = gamma_ramp;
  return w;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.net.hidden_h = hidden_h;
  m.net.embed_dim = embed_dim;
  m.net.image_size = image_size;
  m.generations = resolved_generations();
  m.norm_mode = norm_mode;
  return m;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.spec = episode_spec();
  o.weights = loss_weights();
  o.adam.lr = lr;
  o.iters = train_iters;
  o.val_every = val_every;
  o.val_episodes = val_episodes;
  o.seed = seed;
  o.early_stop_acc = early_stop_acc;
  o.checkpoint = checkpoint;
  o.workers = workers;
  return o;
}

void RunConfig::validate() const {
  episode_spec().validate();
  model_config().net.validate();
  const std::size_t g = resolved_generations();
  if (g < 1) throw ConfigError("generations must be >= 1");
  loss_weights().validate(g);
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (val_every && val_episodes < 2) throw ConfigError("val_episodes must be >= 2");
  if (eval_episodes < 2) throw ConfigError("eval_episodes must be >= 2");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (early_stop_acc < 0.0 || early_stop_acc > 1.0) {
    throw ConfigError("early_stop_acc must lie in [0, 1]");
  }
  if (dataset.empty()) throw ConfigError("dataset must be 'synthetic' or a directory");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, setter] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::string to_string(color::NormMode mode) {
  return mode == color::NormMode::kRaw ? "raw" : "normalized";
}

}  // namespace metalab
