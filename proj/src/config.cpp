#include "tiedmt/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tiedmt {

namespace {

std::string trim(const std::string& s) {
  size_t first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  size_t last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": empty key");
    if (!cfg.values_.emplace(key, value).second)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": duplicate key '" + key + "'");
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("config " + path + ": cannot open");
  std::ostringstream text;
  text << file.rdbuf();
  return parse(text.str());
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::fetch(const std::string& key) const {
  read_.insert(key);
  return values_.at(key);
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  return has(key) ? fetch(key) : fallback;
}

int64_t KeyValueConfig::get_int(const std::string& key,
                                int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = fetch(key);
  try {
    size_t used = 0;
    int64_t value = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": '" + raw +
                             "' is not an integer");
  }
}

uint64_t KeyValueConfig::get_uint(const std::string& key,
                                  uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = fetch(key);
  try {
    if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
    size_t used = 0;
    uint64_t value = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": '" + raw +
                             "' is not an unsigned integer");
  }
}

Real KeyValueConfig::get_real(const std::string& key, Real fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = fetch(key);
  try {
    size_t used = 0;
    double value = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return static_cast<Real>(value);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": '" + raw +
                             "' is not a number");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = fetch(key);
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw std::runtime_error("config key " + key + ": '" + raw +
                           "' is not a boolean (true/false/1/0)");
}

std::vector<std::string> KeyValueConfig::unread_keys() const {
  std::vector<std::string> unread;
  for (const auto& [key, value] : values_)
    if (!read_.count(key)) unread.push_back(key);
  return unread;
}

ModelConfig model_config_from(const KeyValueConfig& cfg,
                              const ModelConfig& base) {
  ModelConfig out = base;
  out.enc_layers = static_cast<int>(cfg.get_int("model.enc_layers", out.enc_layers));
  out.dec_layers = static_cast<int>(cfg.get_int("model.dec_layers", out.dec_layers));
  out.d_model = static_cast<int>(cfg.get_int("model.d_model", out.d_model));
  out.heads = static_cast<int>(cfg.get_int("model.heads", out.heads));
  out.d_ff = static_cast<int>(cfg.get_int("model.d_ff", out.d_ff));
  out.vocab = static_cast<int>(cfg.get_int("model.vocab", out.vocab));
  out.max_len = static_cast<int>(cfg.get_int("model.max_len", out.max_len));
  out.recurrent_stacking = cfg.get_bool("model.rs", out.recurrent_stacking);
  out.dropout = cfg.get_real("model.dropout", out.dropout);
  out.validate();
  return out;
}

TrainingConfig training_config_from(const KeyValueConfig& cfg,
                                    const TrainingConfig& base) {
  TrainingConfig out = base;
  out.steps = static_cast<int>(cfg.get_int("train.steps", out.steps));
  out.batch_size = static_cast<int>(cfg.get_int("train.batch_size", out.batch_size));
  out.lr_scale = cfg.get_real("train.lr_scale", out.lr_scale);
  out.warmup_steps =
      static_cast<int>(cfg.get_int("train.warmup_steps", out.warmup_steps));
  out.label_smoothing =
      cfg.get_real("train.label_smoothing", out.label_smoothing);
  out.aggregation = cfg.get_string("train.aggregation", out.aggregation);
  out.seed = cfg.get_uint("train.seed", out.seed);
  out.checkpoint_every =
      static_cast<int>(cfg.get_int("train.checkpoint_every", out.checkpoint_every));
  out.keep_last = static_cast<int>(cfg.get_int("train.keep_last", out.keep_last));
  out.validate();
  return out;
}

ToyTaskSpec toy_spec_from(const KeyValueConfig& cfg, const ToyTaskSpec& base) {
  ToyTaskSpec out = base;
  out.task = cfg.get_string("toy.task", out.task);
  out.vocab_symbols =
      static_cast<int>(cfg.get_int("toy.vocab_symbols", out.vocab_symbols));
  out.rot = static_cast<int>(cfg.get_int("toy.rot", out.rot));
  out.min_len = static_cast<int>(cfg.get_int("toy.min_len", out.min_len));
  out.max_len = static_cast<int>(cfg.get_int("toy.max_len", out.max_len));
  out.size = static_cast<int>(cfg.get_int("toy.size", out.size));
  out.seed = cfg.get_uint("toy.seed", out.seed);
  out.validate();
  return out;
}

BeamConfig beam_config_from(const KeyValueConfig& cfg, const BeamConfig& base) {
  BeamConfig out = base;
  out.beam = static_cast<int>(cfg.get_int("beam.size", out.beam));
  out.alpha = cfg.get_real("beam.alpha", out.alpha);
  out.max_len = static_cast<int>(cfg.get_int("beam.max_len", out.max_len));
  out.validate();
  return out;
}

SelectorConfig selector_config_from(const KeyValueConfig& cfg,
                                    const SelectorConfig& base) {
  SelectorConfig out = base;
  out.layers = static_cast<int>(cfg.get_int("selector.layers", out.layers));
  out.heads = static_cast<int>(cfg.get_int("selector.heads", out.heads));
  out.d_ff = static_cast<int>(cfg.get_int("selector.d_ff", out.d_ff));
  out.alpha = cfg.get_real("selector.alpha", out.alpha);
  out.beta = cfg.get_real("selector.beta", out.beta);
  out.lambda = cfg.get_real("selector.lambda", out.lambda);
  out.threshold = cfg.get_real("selector.threshold", out.threshold);
  out.learning_rate = cfg.get_real("selector.learning_rate", out.learning_rate);
  out.momentum = cfg.get_real("selector.momentum", out.momentum);
  out.epochs = static_cast<int>(cfg.get_int("selector.epochs", out.epochs));
  out.batch_size =
      static_cast<int>(cfg.get_int("selector.batch_size", out.batch_size));
  out.seed = cfg.get_uint("selector.seed", out.seed);
  out.validate();
  return out;
}

}  // namespace tiedmt
