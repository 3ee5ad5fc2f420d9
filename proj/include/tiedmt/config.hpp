#pragma once

// Line-based key=value run configuration shared by the command-line tool:
// '#' starts a comment, blank lines are skipped, whitespace around keys and
// values is trimmed, duplicate keys are rejected. Typed getters fall back to
// a caller default when a key is absent and throw on malformed values. Reads
// are tracked so callers can reject keys that nothing consumed (usually
// typos).

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tiedmt/decode.hpp"
#include "tiedmt/model.hpp"
#include "tiedmt/selector.hpp"
#include "tiedmt/toy.hpp"
#include "tiedmt/train.hpp"

namespace tiedmt {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  Real get_real(const std::string& key, Real fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;  // true/false/1/0

  // Keys present in the file that no getter ever touched.
  std::vector<std::string> unread_keys() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string fetch(const std::string& key) const;  // marks the key as read

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

// Overlay "<section>.<field>" keys from the config onto a base struct; fields
// not mentioned keep the base value. Each returned struct is validated.
ModelConfig model_config_from(const KeyValueConfig& cfg,
                              const ModelConfig& base = {});
TrainingConfig training_config_from(const KeyValueConfig& cfg,
                                    const TrainingConfig& base = {});
ToyTaskSpec toy_spec_from(const KeyValueConfig& cfg,
                          const ToyTaskSpec& base = {});
BeamConfig beam_config_from(const KeyValueConfig& cfg,
                            const BeamConfig& base = {});
SelectorConfig selector_config_from(const KeyValueConfig& cfg,
                                    const SelectorConfig& base = {});

}  // namespace tiedmt
