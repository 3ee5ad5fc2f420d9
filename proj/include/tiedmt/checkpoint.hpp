#pragma once

// Self-describing binary weight container: fixed header (format version,
// config fields) followed by named records of little-endian 32-bit floats.
// Writing the same weights twice produces identical bytes.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tiedmt/model.hpp"

namespace tiedmt {

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr uint32_t kKindSeq2seq = 0;
inline constexpr uint32_t kKindSelector = 1;

// Kind-agnostic payload: eight config integers (interpretation depends on
// kind), one extra real, and the tensor records in canonical order.
struct CheckpointPayload {
  uint32_t kind = kKindSeq2seq;
  std::array<uint32_t, 8> fields{};
  float extra = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_payload(const std::string& path, const CheckpointPayload& payload);
CheckpointPayload load_payload(const std::string& path);

// Seq2seq convenience wrappers (kind 0).
void save_checkpoint(const std::string& path, const Parameters& params);
Parameters load_checkpoint(const std::string& path);

}  // namespace tiedmt
