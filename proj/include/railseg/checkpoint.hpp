#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "railseg/tensor.hpp"

namespace railseg {

// Checkpoint container: magic "RRCK", u32 LE version 1, u32 LE architecture
// hash, u32 LE tensor count, then per tensor u16 name length + name, u8 rank,
// u32 dims, float32 LE row-major data. Tensors are written sorted by name so
// write/read/write is byte-stable.
inline constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, uint32_t arch_hash,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);

// Returns the stored architecture hash; throws a data error on any truncation
// or malformed field.
uint32_t read_checkpoint(const std::string& path, std::map<std::string, Tensor>& out);

// FNV-1a over the canonical architecture description.
uint32_t fnv1a32(const std::string& text);

}  // namespace railseg
