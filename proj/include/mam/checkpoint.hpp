// Copyright 2026 The MAM Speech Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Named-tensor archive ("MAMC").
//
// Layout (little-endian):
//   "MAMC" | u32 version | u64 step | u64 manifest_bytes | manifest | payload
// The manifest is UTF-8 text, one line per tensor:
//   name shape dtype offset nbytes crc32
// where shape is "AxBxC", dtype is f32 or i64, offset is relative to the
// payload start and crc32 is the zlib CRC of the tensor bytes in hex.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mam/tensor.hpp"

namespace mam::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> f32;
  std::vector<std::int64_t> i64;
  bool is_integer = false;

  static NamedTensor floats(std::string name, Shape shape, std::vector<float> values);
  static NamedTensor integers(std::string name, std::vector<std::int64_t> values);
};

struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  bool contains(const std::string& name) const;
  /// Throws FormatError naming the missing tensor.
  const NamedTensor& get(const std::string& name) const;
  void add(NamedTensor t);
};

/// Atomic: the archive only appears under `path` once fully written.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Verifies magic, version, manifest/payload agreement and every CRC.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32(const void* data, std::size_t bytes);

}  // namespace mam::checkpoint
