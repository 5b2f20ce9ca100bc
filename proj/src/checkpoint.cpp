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

#include "mam/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "binary_io.hpp"
#include "mam/error.hpp"

namespace mam::checkpoint {

std::uint32_t crc32(const void* data, std::size_t bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

NamedTensor NamedTensor::floats(std::string name, Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != values.size()) throw DimensionError("checkpoint tensor '" + name + "': shape/data mismatch");
  NamedTensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.f32 = std::move(values);
  return t;
}

NamedTensor NamedTensor::integers(std::string name, std::vector<std::int64_t> values) {
  NamedTensor t;
  t.name = std::move(name);
  t.shape = Shape{values.size()};
  t.i64 = std::move(values);
  t.is_integer = true;
  return t;
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::add(NamedTensor t) {
  if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos)
    throw ContractError("checkpoint tensor names must be non-empty and free of whitespace");
  if (contains(t.name)) throw ContractError("duplicate checkpoint tensor '" + t.name + "'");
  tensors.push_back(std::move(t));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream manifest;
  io::ByteWriter payload;
  for (const auto& t : ckpt.tensors) {
    const void* data = t.is_integer ? static_cast<const void*>(t.i64.data()) : static_cast<const void*>(t.f32.data());
    const std::size_t nbytes = t.is_integer ? t.i64.size() * sizeof(std::int64_t) : t.f32.size() * sizeof(float);
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", crc32(data, nbytes));
    manifest << t.name << ' ' << shape_to_string(t.shape) << ' ' << (t.is_integer ? "i64" : "f32") << ' '
             << payload.bytes().size() << ' ' << nbytes << ' ' << crc << '\n';
    payload.put_bytes(data, nbytes);
  }
  const std::string text = manifest.str();
  io::ByteWriter out;
  out.put_bytes("MAMC", 4);
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint64_t>(ckpt.step);
  out.put<std::uint64_t>(text.size());
  out.put_bytes(text.data(), text.size());
  out.put_bytes(payload.bytes().data(), payload.bytes().size());
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, out.bytes());
}

namespace {

Shape parse_shape(const std::string& s, const std::string& where) {
  if (s == "scalar") return {};
  Shape shape;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t x = s.find('x', start);
    const std::string part = s.substr(start, x == std::string::npos ? std::string::npos : x - start);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError(where + ": malformed shape '" + s + "'");
    shape.push_back(std::stoull(part));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return shape;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string where = path.string();
  io::ByteReader r(bytes, where);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "MAMC", 4) != 0) throw FormatError(where + ": bad magic, not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(where + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.step = r.get<std::uint64_t>();
  const auto manifest_bytes = r.get<std::uint64_t>();
  if (manifest_bytes > r.remaining()) throw FormatError(where + ": truncated manifest");
  std::string text(manifest_bytes, '\0');
  r.get_bytes(text.data(), text.size());
  const std::size_t payload_start = r.position();
  const std::size_t payload_size = r.remaining();

  std::istringstream lines(text);
  std::string line;
  std::size_t expected_end = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, shape_s, dtype, crc_s;
    std::size_t offset = 0, nbytes = 0;
    if (!(fields >> name >> shape_s >> dtype >> offset >> nbytes >> crc_s))
      throw FormatError(where + ": malformed manifest line '" + line + "'");
    NamedTensor t;
    t.name = name;
    t.shape = parse_shape(shape_s, where);
    const std::size_t elem = dtype == "f32" ? sizeof(float) : dtype == "i64" ? sizeof(std::int64_t) : 0;
    if (elem == 0) throw FormatError(where + ": tensor '" + name + "' has unknown dtype '" + dtype + "'");
    if (nbytes != shape_numel(t.shape) * elem)
      throw FormatError(where + ": manifest/payload mismatch for tensor '" + name + "'");
    if (offset + nbytes > payload_size) throw FormatError(where + ": truncated payload at tensor '" + name + "'");
    const char* data = bytes.data() + payload_start + offset;
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", crc32(data, nbytes));
    if (crc_s != crc) throw FormatError(where + ": checksum mismatch for tensor '" + name + "'");
    if (dtype == "i64") {
      t.is_integer = true;
      t.i64.resize(nbytes / sizeof(std::int64_t));
      std::memcpy(t.i64.data(), data, nbytes);
    } else {
      t.f32.resize(nbytes / sizeof(float));
      std::memcpy(t.f32.data(), data, nbytes);
    }
    expected_end = std::max(expected_end, offset + nbytes);
    ckpt.add(std::move(t));
  }
  if (expected_end != payload_size) throw FormatError(where + ": manifest/payload mismatch (trailing or missing bytes)");
  return ckpt;
}

}  // namespace mam::checkpoint
