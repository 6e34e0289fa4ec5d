// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "uttenc/checkpoint.hpp"

#include <fstream>
#include <iterator>

namespace uttenc {

namespace {

constexpr char kMagic[4] = {'U', 'E', 'C', 'K'};

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(const std::vector<unsigned char>& bytes, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::string Checkpoint::config_hash() const { return fnv1a_hex(config.dump()); }

std::string Checkpoint::content_hash() const { return fnv1a_hex(blob.data(), blob.size()); }

RunConfig Checkpoint::run_config() const { return RunConfig::from_json(config); }

nlohmann::json Checkpoint::manifest() const {
  nlohmann::json inv = nlohmann::json::array();
  for (const auto& e : inventory)
    inv.push_back({{"name", e.name},
                   {"shape", e.shape},
                   {"dtype", dtype},
                   {"kind", e.kind},
                   {"offset", e.offset},
                   {"bytes", e.bytes}});
  return {{"format_version", format_version},
          {"dtype", dtype},
          {"config", config},
          {"config_hash", config_hash()},
          {"inventory", inv},
          {"content_hash", content_hash()}};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string manifest = ckpt.manifest().dump(1);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kMagic, 4);
    put_le<std::uint32_t>(os, ckpt.format_version);
    put_le<std::uint64_t>(os, manifest.size());
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    os.write(reinterpret_cast<const char*>(ckpt.blob.data()),
             static_cast<std::streamsize>(ckpt.blob.size()));
    if (!os) throw DataError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                         std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DataError(where + "not a checkpoint file");
  Checkpoint ck;
  ck.format_version = get_le<std::uint32_t>(bytes, 4);
  if (ck.format_version != kCheckpointVersion)
    throw DataError(where + "unsupported format version " + std::to_string(ck.format_version));
  const auto manifest_size = get_le<std::uint64_t>(bytes, 8);
  if (manifest_size > bytes.size() - 16) throw DataError(where + "truncated manifest");

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16,
                              bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_size));
    ck.config = m.at("config");
    ck.dtype = m.at("dtype").get<std::string>();
    for (const auto& e : m.at("inventory")) {
      TensorEntry t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      t.kind = e.at("kind").get<std::string>();
      t.offset = e.at("offset").get<std::uint64_t>();
      t.bytes = e.at("bytes").get<std::uint64_t>();
      ck.inventory.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed manifest: " + e.what());
  }
  if (ck.dtype != "float32" && ck.dtype != "float64")
    throw DataError(where + "unknown dtype " + ck.dtype);

  ck.blob.assign(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_size), bytes.end());
  if (ck.content_hash() != m.value("content_hash", std::string()))
    throw DataError(where + "content hash mismatch");
  if (ck.config_hash() != m.value("config_hash", std::string()))
    throw DataError(where + "config hash mismatch");
  const std::uint64_t elem = ck.dtype == "float32" ? 4 : 8;
  std::uint64_t expected_offset = 0;
  for (const auto& t : ck.inventory) {
    if (t.offset != expected_offset || t.bytes != static_cast<std::uint64_t>(numel(t.shape)) * elem)
      throw DataError(where + "inventory entry " + t.name + " does not match its blob");
    expected_offset += t.bytes;
  }
  if (expected_offset != ck.blob.size()) throw DataError(where + "blob length does not match inventory");
  return ck;
}

}  // namespace uttenc
