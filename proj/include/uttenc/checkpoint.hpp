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

// Checkpoint file:
//
//   "UECK"  u32 format version  u64 manifest bytes  manifest JSON  blob
//
// The manifest holds the resolved run config, its hash, the tensor
// inventory (name, shape, dtype, kind, byte offset and length into the
// blob) and the FNV-1a hash of the blob. All integers are little-endian.

#ifndef UTTENC_CHECKPOINT_HPP_
#define UTTENC_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "uttenc/config.hpp"
#include "uttenc/model.hpp"

namespace uttenc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  Shape shape;
  std::string kind;  // "param" or "buffer"
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  nlohmann::json config;  // resolved RunConfig
  std::string dtype;      // "float32" or "float64"
  std::vector<TensorEntry> inventory;
  std::vector<unsigned char> blob;

  std::string config_hash() const;
  std::string content_hash() const;
  RunConfig run_config() const;
  nlohmann::json manifest() const;
};

/// Writes atomically through a temporary file next to `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws DataError on a bad magic, unknown major version, hash mismatch
/// or a blob that does not match the inventory.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
constexpr const char* dtype_name() {
  return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

/// Serialises every parameter and buffer of `model`.
template <typename Scalar>
Checkpoint capture(Model<Scalar>& model, const RunConfig& cfg) {
  Checkpoint ck;
  ck.config = cfg.to_json();
  ck.dtype = dtype_name<Scalar>();
  auto set = model.parameters();
  auto append = [&](const std::string& name, const Shape& shape, const char* kind,
                    const Scalar* data) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(numel(shape)) * sizeof(Scalar);
    ck.inventory.push_back({name, shape, kind, ck.blob.size(), bytes});
    const auto* raw = reinterpret_cast<const unsigned char*>(data);
    ck.blob.insert(ck.blob.end(), raw, raw + bytes);
  };
  for (const auto& p : set.params) append(p.name, p.tensor.shape(), "param", p.tensor.value().data());
  for (const auto& b : set.buffers) append(b.name, b.shape, "buffer", b.data);
  return ck;
}

/// Copies checkpoint tensors into `model`. Fails closed: any difference in
/// the inventory (names, shapes, kinds, dtype) throws ConfigError before
/// anything is written.
template <typename Scalar>
void restore(const Checkpoint& ck, Model<Scalar>& model) {
  if (ck.dtype != dtype_name<Scalar>())
    throw ConfigError("checkpoint holds " + ck.dtype + " tensors, model is " + dtype_name<Scalar>());
  auto set = model.parameters();
  std::vector<std::pair<std::string, Shape>> expected;
  for (const auto& p : set.params) expected.emplace_back(p.name, p.tensor.shape());
  for (const auto& b : set.buffers) expected.emplace_back(b.name, b.shape);
  if (expected.size() != ck.inventory.size())
    throw ConfigError("checkpoint has " + std::to_string(ck.inventory.size()) +
                      " tensors, model expects " + std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = ck.inventory[i];
    if (e.name != expected[i].first || e.shape != expected[i].second)
      throw ConfigError("checkpoint tensor " + e.name + " " + to_string(e.shape) +
                        " does not match model tensor " + expected[i].first + " " +
                        to_string(expected[i].second));
    if (e.bytes != static_cast<std::uint64_t>(numel(e.shape)) * sizeof(Scalar))
      throw DataError("checkpoint tensor " + e.name + " has the wrong byte length");
  }
  std::size_t i = 0;
  for (auto& p : set.params) {
    const auto& e = ck.inventory[i++];
    std::memcpy(p.tensor.mutable_value().data(), ck.blob.data() + e.offset, e.bytes);
  }
  for (auto& b : set.buffers) {
    const auto& e = ck.inventory[i++];
    std::memcpy(b.data, ck.blob.data() + e.offset, e.bytes);
  }
}

/// Rebuilds the model described by the checkpoint's config and loads it.
template <typename Scalar>
Model<Scalar> model_from_checkpoint(const Checkpoint& ck) {
  const auto cfg = ck.run_config();
  Model<Scalar> model(cfg.model, cfg.train.seed);
  restore(ck, model);
  return model;
}

}  // namespace uttenc

#endif  // UTTENC_CHECKPOINT_HPP_
