// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Weight container and its on-disk format.
//
// Layout (all integers little-endian):
//   magic      8 bytes  "VSEPWGT\0"
//   version    u32
//   config     u32 length + UTF-8 JSON snapshot of SpectralModelConfig
//   count      u32 number of tensor records
//   record*    u32 name length, name bytes, u32 rank, u64 dims[rank],
//              f32 payload (product of dims values)
// Records are written in lexicographic name order.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vocsep/errors.hpp"
#include "vocsep/model_config.hpp"

namespace vocsep {

inline constexpr char kWeightsMagic[8] = {'V', 'S', 'E', 'P', 'W', 'G', 'T', '\0'};
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

struct WeightTensor {
  ag::Shape shape;
  std::vector<float> values;

  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

struct ModelWeights {
  std::uint32_t format_version = kWeightsFormatVersion;
  SpectralModelConfig config;
  std::map<std::string, WeightTensor> tensors;
};

// Every tensor named by the architecture must be present with its exact
// shape, and nothing else may be.
inline void validate_weights(const ModelWeights& weights) {
  if (weights.format_version != kWeightsFormatVersion) {
    throw WeightsError("weights: format version " + std::to_string(weights.format_version) +
                       " is not supported (expected " + std::to_string(kWeightsFormatVersion) + ")");
  }
  const auto specs = parameter_specs(weights.config);
  for (const auto& spec : specs) {
    const auto it = weights.tensors.find(spec.name);
    if (it == weights.tensors.end()) throw WeightsError("weights: missing tensor '" + spec.name + "'");
    if (it->second.shape != spec.shape) {
      throw WeightsError("weights: tensor '" + spec.name + "' has shape " + ag::shape_str(it->second.shape) +
                         " but the architecture expects " + ag::shape_str(spec.shape));
    }
    if (it->second.values.size() != ag::numel(spec.shape)) {
      throw WeightsError("weights: tensor '" + spec.name + "' payload does not match its shape");
    }
  }
  if (weights.tensors.size() != specs.size()) {
    for (const auto& [name, _] : weights.tensors) {
      const bool known = std::any_of(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == name; });
      if (!known) throw WeightsError("weights: unexpected tensor '" + name + "'");
    }
  }
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void f32(float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v = 0.0F;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw WeightsError("weights: file is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_weights(const ModelWeights& weights) {
  detail::ByteWriter w;
  w.raw(kWeightsMagic, sizeof kWeightsMagic);
  w.u32(weights.format_version);
  const std::string config = nlohmann::json(weights.config).dump();
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.raw(config.data(), config.size());
  w.u32(static_cast<std::uint32_t>(weights.tensors.size()));
  for (const auto& [name, t] : weights.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

// Parses the container; structural validation against the architecture is
// left to validate_weights().
inline ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kWeightsMagic || std::memcmp(bytes.data(), kWeightsMagic, sizeof kWeightsMagic) != 0) {
    throw WeightsError("weights: bad magic, not a weight file");
  }
  detail::ByteReader r(bytes.subspan(sizeof kWeightsMagic));
  ModelWeights w;
  w.format_version = r.u32();
  if (w.format_version != kWeightsFormatVersion) {
    throw WeightsError("weights: format version " + std::to_string(w.format_version) +
                       " is not supported (expected " + std::to_string(kWeightsFormatVersion) + ")");
  }
  const std::string config = r.str(r.u32());
  try {
    w.config = nlohmann::json::parse(config).get<SpectralModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(std::string("weights: malformed config snapshot: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    WeightTensor t;
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw WeightsError("weights: tensor '" + name + "' has implausible rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::size_t>(r.u64()));
    const std::size_t n = ag::numel(t.shape);
    if (n > bytes.size()) throw WeightsError("weights: tensor '" + name + "' is truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    if (!w.tensors.emplace(name, std::move(t)).second) {
      throw WeightsError("weights: duplicate tensor '" + name + "'");
    }
  }
  if (!r.done()) throw WeightsError("weights: trailing bytes after last tensor record");
  return w;
}

inline void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto weights = deserialize_weights(bytes);
  validate_weights(weights);
  return weights;
}

}  // namespace vocsep
