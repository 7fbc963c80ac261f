// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Architecture configuration of the spectral masking network and the
// parameter layout derived from it.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "vocsep/dsp.hpp"
#include "vocsep/errors.hpp"
#include "vocsep/tensor.hpp"

namespace vocsep {

enum class Stem { kVocal, kAccompaniment };

inline std::string to_string(Stem s) { return s == Stem::kVocal ? "vocal" : "accompaniment"; }

inline Stem stem_from_string(const std::string& s) {
  if (s == "vocal") return Stem::kVocal;
  if (s == "accompaniment" || s == "accomp") return Stem::kAccompaniment;
  throw ConfigError("unknown stem '" + s + "'");
}

struct GatedCbhgConfig {
  std::size_t d_model = 512;
  std::size_t bank_kernels = 8;  // widths 1..bank_kernels
  std::size_t bank_channels = 256;
  std::size_t pool_width = 2;
  std::size_t projection_out = 512;
  std::size_t projection_width = 3;
  std::size_t highway_layers = 4;
  std::size_t highway_dim = 512;
  std::size_t gru_hidden_per_dir = 256;

  void validate() const {
    if (d_model == 0 || bank_kernels == 0 || bank_channels == 0 || projection_width == 0) {
      throw ConfigError("cbhg: dimensions must be positive");
    }
    if (pool_width != 2) throw ConfigError("cbhg: only pool width 2 is implemented");
    if (projection_out != d_model || highway_dim != d_model || 2 * gru_hidden_per_dir != d_model) {
      throw ConfigError("cbhg: d_model, projection_out, highway_dim and 2 x gru_hidden_per_dir must agree");
    }
  }

  friend bool operator==(const GatedCbhgConfig&, const GatedCbhgConfig&) = default;
};

struct SpectralModelConfig {
  StftConfig stft;
  int sample_rate = 44100;
  double bandwidth_limit_hz = 16000.0;
  std::size_t channels = 2;
  GatedCbhgConfig cbhg;
  Stem target = Stem::kVocal;

  std::size_t full_bins() const { return stft.bins(); }

  // Bins whose centre frequency is <= the bandwidth limit.
  std::size_t cropped_bins() const {
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(stft.fft_size);
    const auto last = static_cast<std::size_t>(std::floor(bandwidth_limit_hz / bin_hz + 1e-9));
    return std::min(last + 1, full_bins());
  }

  std::size_t feature_width() const { return cropped_bins() * channels; }

  void validate() const {
    stft.validate();
    cbhg.validate();
    if (sample_rate <= 0) throw ConfigError("model: sample rate must be positive");
    if (channels != 1 && channels != 2) throw ConfigError("model: channels must be 1 or 2");
    if (!(bandwidth_limit_hz > 0.0) || bandwidth_limit_hz > sample_rate / 2.0) {
      throw ConfigError("model: bandwidth limit must lie in (0, sample_rate / 2]");
    }
  }

  friend bool operator==(const SpectralModelConfig&, const SpectralModelConfig&) = default;
};

// Full-size configuration: 44.1 kHz stereo, 4096/1024 STFT, 16 kHz limit.
inline SpectralModelConfig default_model_config(Stem target = Stem::kVocal) {
  SpectralModelConfig c;
  c.target = target;
  return c;
}

// Desk-scale configuration used for training runs measured in minutes.
inline SpectralModelConfig desk_model_config(Stem target = Stem::kVocal) {
  SpectralModelConfig c;
  c.stft = {512, 128, WindowKind::kHann};
  c.sample_rate = 16000;
  c.bandwidth_limit_hz = 8000.0;
  c.channels = 1;
  c.cbhg = {64, 4, 32, 2, 64, 3, 1, 64, 32};
  c.target = target;
  return c;
}

inline void to_json(nlohmann::json& j, const GatedCbhgConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"bank_kernels", c.bank_kernels},
                     {"bank_channels", c.bank_channels},
                     {"pool_width", c.pool_width},
                     {"projection_out", c.projection_out},
                     {"projection_width", c.projection_width},
                     {"highway_layers", c.highway_layers},
                     {"highway_dim", c.highway_dim},
                     {"gru_hidden_per_dir", c.gru_hidden_per_dir}};
}

inline void from_json(const nlohmann::json& j, GatedCbhgConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("bank_kernels").get_to(c.bank_kernels);
  j.at("bank_channels").get_to(c.bank_channels);
  j.at("pool_width").get_to(c.pool_width);
  j.at("projection_out").get_to(c.projection_out);
  j.at("projection_width").get_to(c.projection_width);
  j.at("highway_layers").get_to(c.highway_layers);
  j.at("highway_dim").get_to(c.highway_dim);
  j.at("gru_hidden_per_dir").get_to(c.gru_hidden_per_dir);
}

inline void to_json(nlohmann::json& j, const SpectralModelConfig& c) {
  j = nlohmann::json{{"fft_size", c.stft.fft_size},
                     {"hop", c.stft.hop},
                     {"window", "hann"},
                     {"sample_rate", c.sample_rate},
                     {"bandwidth_limit_hz", c.bandwidth_limit_hz},
                     {"channels", c.channels},
                     {"cbhg", c.cbhg},
                     {"target", to_string(c.target)}};
}

inline void from_json(const nlohmann::json& j, SpectralModelConfig& c) {
  j.at("fft_size").get_to(c.stft.fft_size);
  j.at("hop").get_to(c.stft.hop);
  if (j.at("window").get<std::string>() != "hann") throw ConfigError("model: unsupported window");
  j.at("sample_rate").get_to(c.sample_rate);
  j.at("bandwidth_limit_hz").get_to(c.bandwidth_limit_hz);
  j.at("channels").get_to(c.channels);
  j.at("cbhg").get_to(c.cbhg);
  c.target = stem_from_string(j.at("target").get<std::string>());
}

enum class InitKind { kKaimingUniform, kOrthogonalBlocks, kConstant };

struct ParamSpec {
  std::string name;
  ag::Shape shape;
  InitKind init = InitKind::kConstant;
  double init_value = 0.0;    // kConstant
  std::size_t fan_in = 0;     // kKaimingUniform
  bool trainable = true;      // false for batch-norm running statistics
};

namespace detail {

inline void add_batchnorm_specs(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t n) {
  specs.push_back({prefix + ".weight", {n}, InitKind::kConstant, 1.0, 0, true});
  specs.push_back({prefix + ".bias", {n}, InitKind::kConstant, 0.0, 0, true});
  specs.push_back({prefix + ".running_mean", {n}, InitKind::kConstant, 0.0, 0, false});
  specs.push_back({prefix + ".running_var", {n}, InitKind::kConstant, 1.0, 0, false});
}

}  // namespace detail

// Every tensor the architecture owns, in a fixed order. Affine and conv
// layers that feed a batch norm carry no bias.
inline std::vector<ParamSpec> parameter_specs(const SpectralModelConfig& config) {
  config.validate();
  const auto& c = config.cbhg;
  const std::size_t d = c.d_model;
  const std::size_t features = config.feature_width();
  std::vector<ParamSpec> specs;

  specs.push_back({"input.linear.weight", {features, d}, InitKind::kKaimingUniform, 0.0, features, true});
  detail::add_batchnorm_specs(specs, "input.bn", d);

  for (std::size_t k = 1; k <= c.bank_kernels; ++k) {
    const std::string p = "cbhg.bank." + std::to_string(k);
    specs.push_back({p + ".conv.weight", {2 * c.bank_channels, d, k}, InitKind::kKaimingUniform, 0.0, d * k, true});
    detail::add_batchnorm_specs(specs, p + ".bn", 2 * c.bank_channels);
  }
  const std::size_t bank_out = c.bank_kernels * c.bank_channels;
  specs.push_back({"cbhg.projection.conv.weight",
                   {c.projection_out, bank_out, c.projection_width},
                   InitKind::kKaimingUniform,
                   0.0,
                   bank_out * c.projection_width,
                   true});
  detail::add_batchnorm_specs(specs, "cbhg.projection.bn", c.projection_out);

  for (std::size_t i = 0; i < c.highway_layers; ++i) {
    const std::string p = "cbhg.highway." + std::to_string(i);
    specs.push_back({p + ".transform.weight", {d, d}, InitKind::kKaimingUniform, 0.0, d, true});
    specs.push_back({p + ".transform.bias", {d}, InitKind::kConstant, 0.0, 0, true});
    specs.push_back({p + ".gate.weight", {d, d}, InitKind::kKaimingUniform, 0.0, d, true});
    specs.push_back({p + ".gate.bias", {d}, InitKind::kConstant, -1.0, 0, true});
  }

  const std::size_t h = c.gru_hidden_per_dir;
  for (const char* dir : {"forward", "backward"}) {
    const std::string p = std::string("cbhg.gru.") + dir;
    specs.push_back({p + ".w_input", {d, 3 * h}, InitKind::kKaimingUniform, 0.0, h, true});
    specs.push_back({p + ".w_recurrent", {h, 3 * h}, InitKind::kOrthogonalBlocks, 0.0, 0, true});
    specs.push_back({p + ".bias", {3 * h}, InitKind::kConstant, 0.0, 0, true});
  }

  specs.push_back({"output.fc1.weight", {d, d}, InitKind::kKaimingUniform, 0.0, d, true});
  detail::add_batchnorm_specs(specs, "output.bn1", d);
  specs.push_back({"output.fc2.weight", {d, features}, InitKind::kKaimingUniform, 0.0, d, true});
  detail::add_batchnorm_specs(specs, "output.bn2", features);
  specs.push_back({"output.scale", {features}, InitKind::kConstant, 1.0, 0, true});
  specs.push_back({"output.mean", {features}, InitKind::kConstant, 1.0, 0, true});
  return specs;
}

// Number of trainable scalars.
inline std::size_t parameter_count(const SpectralModelConfig& config) {
  std::size_t n = 0;
  for (const auto& s : parameter_specs(config)) {
    if (s.trainable) n += ag::numel(s.shape);
  }
  return n;
}

}  // namespace vocsep
