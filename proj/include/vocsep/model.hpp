// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Spectral masking network with a gated CBHG core.
//
//   |X| (cropped bins, channels flattened)
//     -> affine -> batch norm -> tanh                        [time x d]
//     -> gated CBHG                                          [time x d]
//          conv bank (widths 1..K, batch norm, GLU) -> max pool (2)
//          -> conv projection (batch norm) -> + input
//          -> highway stack -> bidirectional GRU
//     -> affine -> batch norm -> relu -> affine -> batch norm
//     -> per-bin scale/offset -> relu -> clamp [0, 1]        mask
//
// Bins above the bandwidth limit bypass the network with mask 1.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vocsep/dsp.hpp"
#include "vocsep/layers.hpp"
#include "vocsep/model_config.hpp"
#include "vocsep/weights.hpp"

namespace vocsep {

// Named tensors of one model instance. Handles are shared, so batch-norm
// running statistics updated in train mode are visible to every copy.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;

  void insert(const std::string& name, ag::Tensor<T> t) { tensors_[name] = std::move(t); }

  const ag::Tensor<T>& get(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw WeightsError("model: no tensor named '" + name + "'");
    return it->second;
  }

  ag::BatchNormParams<T> batchnorm(const std::string& prefix) const {
    return {get(prefix + ".weight"), get(prefix + ".bias"), get(prefix + ".running_mean"),
            get(prefix + ".running_var")};
  }

  ag::GruWeights<T> gru(const std::string& prefix) const {
    return {get(prefix + ".w_input"), get(prefix + ".w_recurrent"), get(prefix + ".bias")};
  }

  const std::map<std::string, ag::Tensor<T>>& tensors() const noexcept { return tensors_; }

 private:
  std::map<std::string, ag::Tensor<T>> tensors_;
};

// Gated linear unit over the channel (row) axis: [2c x time] -> [c x time],
// first half a, second half b, out = a ⊙ σ(b).
template <typename T>
ag::Tensor<T> glu(const ag::Tensor<T>& x) {
  ag::detail::require_rank(x.shape(), 2, "glu");
  if (x.dim(0) % 2 != 0) {
    throw ShapeError("glu: channel count " + std::to_string(x.dim(0)) + " is odd");
  }
  const std::size_t half = x.dim(0) / 2;
  return ag::mul(ag::slice_rows(x, 0, half), ag::sigmoid(ag::slice_rows(x, half, half)));
}

// [d x time] -> [K * bank_channels x time]
template <typename T>
ag::Tensor<T> conv_bank(const ag::Tensor<T>& x, const ParameterStore<T>& params, const GatedCbhgConfig& config,
                        ag::NormMode mode) {
  if (x.rank() != 2 || x.dim(0) != config.d_model) {
    throw ShapeError("conv_bank: expected [" + std::to_string(config.d_model) + " x time], got " +
                     ag::shape_str(x.shape()));
  }
  std::vector<ag::Tensor<T>> outputs;
  outputs.reserve(config.bank_kernels);
  for (std::size_t k = 1; k <= config.bank_kernels; ++k) {
    const std::string p = "cbhg.bank." + std::to_string(k);
    auto bn = params.batchnorm(p + ".bn");
    outputs.push_back(glu(ag::batchnorm1d(ag::conv1d(x, params.get(p + ".conv.weight")), bn, mode)));
  }
  return ag::concat_rows(outputs);
}

// y = T ⊙ H + (1 - T) ⊙ x, H = relu(x W_H + b_H), T = σ(x W_T + b_T)
template <typename T>
ag::Tensor<T> highway_layer(const ag::Tensor<T>& x, const ParameterStore<T>& params, const std::string& prefix) {
  const auto h = ag::relu(ag::add(ag::matmul(x, params.get(prefix + ".transform.weight")),
                                  params.get(prefix + ".transform.bias")));
  const auto gate = ag::sigmoid(ag::add(ag::matmul(x, params.get(prefix + ".gate.weight")),
                                        params.get(prefix + ".gate.bias")));
  return ag::add(x, ag::mul(gate, ag::sub(h, x)));
}

// [time x d] -> [time x d]
template <typename T>
ag::Tensor<T> gated_cbhg_forward(const ag::Tensor<T>& x, const ParameterStore<T>& params,
                                 const GatedCbhgConfig& config, ag::NormMode mode) {
  if (x.rank() != 2 || x.dim(1) != config.d_model || x.dim(0) == 0) {
    throw ShapeError("gated_cbhg: expected [time x " + std::to_string(config.d_model) + "], got " +
                     ag::shape_str(x.shape()));
  }
  const auto channels_first = ag::transpose(x);
  const auto bank = conv_bank(channels_first, params, config, mode);
  const auto pooled = ag::max_pool1d_width2(bank);
  auto proj_bn = params.batchnorm("cbhg.projection.bn");
  const auto projected =
      ag::batchnorm1d(ag::conv1d(pooled, params.get("cbhg.projection.conv.weight")), proj_bn, mode);
  auto y = ag::add(ag::transpose(projected), x);
  for (std::size_t i = 0; i < config.highway_layers; ++i) {
    y = highway_layer(y, params, "cbhg.highway." + std::to_string(i));
  }
  return ag::bidirectional_gru(y, params.gru("cbhg.gru.forward"), params.gru("cbhg.gru.backward"));
}

// Per-frame feature rows: [frames x channels * cropped_bins], channel-major.
template <typename T>
ag::Tensor<T> magnitude_features(const Array3& mag, const SpectralModelConfig& config) {
  if (mag.channels != config.channels || mag.bins != config.full_bins()) {
    throw ShapeError("model: magnitude [" + std::to_string(mag.channels) + " x " + std::to_string(mag.frames) +
                     " x " + std::to_string(mag.bins) + "] does not match config (" +
                     std::to_string(config.channels) + " channels, " + std::to_string(config.full_bins()) +
                     " bins)");
  }
  const std::size_t crop = config.cropped_bins();
  const std::size_t width = crop * mag.channels;
  std::vector<T> v(mag.frames * width);
  for (std::size_t t = 0; t < mag.frames; ++t) {
    for (std::size_t c = 0; c < mag.channels; ++c) {
      for (std::size_t f = 0; f < crop; ++f) v[t * width + c * crop + f] = static_cast<T>(mag.at(c, t, f));
    }
  }
  return ag::Tensor<T>({mag.frames, width}, std::move(v));
}

// features [frames x F] -> cropped mask [frames x F], values in [0, 1].
template <typename T>
ag::Tensor<T> mask_network_forward(const ag::Tensor<T>& features, const ParameterStore<T>& params,
                                   const SpectralModelConfig& config, ag::NormMode mode) {
  if (features.rank() != 2 || features.dim(1) != config.feature_width() || features.dim(0) == 0) {
    throw ShapeError("model: features " + ag::shape_str(features.shape()) + " do not match width " +
                     std::to_string(config.feature_width()));
  }
  using ag::ChannelAxis;
  auto in_bn = params.batchnorm("input.bn");
  auto x = ag::tanh(ag::batchnorm(ag::matmul(features, params.get("input.linear.weight")), in_bn, mode,
                                  ChannelAxis::kCols));
  x = gated_cbhg_forward(x, params, config.cbhg, mode);
  auto bn1 = params.batchnorm("output.bn1");
  x = ag::relu(ag::batchnorm(ag::matmul(x, params.get("output.fc1.weight")), bn1, mode, ChannelAxis::kCols));
  auto bn2 = params.batchnorm("output.bn2");
  x = ag::batchnorm(ag::matmul(x, params.get("output.fc2.weight")), bn2, mode, ChannelAxis::kCols);
  x = ag::add(ag::mul(x, params.get("output.scale")), params.get("output.mean"));
  return ag::clamp(ag::relu(x), T(0), T(1));
}

// Expands a cropped mask to the full bin range with pass-through above the
// bandwidth limit.
template <typename T>
Mask expand_mask(const ag::Tensor<T>& cropped, const SpectralModelConfig& config) {
  const std::size_t frames = cropped.dim(0);
  const std::size_t crop = config.cropped_bins();
  Array3 out(config.channels, frames, config.full_bins(), 1.0F);
  const auto v = cropped.data();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < config.channels; ++c) {
      for (std::size_t f = 0; f < crop; ++f) {
        out.at(c, t, f) = static_cast<float>(v[t * crop * config.channels + c * crop + f]);
      }
    }
  }
  return Mask(std::move(out));
}

// Inference-mode mask for a magnitude spectrogram.
template <typename T>
Mask model_forward(const Array3& mag, const ParameterStore<T>& params, const SpectralModelConfig& config) {
  ag::NoGradGuard no_grad;
  const auto features = magnitude_features<T>(mag, config);
  return expand_mask(mask_network_forward(features, params, config, ag::NormMode::kEval), config);
}

template <typename T>
class SpectralMaskModel {
 public:
  // Fresh parameters: Kaiming-uniform for affine/conv weights, orthogonal
  // recurrent matrices, constant biases and norm statistics.
  explicit SpectralMaskModel(SpectralModelConfig config, std::uint64_t seed = 0) : config_(std::move(config)) {
    std::mt19937_64 rng(seed);
    for (const auto& spec : parameter_specs(config_)) {
      ag::Tensor<T> t;
      switch (spec.init) {
        case InitKind::kKaimingUniform:
          t = ag::kaiming_uniform<T>(spec.shape, spec.fan_in, rng, spec.trainable);
          break;
        case InitKind::kOrthogonalBlocks:
          t = ag::orthogonal_blocks<T>(spec.shape[0], spec.shape[1] / spec.shape[0], rng, spec.trainable);
          break;
        case InitKind::kConstant:
          t = ag::Tensor<T>::full(spec.shape, static_cast<T>(spec.init_value), spec.trainable);
          break;
      }
      params_.insert(spec.name, std::move(t));
    }
  }

  explicit SpectralMaskModel(const ModelWeights& weights) : config_(weights.config) {
    validate_weights(weights);
    for (const auto& spec : parameter_specs(config_)) {
      const auto& w = weights.tensors.at(spec.name);
      std::vector<T> v(w.values.begin(), w.values.end());
      params_.insert(spec.name, ag::Tensor<T>(w.shape, std::move(v), spec.trainable));
    }
  }

  ModelWeights to_weights() const {
    ModelWeights w;
    w.config = config_;
    for (const auto& [name, t] : params_.tensors()) {
      w.tensors[name] = WeightTensor{t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
    }
    return w;
  }

  const SpectralModelConfig& config() const noexcept { return config_; }
  const ParameterStore<T>& parameters() const noexcept { return params_; }

  std::vector<ag::Tensor<T>> trainable_parameters() const {
    std::vector<ag::Tensor<T>> out;
    for (const auto& spec : parameter_specs(config_)) {
      if (spec.trainable) out.push_back(params_.get(spec.name));
    }
    return out;
  }

  std::vector<std::pair<std::string, ag::Tensor<T>>> named_trainable_parameters() const {
    std::vector<std::pair<std::string, ag::Tensor<T>>> out;
    for (const auto& spec : parameter_specs(config_)) {
      if (spec.trainable) out.emplace_back(spec.name, params_.get(spec.name));
    }
    return out;
  }

  // Cropped mask [frames x F] on the tape; train mode updates norm statistics.
  ag::Tensor<T> forward(const ag::Tensor<T>& features, ag::NormMode mode) const {
    return mask_network_forward(features, params_, config_, mode);
  }

  Mask predict_mask(const Array3& mag) const { return model_forward(mag, params_, config_); }

 private:
  SpectralModelConfig config_;
  ParameterStore<T> params_;
};

}  // namespace vocsep
