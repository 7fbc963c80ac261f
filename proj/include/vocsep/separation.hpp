// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Inference pipeline:
//   normalize to L_T -> STFT -> |X| -> mask network -> x^alpha warping
//   -> mask (or ratio-mask combination of two stems) -> iSTFT -> / gain

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "vocsep/audio_io.hpp"
#include "vocsep/dsp.hpp"
#include "vocsep/loudness.hpp"
#include "vocsep/model.hpp"

namespace vocsep {

enum class SeparationTarget { kVocal, kAccompaniment, kBoth };

inline SeparationTarget separation_target_from_string(const std::string& s) {
  if (s == "vocal") return SeparationTarget::kVocal;
  if (s == "accompaniment" || s == "accomp") return SeparationTarget::kAccompaniment;
  if (s == "both") return SeparationTarget::kBoth;
  throw ConfigError("unknown separation target '" + s + "'");
}

inline constexpr double kDefaultTargetLufs = -13.0;
inline constexpr double kDefaultWarpAlpha = 1.4;

struct SeparationConfig {
  double target_lufs = kDefaultTargetLufs;
  double alpha = kDefaultWarpAlpha;
  bool wiener = false;
  StftConfig stft;
  SeparationTarget target = SeparationTarget::kVocal;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw ConfigError("separation: warping exponent alpha must be positive, got " + std::to_string(alpha));
    }
    if (!std::isfinite(target_lufs)) throw ConfigError("separation: target loudness must be finite");
    stft.validate();
  }
};

// Instrumentation for tests and ablations; the defaults leave the pipeline
// untouched.
struct PipelineHooks {
  bool bypass_loudness_normalization = false;
  std::optional<float> forced_mask_value;
};

inline Mask warp_mask(const Mask& mask, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("warp_mask: alpha must be positive, got " + std::to_string(alpha));
  }
  Array3 out = mask.values();
  if (alpha == 1.0) return Mask(std::move(out));
  for (float& v : out.data) v = static_cast<float>(std::pow(static_cast<double>(v), alpha));
  return Mask(std::move(out));
}

// Single-step ratio masks w_i = m_i^2 / (m_v^2 + m_a^2 + eps) applied to the
// mixture. Returns (vocal, accompaniment). eps = 1e-13 keeps the stems summing
// to the mixture within 1e-6 relative wherever m_v^2 + m_a^2 >= 1e-6.
inline std::pair<Spectrogram, Spectrogram> wiener_combine(const Array3& vocal_mag, const Array3& accomp_mag,
                                                          const Spectrogram& mixture, double eps = 1e-13) {
  if (!mixture.same_shape(vocal_mag) || !mixture.same_shape(accomp_mag)) {
    throw ShapeError("wiener_combine: magnitude shapes do not match the mixture spectrogram");
  }
  Spectrogram vocal = mixture;
  Spectrogram accomp = mixture;
  for (std::size_t i = 0; i < mixture.data.size(); ++i) {
    const double v2 = static_cast<double>(vocal_mag.data[i]) * vocal_mag.data[i];
    const double a2 = static_cast<double>(accomp_mag.data[i]) * accomp_mag.data[i];
    const double denom = v2 + a2 + eps;
    const std::complex<double> x(mixture.data[i]);
    vocal.data[i] = std::complex<float>(x * (v2 / denom));
    accomp.data[i] = std::complex<float>(x * (a2 / denom));
  }
  return {std::move(vocal), std::move(accomp)};
}

namespace detail {

inline void check_pipeline_input(const AudioBuffer& buffer, const SpectralModelConfig& model,
                                 const SeparationConfig& config) {
  config.validate();
  if (buffer.num_channels() < 1 || buffer.num_channels() > 2) {
    throw ConfigError("separate: only mono or stereo input is supported, got " +
                      std::to_string(buffer.num_channels()) + " channels");
  }
  if (buffer.num_channels() != model.channels) {
    throw ConfigError("separate: model expects " + std::to_string(model.channels) + " channel(s), input has " +
                      std::to_string(buffer.num_channels()));
  }
  if (buffer.sample_rate() != model.sample_rate) {
    throw ConfigError("separate: input sample rate " + std::to_string(buffer.sample_rate()) +
                      " Hz differs from the model's " + std::to_string(model.sample_rate) +
                      " Hz (no resampling is performed)");
  }
  if (!(config.stft == model.stft)) {
    throw ConfigError("separate: STFT configuration differs from the model's");
  }
  if (buffer.empty()) throw ConfigError("separate: empty input");
}

struct NormalizedInput {
  AudioBuffer signal;
  double gain = 1.0;
};

inline NormalizedInput normalize_input(const AudioBuffer& buffer, const SeparationConfig& config,
                                       const PipelineHooks& hooks) {
  if (hooks.bypass_loudness_normalization) return {buffer, 1.0};
  auto n = normalize(buffer, config.target_lufs);
  return {std::move(n.normalized), n.gain};
}

template <typename T>
Mask raw_mask(const SpectralMaskModel<T>& model, const Array3& mag, const PipelineHooks& hooks) {
  if (hooks.forced_mask_value) {
    return Mask::filled(mag.channels, mag.frames, mag.bins, *hooks.forced_mask_value);
  }
  return model.predict_mask(mag);
}

inline AudioBuffer synthesize(const Spectrogram& spec, double gain, const PipelineHooks& hooks) {
  auto out = istft(spec);
  return hooks.bypass_loudness_normalization ? out : denormalize(out, gain);
}

}  // namespace detail

// Single-stem separation with the stem the model was trained for.
template <typename T>
AudioBuffer separate(const AudioBuffer& buffer, const SpectralMaskModel<T>& model, const SeparationConfig& config,
                     const PipelineHooks& hooks = {}) {
  detail::check_pipeline_input(buffer, model.config(), config);
  if (config.target == SeparationTarget::kBoth) {
    throw ConfigError("separate: target 'both' needs a vocal and an accompaniment model");
  }
  const Stem wanted = config.target == SeparationTarget::kVocal ? Stem::kVocal : Stem::kAccompaniment;
  if (model.config().target != wanted) {
    throw ConfigError("separate: model was trained for the " + to_string(model.config().target) +
                      " stem, not " + to_string(wanted));
  }
  const auto input = detail::normalize_input(buffer, config, hooks);
  const auto spec = stft(input.signal, config.stft);
  const auto mask = warp_mask(detail::raw_mask(model, magnitude(spec), hooks), config.alpha);
  return detail::synthesize(apply_mask(spec, mask), input.gain, hooks);
}

struct StemPair {
  AudioBuffer vocal;
  AudioBuffer accompaniment;
};

// Both stems. Without combination each model runs independently; with it the
// warped mask magnitudes feed the ratio masks and the stems sum to the mixture.
template <typename T>
StemPair separate_stems(const AudioBuffer& buffer, const SpectralMaskModel<T>& vocal_model,
                        const SpectralMaskModel<T>& accomp_model, const SeparationConfig& config,
                        const PipelineHooks& hooks = {}) {
  if (vocal_model.config().target != Stem::kVocal || accomp_model.config().target != Stem::kAccompaniment) {
    throw ConfigError("separate: expected one vocal and one accompaniment model");
  }
  if (!config.wiener) {
    SeparationConfig c = config;
    c.target = SeparationTarget::kVocal;
    auto vocal = separate(buffer, vocal_model, c, hooks);
    c.target = SeparationTarget::kAccompaniment;
    return {std::move(vocal), separate(buffer, accomp_model, c, hooks)};
  }
  detail::check_pipeline_input(buffer, vocal_model.config(), config);
  detail::check_pipeline_input(buffer, accomp_model.config(), config);
  const auto input = detail::normalize_input(buffer, config, hooks);
  const auto spec = stft(input.signal, config.stft);
  const auto mag = magnitude(spec);
  const auto vocal_mask = warp_mask(detail::raw_mask(vocal_model, mag, hooks), config.alpha);
  const auto accomp_mask = warp_mask(detail::raw_mask(accomp_model, mag, hooks), config.alpha);
  Array3 vocal_mag = mag;
  Array3 accomp_mag = mag;
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    vocal_mag.data[i] *= vocal_mask.values().data[i];
    accomp_mag.data[i] *= accomp_mask.values().data[i];
  }
  auto [vocal_spec, accomp_spec] = wiener_combine(vocal_mag, accomp_mag, spec);
  return {detail::synthesize(vocal_spec, input.gain, hooks), detail::synthesize(accomp_spec, input.gain, hooks)};
}

}  // namespace vocsep
