// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Integrated loudness per ITU-R BS.1770-3 and the loudness normalization /
// de-normalization pair wrapped around the separation model.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vocsep/audio_io.hpp"
#include "vocsep/errors.hpp"

namespace vocsep {

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Pre-filter (high shelf) followed by the RLB high-pass.
struct KWeightingFilter {
  Biquad shelf;
  Biquad highpass;
};

inline constexpr double kAbsoluteGateLufs = -70.0;
inline constexpr double kRelativeGateLu = -10.0;
inline constexpr double kLoudnessOffset = -0.691;
inline constexpr double kBlockSeconds = 0.4;
inline constexpr double kBlockStepSeconds = 0.1;

inline bool is_supported_loudness_rate(int sample_rate) {
  constexpr int kRates[] = {8000,  11025, 16000, 22050, 24000,  32000,
                            44100, 48000, 88200, 96000, 176400, 192000};
  return std::find(std::begin(kRates), std::end(kRates), sample_rate) != std::end(kRates);
}

// 48 kHz uses the tabulated coefficients; other rates are redesigned with the
// bilinear transform from the analog shelf/high-pass prototypes those
// coefficients were derived from.
inline KWeightingFilter k_weighting_coefficients(int sample_rate) {
  if (!is_supported_loudness_rate(sample_rate)) {
    throw ConfigError("k-weighting: unsupported sample rate " + std::to_string(sample_rate));
  }
  KWeightingFilter f;
  if (sample_rate == 48000) {
    f.shelf = {1.53512485958697, -2.69169618940638, 1.19839281085285, -1.69065929318241,
               0.73248077421585};
    f.highpass = {1.0, -2.0, 1.0, -1.99004745483398, 0.99007225036621};
    return f;
  }
  const double fs = sample_rate;
  {
    constexpr double f0 = 1681.974450955533;
    constexpr double gain_db = 3.999843853973347;
    constexpr double q = 0.7071752369554196;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.4996667741545416);
    const double a0 = 1.0 + k / q + k * k;
    f.shelf.b0 = (vh + vb * k / q + k * k) / a0;
    f.shelf.b1 = 2.0 * (k * k - vh) / a0;
    f.shelf.b2 = (vh - vb * k / q + k * k) / a0;
    f.shelf.a1 = 2.0 * (k * k - 1.0) / a0;
    f.shelf.a2 = (1.0 - k / q + k * k) / a0;
  }
  {
    constexpr double f0 = 38.13547087602444;
    constexpr double q = 0.5003270373238773;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double a0 = 1.0 + k / q + k * k;
    f.highpass = {1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  return f;
}

namespace detail {

inline void run_biquad(const Biquad& bq, std::span<double> x) {
  double s1 = 0.0;
  double s2 = 0.0;
  for (double& v : x) {
    const double in = v;
    const double out = bq.b0 * in + s1;
    s1 = bq.b1 * in - bq.a1 * out + s2;
    s2 = bq.b2 * in - bq.a2 * out;
    v = out;
  }
}

inline std::vector<double> k_weighted_channel(std::span<const float> in,
                                              const KWeightingFilter& filter) {
  std::vector<double> x(in.begin(), in.end());
  run_biquad(filter.shelf, x);
  run_biquad(filter.highpass, x);
  return x;
}

inline void check_loudness_channels(const AudioBuffer& buffer) {
  if (buffer.num_channels() < 1 || buffer.num_channels() > 2) {
    throw ConfigError("loudness: only mono and stereo layouts are supported, got " +
                      std::to_string(buffer.num_channels()) + " channels");
  }
}

}  // namespace detail

inline AudioBuffer k_weight(const AudioBuffer& buffer) {
  const auto filter = k_weighting_coefficients(buffer.sample_rate());
  std::vector<std::vector<float>> out;
  out.reserve(buffer.num_channels());
  for (std::size_t c = 0; c < buffer.num_channels(); ++c) {
    const auto y = detail::k_weighted_channel(buffer.channel(c), filter);
    out.emplace_back(y.begin(), y.end());
  }
  return AudioBuffer(std::move(out), buffer.sample_rate());
}

// Σ_i G_i·z_i for every 400 ms block (75 % overlap); G_i = 1 for L and R.
inline std::vector<double> loudness_block_powers(const AudioBuffer& buffer) {
  detail::check_loudness_channels(buffer);
  const auto filter = k_weighting_coefficients(buffer.sample_rate());
  const auto block = static_cast<std::size_t>(std::lround(kBlockSeconds * buffer.sample_rate()));
  const auto step = static_cast<std::size_t>(std::lround(kBlockStepSeconds * buffer.sample_rate()));
  if (buffer.num_frames() < block) {
    throw ConfigError("loudness: signal of " + std::to_string(buffer.num_frames()) +
                      " samples is shorter than one 400 ms block (" + std::to_string(block) +
                      ")");
  }
  const std::size_t num_blocks = (buffer.num_frames() - block) / step + 1;
  std::vector<double> powers(num_blocks, 0.0);
  for (std::size_t c = 0; c < buffer.num_channels(); ++c) {
    const auto y = detail::k_weighted_channel(buffer.channel(c), filter);
    // Squared sums per 100 ms step, then four steps per block.
    std::vector<double> step_energy(num_blocks + 3, 0.0);
    for (std::size_t s = 0; s < step_energy.size(); ++s) {
      const std::size_t begin = s * step;
      const std::size_t end = std::min(begin + step, y.size());
      double acc = 0.0;
      for (std::size_t n = begin; n < end; ++n) acc += y[n] * y[n];
      step_energy[s] = acc;
    }
    for (std::size_t j = 0; j < num_blocks; ++j) {
      double e = 0.0;
      if (block == 4 * step) {
        e = step_energy[j] + step_energy[j + 1] + step_energy[j + 2] + step_energy[j + 3];
      } else {
        for (std::size_t n = j * step; n < j * step + block; ++n) e += y[n] * y[n];
      }
      powers[j] += e / static_cast<double>(block);
    }
  }
  return powers;
}

inline double power_to_lufs(double power) { return kLoudnessOffset + 10.0 * std::log10(power); }

struct LoudnessMeasurement {
  // Empty when no block survives the gates ("below gate").
  std::optional<double> integrated_lufs;
  std::size_t gated_block_count = 0;

  bool measurable() const noexcept { return integrated_lufs.has_value(); }

  double lufs() const {
    if (!integrated_lufs) {
      throw ImmeasurableLoudnessError(
          "integrated loudness is immeasurable: no block exceeds the -70 LUFS absolute gate");
    }
    return *integrated_lufs;
  }
};

inline LoudnessMeasurement integrated_loudness(const AudioBuffer& buffer) {
  const auto powers = loudness_block_powers(buffer);

  double abs_sum = 0.0;
  std::size_t abs_count = 0;
  for (double z : powers) {
    if (z > 0.0 && power_to_lufs(z) > kAbsoluteGateLufs) {
      abs_sum += z;
      ++abs_count;
    }
  }
  if (abs_count == 0) return {};

  const double relative_gate = power_to_lufs(abs_sum / abs_count) + kRelativeGateLu;
  double sum = 0.0;
  std::size_t count = 0;
  for (double z : powers) {
    if (z <= 0.0) continue;
    const double l = power_to_lufs(z);
    if (l > kAbsoluteGateLufs && l > relative_gate) {
      sum += z;
      ++count;
    }
  }
  if (count == 0) return {};
  return {power_to_lufs(sum / count), count};
}

struct NormalizationResult {
  AudioBuffer normalized;
  double gain = 1.0;
  double target_lufs = 0.0;
  double input_lufs = 0.0;
};

// g = 10^((L_T - L_I) / 20)
inline double normalization_gain(double input_lufs, double target_lufs) {
  return std::pow(10.0, (target_lufs - input_lufs) / 20.0);
}

inline NormalizationResult normalize(const AudioBuffer& buffer, double target_lufs) {
  const double input_lufs = integrated_loudness(buffer).lufs();
  const double gain = normalization_gain(input_lufs, target_lufs);
  return {buffer.scaled(gain), gain, target_lufs, input_lufs};
}

inline AudioBuffer denormalize(const AudioBuffer& buffer, double gain) {
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw ConfigError("denormalize: gain must be positive and finite, got " + std::to_string(gain));
  }
  AudioBuffer out = buffer;
  const auto g = static_cast<float>(gain);
  for (std::size_t c = 0; c < out.num_channels(); ++c) {
    for (float& s : out.channel(c)) s /= g;
  }
  return out;
}

}  // namespace vocsep
