// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// STFT analysis, masking and overlap-add synthesis.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vocsep/audio_io.hpp"
#include "vocsep/errors.hpp"

namespace vocsep {

// Power-of-two real FFT: a half-length complex radix-2 transform plus the
// usual even/odd split. Computed in double precision.
class RealFft {
 public:
  explicit RealFft(std::size_t size) : size_(size), half_(size / 2) {
    if (size < 4 || (size & (size - 1)) != 0) {
      throw ConfigError("fft size must be a power of two >= 4, got " + std::to_string(size));
    }
    bitrev_.resize(half_);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < half_) ++bits;
    for (std::size_t i = 0; i < half_; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(half_ / 2 + 1);
    for (std::size_t k = 0; k < twiddle_.size(); ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(half_);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    split_.resize(half_ + 1);
    for (std::size_t k = 0; k <= half_; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size_);
      split_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t bins() const noexcept { return half_ + 1; }

  // in: size() reals, out: bins() complex values.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    std::vector<std::complex<double>> z(half_);
    for (std::size_t n = 0; n < half_; ++n) z[n] = {in[2 * n], in[2 * n + 1]};
    transform(z);
    for (std::size_t k = 0; k <= half_; ++k) {
      const auto zk = z[k % half_];
      const auto zc = std::conj(z[(half_ - k) % half_]);
      const auto even = 0.5 * (zk + zc);
      const auto odd = std::complex<double>(0.0, -0.5) * (zk - zc);
      out[k] = even + split_[k] * odd;
    }
  }

  // in: bins() complex values, out: size() reals (scaled by 1/size()).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
    std::vector<std::complex<double>> z(half_);
    for (std::size_t k = 0; k < half_; ++k) {
      const auto xk = in[k];
      const auto xc = std::conj(in[half_ - k]);
      const auto even = 0.5 * (xk + xc);
      const auto odd = 0.5 * (xk - xc) * std::conj(split_[k]);
      // conj() on the way in and out turns the forward kernel into an inverse.
      z[k] = std::conj(even + std::complex<double>(0.0, 1.0) * odd);
    }
    transform(z);
    const double scale = 1.0 / static_cast<double>(half_);
    for (std::size_t n = 0; n < half_; ++n) {
      const auto v = std::conj(z[n]) * scale;
      out[2 * n] = v.real();
      out[2 * n + 1] = v.imag();
    }
  }

 private:
  void transform(std::vector<std::complex<double>>& z) const {
    for (std::size_t i = 0; i < half_; ++i) {
      if (i < bitrev_[i]) std::swap(z[i], z[bitrev_[i]]);
    }
    for (std::size_t len = 2; len <= half_; len <<= 1) {
      const std::size_t stride = half_ / len;
      for (std::size_t start = 0; start < half_; start += len) {
        for (std::size_t j = 0; j < len / 2; ++j) {
          const auto w = twiddle_[j * stride];
          const auto u = z[start + j];
          const auto v = z[start + j + len / 2] * w;
          z[start + j] = u + v;
          z[start + j + len / 2] = u - v;
        }
      }
    }
  }

  std::size_t size_;
  std::size_t half_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::complex<double>> split_;
};

enum class WindowKind { kHann };

struct StftConfig {
  std::size_t fft_size = 4096;
  std::size_t hop = 1024;
  WindowKind window = WindowKind::kHann;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }
  std::size_t left_padding() const noexcept { return fft_size - hop; }

  // Hann analysis/synthesis reconstructs exactly when the hop divides the
  // frame and at least two frames overlap every sample.
  void validate() const {
    if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0) {
      throw ConfigError("stft: fft_size must be a power of two, got " + std::to_string(fft_size));
    }
    if (hop == 0 || fft_size % hop != 0 || fft_size / hop < 2) {
      throw ConfigError("stft: hop " + std::to_string(hop) + " violates overlap-add condition for fft_size " +
                        std::to_string(fft_size));
    }
  }

  std::size_t num_frames(std::size_t length) const noexcept {
    return (length + left_padding() + hop - 1) / hop;
  }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

inline std::vector<double> hann_window(std::size_t size) {
  std::vector<double> w(size);
  for (std::size_t n = 0; n < size; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(size));
  }
  return w;
}

// Dense real array indexed [channel][frame][bin].
struct Array3 {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> data;

  Array3() = default;
  Array3(std::size_t c, std::size_t t, std::size_t f, float fill = 0.0F)
      : channels(c), frames(t), bins(f), data(c * t * f, fill) {}

  std::size_t index(std::size_t c, std::size_t t, std::size_t f) const noexcept {
    return (c * frames + t) * bins + f;
  }
  float& at(std::size_t c, std::size_t t, std::size_t f) { return data[index(c, t, f)]; }
  float at(std::size_t c, std::size_t t, std::size_t f) const { return data[index(c, t, f)]; }
  bool same_shape(const Array3& o) const noexcept {
    return channels == o.channels && frames == o.frames && bins == o.bins;
  }
};

struct Spectrogram {
  StftConfig config;
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t original_length = 0;
  int sample_rate = 0;
  std::vector<std::complex<float>> data;

  std::size_t index(std::size_t c, std::size_t t, std::size_t f) const noexcept {
    return (c * frames + t) * bins + f;
  }
  std::complex<float>& at(std::size_t c, std::size_t t, std::size_t f) { return data[index(c, t, f)]; }
  const std::complex<float>& at(std::size_t c, std::size_t t, std::size_t f) const {
    return data[index(c, t, f)];
  }
  bool same_shape(const Array3& a) const noexcept {
    return channels == a.channels && frames == a.frames && bins == a.bins;
  }
};

// Soft mask with every value in [0, 1]; mask = 1 keeps the bin.
class Mask {
 public:
  Mask() = default;

  explicit Mask(Array3 values) : values_(std::move(values)) {
    for (float v : values_.data) {
      if (!(v >= 0.0F && v <= 1.0F)) {
        throw ConfigError("mask value " + std::to_string(v) + " outside [0, 1]");
      }
    }
  }

  static Mask filled(std::size_t c, std::size_t t, std::size_t f, float value) {
    return Mask(Array3(c, t, f, value));
  }

  const Array3& values() const noexcept { return values_; }
  float at(std::size_t c, std::size_t t, std::size_t f) const { return values_.at(c, t, f); }

 private:
  Array3 values_;
};

inline Spectrogram stft(const AudioBuffer& buffer, const StftConfig& config) {
  config.validate();
  if (buffer.empty()) throw ConfigError("stft: empty buffer");
  const RealFft fft(config.fft_size);
  const auto window = hann_window(config.fft_size);

  Spectrogram spec;
  spec.config = config;
  spec.channels = buffer.num_channels();
  spec.frames = config.num_frames(buffer.num_frames());
  spec.bins = config.bins();
  spec.original_length = buffer.num_frames();
  spec.sample_rate = buffer.sample_rate();
  spec.data.resize(spec.channels * spec.frames * spec.bins);

  const auto pad = static_cast<std::ptrdiff_t>(config.left_padding());
  const auto length = static_cast<std::ptrdiff_t>(buffer.num_frames());
  std::vector<double> frame(config.fft_size);
  std::vector<std::complex<double>> out(spec.bins);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    const auto x = buffer.channel(c);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * config.hop) - pad;
      for (std::size_t n = 0; n < config.fft_size; ++n) {
        const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(n);
        frame[n] = (i >= 0 && i < length) ? window[n] * static_cast<double>(x[static_cast<std::size_t>(i)]) : 0.0;
      }
      fft.forward(frame, out);
      std::complex<float>* dst = &spec.at(c, t, 0);
      for (std::size_t f = 0; f < spec.bins; ++f) dst[f] = std::complex<float>(out[f]);
    }
  }
  return spec;
}

inline AudioBuffer istft(const Spectrogram& spec) {
  spec.config.validate();
  if (spec.bins != spec.config.bins() || spec.data.size() != spec.channels * spec.frames * spec.bins) {
    throw ShapeError("istft: spectrogram dimensions disagree with its configuration");
  }
  const auto& config = spec.config;
  const RealFft fft(config.fft_size);
  const auto window = hann_window(config.fft_size);
  const auto pad = static_cast<std::ptrdiff_t>(config.left_padding());
  const auto length = static_cast<std::ptrdiff_t>(spec.original_length);

  std::vector<double> norm(spec.original_length, 0.0);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * config.hop) - pad;
    for (std::size_t n = 0; n < config.fft_size; ++n) {
      const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(n);
      if (i >= 0 && i < length) norm[static_cast<std::size_t>(i)] += window[n] * window[n];
    }
  }

  std::vector<std::vector<float>> channels(spec.channels);
  std::vector<std::complex<double>> bins(spec.bins);
  std::vector<double> frame(config.fft_size);
  std::vector<double> acc(spec.original_length);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const std::complex<float>* src = &spec.at(c, t, 0);
      for (std::size_t f = 0; f < spec.bins; ++f) bins[f] = std::complex<double>(src[f]);
      fft.inverse(bins, frame);
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * config.hop) - pad;
      for (std::size_t n = 0; n < config.fft_size; ++n) {
        const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(n);
        if (i >= 0 && i < length) acc[static_cast<std::size_t>(i)] += window[n] * frame[n];
      }
    }
    channels[c].resize(spec.original_length);
    for (std::size_t n = 0; n < spec.original_length; ++n) {
      channels[c][n] = static_cast<float>(acc[n] / norm[n]);
    }
  }
  return AudioBuffer(std::move(channels), spec.sample_rate);
}

inline Array3 magnitude(const Spectrogram& spec) {
  Array3 out(spec.channels, spec.frames, spec.bins);
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data[i] = std::abs(spec.data[i]);
  return out;
}

inline Spectrogram apply_mask(const Spectrogram& spec, const Mask& mask) {
  if (!spec.same_shape(mask.values())) {
    throw ShapeError("apply_mask: mask shape [" + std::to_string(mask.values().channels) + "," +
                     std::to_string(mask.values().frames) + "," + std::to_string(mask.values().bins) +
                     "] does not match spectrogram [" + std::to_string(spec.channels) + "," +
                     std::to_string(spec.frames) + "," + std::to_string(spec.bins) + "]");
  }
  Spectrogram out = spec;
  const auto& m = mask.values().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m[i];
  return out;
}

}  // namespace vocsep
