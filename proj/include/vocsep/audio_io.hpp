// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "vocsep/errors.hpp"

namespace vocsep {

// Multichannel time-domain signal. All channels share one length.
class AudioBuffer {
 public:
  AudioBuffer() = default;

  AudioBuffer(std::size_t num_channels, std::size_t num_frames, int sample_rate)
      : channels_(num_channels, std::vector<float>(num_frames, 0.0F)),
        sample_rate_(sample_rate) {
    validate();
  }

  AudioBuffer(std::vector<std::vector<float>> channels, int sample_rate)
      : channels_(std::move(channels)), sample_rate_(sample_rate) {
    validate();
  }

  std::size_t num_channels() const noexcept { return channels_.size(); }
  std::size_t num_frames() const noexcept {
    return channels_.empty() ? 0 : channels_.front().size();
  }
  int sample_rate() const noexcept { return sample_rate_; }
  double duration_seconds() const noexcept {
    return static_cast<double>(num_frames()) / sample_rate_;
  }
  bool empty() const noexcept { return num_frames() == 0; }

  std::span<float> channel(std::size_t c) { return channels_.at(c); }
  std::span<const float> channel(std::size_t c) const { return channels_.at(c); }

  const std::vector<std::vector<float>>& channels() const noexcept { return channels_; }

  // Every sample multiplied by `gain`; float multiply per sample.
  AudioBuffer scaled(double gain) const {
    AudioBuffer out = *this;
    const auto g = static_cast<float>(gain);
    for (auto& ch : out.channels_) {
      for (auto& s : ch) s *= g;
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& ch : channels_) {
      for (float s : ch) {
        if (!std::isfinite(s)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;

 private:
  void validate() const {
    if (sample_rate_ <= 0) {
      throw ConfigError("AudioBuffer: sample rate must be positive, got " +
                        std::to_string(sample_rate_));
    }
    for (const auto& ch : channels_) {
      if (ch.size() != channels_.front().size()) {
        throw ShapeError("AudioBuffer: channels have differing lengths");
      }
    }
  }

  std::vector<std::vector<float>> channels_;
  int sample_rate_ = 1;
};

enum class WavEncoding { kPcm16, kPcm24, kFloat32 };

namespace detail {

inline constexpr std::uint16_t kWavFormatPcm = 1;
inline constexpr std::uint16_t kWavFormatFloat = 3;
inline constexpr std::uint16_t kWavFormatExtensible = 0xFFFE;

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

// Round to the nearest integer code, clipping to the representable range.
inline std::int32_t quantize(float sample, int bits) {
  const double scale = std::ldexp(1.0, bits - 1);
  const double max_code = scale - 1.0;
  double v = std::nearbyint(static_cast<double>(sample) * scale);
  if (!(v <= max_code)) v = std::isnan(v) ? 0.0 : max_code;
  if (v < -scale) v = -scale;
  return static_cast<std::int32_t>(v);
}

}  // namespace detail

// Decodes an in-memory RIFF/WAVE image. PCM 16/24-bit and IEEE float-32 only.
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  using Kind = WavError::Kind;

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(Kind::kMalformedHeader, "wav: missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t num_channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;

    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > bytes.size()) {
        throw WavError(Kind::kMalformedHeader, "wav: fmt chunk is too short");
      }
      const std::uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      num_channels = read_u16(f + 2);
      sample_rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == detail::kWavFormatExtensible) {
        if (chunk_size < 40) {
          throw WavError(Kind::kMalformedHeader, "wav: extensible fmt chunk is too short");
        }
        // The first two bytes of the sub-format GUID carry the format code.
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) {
        throw WavError(Kind::kMalformedHeader, "wav: data chunk precedes fmt chunk");
      }
      if (num_channels == 0 || sample_rate == 0) {
        throw WavError(Kind::kMalformedHeader, "wav: zero channels or sample rate");
      }
      const bool pcm_ok = format == detail::kWavFormatPcm && (bits == 16 || bits == 24);
      const bool float_ok = format == detail::kWavFormatFloat && bits == 32;
      if (!pcm_ok && !float_ok) {
        throw WavError(Kind::kUnsupportedEncoding,
                       "wav: unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");
      }
      const std::size_t bytes_per_sample = bits / 8;
      if (block_align != bytes_per_sample * num_channels) {
        throw WavError(Kind::kMalformedHeader, "wav: block alignment disagrees with format");
      }
      if (body + chunk_size > bytes.size()) {
        throw WavError(Kind::kTruncatedData,
                       "wav: data chunk declares " + std::to_string(chunk_size) +
                           " bytes but only " + std::to_string(bytes.size() - body) +
                           " are present");
      }
      const std::size_t frames = chunk_size / block_align;
      std::vector<std::vector<float>> channels(num_channels, std::vector<float>(frames));
      const std::uint8_t* d = bytes.data() + body;
      for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t c = 0; c < num_channels; ++c) {
          const std::uint8_t* s = d + n * block_align + c * bytes_per_sample;
          float v = 0.0F;
          if (float_ok) {
            std::uint32_t raw = read_u32(s);
            std::memcpy(&v, &raw, sizeof v);
          } else if (bits == 16) {
            v = static_cast<float>(static_cast<std::int16_t>(read_u16(s)) / 32768.0);
          } else {
            std::int32_t raw = static_cast<std::int32_t>(s[0] | (s[1] << 8) | (s[2] << 16));
            if (raw & 0x800000) raw -= 0x1000000;
            v = static_cast<float>(raw / 8388608.0);
          }
          channels[c][n] = v;
        }
      }
      return AudioBuffer(std::move(channels), static_cast<int>(sample_rate));
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }
  throw WavError(have_fmt ? Kind::kTruncatedData : Kind::kMalformedHeader,
                 have_fmt ? "wav: no data chunk found" : "wav: no fmt chunk found");
}

inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, WavEncoding encoding) {
  using detail::put_tag;
  using detail::put_u16;
  using detail::put_u32;

  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : encoding == WavEncoding::kPcm24 ? 24 : 32;
  const std::uint16_t format =
      encoding == WavEncoding::kFloat32 ? detail::kWavFormatFloat : detail::kWavFormatPcm;
  const auto channels = static_cast<std::uint16_t>(buffer.num_channels());
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * (bits / 8));
  const std::size_t data_bytes = buffer.num_frames() * block_align;
  if (data_bytes > 0xFFFFFFFFULL - 64) throw IoError("wav: signal too long for RIFF container");

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes + 1);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_bytes + (data_bytes & 1U)));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate()) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_bytes));

  for (std::size_t n = 0; n < buffer.num_frames(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float s = buffer.channel(c)[n];
      if (encoding == WavEncoding::kFloat32) {
        std::uint32_t raw = 0;
        std::memcpy(&raw, &s, sizeof raw);
        put_u32(out, raw);
      } else if (encoding == WavEncoding::kPcm16) {
        put_u16(out, static_cast<std::uint16_t>(detail::quantize(s, 16)));
      } else {
        const auto raw = static_cast<std::uint32_t>(detail::quantize(s, 24));
        out.push_back(static_cast<std::uint8_t>(raw & 0xFF));
        out.push_back(static_cast<std::uint8_t>((raw >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((raw >> 16) & 0xFF));
      }
    }
  }
  if (data_bytes & 1U) out.push_back(0);
  return out;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const WavError& e) {
    throw WavError(e.kind(), path.string() + ": " + e.what());
  }
}

inline void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                      WavEncoding encoding = WavEncoding::kFloat32) {
  const auto bytes = encode_wav(buffer, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace vocsep
