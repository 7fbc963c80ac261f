// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Inference timing: repeated end-to-end separation of an in-memory signal,
// mean of the fastest runs, reported per second of audio.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vocsep/errors.hpp"
#include "vocsep/separation.hpp"
#include "vocsep/weights.hpp"

namespace vocsep {

struct BenchOptions {
  double duration_seconds = 180.0;
  std::size_t runs = 50;
  std::size_t keep = 40;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (keep == 0 || keep > runs) {
      throw ConfigError("bench: need runs >= keep >= 1, got runs=" + std::to_string(runs) +
                        " keep=" + std::to_string(keep));
    }
    if (!(duration_seconds > 0.0)) throw ConfigError("bench: input duration must be positive");
  }
};

struct BenchReport {
  double ms_per_second = 0.0;
  std::size_t runs_total = 0;
  std::size_t runs_kept = 0;
  double input_duration_seconds = 0.0;
  std::uint64_t model_size_bytes = 0;
  double real_time_factor = 0.0;
  std::vector<double> run_ms;  // every timed run, in execution order

  std::string format() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "ms_per_second=" << ms_per_second << '\n'
       << "real_time_factor=" << std::setprecision(6) << real_time_factor << '\n'
       << "runs_total=" << runs_total << '\n'
       << "runs_kept=" << runs_kept << '\n'
       << "input_duration_s=" << std::setprecision(3) << input_duration_seconds << '\n'
       << "model_size_bytes=" << model_size_bytes << '\n';
    return os.str();
  }
};

// Mean of the `keep` smallest values.
inline double mean_of_fastest(std::vector<double> times, std::size_t keep) {
  if (keep == 0 || keep > times.size()) throw ConfigError("bench: keep must lie in [1, runs]");
  std::sort(times.begin(), times.end());
  return std::accumulate(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) /
         static_cast<double>(keep);
}

// Music-like deterministic test signal: a few partials, a noise floor and a
// slow tremolo so loudness gating sees a steady program.
inline AudioBuffer bench_input(std::size_t channels, int sample_rate, double seconds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  AudioBuffer out(channels, n, sample_rate);
  const double freqs[] = {110.0, 220.0, 440.0, 660.0, 1320.0, 2640.0};
  for (std::size_t c = 0; c < channels; ++c) {
    auto x = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      double s = 0.0;
      for (std::size_t k = 0; k < std::size(freqs); ++k) {
        s += std::sin(2.0 * std::numbers::pi * freqs[k] * t + static_cast<double>(c + k)) / static_cast<double>(k + 1);
      }
      const double am = 0.8 + 0.2 * std::sin(2.0 * std::numbers::pi * 0.5 * t);
      x[i] = static_cast<float>(0.1 * am * s + noise(rng));
    }
  }
  return out;
}

inline std::uint64_t model_size(const std::filesystem::path& weights_path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(weights_path, ec);
  if (ec) throw IoError("model_size: cannot stat '" + weights_path.string() + "': " + ec.message());
  return size;
}

template <typename T>
BenchReport bench_separation(const SpectralMaskModel<T>& model, const SeparationConfig& config,
                             const BenchOptions& options = {}) {
  options.validate();
  const auto& mc = model.config();
  const auto input = bench_input(mc.channels, mc.sample_rate, options.duration_seconds, options.seed);
  SeparationConfig c = config;
  c.target = mc.target == Stem::kVocal ? SeparationTarget::kVocal : SeparationTarget::kAccompaniment;

  for (std::size_t i = 0; i < options.warmup; ++i) (void)separate(input, model, c);

  BenchReport r;
  r.run_ms.reserve(options.runs);
  for (std::size_t i = 0; i < options.runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = separate(input, model, c);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.num_frames() != input.num_frames()) throw Error("bench: separation changed the signal length");
    r.run_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  r.runs_total = options.runs;
  r.runs_kept = options.keep;
  r.input_duration_seconds = input.duration_seconds();
  r.ms_per_second = mean_of_fastest(r.run_ms, options.keep) / r.input_duration_seconds;
  r.real_time_factor = r.ms_per_second / 1000.0;
  r.model_size_bytes = serialize_weights(model.to_weights()).size();
  return r;
}

}  // namespace vocsep
