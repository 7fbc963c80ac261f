// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Loudness-aware segment synthesis, the synthetic toy task and the training
// loop (masked-magnitude MSE, Adam, reduce-on-plateau).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vocsep/audio_io.hpp"
#include "vocsep/dsp.hpp"
#include "vocsep/errors.hpp"
#include "vocsep/loudness.hpp"
#include "vocsep/metrics.hpp"
#include "vocsep/model.hpp"
#include "vocsep/optim.hpp"

namespace vocsep {

struct SegmentRecipe {
  double voice_target_lufs = 0.0;
  std::size_t nonvoice_count = 3;
  // Offsets in LU relative to the voice level.
  double nonvoice_offset_min = -12.0;
  double nonvoice_offset_max = 12.0;
  std::size_t segment_length = 16000;

  void validate() const {
    if (nonvoice_offset_min > nonvoice_offset_max) {
      throw ConfigError("segment recipe: loudness range lower bound exceeds upper bound");
    }
    if (segment_length == 0) throw ConfigError("segment recipe: segment length must be positive");
  }
};

struct SourcePools {
  std::vector<AudioBuffer> voice;
  std::vector<AudioBuffer> nonvoice;
};

struct Segment {
  AudioBuffer mixture;
  AudioBuffer voice;
  AudioBuffer accompaniment;
};

namespace detail {

inline AudioBuffer random_crop(const AudioBuffer& source, std::size_t length, std::mt19937_64& rng) {
  if (source.num_frames() < length) {
    throw ConfigError("segment: source of " + std::to_string(source.num_frames()) +
                      " samples is shorter than the segment length " + std::to_string(length));
  }
  const std::size_t start =
      std::uniform_int_distribution<std::size_t>(0, source.num_frames() - length)(rng);
  std::vector<std::vector<float>> ch;
  for (std::size_t c = 0; c < source.num_channels(); ++c) {
    const auto s = source.channel(c);
    ch.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(start),
                    s.begin() + static_cast<std::ptrdiff_t>(start + length));
  }
  return AudioBuffer(std::move(ch), source.sample_rate());
}

inline std::size_t pick(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

// One training example: a voice at the anchor level plus non-voice sources at
// random offsets. mixture[i] == voice[i] + accompaniment[i] for every sample.
inline Segment synth_segment(const SourcePools& pools, const SegmentRecipe& recipe, std::mt19937_64& rng) {
  recipe.validate();
  if (pools.voice.empty() || (recipe.nonvoice_count > 0 && pools.nonvoice.empty())) {
    throw ConfigError("synth_segment: empty source pool");
  }
  const auto& vsrc = pools.voice[detail::pick(pools.voice.size(), rng)];
  Segment s;
  s.voice = normalize(detail::random_crop(vsrc, recipe.segment_length, rng), recipe.voice_target_lufs).normalized;
  s.accompaniment = AudioBuffer(s.voice.num_channels(), recipe.segment_length, s.voice.sample_rate());
  std::uniform_real_distribution<double> offset(recipe.nonvoice_offset_min, recipe.nonvoice_offset_max);
  for (std::size_t k = 0; k < recipe.nonvoice_count; ++k) {
    const auto& src = pools.nonvoice[detail::pick(pools.nonvoice.size(), rng)];
    if (src.num_channels() != s.voice.num_channels() || src.sample_rate() != s.voice.sample_rate()) {
      throw ConfigError("synth_segment: pools differ in channel count or sample rate");
    }
    const double level = recipe.voice_target_lufs + (recipe.nonvoice_offset_min == recipe.nonvoice_offset_max
                                                         ? recipe.nonvoice_offset_min
                                                         : offset(rng));
    const auto stem = normalize(detail::random_crop(src, recipe.segment_length, rng), level).normalized;
    for (std::size_t c = 0; c < stem.num_channels(); ++c) {
      auto acc = s.accompaniment.channel(c);
      const auto x = stem.channel(c);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
    }
  }
  s.mixture = s.voice;
  for (std::size_t c = 0; c < s.mixture.num_channels(); ++c) {
    auto m = s.mixture.channel(c);
    const auto a = s.accompaniment.channel(c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += a[i];
  }
  return s;
}

// splitmix64 of (seed, index): per-segment streams that do not depend on the
// order in which segments are produced.
inline std::uint64_t segment_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Toy task: 16 kHz mono. Voices are harmonic tones (f0 300-450 Hz, partials
// up to 3 kHz) with syllable envelopes; non-voice sources are bass tones
// below 200 Hz or noise above 3.5 kHz.

inline constexpr int kToySampleRate = 16000;
inline constexpr double kToySourceSeconds = 3.0;

struct ToyDataset {
  SourcePools train;
  SourcePools eval_sources;
  std::vector<EvalItem> eval;
};

namespace detail {

inline std::size_t toy_length(double seconds) {
  return static_cast<std::size_t>(seconds * kToySampleRate);
}

inline AudioBuffer toy_voice(std::mt19937_64& rng, double seconds) {
  const std::size_t n = toy_length(seconds);
  const double sr = kToySampleRate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> out(n, 0.0F);

  // Note sequence with piecewise-constant pitch and a raised-cosine envelope.
  std::vector<double> f0(n), env(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    const auto note = static_cast<std::size_t>((0.15 + 0.25 * u(rng)) * sr);
    const auto gap = static_cast<std::size_t>((0.02 + 0.06 * u(rng)) * sr);
    const double pitch = 300.0 + 150.0 * u(rng);
    const auto ramp = static_cast<std::size_t>(0.02 * sr);
    for (std::size_t i = 0; i < note && pos + i < n; ++i) {
      f0[pos + i] = pitch;
      double e = 1.0;
      if (i < ramp) e = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
      if (note - i < ramp) e = std::min(e, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(note - i) / ramp));
      env[pos + i] = e;
    }
    for (std::size_t i = note; i < note + gap && pos + i < n; ++i) f0[pos + i] = pitch;
    pos += note + gap;
  }

  const double vibrato_rate = 4.5 + 2.0 * u(rng);
  const double am_rate = 3.0 + 3.0 * u(rng);
  const double am_phase = 2.0 * std::numbers::pi * u(rng);
  std::vector<double> weights(16);
  for (std::size_t k = 0; k < weights.size(); ++k) weights[k] = (0.5 + u(rng)) / static_cast<double>(k + 1);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = f0[i] * (1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * vibrato_rate * t));
    phase += 2.0 * std::numbers::pi * f / sr;
    double s = 0.0;
    for (std::size_t k = 1; k <= weights.size() && k * f0[i] * 1.02 <= 3000.0; ++k) {
      s += weights[k - 1] * std::sin(static_cast<double>(k) * phase);
    }
    const double am = 1.0 - 0.3 * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase));
    out[i] = static_cast<float>(0.1 * env[i] * am * s);
  }
  return AudioBuffer({std::move(out)}, kToySampleRate);
}

inline AudioBuffer toy_bass(std::mt19937_64& rng, double seconds) {
  const std::size_t n = toy_length(seconds);
  const double sr = kToySampleRate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f = 55.0 + 45.0 * u(rng);
  const double second = 0.3 * u(rng);
  const double am_rate = 0.5 + 1.5 * u(rng);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double w = 2.0 * std::numbers::pi * f * t;
    const double am = 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * am_rate * t);
    out[i] = static_cast<float>(0.1 * am * (std::sin(w) + second * std::sin(2.0 * w)));
  }
  return AudioBuffer({std::move(out)}, kToySampleRate);
}

// Noise with an exactly band-limited spectrum above `low_hz`.
inline AudioBuffer toy_high_noise(std::mt19937_64& rng, double seconds, double low_hz = 3500.0) {
  const std::size_t n = toy_length(seconds);
  std::size_t fft = 1;
  while (fft < n) fft <<= 1;
  const RealFft plan(fft);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::complex<double>> spec(fft / 2 + 1);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = static_cast<double>(k) * kToySampleRate / static_cast<double>(fft);
    if (hz >= low_hz && k + 1 < spec.size()) spec[k] = {g(rng), g(rng)};
  }
  std::vector<double> time(fft);
  plan.inverse(spec, time);
  double rms = 0.0;
  for (std::size_t i = 0; i < n; ++i) rms += time[i] * time[i];
  rms = std::sqrt(rms / static_cast<double>(n));
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(0.05 * time[i] / rms);
  return AudioBuffer({std::move(out)}, kToySampleRate);
}

inline SourcePools toy_pools(std::mt19937_64& rng, std::size_t voices, std::size_t nonvoices, double seconds) {
  SourcePools p;
  for (std::size_t i = 0; i < voices; ++i) p.voice.push_back(toy_voice(rng, seconds));
  for (std::size_t i = 0; i < nonvoices; ++i) {
    p.nonvoice.push_back(i % 2 == 0 ? toy_bass(rng, seconds) : toy_high_noise(rng, seconds));
  }
  return p;
}

}  // namespace detail

// Disjoint train and eval pools (separate generator streams) and an eval set
// of full-length mixtures with their ground-truth stems.
inline ToyDataset make_toy_dataset(std::uint64_t seed, std::size_t eval_items = 4) {
  ToyDataset d;
  std::mt19937_64 train_rng(segment_seed(seed, 0));
  std::mt19937_64 eval_rng(segment_seed(seed, 1));
  d.train = detail::toy_pools(train_rng, 16, 16, kToySourceSeconds);
  d.eval_sources = detail::toy_pools(eval_rng, eval_items, 2 * eval_items, kToySourceSeconds);
  SegmentRecipe recipe;
  recipe.segment_length = detail::toy_length(kToySourceSeconds);
  for (std::size_t i = 0; i < eval_items; ++i) {
    SourcePools one{{d.eval_sources.voice[i]}, d.eval_sources.nonvoice};
    std::mt19937_64 mix_rng(segment_seed(seed, 1000 + i));
    auto seg = synth_segment(one, recipe, mix_rng);
    d.eval.push_back({"toy" + std::to_string(i), seg.mixture, seg.voice, seg.accompaniment});
  }
  return d;
}

// Ideal ratio mask |S| / (|S| + |N|) from the ground-truth stems, applied to
// the mixture and scored; the upper reference for mask-based separation.
inline AudioBuffer ideal_ratio_mask_estimate(const EvalItem& item, Stem stem, const StftConfig& stft_config) {
  const auto mix = stft(item.mixture, stft_config);
  const auto s = magnitude(stft(stem == Stem::kVocal ? item.vocal : item.accompaniment, stft_config));
  const auto n = magnitude(stft(stem == Stem::kVocal ? item.accompaniment : item.vocal, stft_config));
  Array3 m = s;
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const double den = static_cast<double>(s.data[i]) + n.data[i];
    m.data[i] = den > 0.0 ? static_cast<float>(s.data[i] / den) : 0.0F;
  }
  return istft(apply_mask(mix, Mask(std::move(m))));
}

inline BssScore ideal_ratio_mask_score(const std::vector<EvalItem>& eval_set, Stem stem,
                                       const StftConfig& stft_config) {
  if (eval_set.empty()) throw ConfigError("oracle: empty evaluation set");
  BssScore mean;
  for (const auto& item : eval_set) {
    const auto s = score_stem(ideal_ratio_mask_estimate(item, stem, stft_config), item, stem);
    mean.sdr += s.sdr;
    mean.sir += s.sir;
  }
  mean.sdr /= static_cast<double>(eval_set.size());
  mean.sir /= static_cast<double>(eval_set.size());
  return mean;
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  ag::PlateauScheduler::Options scheduler;
  double train_target_lufs = kDefaultTargetLufs;
  std::size_t epochs = 1;
  std::size_t steps_per_epoch = 100;
  std::uint64_t seed = 0;
  SegmentRecipe recipe;

  void validate() const {
    if (batch_size == 0 || epochs == 0 || steps_per_epoch == 0) {
      throw ConfigError("train: batch size, epochs and steps per epoch must be positive");
    }
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
      throw ConfigError("train: learning rate and weight decay must be non-negative");
    }
    if (!std::isfinite(train_target_lufs)) throw ConfigError("train: target loudness must be finite");
    recipe.validate();
  }
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<LossRecord> history;
};

// Network input and regression target for one segment, both normalized by
// the mixture's gain to the training loudness.
struct TrainExample {
  Array3 mixture_mag;
  Array3 target_mag;
};

inline TrainExample prepare_example(const Segment& seg, Stem stem, const SpectralModelConfig& model,
                                    double target_lufs) {
  if (seg.mixture.sample_rate() != model.sample_rate || seg.mixture.num_channels() != model.channels) {
    throw ConfigError("train: segment format (" + std::to_string(seg.mixture.num_channels()) + " ch, " +
                      std::to_string(seg.mixture.sample_rate()) + " Hz) does not match the model");
  }
  const double gain = normalization_gain(integrated_loudness(seg.mixture).lufs(), target_lufs);
  const auto& target = stem == Stem::kVocal ? seg.voice : seg.accompaniment;
  return {magnitude(stft(seg.mixture.scaled(gain), model.stft)), magnitude(stft(target.scaled(gain), model.stft))};
}

// MSE(mask ⊙ |X|, |S|) over every bin. Bins above the bandwidth limit pass
// through unmasked and contribute a parameter-independent term.
template <typename T>
ag::Tensor<T> masked_magnitude_loss(const SpectralMaskModel<T>& model, const TrainExample& ex, ag::NormMode mode) {
  const auto& cfg = model.config();
  const auto mix = magnitude_features<T>(ex.mixture_mag, cfg);
  const auto target = magnitude_features<T>(ex.target_mag, cfg);
  const auto mask = model.forward(mix, mode);
  const double total = static_cast<double>(ex.mixture_mag.data.size());
  const double cropped = static_cast<double>(mix.size());
  auto loss = ag::scale(ag::mse_loss(ag::mul(mask, mix), target), static_cast<T>(cropped / total));
  if (cropped < total) {
    double pass = 0.0;
    const std::size_t crop = cfg.cropped_bins();
    for (std::size_t c = 0; c < ex.mixture_mag.channels; ++c) {
      for (std::size_t t = 0; t < ex.mixture_mag.frames; ++t) {
        for (std::size_t f = crop; f < ex.mixture_mag.bins; ++f) {
          const double d = static_cast<double>(ex.mixture_mag.at(c, t, f)) - ex.target_mag.at(c, t, f);
          pass += d * d;
        }
      }
    }
    loss = ag::add_scalar(loss, static_cast<T>(pass / total));
  }
  return loss;
}

template <typename T>
TrainResult train(SpectralMaskModel<T>& model, const SourcePools& data, const TrainConfig& config,
                  const std::function<void(const LossRecord&)>& on_step = {}) {
  config.validate();
  const Stem stem = model.config().target;
  ag::Adam<T> adam(model.trainable_parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  ag::PlateauScheduler scheduler(config.learning_rate, config.scheduler);
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s, ++step) {
      adam.zero_grad();
      double step_loss = 0.0;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const std::uint64_t index = static_cast<std::uint64_t>(step) * config.batch_size + b;
        std::mt19937_64 rng(segment_seed(config.seed, index));
        const auto example =
            prepare_example(synth_segment(data, config.recipe, rng), stem, model.config(), config.train_target_lufs);
        const auto loss = masked_magnitude_loss(model, example, ag::NormMode::kTrain);
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) {
          throw TrainingError("train: non-finite loss at step " + std::to_string(step) + ", segment " +
                              std::to_string(b) + " (learning rate " + std::to_string(adam.learning_rate()) + ")");
        }
        ag::backward(ag::scale(loss, static_cast<T>(1.0 / static_cast<double>(config.batch_size))));
        step_loss += value / static_cast<double>(config.batch_size);
      }
      adam.step();
      epoch_loss += step_loss;
      LossRecord rec{step, epoch, step_loss, adam.learning_rate()};
      result.history.push_back(rec);
      if (on_step) on_step(rec);
    }
    adam.set_learning_rate(scheduler.step(epoch_loss / static_cast<double>(config.steps_per_epoch)));
  }
  result.weights = model.to_weights();
  return result;
}

inline std::string format_loss_history(const std::vector<LossRecord>& history, char delimiter = '\t') {
  std::ostringstream os;
  os << "step" << delimiter << "epoch" << delimiter << "loss" << delimiter << "learning_rate\n";
  os << std::setprecision(9);
  for (const auto& r : history) {
    os << r.step << delimiter << r.epoch << delimiter << r.loss << delimiter << r.learning_rate << '\n';
  }
  return os.str();
}

inline void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path,
                               char delimiter = '\t') {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << format_loss_history(history, delimiter);
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

// Defaults for desk-scale runs on the toy task.
inline TrainConfig toy_train_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = 20;
  c.steps_per_epoch = 50;
  c.recipe.segment_length = kToySampleRate;
  return c;
}

inline SeparationConfig toy_separation_config(const SpectralModelConfig& model) {
  SeparationConfig c;
  c.stft = model.stft;
  c.target = model.target == Stem::kVocal ? SeparationTarget::kVocal : SeparationTarget::kAccompaniment;
  return c;
}

}  // namespace vocsep
