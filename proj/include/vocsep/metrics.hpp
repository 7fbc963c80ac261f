// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Projection-based SDR/SIR and the loudness sweep built on it.
//
// The estimate is split into s_target (projection on the target reference),
// e_interf (projection on the span of all references minus s_target) and
// e_artif (the remainder). Projections use time-invariant scalar gains, not
// the FIR distortion filters of the museval toolbox, and scores are computed
// over the whole signal rather than as a median of 1 s windows, so absolute
// numbers are not comparable with published museval tables.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vocsep/audio_io.hpp"
#include "vocsep/errors.hpp"
#include "vocsep/loudness.hpp"
#include "vocsep/separation.hpp"

namespace vocsep {

inline constexpr double kScoreCapDb = 100.0;

struct BssScore {
  double sdr = 0.0;
  double sir = 0.0;
};

struct BssDecomposition {
  std::vector<double> target;
  std::vector<double> interference;
  std::vector<double> artifacts;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double capped_ratio_db(double num, double den) {
  if (num <= 0.0) return -kScoreCapDb;
  if (den <= 0.0) return kScoreCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kScoreCapDb, kScoreCapDb);
}

}  // namespace detail

// Single-channel decomposition. The span projection uses modified
// Gram-Schmidt on the references.
inline BssDecomposition bss_decompose(std::span<const double> estimate,
                                      const std::vector<std::vector<double>>& references, std::size_t target_index) {
  if (references.empty() || target_index >= references.size()) {
    throw ConfigError("bss_eval: target index out of range");
  }
  const std::size_t n = estimate.size();
  for (const auto& r : references) {
    if (r.size() != n) throw ShapeError("bss_eval: estimate and references differ in length");
  }
  const auto& s = references[target_index];
  const double target_energy = detail::dot(s, s);
  if (!(target_energy > 0.0)) throw ConfigError("bss_eval: target reference has zero energy");

  BssDecomposition d;
  const double g = detail::dot(estimate, s) / target_energy;
  d.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.target[i] = g * s[i];

  std::vector<std::vector<double>> basis;
  basis.reserve(references.size());
  for (const auto& r : references) {
    std::vector<double> q(r.begin(), r.end());
    const double original = std::sqrt(detail::dot(q, q));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double c = detail::dot(q, b);
        for (std::size_t i = 0; i < n; ++i) q[i] -= c * b[i];
      }
    }
    const double norm = std::sqrt(detail::dot(q, q));
    if (!(norm > 1e-10 * original)) throw ConfigError("bss_eval: references are linearly dependent");
    for (auto& v : q) v /= norm;
    basis.push_back(std::move(q));
  }
  std::vector<double> in_span(n, 0.0);
  for (const auto& b : basis) {
    const double c = detail::dot(estimate, b);
    for (std::size_t i = 0; i < n; ++i) in_span[i] += c * b[i];
  }
  d.interference.resize(n);
  d.artifacts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.interference[i] = in_span[i] - d.target[i];
    d.artifacts[i] = estimate[i] - in_span[i];
  }
  return d;
}

inline BssScore bss_score(const BssDecomposition& d) {
  const double target = detail::dot(d.target, d.target);
  const double interf = detail::dot(d.interference, d.interference);
  double distortion = 0.0;
  for (std::size_t i = 0; i < d.target.size(); ++i) {
    const double e = d.interference[i] + d.artifacts[i];
    distortion += e * e;
  }
  return {detail::capped_ratio_db(target, distortion), detail::capped_ratio_db(target, interf)};
}

// Per-channel scores averaged over channels.
inline BssScore bss_eval(const AudioBuffer& estimate, const std::vector<AudioBuffer>& references,
                         std::size_t target_index) {
  if (references.empty()) throw ConfigError("bss_eval: no references");
  for (const auto& r : references) {
    if (r.num_channels() != estimate.num_channels() || r.num_frames() != estimate.num_frames()) {
      throw ShapeError("bss_eval: estimate and references differ in length or channel count");
    }
  }
  if (estimate.num_channels() == 0 || estimate.empty()) throw ShapeError("bss_eval: empty signal");
  BssScore mean;
  for (std::size_t c = 0; c < estimate.num_channels(); ++c) {
    const auto ec = estimate.channel(c);
    std::vector<double> e(ec.begin(), ec.end());
    std::vector<std::vector<double>> refs;
    for (const auto& r : references) refs.emplace_back(r.channel(c).begin(), r.channel(c).end());
    const auto score = bss_score(bss_decompose(e, refs, target_index));
    mean.sdr += score.sdr;
    mean.sir += score.sir;
  }
  mean.sdr /= static_cast<double>(estimate.num_channels());
  mean.sir /= static_cast<double>(estimate.num_channels());
  return mean;
}

struct EvalItem {
  std::string name;
  AudioBuffer mixture;
  AudioBuffer vocal;
  AudioBuffer accompaniment;
};

inline std::size_t stem_index(Stem s) { return s == Stem::kVocal ? 0 : 1; }

inline BssScore score_stem(const AudioBuffer& estimate, const EvalItem& item, Stem stem) {
  return bss_eval(estimate, {item.vocal, item.accompaniment}, stem_index(stem));
}

struct SweepRow {
  double level_lufs = 0.0;
  double mean_sdr = 0.0;
  std::vector<double> item_sdr;
};

struct SweepTable {
  std::vector<std::string> item_names;
  std::vector<SweepRow> rows;

  std::string format(char delimiter = '\t') const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "level_lufs" << delimiter << "mean_sdr_db";
    for (const auto& n : item_names) os << delimiter << n;
    os << '\n';
    for (const auto& r : rows) {
      os << r.level_lufs << delimiter << r.mean_sdr;
      for (double v : r.item_sdr) os << delimiter << v;
      os << '\n';
    }
    return os.str();
  }
};

// Mean score of the model's stem over an evaluation set.
template <typename T>
BssScore evaluate_model(const SpectralMaskModel<T>& model, const std::vector<EvalItem>& eval_set,
                        const SeparationConfig& config, const PipelineHooks& hooks = {}) {
  if (eval_set.empty()) throw ConfigError("evaluate: empty evaluation set");
  const Stem stem = model.config().target;
  SeparationConfig c = config;
  c.target = stem == Stem::kVocal ? SeparationTarget::kVocal : SeparationTarget::kAccompaniment;
  BssScore mean;
  for (const auto& item : eval_set) {
    const auto s = score_stem(separate(item.mixture, model, c, hooks), item, stem);
    mean.sdr += s.sdr;
    mean.sir += s.sir;
  }
  mean.sdr /= static_cast<double>(eval_set.size());
  mean.sir /= static_cast<double>(eval_set.size());
  return mean;
}

inline const std::vector<double>& default_sweep_levels() {
  static const std::vector<double> levels{-15.0, -30.0, -45.0};
  return levels;
}

// For each level: rescale each mixture (and its stems by the same gain) to
// that integrated loudness, separate, and score the model's stem.
template <typename T>
SweepTable loudness_sweep_eval(const SpectralMaskModel<T>& model, const std::vector<EvalItem>& eval_set,
                               const std::vector<double>& levels, const SeparationConfig& config,
                               const PipelineHooks& hooks = {}) {
  if (eval_set.empty()) throw ConfigError("sweep: empty evaluation set");
  SweepTable table;
  for (const auto& item : eval_set) table.item_names.push_back(item.name);
  const Stem stem = model.config().target;
  SeparationConfig c = config;
  c.target = stem == Stem::kVocal ? SeparationTarget::kVocal : SeparationTarget::kAccompaniment;
  for (double level : levels) {
    SweepRow row;
    row.level_lufs = level;
    for (const auto& item : eval_set) {
      const double gain = normalization_gain(integrated_loudness(item.mixture).lufs(), level);
      EvalItem scaled{item.name, item.mixture.scaled(gain), item.vocal.scaled(gain), item.accompaniment.scaled(gain)};
      const auto estimate = separate(scaled.mixture, model, c, hooks);
      row.item_sdr.push_back(score_stem(estimate, scaled, stem).sdr);
    }
    row.mean_sdr = std::accumulate(row.item_sdr.begin(), row.item_sdr.end(), 0.0) /
                   static_cast<double>(row.item_sdr.size());
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Loads <name>.mix.wav with its <name>.vocal.wav and <name>.accomp.wav stems.
inline std::vector<EvalItem> load_eval_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("eval dir '" + dir.string() + "' is not a directory");
  const std::string suffix = ".mix.wav";
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    if (file.size() > suffix.size() && file.compare(file.size() - suffix.size(), suffix.size(), suffix) == 0) {
      names.push_back(file.substr(0, file.size() - suffix.size()));
    }
  }
  if (names.empty()) throw IoError("eval dir '" + dir.string() + "' contains no *.mix.wav files");
  std::sort(names.begin(), names.end());
  std::vector<EvalItem> items;
  for (const auto& name : names) {
    EvalItem item;
    item.name = name;
    for (auto [suffix_name, target] : {std::pair<const char*, AudioBuffer*>{".mix.wav", &item.mixture},
                                       {".vocal.wav", &item.vocal},
                                       {".accomp.wav", &item.accompaniment}}) {
      const auto path = dir / (name + suffix_name);
      if (!fs::exists(path)) throw IoError("eval dir: missing stem file '" + path.string() + "'");
      *target = read_wav(path);
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace vocsep
