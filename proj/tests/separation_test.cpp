// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "vocsep/separation.hpp"

namespace vocsep {
namespace {

AudioBuffer test_signal(std::size_t channels, int sr, double seconds, unsigned seed, double amp = 0.2) {
  const auto n = static_cast<std::size_t>(seconds * sr);
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 0.05);
  AudioBuffer b(channels, n, sr);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double v = std::sin(2.0 * std::numbers::pi * (220.0 + 30.0 * c) * t) +
                       0.5 * std::sin(2.0 * std::numbers::pi * 1375.0 * t) + g(rng);
      b.channel(c)[i] = static_cast<float>(amp * v);
    }
  }
  return b;
}

double relative_rms_error(const AudioBuffer& got, const AudioBuffer& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < want.num_channels(); ++c) {
    for (std::size_t i = 0; i < want.num_frames(); ++i) {
      const double d = static_cast<double>(got.channel(c)[i]) - want.channel(c)[i];
      num += d * d;
      den += static_cast<double>(want.channel(c)[i]) * want.channel(c)[i];
    }
  }
  return std::sqrt(num / den);
}

double energy(const AudioBuffer& b) {
  double e = 0.0;
  for (std::size_t c = 0; c < b.num_channels(); ++c) {
    for (float s : b.channel(c)) e += static_cast<double>(s) * s;
  }
  return e;
}

SeparationConfig desk_separation(Stem stem = Stem::kVocal) {
  SeparationConfig s;
  s.stft = desk_model_config().stft;
  s.target = stem == Stem::kVocal ? SeparationTarget::kVocal : SeparationTarget::kAccompaniment;
  return s;
}

TEST(WarpMask, FixedPointsAndKnownValue) {
  const auto m = Mask::filled(1, 1, 1, 0.5F);
  EXPECT_NEAR(warp_mask(m, 1.4).values().data[0], 0.378929F, 1e-6F);
  for (double alpha : {0.3, 1.0, 1.4, 3.0}) {
    EXPECT_EQ(warp_mask(Mask::filled(1, 1, 1, 0.0F), alpha).values().data[0], 0.0F);
    EXPECT_EQ(warp_mask(Mask::filled(1, 1, 1, 1.0F), alpha).values().data[0], 1.0F);
  }
}

TEST(WarpMask, UnitExponentIsIdentity) {
  Array3 a(1, 3, 4, 0.0F);
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<float>(i) / 12.0F;
  EXPECT_EQ(warp_mask(Mask(a), 1.0).values().data, a.data);
}

TEST(WarpMask, MonotoneDecreasingInAlphaInsideUnitInterval) {
  for (float m : {0.01F, 0.2F, 0.5F, 0.9F, 0.999F}) {
    double prev = 2.0;
    for (double alpha = 0.25; alpha <= 4.0; alpha += 0.25) {
      const double v = warp_mask(Mask::filled(1, 1, 1, m), alpha).values().data[0];
      EXPECT_LT(v, prev) << m << " " << alpha;
      prev = v;
    }
  }
}

TEST(WarpMask, RejectsNonPositiveAlpha) {
  const auto m = Mask::filled(1, 1, 1, 0.5F);
  EXPECT_THROW(warp_mask(m, 0.0), ConfigError);
  EXPECT_THROW(warp_mask(m, -1.0), ConfigError);
  EXPECT_THROW(warp_mask(m, std::nan("")), ConfigError);
}

TEST(WienerCombine, StemsSumToMixtureAboveEnergyFloor) {
  const auto x = stft(test_signal(1, 16000, 0.5, 1), StftConfig{512, 128, WindowKind::kHann});
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  Array3 v(x.channels, x.frames, x.bins, 0.0F), a = v;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    // Sweep magnitudes down to the edge of the floor.
    const float s = std::pow(10.0F, -4.0F * u(rng));
    v.data[i] = s * u(rng);
    a.data[i] = s * u(rng);
  }
  const auto [vs, as] = wiener_combine(v, a, x);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double e = static_cast<double>(v.data[i]) * v.data[i] + static_cast<double>(a.data[i]) * a.data[i];
    if (e < 1e-6) continue;
    ++checked;
    const std::complex<double> sum = std::complex<double>(vs.data[i]) + std::complex<double>(as.data[i]);
    EXPECT_LE(std::abs(sum - std::complex<double>(x.data[i])), 1e-6 * std::abs(std::complex<double>(x.data[i])));
  }
  EXPECT_GT(checked, x.data.size() / 2);
}

TEST(WienerCombine, SymmetryAndZeroAccompaniment) {
  const auto x = stft(test_signal(1, 16000, 0.2, 3), StftConfig{512, 128, WindowKind::kHann});
  Array3 v(x.channels, x.frames, x.bins, 0.7F), a(x.channels, x.frames, x.bins, 0.7F);
  const auto [v1, a1] = wiener_combine(v, a, x);
  EXPECT_EQ(v1.data, a1.data);
  Array3 zero(x.channels, x.frames, x.bins, 0.0F);
  const auto [v2, a2] = wiener_combine(v, zero, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    EXPECT_LE(std::abs(v2.data[i] - x.data[i]), 1e-6F * std::abs(x.data[i]) + 1e-30F);
    EXPECT_EQ(std::abs(a2.data[i]), 0.0F);
  }
  EXPECT_THROW(wiener_combine(Array3(1, 1, 1, 0.0F), zero, x), ShapeError);
}

TEST(Separate, ForcedOnesIsIdentity) {
  const SpectralMaskModel<float> model(desk_model_config(), 0);
  const auto x = test_signal(1, 16000, 1.3, 4);
  PipelineHooks hooks;
  hooks.forced_mask_value = 1.0F;
  const auto y = separate(x, model, desk_separation(), hooks);
  ASSERT_EQ(y.num_frames(), x.num_frames());
  for (std::size_t i = 0; i < x.num_frames(); ++i) EXPECT_NEAR(y.channel(0)[i], x.channel(0)[i], 1e-5F);
}

TEST(Separate, ForcedZerosIsSilence) {
  const SpectralMaskModel<float> model(desk_model_config(), 0);
  PipelineHooks hooks;
  hooks.forced_mask_value = 0.0F;
  const auto y = separate(test_signal(1, 16000, 1.0, 5), model, desk_separation(), hooks);
  EXPECT_EQ(energy(y), 0.0);
}

TEST(Separate, SilenceIsImmeasurable) {
  const SpectralMaskModel<float> model(desk_model_config(), 0);
  EXPECT_THROW(separate(AudioBuffer(1, 16000, 16000), model, desk_separation()), ImmeasurableLoudnessError);
}

TEST(Separate, ScaleInvariance) {
  const SpectralMaskModel<float> model(desk_model_config(), 6);
  const auto x = test_signal(1, 16000, 2.0, 7);
  const auto base = separate(x, model, desk_separation());
  for (double c : {0.56, 0.1}) {
    const auto y = separate(x.scaled(c), model, desk_separation());
    EXPECT_LE(relative_rms_error(y, base.scaled(c)), 1e-4) << c;
  }
}

TEST(Separate, ScaleSensitiveWithoutNormalization) {
  const SpectralMaskModel<float> model(desk_model_config(), 6);
  const auto x = test_signal(1, 16000, 2.0, 7);
  PipelineHooks bypass;
  bypass.bypass_loudness_normalization = true;
  const auto base = separate(x, model, desk_separation(), bypass);
  const auto y = separate(x.scaled(0.1), model, desk_separation(), bypass);
  EXPECT_GT(relative_rms_error(y, base.scaled(0.1)), 1e-3);
}

TEST(Separate, EnergyContraction) {
  const SpectralMaskModel<float> model(desk_model_config(), 8);
  const auto x = test_signal(1, 16000, 1.5, 9);
  for (double alpha : {1.0, 1.4}) {
    auto cfg = desk_separation();
    cfg.alpha = alpha;
    EXPECT_LE(energy(separate(x, model, cfg)), energy(x) * (1.0 + 1e-4)) << alpha;
  }
}

TEST(Separate, Deterministic) {
  const SpectralMaskModel<float> model(desk_model_config(), 10);
  const auto x = test_signal(1, 16000, 1.0, 11);
  EXPECT_EQ(separate(x, model, desk_separation()).channel(0)[1234],
            separate(x, model, desk_separation()).channel(0)[1234]);
  const auto a = separate(x, model, desk_separation());
  const auto b = separate(x, model, desk_separation());
  for (std::size_t i = 0; i < x.num_frames(); ++i) ASSERT_EQ(a.channel(0)[i], b.channel(0)[i]);
}

TEST(Separate, ConfigurationMismatches) {
  const SpectralMaskModel<float> model(desk_model_config(), 0);
  EXPECT_THROW(separate(test_signal(2, 16000, 1.0, 12), model, desk_separation()), ConfigError);
  EXPECT_THROW(separate(test_signal(1, 44100, 1.0, 12), model, desk_separation()), ConfigError);
  EXPECT_THROW(separate(test_signal(1, 16000, 1.0, 12), model, desk_separation(Stem::kAccompaniment)), ConfigError);
  auto other_stft = desk_separation();
  other_stft.stft = StftConfig{};
  EXPECT_THROW(separate(test_signal(1, 16000, 1.0, 12), model, other_stft), ConfigError);
  auto bad_alpha = desk_separation();
  bad_alpha.alpha = 0.0;
  EXPECT_THROW(separate(test_signal(1, 16000, 1.0, 12), model, bad_alpha), ConfigError);
  EXPECT_THROW(separation_target_from_string("drums"), ConfigError);
}

TEST(SeparateStems, WienerStemsSumToMixture) {
  const SpectralMaskModel<float> vocal(desk_model_config(Stem::kVocal), 13);
  const SpectralMaskModel<float> accomp(desk_model_config(Stem::kAccompaniment), 14);
  const auto x = test_signal(1, 16000, 1.5, 15);
  auto cfg = desk_separation();
  cfg.target = SeparationTarget::kBoth;
  cfg.wiener = true;
  const auto stems = separate_stems(x, vocal, accomp, cfg);
  AudioBuffer sum = stems.vocal;
  for (std::size_t i = 0; i < x.num_frames(); ++i) sum.channel(0)[i] += stems.accompaniment.channel(0)[i];
  EXPECT_LE(relative_rms_error(sum, x), 1e-5);
  EXPECT_THROW(separate_stems(x, accomp, vocal, cfg), ConfigError);
}

TEST(SeparateStems, WithoutWienerMatchesSingleStemRuns) {
  const SpectralMaskModel<float> vocal(desk_model_config(Stem::kVocal), 13);
  const SpectralMaskModel<float> accomp(desk_model_config(Stem::kAccompaniment), 14);
  const auto x = test_signal(1, 16000, 1.0, 16);
  auto cfg = desk_separation();
  cfg.target = SeparationTarget::kBoth;
  const auto stems = separate_stems(x, vocal, accomp, cfg);
  const auto v = separate(x, vocal, desk_separation(Stem::kVocal));
  for (std::size_t i = 0; i < x.num_frames(); ++i) ASSERT_EQ(stems.vocal.channel(0)[i], v.channel(0)[i]);
  EXPECT_THROW(separate(x, vocal, cfg), ConfigError);
}

}  // namespace
}  // namespace vocsep
