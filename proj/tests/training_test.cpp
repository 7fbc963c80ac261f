// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vocsep/training.hpp"

namespace vocsep {
namespace {

const ToyDataset& toy() {
  static const ToyDataset d = make_toy_dataset(0);
  return d;
}

double lufs(const AudioBuffer& b) { return integrated_loudness(b).lufs(); }

TrainConfig quick_config(std::size_t epochs, std::size_t steps, std::size_t batch) {
  auto c = toy_train_config(3);
  c.epochs = epochs;
  c.steps_per_epoch = steps;
  c.batch_size = batch;
  return c;
}

std::vector<std::vector<double>> snapshot(const SpectralMaskModel<float>& m) {
  std::vector<std::vector<double>> out;
  for (const auto& t : m.trainable_parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

TEST(SynthSegment, VoiceAtAnchorLevel) {
  SegmentRecipe r;
  for (std::uint64_t i = 0; i < 6; ++i) {
    std::mt19937_64 rng(segment_seed(11, i));
    const auto s = synth_segment(toy().train, r, rng);
    EXPECT_NEAR(lufs(s.voice), 0.0, 0.2) << i;
  }
}

TEST(SynthSegment, CollapsedOffsetRangeFixesLevel) {
  SegmentRecipe r;
  r.nonvoice_count = 1;
  r.nonvoice_offset_min = r.nonvoice_offset_max = -12.0;
  for (std::uint64_t i = 0; i < 6; ++i) {
    std::mt19937_64 rng(segment_seed(12, i));
    EXPECT_NEAR(lufs(synth_segment(toy().train, r, rng).accompaniment), -12.0, 0.2) << i;
  }
}

TEST(SynthSegment, MixtureIsExactSum) {
  SegmentRecipe r;
  std::mt19937_64 rng(13);
  const auto s = synth_segment(toy().train, r, rng);
  ASSERT_EQ(s.mixture.num_frames(), r.segment_length);
  for (std::size_t i = 0; i < s.mixture.num_frames(); ++i) {
    ASSERT_EQ(s.mixture.channel(0)[i], s.voice.channel(0)[i] + s.accompaniment.channel(0)[i]) << i;
  }
}

TEST(SynthSegment, DeterministicPerSeedAndValidated) {
  SegmentRecipe r;
  std::mt19937_64 a(segment_seed(5, 7)), b(segment_seed(5, 7)), c(segment_seed(5, 8));
  const auto sa = synth_segment(toy().train, r, a);
  const auto sb = synth_segment(toy().train, r, b);
  const auto sc = synth_segment(toy().train, r, c);
  EXPECT_TRUE(std::equal(sa.mixture.channel(0).begin(), sa.mixture.channel(0).end(), sb.mixture.channel(0).begin()));
  EXPECT_FALSE(std::equal(sa.mixture.channel(0).begin(), sa.mixture.channel(0).end(), sc.mixture.channel(0).begin()));
  r.nonvoice_offset_min = 3.0;
  r.nonvoice_offset_max = -3.0;
  EXPECT_THROW(synth_segment(toy().train, r, a), ConfigError);
  SegmentRecipe too_long;
  too_long.segment_length = 10 * kToySampleRate;
  EXPECT_THROW(synth_segment(toy().train, too_long, a), ConfigError);
}

TEST(SegmentSeed, DistinctStreams) {
  EXPECT_NE(segment_seed(0, 0), segment_seed(0, 1));
  EXPECT_NE(segment_seed(0, 0), segment_seed(1, 0));
  EXPECT_EQ(segment_seed(9, 4), segment_seed(9, 4));
}

TEST(ToyDataset, TrainAndEvalSourcesAreDisjoint) {
  const auto& d = toy();
  ASSERT_EQ(d.eval.size(), 4U);
  auto same = [](const AudioBuffer& x, const AudioBuffer& y) {
    return x.num_frames() == y.num_frames() &&
           std::equal(x.channel(0).begin(), x.channel(0).end(), y.channel(0).begin());
  };
  for (const auto& e : d.eval_sources.voice) {
    for (const auto& t : d.train.voice) EXPECT_FALSE(same(e, t));
  }
  for (const auto& e : d.eval_sources.nonvoice) {
    for (const auto& t : d.train.nonvoice) EXPECT_FALSE(same(e, t));
  }
  for (const auto& item : d.eval) {
    EXPECT_EQ(item.mixture.sample_rate(), kToySampleRate);
    EXPECT_EQ(item.mixture.num_channels(), 1U);
  }
}

TEST(ToyDataset, IdealRatioMaskOracleIsStrong) {
  const auto score = ideal_ratio_mask_score(toy().eval, Stem::kVocal, desk_model_config().stft);
  EXPECT_GE(score.sdr, 15.0);
  EXPECT_GT(score.sir, score.sdr);
}

TEST(Loss, FiniteNonNegativeAndBoundedByMixture) {
  const SpectralMaskModel<float> model(desk_model_config(), 1);
  std::mt19937_64 rng(14);
  const auto seg = synth_segment(toy().train, SegmentRecipe{}, rng);
  const auto ex = prepare_example(seg, Stem::kVocal, model.config(), -13.0);
  const auto loss = masked_magnitude_loss(model, ex, ag::NormMode::kTrain);
  EXPECT_TRUE(std::isfinite(loss.item()));
  EXPECT_GE(loss.item(), 0.0F);
  TrainExample trivial{ex.mixture_mag, Array3(ex.mixture_mag.channels, ex.mixture_mag.frames, ex.mixture_mag.bins, 0.0F)};
  // A zero target is reachable by a zero mask, so the loss is bounded by the
  // mixture energy.
  double energy = 0.0;
  for (float v : ex.mixture_mag.data) energy += static_cast<double>(v) * v;
  EXPECT_LE(masked_magnitude_loss(model, trivial, ag::NormMode::kEval).item(),
            energy / static_cast<double>(ex.mixture_mag.data.size()) * (1.0 + 1e-5));
}

TEST(Loss, PassThroughBinsAddConstant) {
  auto cfg = desk_model_config();
  cfg.bandwidth_limit_hz = 4000.0;  // half the bins pass through
  const SpectralMaskModel<double> model(cfg, 2);
  std::mt19937_64 rng(15);
  const auto ex = prepare_example(synth_segment(toy().train, SegmentRecipe{}, rng), Stem::kVocal, cfg, -13.0);
  const auto mask = model.forward(magnitude_features<double>(ex.mixture_mag, cfg), ag::NormMode::kEval);
  const auto expanded = expand_mask(mask, cfg).values();
  double want = 0.0;
  for (std::size_t i = 0; i < ex.mixture_mag.data.size(); ++i) {
    const double d = static_cast<double>(expanded.data[i]) * ex.mixture_mag.data[i] - ex.target_mag.data[i];
    want += d * d;
  }
  want /= static_cast<double>(ex.mixture_mag.data.size());
  EXPECT_NEAR(masked_magnitude_loss(model, ex, ag::NormMode::kEval).item(), want, 1e-6 * want);
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  SpectralMaskModel<float> model(desk_model_config(), 4);
  const auto before = snapshot(model);
  auto c = quick_config(1, 3, 2);
  c.learning_rate = 0.0;
  train(model, toy().train, c);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Train, OneStepReachesAlmostEveryParameter) {
  SpectralMaskModel<float> model(desk_model_config(), 5);
  const auto result = train(model, toy().train, quick_config(1, 1, 4));
  ASSERT_EQ(result.history.size(), 1U);
  std::size_t total = 0, nonzero = 0;
  for (const auto& t : model.trainable_parameters()) {
    ASSERT_TRUE(t.has_grad());
    for (float g : t.grad()) {
      ++total;
      nonzero += g != 0.0F;
    }
  }
  EXPECT_GE(static_cast<double>(nonzero) / static_cast<double>(total), 0.99);
}

TEST(Train, DeterministicForSeed) {
  auto run = [] {
    SpectralMaskModel<float> model(desk_model_config(), 6);
    const auto result = train(model, toy().train, quick_config(1, 2, 2));
    std::vector<double> losses;
    for (const auto& r : result.history) losses.push_back(r.loss);
    return std::make_pair(losses, snapshot(model));
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, ShortRunReducesLoss) {
  SpectralMaskModel<float> model(desk_model_config(), 7);
  std::vector<LossRecord> seen;
  const auto result = train(model, toy().train, quick_config(4, 20, 4), [&](const LossRecord& r) { seen.push_back(r); });
  ASSERT_EQ(result.history.size(), 80U);
  ASSERT_EQ(seen.size(), 80U);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += result.history[i].loss;
    last += result.history[70 + i].loss;
  }
  EXPECT_LT(last, 0.7 * first);
  for (const auto& r : result.history) EXPECT_TRUE(std::isfinite(r.loss) && r.loss >= 0.0);
  EXPECT_EQ(result.history.back().epoch, 3U);
  EXPECT_EQ(result.history.back().step, 79U);
}

TEST(Train, ToyBudgetReachesTenPercentOfInitialLoss) {
  SpectralMaskModel<float> model(desk_model_config(), 0);
  const auto result = train(model, toy().train, toy_train_config(0));
  ASSERT_EQ(result.history.size(), 1000U);
  double tail = 0.0;
  for (std::size_t i = 990; i < 1000; ++i) tail += result.history[i].loss / 10.0;
  EXPECT_LT(tail, 0.1 * result.history.front().loss);
}

TEST(Train, InvalidConfigAndFormatMismatch) {
  SpectralMaskModel<float> model(desk_model_config(), 8);
  auto c = quick_config(1, 1, 1);
  c.batch_size = 0;
  EXPECT_THROW(train(model, toy().train, c), ConfigError);
  c = quick_config(1, 1, 1);
  c.learning_rate = -1.0;
  EXPECT_THROW(train(model, toy().train, c), ConfigError);
  SpectralMaskModel<float> stereo(default_model_config(), 0);
  EXPECT_THROW(train(stereo, toy().train, quick_config(1, 1, 1)), ConfigError);
}

TEST(LossHistory, Format) {
  const std::vector<LossRecord> h{{0, 0, 1.5, 1e-3}, {1, 0, 0.25, 1e-3}};
  EXPECT_EQ(format_loss_history(h), "step\tepoch\tloss\tlearning_rate\n0\t0\t1.5\t0.001\n1\t0\t0.25\t0.001\n");
}

}  // namespace
}  // namespace vocsep
