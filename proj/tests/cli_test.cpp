// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vocsep/cli.hpp"

namespace vocsep {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

// Arguments exclude the program name.
Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

AudioBuffer tone(std::size_t channels, int sr, double seconds, double amp) {
  const auto n = static_cast<std::size_t>(seconds * sr);
  AudioBuffer b(channels, n, sr);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      b.channel(c)[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * 997.0 * i / sr) +
                                           0.3 * amp * std::sin(2.0 * std::numbers::pi * 180.0 * i / sr));
    }
  }
  return b;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vocsep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string desk_weights(Stem stem, std::uint64_t seed = 0) {
    const auto p = path(to_string(stem) + std::to_string(seed) + ".bin");
    save_weights(SpectralMaskModel<float>(desk_model_config(stem), seed).to_weights(), p);
    return p;
  }

  fs::path dir_;
};

TEST_F(Cli, LoudnessCalibrationLine) {
  AudioBuffer b(2, 5 * 44100, 44100);
  for (std::size_t i = 0; i < b.num_frames(); ++i) {
    b.channel(0)[i] = static_cast<float>(std::sin(2.0 * std::numbers::pi * 997.0 * i / 44100.0));
  }
  write_wav(b, path("cal.wav"));
  const auto r = run({"loudness", "-i", path("cal.wav")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "integrated_lufs=-3.0\n");
}

TEST_F(Cli, SilenceExitsImmeasurable) {
  write_wav(AudioBuffer(1, 16000, 16000), path("silent.wav"));
  const auto r = run({"loudness", "-i", path("silent.wav")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  const auto s = run({"separate", "-i", path("silent.wav"), "-o", path("o.wav"), "-w", desk_weights(Stem::kVocal)});
  EXPECT_EQ(s.code, 3);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"loudness", "--bogus"}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"separate", "-i", "x.wav"}).code, 1);  // missing required options
}

TEST_F(Cli, HelpShowsDefaults) {
  const auto r = run({"separate", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1.4"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("-13"), std::string::npos) << r.out;
  const auto b = run({"bench", "--help"});
  EXPECT_NE(b.out.find("[50]"), std::string::npos) << b.out;
  EXPECT_NE(b.out.find("[40]"), std::string::npos) << b.out;
  EXPECT_NE(b.out.find("[180]"), std::string::npos) << b.out;
}

TEST_F(Cli, SeparateSingleStem) {
  write_wav(tone(1, 16000, 1.0, 0.3), path("in.wav"));
  const auto r = run({"separate", "-i", path("in.wav"), "-o", path("v.wav"), "-w", desk_weights(Stem::kVocal),
                      "--encoding", "pcm16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto y = read_wav(path("v.wav"));
  EXPECT_EQ(y.num_frames(), 16000U);
  EXPECT_EQ(y.sample_rate(), 16000);
  // Asking for the stem no weight file provides.
  EXPECT_EQ(run({"separate", "-i", path("in.wav"), "-o", path("a.wav"), "-w", desk_weights(Stem::kVocal),
                 "--target", "accompaniment"})
                .code,
            1);
}

TEST_F(Cli, SeparateBothWritesTwoFiles) {
  write_wav(tone(1, 16000, 1.0, 0.3), path("in.wav"));
  const auto v = desk_weights(Stem::kVocal, 1), a = desk_weights(Stem::kAccompaniment, 2);
  for (const bool wiener : {false, true}) {
    std::vector<std::string> args{"separate", "-i", path("in.wav"), "-o", path("song.wav"), "-w", v, "-w", a,
                                  "--target", "both"};
    if (wiener) args.push_back("--wiener");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("song.vocal.wav")));
    EXPECT_TRUE(fs::exists(path("song.accomp.wav")));
    fs::remove(path("song.vocal.wav"));
    fs::remove(path("song.accomp.wav"));
  }
  EXPECT_EQ(run({"separate", "-i", path("in.wav"), "-o", path("x.wav"), "-w", v, "--wiener"}).code, 1);
}

TEST_F(Cli, IoAndWeightErrors) {
  EXPECT_EQ(run({"loudness", "-i", path("missing.wav")}).code, 2);
  std::ofstream(path("junk.bin")) << "not weights";
  write_wav(tone(1, 16000, 1.0, 0.3), path("in.wav"));
  EXPECT_EQ(run({"separate", "-i", path("in.wav"), "-o", path("o.wav"), "-w", path("junk.bin")}).code, 4);
  EXPECT_EQ(run({"inspect-weights", "-w", path("junk.bin")}).code, 4);
  // Format mismatch between the model and the input.
  write_wav(tone(2, 44100, 1.0, 0.3), path("stereo.wav"));
  EXPECT_EQ(run({"separate", "-i", path("stereo.wav"), "-o", path("o.wav"), "-w", desk_weights(Stem::kVocal)}).code,
            1);
}

TEST_F(Cli, InspectWeights) {
  const auto r = run({"inspect-weights", "-w", desk_weights(Stem::kAccompaniment)});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("format_version=1"), std::string::npos);
  EXPECT_NE(r.out.find("\"target\":\"accompaniment\""), std::string::npos);
  EXPECT_NE(r.out.find("trainable_parameters=" + std::to_string(parameter_count(desk_model_config()))),
            std::string::npos);
  EXPECT_NE(r.out.find("output.scale [257]"), std::string::npos);
}

TEST_F(Cli, TrainToyEvalAndSweep) {
  const auto w = path("toy.bin");
  const auto t = run({"train-toy", "-o", w, "--epochs", "1", "--steps-per-epoch", "2", "--batch-size", "1",
                      "--history", path("h.tsv")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("steps=2"), std::string::npos);
  std::ifstream h(path("h.tsv"));
  std::string header;
  std::getline(h, header);
  EXPECT_EQ(header, "step\tepoch\tloss\tlearning_rate");

  const auto e = run({"eval", "-w", w});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("toy0 sdr_db="), std::string::npos);
  EXPECT_NE(e.out.find("mean sdr_db="), std::string::npos);

  const auto s = run({"sweep", "-w", w, "--levels", "-20,-40"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("level_lufs\tmean_sdr_db\ttoy0"), std::string::npos);
  EXPECT_NE(s.out.find("\n-40.00\t"), std::string::npos);
  EXPECT_EQ(run({"sweep", "-w", w, "--levels", "-20,abc"}).code, 1);
  EXPECT_EQ(run({"eval", "-w", w, "--eval-dir", path("nowhere")}).code, 2);
}

TEST_F(Cli, BenchWithWeights) {
  const auto w = desk_weights(Stem::kVocal);
  const auto r = run({"bench", "-w", w, "--duration", "0.5", "--runs", "3", "--keep", "2", "--report",
                      path("report.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("runs_total=3"), std::string::npos);
  EXPECT_NE(r.out.find("model_size_bytes=" + std::to_string(fs::file_size(w))), std::string::npos);
  EXPECT_TRUE(fs::exists(path("report.txt")));
  EXPECT_EQ(run({"bench", "-w", w, "--runs", "2", "--keep", "3"}).code, 1);
}

TEST_F(Cli, ProcessExitCodes) {
  write_wav(AudioBuffer(1, 16000, 16000), path("silent.wav"));
  const std::string bin = VOCSEP_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " loudness -i " + path("silent.wav")), 3);
  EXPECT_EQ(status(bin + " --version-of-nothing"), 1);
  EXPECT_EQ(status(bin + " --help"), 0);
}

}  // namespace
}  // namespace vocsep
