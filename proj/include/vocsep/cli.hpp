// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line front end. run_cli() is the whole program minus process
// plumbing, so tests can drive it with in-memory streams.
//
// Exit codes:
//   0  success
//   1  usage error or invalid argument
//   2  I/O or WAV error
//   3  integrated loudness immeasurable (input below the gate)
//   4  weight file rejected
//   5  any other failure

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vocsep/audio_io.hpp"
#include "vocsep/bench.hpp"
#include "vocsep/errors.hpp"
#include "vocsep/loudness.hpp"
#include "vocsep/metrics.hpp"
#include "vocsep/model.hpp"
#include "vocsep/separation.hpp"
#include "vocsep/training.hpp"
#include "vocsep/weights.hpp"

namespace vocsep::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kImmeasurable = 3,
  kWeights = 4,
  kOther = 5,
};

using Model = SpectralMaskModel<float>;

namespace detail {

inline std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      levels.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--levels: cannot parse '" + item + "' as a number");
    }
  }
  if (levels.empty()) throw ConfigError("--levels: no levels given");
  return levels;
}

inline WavEncoding parse_encoding(const std::string& s) {
  if (s == "float32") return WavEncoding::kFloat32;
  if (s == "pcm16") return WavEncoding::kPcm16;
  if (s == "pcm24") return WavEncoding::kPcm24;
  throw ConfigError("unknown encoding '" + s + "'");
}

inline std::filesystem::path stem_path(const std::filesystem::path& out, const char* suffix) {
  auto base = out;
  if (base.extension() == ".wav") base.replace_extension();
  return base.string() + suffix;
}

// Picks the model for `stem` among the loaded weight files.
inline const Model* find_model(const std::vector<Model>& models, Stem stem) {
  for (const auto& m : models) {
    if (m.config().target == stem) return &m;
  }
  return nullptr;
}

inline std::string mean_line(const BssScore& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "sdr_db=" << s.sdr << " sir_db=" << s.sir;
  return os.str();
}

}  // namespace detail

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vocal / accompaniment separation with loudness normalization", "vocsep"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // separate
  std::string sep_in, sep_out, sep_target = "vocal", sep_encoding = "float32";
  std::vector<std::string> sep_weights;
  double sep_alpha = kDefaultWarpAlpha, sep_lufs = kDefaultTargetLufs;
  bool sep_wiener = false;
  auto* separate_cmd = app.add_subcommand("separate", "Separate a WAV file into stems");
  separate_cmd->add_option("-i,--input", sep_in, "Input WAV file")->required();
  separate_cmd->add_option("-o,--output", sep_out,
                           "Output WAV file; with --target both, the base for .vocal.wav/.accomp.wav")
      ->required();
  separate_cmd->add_option("-w,--weights", sep_weights, "Weight file(s); the stem is read from each file")
      ->required();
  separate_cmd->add_option("--target", sep_target, "vocal, accompaniment or both");
  separate_cmd->add_option("--alpha", sep_alpha, "Mask warping exponent (1 disables warping)");
  separate_cmd->add_option("--target-lufs", sep_lufs, "Loudness the model input is normalized to");
  separate_cmd->add_flag("--wiener", sep_wiener, "Combine both stems with ratio masks (needs --target both)");
  separate_cmd->add_option("--encoding", sep_encoding, "Output encoding: float32, pcm16 or pcm24");

  // loudness
  std::string loud_in;
  auto* loudness_cmd = app.add_subcommand("loudness", "Print the integrated loudness of a WAV file");
  loudness_cmd->add_option("-i,--input", loud_in, "Input WAV file")->required();

  // train-toy
  std::string train_out, train_history, train_target = "vocal";
  TrainConfig train_cfg = toy_train_config();
  auto* train_cmd = app.add_subcommand("train-toy", "Train a desk-scale model on the synthetic toy task");
  train_cmd->add_option("-o,--output", train_out, "Weight file to write")->required();
  train_cmd->add_option("--target", train_target, "Stem to train: vocal or accompaniment");
  train_cmd->add_option("--epochs", train_cfg.epochs, "Epochs");
  train_cmd->add_option("--steps-per-epoch", train_cfg.steps_per_epoch, "Optimizer steps per epoch");
  train_cmd->add_option("--batch-size", train_cfg.batch_size, "Segments per step");
  train_cmd->add_option("--lr", train_cfg.learning_rate, "Initial learning rate");
  train_cmd->add_option("--weight-decay", train_cfg.weight_decay, "L2 weight decay");
  train_cmd->add_option("--train-lufs", train_cfg.train_target_lufs, "Loudness mixtures are normalized to");
  train_cmd->add_option("--seed", train_cfg.seed, "Random seed");
  train_cmd->add_option("--history", train_history, "Optional loss history file (tab separated)");

  // eval
  std::string eval_weights, eval_dir;
  double eval_alpha = kDefaultWarpAlpha, eval_lufs = kDefaultTargetLufs;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model (SDR/SIR) on an eval dir or the toy eval set");
  eval_cmd->add_option("-w,--weights", eval_weights, "Weight file")->required();
  eval_cmd->add_option("--eval-dir", eval_dir, "Directory of <name>.mix/.vocal/.accomp.wav (default: toy set)");
  eval_cmd->add_option("--alpha", eval_alpha, "Mask warping exponent");
  eval_cmd->add_option("--target-lufs", eval_lufs, "Inference loudness target");
  eval_cmd->add_option("--seed", eval_seed, "Toy dataset seed when no --eval-dir is given");

  // sweep
  std::string sweep_weights, sweep_dir, sweep_levels = "-15,-30,-45";
  double sweep_alpha = kDefaultWarpAlpha, sweep_lufs = kDefaultTargetLufs;
  std::uint64_t sweep_seed = 0;
  bool sweep_bypass = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "SDR of the model's stem at several input loudness levels");
  sweep_cmd->add_option("-w,--weights", sweep_weights, "Weight file")->required();
  sweep_cmd->add_option("--eval-dir", sweep_dir, "Directory of <name>.mix/.vocal/.accomp.wav (default: toy set)");
  sweep_cmd->add_option("--levels", sweep_levels, "Comma separated input levels in LUFS");
  sweep_cmd->add_option("--alpha", sweep_alpha, "Mask warping exponent");
  sweep_cmd->add_option("--target-lufs", sweep_lufs, "Inference loudness target");
  sweep_cmd->add_flag("--bypass-normalization", sweep_bypass, "Ablation: feed the model unnormalized input");
  sweep_cmd->add_option("--seed", sweep_seed, "Toy dataset seed when no --eval-dir is given");

  // bench
  std::string bench_weights, bench_report;
  BenchOptions bench_opts;
  auto* bench_cmd = app.add_subcommand("bench", "Time end-to-end separation");
  bench_cmd->add_option("-w,--weights", bench_weights, "Weight file (default: untrained full-size model)");
  bench_cmd->add_option("--duration", bench_opts.duration_seconds, "Input duration in seconds");
  bench_cmd->add_option("--runs", bench_opts.runs, "Timed runs");
  bench_cmd->add_option("--keep", bench_opts.keep, "Fastest runs averaged");
  bench_cmd->add_option("--seed", bench_opts.seed, "Seed for the input signal and untrained weights");
  bench_cmd->add_option("--report", bench_report, "Optional file receiving the report");

  // inspect-weights
  std::string inspect_weights;
  auto* inspect_cmd = app.add_subcommand("inspect-weights", "Validate a weight file and list its tensors");
  inspect_cmd->add_option("-w,--weights", inspect_weights, "Weight file")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (separate_cmd->parsed()) {
      const auto target = separation_target_from_string(sep_target);
      if (sep_wiener && target != SeparationTarget::kBoth) {
        throw ConfigError("--wiener combines two stems and needs --target both");
      }
      std::vector<Model> models;
      for (const auto& w : sep_weights) models.emplace_back(load_weights(w));
      const auto input = read_wav(sep_in);
      const auto encoding = detail::parse_encoding(sep_encoding);
      const auto& first = models.front().config();
      SeparationConfig cfg;
      cfg.alpha = sep_alpha;
      cfg.target_lufs = sep_lufs;
      cfg.wiener = sep_wiener;
      cfg.stft = first.stft;
      cfg.target = target;
      if (target == SeparationTarget::kBoth) {
        const Model* v = detail::find_model(models, Stem::kVocal);
        const Model* a = detail::find_model(models, Stem::kAccompaniment);
        if (v == nullptr || a == nullptr) {
          throw ConfigError("--target both needs one vocal and one accompaniment weight file");
        }
        const auto stems = separate_stems(input, *v, *a, cfg);
        const auto vp = detail::stem_path(sep_out, ".vocal.wav");
        const auto ap = detail::stem_path(sep_out, ".accomp.wav");
        write_wav(stems.vocal, vp, encoding);
        write_wav(stems.accompaniment, ap, encoding);
        out << "wrote " << vp.string() << '\n' << "wrote " << ap.string() << '\n';
      } else {
        const Stem stem = target == SeparationTarget::kVocal ? Stem::kVocal : Stem::kAccompaniment;
        const Model* m = detail::find_model(models, stem);
        if (m == nullptr) throw ConfigError("no weight file for the " + to_string(stem) + " stem was given");
        write_wav(separate(input, *m, cfg), sep_out, encoding);
        out << "wrote " << sep_out << '\n';
      }
    } else if (loudness_cmd->parsed()) {
      const auto m = integrated_loudness(read_wav(loud_in));
      out << "integrated_lufs=" << std::fixed << std::setprecision(1) << m.lufs() << '\n';
    } else if (train_cmd->parsed()) {
      Model model(desk_model_config(stem_from_string(train_target)), train_cfg.seed);
      const auto data = make_toy_dataset(train_cfg.seed);
      const auto result = train(model, data.train, train_cfg);
      save_weights(result.weights, train_out);
      if (!train_history.empty()) write_loss_history(result.history, train_history);
      out << std::setprecision(6) << "initial_loss=" << result.history.front().loss
          << " final_loss=" << result.history.back().loss << " steps=" << result.history.size() << '\n'
          << "wrote " << train_out << '\n';
    } else if (eval_cmd->parsed() || sweep_cmd->parsed()) {
      const bool sweep = sweep_cmd->parsed();
      const Model model(load_weights(sweep ? sweep_weights : eval_weights));
      const std::string& dir = sweep ? sweep_dir : eval_dir;
      const auto items = dir.empty() ? make_toy_dataset(sweep ? sweep_seed : eval_seed).eval : load_eval_dir(dir);
      auto cfg = toy_separation_config(model.config());
      cfg.alpha = sweep ? sweep_alpha : eval_alpha;
      cfg.target_lufs = sweep ? sweep_lufs : eval_lufs;
      if (sweep) {
        PipelineHooks hooks;
        hooks.bypass_loudness_normalization = sweep_bypass;
        out << "# stem=" << to_string(model.config().target)
            << " scores: whole-signal scalar-projection SDR (not windowed museval)\n";
        out << loudness_sweep_eval(model, items, detail::parse_levels(sweep_levels), cfg, hooks).format();
      } else {
        for (const auto& item : items) {
          out << item.name << ' ' << detail::mean_line(evaluate_model(model, std::vector<EvalItem>{item}, cfg))
              << '\n';
        }
        out << "mean " << detail::mean_line(evaluate_model(model, items, cfg)) << '\n';
      }
    } else if (bench_cmd->parsed()) {
      std::optional<Model> model;
      if (bench_weights.empty()) {
        model.emplace(default_model_config(), bench_opts.seed);
      } else {
        model.emplace(load_weights(bench_weights));
      }
      auto report = bench_separation(*model, toy_separation_config(model->config()), bench_opts);
      if (!bench_weights.empty()) report.model_size_bytes = model_size(bench_weights);
      out << report.format();
      if (!bench_report.empty()) {
        std::ofstream f(bench_report, std::ios::trunc);
        if (!f) throw IoError("cannot open '" + bench_report + "' for writing");
        f << report.format();
      }
    } else if (inspect_cmd->parsed()) {
      const auto w = load_weights(inspect_weights);
      out << "format_version=" << w.format_version << '\n'
          << "config=" << nlohmann::json(w.config).dump() << '\n'
          << "trainable_parameters=" << parameter_count(w.config) << '\n'
          << "file_size_bytes=" << model_size(inspect_weights) << '\n';
      for (const auto& [name, t] : w.tensors) out << name << ' ' << ag::shape_str(t.shape) << '\n';
    }
  } catch (const ImmeasurableLoudnessError& e) {
    err << "error: " << e.what() << '\n';
    return kImmeasurable;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const WeightsError& e) {
    err << "error: " << e.what() << '\n';
    return kWeights;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}

}  // namespace vocsep::cli
