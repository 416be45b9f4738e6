// Copyright 2026 The cyclevae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cyclevae/checkpoint.hpp"
#include "cyclevae/error.hpp"
#include "cyclevae/eval.hpp"
#include "cyclevae/features.hpp"

namespace cyclevae::cli {

nlohmann::ordered_json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  nlohmann::ordered_json j;
  j["mode"] = mode_name(t.mode);
  j["cycles"] = t.cycles;
  j["latent_dim"] = t.model.latent_dim;
  j["hidden"] = t.model.hidden_units;
  j["dropout"] = t.model.dropout_prob;
  j["batch_frames"] = t.batch_frames;
  j["lr"] = t.learning_rate;
  j["epochs"] = t.epochs;
  j["seed"] = t.seed;
  j["clip_norm"] = t.clip_norm;
  j["holdout"] = t.holdout_per_speaker;
  j["corpus"] = t.corpus_dir.string();
  j["stats"] = t.stats_path.string();
  j["out"] = t.out_dir.string();
  j["reference"] = t.reference_dir.string();
  j["resume"] = t.resume;
  j["stop_after"] = t.stop_after_epoch ? nlohmann::ordered_json(*t.stop_after_epoch) : nlohmann::ordered_json(nullptr);
  j["gen_seed"] = c.gen_seed;
  j["utts_per_speaker"] = c.utts_per_speaker;
  j["test_utts"] = c.test_utts;
  j["utt_frames"] = c.utt_frames;
  j["checkpoint"] = c.checkpoint.string();
  j["input"] = c.input.string();
  j["output"] = c.output.string();
  j["report"] = c.report.string();
  j["target_speaker"] = c.target_speaker;
  j["postfilter"] = c.postfilter;
  j["check_frames"] = c.check_frames;
  j["check_step"] = c.check_step;
  return j;
}

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void take_path(const nlohmann::json& j, const char* key, std::filesystem::path& dst) {
  if (j.contains(key)) dst = j.at(key).get<std::string>();
}

}  // namespace

void merge_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  const nlohmann::ordered_json known = to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  try {
    TrainConfig& t = c.train;
    if (j.contains("mode")) t.mode = parse_mode(j.at("mode").get<std::string>());
    take(j, "cycles", t.cycles);
    take(j, "latent_dim", t.model.latent_dim);
    take(j, "hidden", t.model.hidden_units);
    take(j, "dropout", t.model.dropout_prob);
    take(j, "batch_frames", t.batch_frames);
    take(j, "lr", t.learning_rate);
    take(j, "epochs", t.epochs);
    take(j, "seed", t.seed);
    take(j, "clip_norm", t.clip_norm);
    take(j, "holdout", t.holdout_per_speaker);
    take_path(j, "corpus", t.corpus_dir);
    take_path(j, "stats", t.stats_path);
    take_path(j, "out", t.out_dir);
    take_path(j, "reference", t.reference_dir);
    take(j, "resume", t.resume);
    if (j.contains("stop_after")) {
      const auto& v = j.at("stop_after");
      t.stop_after_epoch = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
    }
    take(j, "gen_seed", c.gen_seed);
    take(j, "utts_per_speaker", c.utts_per_speaker);
    take(j, "test_utts", c.test_utts);
    take(j, "utt_frames", c.utt_frames);
    take_path(j, "checkpoint", c.checkpoint);
    take_path(j, "input", c.input);
    take_path(j, "output", c.output);
    take_path(j, "report", c.report);
    take(j, "target_speaker", c.target_speaker);
    take(j, "postfilter", c.postfilter);
    take(j, "check_frames", c.check_frames);
    take(j, "check_step", c.check_step);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  merge_json(j, base);
  return base;
}

void cmd_gen(const RunConfig& c, const std::filesystem::path& out_dir) {
  if (c.utts_per_speaker == 0) throw ConfigError("gen: utts_per_speaker must be at least 1");
  if (out_dir.empty()) throw ConfigError("gen: an output directory is required");
  SyntheticConfig sc;
  sc.seed = c.gen_seed;
  sc.n_utts = 2 * c.utts_per_speaker + c.test_utts;
  sc.frames_per_utt = c.utt_frames;
  const SyntheticCorpus all = gen_synthetic_corpus(sc);
  const std::size_t n = c.utts_per_speaker;
  Corpus train;
  Corpus test;
  for (std::size_t i = 0; i < n; ++i) train.push_back(all.source[i]);
  for (std::size_t i = n; i < 2 * n; ++i) train.push_back(all.target[i]);
  for (std::size_t i = 2 * n; i < sc.n_utts; ++i) {
    test.push_back(all.source[i]);
    test.push_back(all.target[i]);
  }
  write_corpus(train, out_dir / "train");
  if (!test.empty()) write_corpus(test, out_dir / "test");
  spdlog::info("wrote {} training and {} test utterances under {}", train.size(), test.size(),
               out_dir.string());
}

void cmd_stats(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_path) {
  const Corpus corpus = read_corpus(corpus_dir);
  if (corpus.empty()) throw DataError("stats: no feature files in " + corpus_dir.string());
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::string>> by_dims;
  for (const Utterance& u : corpus) {
    by_dims[{u.features.excitation.cols(), u.features.spectra.cols()}].push_back(
        u.features.speaker_id + "_" + u.name);
  }
  if (by_dims.size() > 1) {
    std::ostringstream msg;
    msg << "stats: feature files disagree on dimensions:";
    for (const auto& [dims, files] : by_dims) {
      msg << "\n  " << dims.first << "+" << dims.second << ":";
      for (const auto& f : files) msg << ' ' << f;
    }
    throw DataError(msg.str());
  }
  const CorpusStats stats = compute_stats(corpus);
  write_stats(stats, out_path);
  spdlog::info("statistics of {} utterances, {} speakers written to {}", corpus.size(),
               stats.speakers.size(), out_path.string());
}

TrainResult cmd_train(const RunConfig& c) {
  const TrainConfig& t = c.train;
  if (t.corpus_dir.empty() || t.stats_path.empty() || t.out_dir.empty()) {
    throw ConfigError("train: corpus, stats and out are required");
  }
  t.validate();
  spdlog::info("run config: {}", to_json(c).dump());
  std::filesystem::create_directories(t.out_dir);
  std::ofstream(t.out_dir / "run_config.json") << to_json(c).dump(2) << '\n';
  return train(t);
}

void cmd_convert(const RunConfig& c) {
  if (c.checkpoint.empty() || c.input.empty() || c.output.empty() || c.target_speaker.empty()) {
    throw ConfigError("convert: checkpoint, input, output and target speaker are required");
  }
  const TrainedModel model = load_trained_model(c.checkpoint);
  const UtteranceFeatures in = read_features(c.input);
  if (!model.stats.speakers.contains(c.target_speaker)) {
    throw DataError("convert: target speaker '" + c.target_speaker + "' is not known to the checkpoint");
  }
  if (!model.stats.speakers.contains(in.speaker_id)) {
    throw DataError("convert: source speaker '" + in.speaker_id + "' is not known to the checkpoint");
  }
  const UtteranceFeatures out =
      convert_utterance(model.params, in, c.target_speaker, model.stats, c.postfilter);
  write_features(out, c.output);
}

nlohmann::ordered_json cmd_eval(const RunConfig& c) {
  if (c.checkpoint.empty() || c.train.corpus_dir.empty()) {
    throw ConfigError("eval: checkpoint and corpus are required");
  }
  const TrainedModel model = load_trained_model(c.checkpoint);
  const Corpus corpus = read_corpus(c.train.corpus_dir);
  EvalOptions options;
  options.postfilter = c.postfilter;
  const nlohmann::ordered_json report =
      report_to_json(evaluate_corpus(model.params, model.stats, corpus, options));
  if (!c.report.empty()) {
    std::ofstream out(c.report, std::ios::binary);
    out << report.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + c.report.string());
  }
  return report;
}

GradCheckReport cmd_gradcheck(const RunConfig& c) {
  const TrainConfig& t = c.train;
  if (t.cycles == 0) throw ConfigError("gradcheck: cycles must be at least 1");
  if (!(c.check_step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  return check_objective_gradients(t.model, c.check_frames, t.cycles, t.mode, t.seed, c.check_step);
}

namespace {

/// Gradient checks default to a tiny model.
RunConfig gradcheck_defaults() {
  RunConfig c;
  c.train.model.hidden_units = 8;
  c.train.model.latent_dim = 4;
  return c;
}

struct Flags {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::size_t> cycles, latent_dim, hidden, batch_frames, epochs, holdout, stop_after;
  std::optional<std::size_t> utts_per_speaker, test_utts, utt_frames, check_frames;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, dropout, clip_norm, check_step;
  std::optional<std::string> corpus, stats, out, reference, checkpoint, input, output, report, target;
  bool postfilter = false;
  bool resume = false;
};

void add_model_flags(CLI::App& app, Flags& f) {
  app.add_option("--latent-dim", f.latent_dim, "latent dimension (default 16, the reference optimum)");
  app.add_option("--hidden", f.hidden, "GRU hidden units (default 32; reference setup 1024)");
  app.add_option("--dropout", f.dropout, "dropout probability (default 0.5, as in the reference setup)");
  app.add_option("--mode", f.mode, "objective: vae or cyclevae (default cyclevae)")
      ->check(CLI::IsMember({"vae", "cyclevae"}));
  app.add_option("--cycles", f.cycles, "number of cycles N >= 1 (default 3, the reference optimum)");
  app.add_option("--seed", f.seed, "run seed (default 1)");
}

void apply(const Flags& f, RunConfig& c) {
  TrainConfig& t = c.train;
  if (f.mode) t.mode = parse_mode(*f.mode);
  if (f.cycles) t.cycles = *f.cycles;
  if (f.latent_dim) t.model.latent_dim = *f.latent_dim;
  if (f.hidden) t.model.hidden_units = *f.hidden;
  if (f.dropout) t.model.dropout_prob = *f.dropout;
  if (f.batch_frames) t.batch_frames = *f.batch_frames;
  if (f.lr) t.learning_rate = *f.lr;
  if (f.epochs) t.epochs = *f.epochs;
  if (f.seed) t.seed = *f.seed;
  if (f.clip_norm) t.clip_norm = *f.clip_norm;
  if (f.holdout) t.holdout_per_speaker = *f.holdout;
  if (f.stop_after) t.stop_after_epoch = *f.stop_after;
  if (f.resume) t.resume = true;
  if (f.corpus) t.corpus_dir = *f.corpus;
  if (f.stats) t.stats_path = *f.stats;
  if (f.out) t.out_dir = *f.out;
  if (f.reference) t.reference_dir = *f.reference;
  if (f.seed) c.gen_seed = *f.seed;
  if (f.utts_per_speaker) c.utts_per_speaker = *f.utts_per_speaker;
  if (f.test_utts) c.test_utts = *f.test_utts;
  if (f.utt_frames) c.utt_frames = *f.utt_frames;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.input) c.input = *f.input;
  if (f.output) c.output = *f.output;
  if (f.report) c.report = *f.report;
  if (f.target) c.target_speaker = *f.target;
  if (f.postfilter) c.postfilter = true;
  if (f.check_frames) c.check_frames = *f.check_frames;
  if (f.check_step) c.check_step = *f.check_step;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kShape:
    case ErrorKind::kFormat:
    case ErrorKind::kData:
    case ErrorKind::kIo: return kExitData;
  }
  return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CycleVAE spectral conversion: corpus tools, training, conversion and evaluation",
               "cyclevae"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off (default info)");

  Flags f;
  const auto add_config = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON file with flat run settings; flags override it");
  };

  CLI::App* gen = app.add_subcommand("gen", "write a seeded synthetic two-speaker corpus");
  add_config(gen);
  gen->add_option("--out", f.out, "output directory (train/ and test/ are created)");
  gen->add_option("--seed", f.seed, "corpus seed (default 1)");
  gen->add_option("--n-utts", f.utts_per_speaker, "training utterances per speaker (default 8)");
  gen->add_option("--test-utts", f.test_utts, "parallel test utterances per speaker (default 4)");
  gen->add_option("--frames", f.utt_frames, "frames per utterance, 5 ms shift (default 250)");

  CLI::App* stats = app.add_subcommand("stats", "compute normalization and speaker statistics");
  stats->add_option("--corpus", f.corpus, "directory of .feat files")->required();
  stats->add_option("--out", f.out, "statistics JSON to write")->required();

  CLI::App* tr = app.add_subcommand("train", "train a VAE or CycleVAE model");
  add_config(tr);
  add_model_flags(*tr, f);
  tr->add_option("--corpus", f.corpus, "training corpus directory");
  tr->add_option("--stats", f.stats, "statistics JSON from 'stats'");
  tr->add_option("--out", f.out, "run directory for checkpoints and metrics.jsonl");
  tr->add_option("--reference", f.reference, "parallel corpus for per-epoch conversion metrics");
  tr->add_option("--batch-frames", f.batch_frames, "frames per training segment (default 80, as in the reference setup)");
  tr->add_option("--lr", f.lr, "Adam learning rate (default 1e-4, as in the reference setup)");
  tr->add_option("--epochs", f.epochs, "training epochs (default 180, as in the reference charts)");
  tr->add_option("--clip-norm", f.clip_norm, "global gradient norm limit, 0 disables (default 10)");
  tr->add_option("--holdout", f.holdout, "validation utterances held out per speaker (default 1)");
  tr->add_option("--stop-after", f.stop_after, "stop after this epoch; continue later with --resume");
  tr->add_flag("--resume", f.resume, "continue from <out>/latest.ckpt");

  CLI::App* conv = app.add_subcommand("convert", "convert one feature file to another speaker");
  add_config(conv);
  conv->add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  conv->add_option("--input", f.input, "source .feat file");
  conv->add_option("--target-speaker", f.target, "speaker id to convert to");
  conv->add_option("--output", f.output, "converted .feat file to write");
  conv->add_flag("--postfilter", f.postfilter, "apply the GV postfilter to the converted spectra");

  CLI::App* ev = app.add_subcommand("eval", "distortion, conversion and latent similarity report");
  add_config(ev);
  ev->add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  ev->add_option("--corpus", f.corpus, "evaluation corpus; same-name utterances are parallel");
  ev->add_option("--report", f.report, "JSON report to write (also printed)");
  ev->add_flag("--postfilter", f.postfilter, "also report distortion after the GV postfilter");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  add_config(gc);
  add_model_flags(*gc, f);
  gc->add_option("--frames", f.check_frames, "frames in the random segment (default 3)");
  gc->add_option("--step", f.check_step, "central difference step (default 1e-5)");
  gc->footer("Defaults here are a tiny model: --hidden 8 --latent-dim 4.");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto level = spdlog::level::from_str(log_level);
  spdlog::set_level(level);

  try {
    RunConfig c = gc->parsed() ? gradcheck_defaults() : RunConfig{};
    if (!f.config.empty()) c = load_run_config(f.config, c);
    apply(f, c);

    if (gen->parsed()) {
      cmd_gen(c, c.train.out_dir);
    } else if (stats->parsed()) {
      cmd_stats(*f.corpus, *f.out);
    } else if (tr->parsed()) {
      const TrainResult r = cmd_train(c);
      out << "trained through epoch " << r.last_epoch << ", best epoch " << r.best_epoch << '\n';
    } else if (conv->parsed()) {
      cmd_convert(c);
    } else if (ev->parsed()) {
      out << cmd_eval(c).dump(2) << '\n';
    } else if (gc->parsed()) {
      spdlog::info("run config: {}", to_json(c).dump());
      const GradCheckReport r = cmd_gradcheck(c);
      const bool pass = r.max_relative_error < kGradCheckTolerance;
      out << (pass ? "PASS" : "FAIL") << " max relative error " << r.max_relative_error << " at "
          << r.worst_parameter << '[' << r.worst_index << "] (analytic " << r.worst_analytic
          << ", numeric " << r.worst_numeric << ") over " << r.entries_checked << " entries\n";
      return pass ? kExitOk : kExitDivergence;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace cyclevae::cli
