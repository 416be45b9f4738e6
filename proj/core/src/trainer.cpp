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

#include "cyclevae/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cyclevae/error.hpp"
#include "cyclevae/eval.hpp"

namespace cyclevae {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (batch_frames == 0) throw ConfigError("batch_frames must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (cycles == 0) {
    throw ConfigError("cycles must be at least 1; select the plain VAE with mode=vae instead");
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (resume && out_dir.empty()) throw ConfigError("resume requires an output directory");
  model.validate();
}

nlohmann::ordered_json hyperparameters_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(c.mode);
  j["learning_rate"] = c.learning_rate;
  j["batch_frames"] = c.batch_frames;
  j["epochs"] = c.epochs;
  j["cycles"] = c.cycles;
  j["seed"] = c.seed;
  j["clip_norm"] = c.clip_norm;
  j["holdout_per_speaker"] = c.holdout_per_speaker;
  j["terms"] = {c.terms.kl_real, c.terms.kl_converted, c.terms.loglik_rec, c.terms.loglik_cyc};
  nlohmann::json model = c.model;
  j["model"] = model;
  return j;
}

AdamState AdamState::zeros(const ParamMap& params) {
  AdamState s;
  for (const auto& [name, t] : params) {
    s.first_moment.emplace(name, Tensor(t.shape()));
    s.second_moment.emplace(name, Tensor(t.shape()));
  }
  return s;
}

Tensor glorot_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in + fan_out == 0) throw ConfigError("glorot_init: fans must not both be zero");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

ModelParams init_model(const ModelConfig& config, const CorpusStats& stats, Rng& rng) {
  config.validate();
  const std::size_t dim = config.feature_dim();
  if (stats.feat_mean.size() != dim || stats.feat_std.size() != dim) {
    throw DataError("statistics cover " + std::to_string(stats.feat_mean.size()) +
                    " feature dims, the model expects " + std::to_string(dim));
  }
  const auto slice = [](const std::vector<double>& v, std::size_t from) {
    return Tensor::vector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(from), v.end()));
  };
  ModelParams params = ModelParams::zeros(config, slice(stats.feat_mean, 0), slice(stats.feat_std, 0),
                                          slice(stats.feat_mean, config.excitation_dim),
                                          slice(stats.feat_std, config.excitation_dim));
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    if (spec.is_bias) continue;
    params.weights.at(spec.name) = glorot_init(spec.shape, spec.fan_in, spec.fan_out, rng);
  }
  return params;
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double learning_rate) {
  for (const auto& [name, p] : params) {
    const auto g = grads.find(name);
    if (g == grads.end()) throw ConfigError("adam_step: no gradient for '" + name + "'");
    if (!(g->second.shape() == p.shape())) {
      throw ShapeError("adam_step: gradient of '" + name + "' has shape " + g->second.shape().str() +
                       ", parameter has " + p.shape().str());
    }
    if (!g->second.all_finite()) throw DivergenceError("non-finite gradient for parameter '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto m_it = state.first_moment.try_emplace(name, Tensor(p.shape())).first;
    auto v_it = state.second_moment.try_emplace(name, Tensor(p.shape())).first;
    double* m = m_it->second.raw();
    double* v = v_it->second.raw();
    double* w = p.raw();
    const double* gd = g.raw();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gd[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_global_norm(ParamMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.data()) x *= scale;
  }
  return norm;
}

std::vector<Segment> make_segments(const Corpus& corpus, std::size_t batch_frames) {
  if (corpus.empty()) throw DataError("cannot segment an empty corpus");
  if (batch_frames == 0) throw ConfigError("batch_frames must be at least 1");
  std::vector<Segment> segments;
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    const std::size_t frames = corpus[u].features.frames();
    for (std::size_t b = 0; b < frames; b += batch_frames) {
      segments.push_back({u, b, std::min(frames, b + batch_frames)});
    }
  }
  return segments;
}

std::vector<std::size_t> shuffled_order(std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

nlohmann::ordered_json metrics_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["kl_real"] = m.kl_real;
  j["kl_converted"] = m.kl_converted;
  j["loglik_rec"] = m.loglik_rec;
  j["loglik_cyc"] = m.loglik_cyc;
  const auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("val_loss", m.val_loss);
  put("rec_mcd", m.rec_mcd);
  put("cyc_mcd", m.cyc_mcd);
  put("init_mcd", m.init_mcd);
  put("cv_mcd", m.cv_mcd);
  put("latent_cosine", m.latent_cosine);
  return j;
}

TrainData load_train_data(const TrainConfig& config) {
  TrainData data;
  data.corpus = read_corpus(config.corpus_dir);
  data.stats = read_stats(config.stats_path);
  if (!config.reference_dir.empty()) data.reference = read_corpus(config.reference_dir);
  return data;
}

double validation_loss(const ModelParams& params, const Corpus& utts, const CorpusStats& stats,
                       std::size_t cycles, TrainMode mode, const TermMask& terms) {
  if (utts.empty()) throw DataError("validation set is empty");
  const std::size_t n = mode == TrainMode::kVae ? 1 : cycles;
  double total = 0.0;
  std::size_t frames = 0;
  for (const Utterance& u : utts) {
    const SegmentInput seg = make_segment_input(u.features, stats, params.config.speaker_code_dim);
    Graph g;
    ModelGraph model(g, params);
    const CycleNoise noise = CycleNoise::deterministic(params.config, seg.frames(), n);
    const auto states = initial_pass_states(params.config, n);
    const CycleGraph cg = build_cycle_graph(model, seg, n, mode, noise, states, terms);
    const LossBreakdown b = read_breakdown(g, cg, seg.frames());
    total -= b.lower_bound;
    frames += seg.frames();
  }
  return total / static_cast<double>(frames);
}

TrainedModel load_trained_model(const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  TrainedModel m;
  m.params = model_from_checkpoint(ckpt);
  const std::string* stats = ckpt.find_blob("corpus_stats");
  if (!stats) {
    throw FormatError(FormatError::Code::kCorrupt,
                      checkpoint.string() + ": checkpoint carries no corpus statistics");
  }
  try {
    m.stats = nlohmann::json::parse(*stats).get<CorpusStats>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Code::kCorrupt,
                      checkpoint.string() + ": bad corpus statistics blob: " + e.what());
  }
  return m;
}

namespace {

constexpr const char* kMomentPrefix1 = "adam.m.";
constexpr const char* kMomentPrefix2 = "adam.v.";

struct RunState {
  ModelParams params;
  AdamState adam;
  Rng rng;
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
  double best_value = std::numeric_limits<double>::infinity();
};

Checkpoint state_to_checkpoint(const RunState& s, const TrainConfig& config, const CorpusStats& stats) {
  Checkpoint ckpt = model_to_checkpoint(s.params);
  for (const auto& [name, t] : s.adam.first_moment) ckpt.tensors.emplace_back(kMomentPrefix1 + name, t);
  for (const auto& [name, t] : s.adam.second_moment) ckpt.tensors.emplace_back(kMomentPrefix2 + name, t);
  nlohmann::json stats_json = stats;
  ckpt.set_blob("corpus_stats", stats_json.dump());
  ckpt.set_blob("hyperparameters", hyperparameters_json(config).dump());
  nlohmann::ordered_json progress;
  progress["epoch"] = s.epoch;
  progress["adam_step"] = s.adam.step;
  progress["best_epoch"] = s.best_epoch;
  progress["best_value"] = s.best_value;
  ckpt.set_blob("progress", progress.dump());
  ckpt.set_blob("rng_state", s.rng.save_state());
  return ckpt;
}

RunState state_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& config) {
  const std::string* hyper = ckpt.find_blob("hyperparameters");
  const std::string* progress = ckpt.find_blob("progress");
  const std::string* rng = ckpt.find_blob("rng_state");
  if (!hyper || !progress || !rng) {
    throw FormatError(FormatError::Code::kCorrupt, "checkpoint has no training state to resume from");
  }
  if (*hyper != hyperparameters_json(config).dump()) {
    throw ConfigError("cannot resume: checkpoint hyperparameters " + *hyper +
                      " differ from the requested " + hyperparameters_json(config).dump());
  }
  RunState s;
  s.params = model_from_checkpoint(ckpt);
  s.adam = AdamState::zeros(s.params.weights);
  for (auto& [name, t] : s.adam.first_moment) {
    const Tensor* m = ckpt.find_tensor(kMomentPrefix1 + name);
    const Tensor* v = ckpt.find_tensor(kMomentPrefix2 + name);
    if (!m || !v || !(m->shape() == t.shape()) || !(v->shape() == t.shape())) {
      throw FormatError(FormatError::Code::kCorrupt, "checkpoint optimizer moments missing for " + name);
    }
    t = *m;
    s.adam.second_moment.at(name) = *v;
  }
  const auto p = nlohmann::json::parse(*progress);
  s.epoch = p.at("epoch").get<std::size_t>();
  s.adam.step = p.at("adam_step").get<std::uint64_t>();
  s.best_epoch = p.at("best_epoch").get<std::size_t>();
  s.best_value = p.at("best_value").get<double>();
  s.rng.load_state(*rng);
  return s;
}

void split_holdout(const Corpus& corpus, const CorpusStats& stats, std::size_t holdout, Corpus& train,
                   Corpus& validation) {
  for (const std::string& id : stats.speaker_ids()) {
    std::vector<const Utterance*> own;
    for (const Utterance& u : corpus)
      if (u.features.speaker_id == id) own.push_back(&u);
    if (own.size() <= holdout) {
      throw DataError("speaker '" + id + "' has " + std::to_string(own.size()) +
                      " utterance(s), not enough to hold out " + std::to_string(holdout));
    }
    for (std::size_t i = 0; i < own.size(); ++i) {
      (i + holdout < own.size() ? train : validation).push_back(*own[i]);
    }
  }
  for (const Utterance& u : corpus) {
    if (!stats.speakers.contains(u.features.speaker_id)) {
      throw DataError("utterance '" + u.name + "' has speaker '" + u.features.speaker_id +
                      "' missing from the statistics");
    }
  }
}

void check_corpus_dims(const Corpus& corpus, const ModelConfig& model) {
  for (const Utterance& u : corpus) {
    if (u.features.excitation.cols() != model.excitation_dim ||
        u.features.spectra.cols() != model.spectral_dim) {
      throw DataError("utterance '" + u.name + "' has " + std::to_string(u.features.excitation.cols()) +
                      "+" + std::to_string(u.features.spectra.cols()) + " dims, the model expects " +
                      std::to_string(model.excitation_dim) + "+" + std::to_string(model.spectral_dim));
    }
  }
}

SegmentInput slice_segment(const SegmentInput& full, const Segment& s) {
  SegmentInput seg;
  seg.excitation = full.excitation.row_range(s.begin, s.end);
  seg.spectra = full.spectra.row_range(s.begin, s.end);
  seg.converted_excitation = full.converted_excitation.row_range(s.begin, s.end);
  seg.code_x = full.code_x;
  seg.code_y = full.code_y;
  return seg;
}

void rewrite_metrics_prefix(const std::filesystem::path& path, std::size_t keep_lines) {
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    std::string line;
    while (lines.size() < keep_lines && std::getline(in, line)) lines.push_back(line);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("cannot rewrite " + path.string());
}

}  // namespace

TrainResult train(const TrainConfig& config) { return train(config, load_train_data(config)); }

TrainResult train(const TrainConfig& config, const TrainData& data) {
  config.validate();
  const ModelConfig& mc = config.model;
  if (data.stats.speakers.size() != 2) {
    throw DataError("training needs statistics for exactly 2 speakers, got " +
                    std::to_string(data.stats.speakers.size()));
  }
  check_corpus_dims(data.corpus, mc);
  check_corpus_dims(data.reference, mc);

  Corpus train_set;
  Corpus validation;
  split_holdout(data.corpus, data.stats, config.holdout_per_speaker, train_set, validation);
  const std::vector<Segment> segments = make_segments(train_set, config.batch_frames);
  std::vector<std::vector<Segment>> by_utt(train_set.size());
  for (const Segment& s : segments) by_utt[s.utterance].push_back(s);
  std::vector<SegmentInput> inputs;
  for (const Utterance& u : train_set) {
    inputs.push_back(make_segment_input(u.features, data.stats, mc.speaker_code_dim));
  }

  const std::size_t cycles = config.effective_cycles();
  const bool write = !config.out_dir.empty();
  const auto latest_path = config.out_dir / kLatestCheckpoint;
  const auto best_path = config.out_dir / kBestCheckpoint;
  const auto metrics_path = config.out_dir / kMetricsFile;
  if (write) std::filesystem::create_directories(config.out_dir);

  RunState run;
  if (config.resume) {
    run = state_from_checkpoint(read_checkpoint(latest_path), config);
    if (!(run.params.config == mc)) throw ConfigError("cannot resume: model configuration differs");
    rewrite_metrics_prefix(metrics_path, run.epoch);
    spdlog::info("resuming after epoch {} from {}", run.epoch, latest_path.string());
  } else {
    run.rng = Rng(config.seed);
    run.params = init_model(mc, data.stats, run.rng);
    run.adam = AdamState::zeros(run.params.weights);
    if (write) rewrite_metrics_prefix(metrics_path, 0);
  }

  const double threshold = default_speech_threshold(data.stats, mc.excitation_dim);
  TrainResult result;
  result.last_epoch = run.epoch;
  result.best_epoch = run.best_epoch;
  for (std::size_t epoch = run.epoch + 1; epoch <= config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    double neg_bound = 0.0;
    std::size_t frames = 0;
    std::size_t step_in_epoch = 0;
    try {
      for (std::size_t u : shuffled_order(train_set.size(), run.rng)) {
        std::vector<NetState> states = initial_pass_states(mc, cycles);
        for (const Segment& s : by_utt[u]) {
          ++step_in_epoch;
          const SegmentInput seg = slice_segment(inputs[u], s);
          const CycleNoise noise = CycleNoise::draw(mc, seg.frames(), cycles, run.rng);
          Graph g;
          const VarMap vars = bind_parameters(g, run.params.weights);
          ModelGraph model(g, run.params, vars);
          const CycleGraph cg = build_cycle_graph(model, seg, cycles, config.mode, noise, states, config.terms);
          const LossBreakdown b = read_breakdown(g, cg, seg.frames());
          g.backward(cg.objective);
          ParamMap grads;
          for (const auto& [name, v] : vars) grads.emplace(name, g.grad(v));
          clip_global_norm(grads, config.clip_norm);
          adam_step(run.params.weights, grads, run.adam, config.learning_rate);
          states = read_pass_states(g, cg, states);

          neg_bound -= b.lower_bound;
          frames += seg.frames();
          for (const CycleTerms& t : b.cycles) {
            m.kl_real += t.kl_real;
            m.kl_converted += t.kl_converted;
            m.loglik_rec += t.loglik_rec;
            m.loglik_cyc += t.loglik_cyc;
          }
        }
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step_in_epoch) + ": " + e.what() +
                            (write ? "; last good checkpoint kept at " + latest_path.string() : ""));
    }
    const double denom = static_cast<double>(frames);
    m.train_loss = neg_bound / denom;
    m.kl_real /= denom;
    m.kl_converted /= denom;
    m.loglik_rec /= denom;
    m.loglik_cyc /= denom;

    if (!validation.empty()) {
      m.val_loss = validation_loss(run.params, validation, data.stats, config.cycles, config.mode, config.terms);
      double rec = 0.0;
      double cyc = 0.0;
      for (const Utterance& u : validation) {
        UtteranceFeatures r = u.features;
        r.spectra = reconstruct_spectra(run.params, u.features, data.stats);
        rec += speech_mcd(u.features, r, threshold, mc.spectral_dim).mcd_db;
        r.spectra = cyclic_spectra(run.params, u.features, data.stats);
        cyc += speech_mcd(u.features, r, threshold, mc.spectral_dim).mcd_db;
      }
      m.rec_mcd = rec / static_cast<double>(validation.size());
      m.cyc_mcd = cyc / static_cast<double>(validation.size());
    }
    if (!data.reference.empty()) {
      EvalOptions options;
      options.postfilter = false;
      const EvalReport report = evaluate_corpus(run.params, data.stats, data.reference, options);
      m.init_mcd = report.mean_init_mcd();
      m.cv_mcd = report.mean_cv_mcd();
      m.latent_cosine = report.mean_latent_cosine();
    }

    const double selection = m.val_loss.value_or(m.train_loss);
    if (!std::isfinite(selection)) {
      throw DivergenceError("non-finite validation loss in epoch " + std::to_string(epoch));
    }
    run.epoch = epoch;
    const bool improved = selection < run.best_value;
    if (improved) {
      run.best_value = selection;
      run.best_epoch = epoch;
    }
    if (write) {
      {
        std::ofstream out(metrics_path, std::ios::binary | std::ios::app);
        out << metrics_json(m).dump() << '\n';
        if (!out) throw IoError("cannot append to " + metrics_path.string());
      }
      const Checkpoint ckpt = state_to_checkpoint(run, config, data.stats);
      if (improved) write_checkpoint(best_path, ckpt);
      write_checkpoint(latest_path, ckpt);
    }
    spdlog::info("epoch {}/{} loss {:.4f}{}{}", epoch, config.epochs, m.train_loss,
                 m.val_loss ? fmt::format(" val {:.4f}", *m.val_loss) : std::string(),
                 m.cv_mcd ? fmt::format(" cv_mcd {:.3f} dB", *m.cv_mcd) : std::string());
    result.history.push_back(m);
    result.last_epoch = epoch;
    result.best_epoch = run.best_epoch;
    if (config.stop_after_epoch && epoch >= *config.stop_after_epoch) break;
  }
  result.finished = result.last_epoch >= config.epochs;
  result.params = std::move(run.params);
  return result;
}

}  // namespace cyclevae
