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

// Training loop: Glorot initialization, Adam, stateful truncated
// backpropagation over fixed-length segments, per-epoch metrics and
// resumable checkpoints.
//
// Per epoch the run RNG is consumed in a fixed order: the utterance shuffle,
// then for each segment the real-path epsilon of every cycle, the
// converted-path epsilon of every cycle, and the dropout masks pass by pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevae/checkpoint.hpp"
#include "cyclevae/features.hpp"
#include "cyclevae/net.hpp"
#include "cyclevae/objective.hpp"
#include "cyclevae/rng.hpp"

namespace cyclevae {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_frames = 80;
  std::size_t epochs = 180;
  std::size_t cycles = 3;
  TrainMode mode = TrainMode::kCycleVae;
  std::uint64_t seed = 1;
  ModelConfig model;
  double clip_norm = 10.0;             ///< global gradient norm; 0 disables
  std::size_t holdout_per_speaker = 1; ///< last utterances of each speaker kept for validation
  TermMask terms;                      ///< loss terms entering the objective

  std::filesystem::path corpus_dir;
  std::filesystem::path stats_path;
  std::filesystem::path out_dir;
  std::filesystem::path reference_dir;  ///< optional parallel corpus for conversion metrics

  std::optional<std::size_t> stop_after_epoch;  ///< end the run early (resumable)
  bool resume = false;                          ///< continue from out_dir/latest.ckpt

  /// Cycles actually built: 1 for the VAE baseline.
  std::size_t effective_cycles() const { return mode == TrainMode::kVae ? 1 : cycles; }
  void validate() const;
};

/// Hyperparameters only (no paths or run controls); stored in checkpoints.
nlohmann::ordered_json hyperparameters_json(const TrainConfig& config);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  ParamMap first_moment;
  ParamMap second_moment;

  /// Zero moments shaped like params.
  static AdamState zeros(const ParamMap& params);
};

/// Uniform in [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Glorot weights, zero biases, normalization constants from stats.
ModelParams init_model(const ModelConfig& config, const CorpusStats& stats, Rng& rng);

/// One bias-corrected Adam update of every parameter. Throws before touching
/// anything if a gradient is non-finite.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double learning_rate);

/// Scales grads in place so that their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
double clip_global_norm(ParamMap& grads, double max_norm);

struct Segment {
  std::size_t utterance = 0;
  std::size_t begin = 0;  ///< first frame
  std::size_t end = 0;    ///< one past the last frame

  std::size_t frames() const { return end - begin; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Consecutive segments of batch_frames per utterance, the last one short.
std::vector<Segment> make_segments(const Corpus& corpus, std::size_t batch_frames);

/// Fisher-Yates permutation of utterance indices.
std::vector<std::size_t> shuffled_order(std::size_t count, Rng& rng);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  ///< objective per frame
  // Per-frame terms summed over cycles.
  double kl_real = 0.0;
  double kl_converted = 0.0;
  double loglik_rec = 0.0;
  double loglik_cyc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> rec_mcd;
  std::optional<double> cyc_mcd;
  std::optional<double> init_mcd;
  std::optional<double> cv_mcd;
  std::optional<double> latent_cosine;
};

nlohmann::ordered_json metrics_json(const EpochMetrics& m);

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> history;  ///< epochs run by this call
  std::size_t last_epoch = 0;
  std::size_t best_epoch = 0;
  bool finished = false;              ///< all configured epochs done
};

/// Data for a run, already loaded.
struct TrainData {
  Corpus corpus;
  CorpusStats stats;
  Corpus reference;  ///< optional parallel corpus
};

TrainData load_train_data(const TrainConfig& config);

/// Runs (or resumes) training and writes out_dir/{latest,best}.ckpt and
/// out_dir/metrics.jsonl.
TrainResult train(const TrainConfig& config, const TrainData& data);
TrainResult train(const TrainConfig& config);

/// Validation objective in evaluation mode (epsilon = 0, no dropout) per
/// frame, each utterance run whole from zero states.
double validation_loss(const ModelParams& params, const Corpus& utts, const CorpusStats& stats,
                       std::size_t cycles, TrainMode mode, const TermMask& terms = {});

inline constexpr const char* kLatestCheckpoint = "latest.ckpt";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kMetricsFile = "metrics.jsonl";

/// Model plus statistics, as consumed by conversion and evaluation.
struct TrainedModel {
  ModelParams params;
  CorpusStats stats;
};

TrainedModel load_trained_model(const std::filesystem::path& checkpoint);

}  // namespace cyclevae
