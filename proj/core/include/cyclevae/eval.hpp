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

// Objective evaluation: DTW alignment, mel-cepstral distortion, the global
// variance postfilter, latent cosine similarity and deterministic conversion.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevae/features.hpp"
#include "cyclevae/net.hpp"
#include "cyclevae/tensor.hpp"

namespace cyclevae {

/// Monotonic alignment between two sequences. Index pairs are zero-based and
/// run from (0, 0) to (|A| - 1, |B| - 1).
struct AlignmentPath {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double cost = 0.0;  ///< summed frame distance along the path

  std::size_t size() const { return pairs.size(); }
};

using FrameKernel = std::function<double(std::span<const double>, std::span<const double>)>;

/// Euclidean distance over all dimensions.
double l2_distance(std::span<const double> a, std::span<const double> b);

/// Per-frame distortion in dB over coefficients 1..D-1 (power excluded):
/// (10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2)
double mcd_frame(std::span<const double> a, std::span<const double> b);

/// Minimum-cost path with steps (1,0), (0,1), (1,1) and unit weights. The
/// cost is accumulated front to back along the path. Ties prefer the
/// diagonal, then (1,0), then (0,1).
AlignmentPath dtw_align(const Tensor& a, const Tensor& b, const FrameKernel& kernel);

struct McdReport {
  double mcd_db = 0.0;  ///< mean over aligned pairs
  std::size_t frames_used = 0;
  AlignmentPath path;
};

/// Mean frame distortion along a path. expected_dim of 0 skips the
/// dimension check.
McdReport mcd(const Tensor& a, const Tensor& b, const AlignmentPath& path,
              std::size_t expected_dim = kSpectralDim);

/// Aligns the speech frames of two utterances with the distortion kernel and
/// reports the mean distortion along the path.
McdReport speech_mcd(const UtteranceFeatures& a, const UtteranceFeatures& b, double speech_threshold,
                     std::size_t expected_dim = kSpectralDim);

/// Scales each coefficient 1..D-1 around its utterance mean so that its
/// variance equals target_gv. Coefficient 0 and zero-variance dims are kept.
Tensor gv_postfilter(const Tensor& spectra, std::span<const double> target_gv);

struct LatentCosine {
  double mean = 0.0;
  std::size_t pairs = 0;    ///< aligned pairs averaged
  std::size_t skipped = 0;  ///< pairs dropped for a zero-norm frame
};

/// Mean cosine between DTW-aligned (L2) rows of two latent sequences.
LatentCosine latent_cosine(const Tensor& mu_a, const Tensor& mu_b);

/// Encodes both utterances (posterior means), keeps speech frames and
/// compares the aligned latents.
LatentCosine latent_cosine(const UtteranceFeatures& a, const UtteranceFeatures& b,
                           const ModelParams& params, double speech_threshold);

/// Restricts rows of a sequence to the given frame indices.
Tensor select_frames(const Tensor& seq, std::span<const std::size_t> frames);

/// Decoded spectra of an utterance with its own speaker code, z = mu.
Tensor reconstruct_spectra(const ModelParams& params, const UtteranceFeatures& utt,
                           const CorpusStats& stats);

/// Deterministic conversion to target_speaker: z = mu, decoded with the
/// target code, excitation mapped by the log-F0 transform. The result carries
/// the source speech flags and the target speaker id.
UtteranceFeatures convert_utterance(const ModelParams& params, const UtteranceFeatures& utt,
                                    const std::string& target_speaker, const CorpusStats& stats,
                                    bool postfilter);

/// Converted features re-encoded and decoded with the source code.
Tensor cyclic_spectra(const ModelParams& params, const UtteranceFeatures& utt, const CorpusStats& stats);

struct EvalOptions {
  bool postfilter = true;
  std::optional<double> speech_threshold;  ///< default: corpus mean of c0
};

struct UtteranceEval {
  std::string name;
  std::string source_speaker;
  std::string target_speaker;
  double rec_mcd = 0.0;
  std::size_t rec_frames = 0;
  bool has_reference = false;
  double init_mcd = 0.0;   ///< source vs target reference
  double cv_mcd = 0.0;     ///< converted vs reference
  double pf_mcd = 0.0;     ///< postfiltered conversion vs reference
  std::size_t cv_frames = 0;
  double latent_cosine = 0.0;
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  std::vector<std::string> notes;
  bool postfilter = true;

  double mean_rec_mcd() const;
  /// Means over utterances with a parallel reference; nullopt if none has one.
  std::optional<double> mean_init_mcd() const;
  std::optional<double> mean_cv_mcd() const;
  std::optional<double> mean_pf_mcd() const;
  std::optional<double> mean_latent_cosine() const;
};

/// Every utterance is converted to the other speaker. A parallel reference
/// is the other speaker's utterance with the same name.
EvalReport evaluate_corpus(const ModelParams& params, const CorpusStats& stats, const Corpus& corpus,
                           const EvalOptions& options = {});

nlohmann::ordered_json report_to_json(const EvalReport& report);

}  // namespace cyclevae
