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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevae/tensor.hpp"

namespace cyclevae {

// Excitation layout: continuous log-F0, U/V flag, two aperiodicity codes.
inline constexpr std::size_t kLogF0Dim = 0;
inline constexpr std::size_t kVoicedDim = 1;
inline constexpr std::size_t kExcitationDim = 4;
inline constexpr std::size_t kSpectralDim = 35;

/// One utterance of pre-extracted vocoder features.
struct UtteranceFeatures {
  Tensor excitation;  ///< [T, D_e]
  Tensor spectra;     ///< [T, D_s] mel-cepstra, coefficient 0 is power
  std::optional<std::vector<std::uint8_t>> speech_flags;
  double frame_shift_ms = 5.0;
  std::string speaker_id;

  std::size_t frames() const { return spectra.rows(); }
  /// [T, D_e + D_s] = [excitation ; spectra]
  Tensor joint() const { return hconcat(excitation, spectra); }
  bool voiced(std::size_t t) const { return excitation(t, kVoicedDim) > 0.5; }

  void validate() const;

  friend bool operator==(const UtteranceFeatures&, const UtteranceFeatures&) = default;
};

struct Utterance {
  std::string name;  ///< file stem, shared by parallel recordings of one sentence
  UtteranceFeatures features;
};

using Corpus = std::vector<Utterance>;

// Feature file, little-endian:
//   "VCFT" | version u32 = 1 | n_frames u32 | d_e u32 | d_s u32 | flags u32
//   (bit 0: speech flags present) | frame_shift_us u32 | id length u16 | id
//   | n_frames rows of (d_e + d_s) f32 | optional n_frames flag bytes
inline constexpr char kFeatureMagic[4] = {'V', 'C', 'F', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr const char* kFeatureExtension = ".feat";

/// Values are stored as f32; write -> read -> write is byte-identical.
std::string encode_features(const UtteranceFeatures& utt);
UtteranceFeatures decode_features(std::string_view bytes);

void write_features(const UtteranceFeatures& utt, const std::filesystem::path& path);
UtteranceFeatures read_features(const std::filesystem::path& path);

/// Every *.feat file in dir, sorted by file name.
Corpus read_corpus(const std::filesystem::path& dir);
/// Writes <dir>/<speaker>_<name>.feat for each utterance.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct SpeakerStats {
  double logf0_mean = 0.0;  ///< over voiced frames
  double logf0_std = 1.0;
  std::vector<double> gv;   ///< [D_s] mean per-utterance variance of each coefficient

  friend bool operator==(const SpeakerStats&, const SpeakerStats&) = default;
};

struct CorpusStats {
  std::vector<double> feat_mean;  ///< [D_e + D_s], all speakers pooled
  std::vector<double> feat_std;
  std::map<std::string, SpeakerStats> speakers;

  const SpeakerStats& speaker(const std::string& id) const;
  /// Speakers in sorted order; the position is the speaker-code index.
  std::vector<std::string> speaker_ids() const;
  std::size_t speaker_index(const std::string& id) const;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

void to_json(nlohmann::json& j, const CorpusStats& s);
void from_json(const nlohmann::json& j, CorpusStats& s);
void write_stats(const CorpusStats& stats, const std::filesystem::path& path);
CorpusStats read_stats(const std::filesystem::path& path);

/// Population (divide-by-N) statistics of the training corpus.
CorpusStats compute_stats(const Corpus& corpus);

/// Per-frame variance of each spectral coefficient within one utterance.
std::vector<double> utterance_variance(const Tensor& spectra);

/// Linear log-F0 mapping matching target mean and standard deviation.
double transform_logf0(double logf0, const SpeakerStats& src, const SpeakerStats& tgt);

/// Transforms log-F0 on voiced frames; U/V and aperiodicity pass through.
Tensor build_converted_excitation(const Tensor& excitation, const SpeakerStats& src,
                                  const SpeakerStats& tgt);

/// Frames counted as speech: the stored flags if present, otherwise frames
/// whose power coefficient exceeds c0_threshold.
std::vector<std::size_t> speech_frames(const UtteranceFeatures& utt, double c0_threshold);

/// Default speech threshold: the corpus mean of coefficient 0.
double default_speech_threshold(const CorpusStats& stats, std::size_t excitation_dim);

}  // namespace cyclevae
