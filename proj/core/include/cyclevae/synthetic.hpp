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

// Seeded two-speaker corpus for desk-scale experiments. Both speakers render
// the same smooth latent trajectories through different affine maps, so
// utterance i of one speaker is a frame-aligned parallel recording of
// utterance i of the other.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cyclevae/features.hpp"

namespace cyclevae {

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t n_utts = 8;
  std::size_t frames_per_utt = 120;
  std::size_t spectral_dim = kSpectralDim;
  std::size_t latent_dim = 4;
  /// Leading and trailing non-speech frames per utterance.
  std::size_t silence_frames = 6;
  std::string source_id = "spk_a";
  std::string target_id = "spk_b";
};

struct SyntheticCorpus {
  Corpus source;  ///< source[i] and target[i] share content
  Corpus target;
};

SyntheticCorpus gen_synthetic_corpus(const SyntheticConfig& config);

}  // namespace cyclevae
