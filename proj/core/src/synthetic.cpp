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

#include "cyclevae/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "cyclevae/error.hpp"
#include "cyclevae/rng.hpp"

namespace cyclevae {

namespace {

struct SpeakerMap {
  Tensor weight;  // [D_s, L]
  std::vector<double> bias;
  double logf0_mean = 0.0;
  double logf0_spread = 0.0;
};

constexpr double kSpectralNoise = 0.03;
constexpr double kSilencePowerDrop = 2.5;

UtteranceFeatures render(const Tensor& latent, const std::vector<bool>& speech, const SpeakerMap& map,
                         const std::string& speaker, Rng& rng) {
  const std::size_t frames = latent.rows();
  const std::size_t dims = map.weight.rows();
  const std::size_t l = latent.cols();
  UtteranceFeatures utt;
  utt.speaker_id = speaker;
  utt.excitation = Tensor(Shape{frames, kExcitationDim});
  utt.spectra = Tensor(Shape{frames, dims});
  std::vector<std::uint8_t> flags(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < dims; ++d) {
      double v = map.bias[d];
      for (std::size_t k = 0; k < l; ++k) v += map.weight(d, k) * latent(t, k);
      if (d == 0 && !speech[t]) v -= kSilencePowerDrop;
      utt.spectra(t, d) = v + kSpectralNoise * rng.normal();
    }
    const bool voiced = speech[t] && latent(t, 1 % l) > -0.5;
    utt.excitation(t, kLogF0Dim) = map.logf0_mean + map.logf0_spread * std::tanh(latent(t, 0));
    utt.excitation(t, kVoicedDim) = voiced ? 1.0 : 0.0;
    utt.excitation(t, 2) = -2.0 + 0.4 * latent(t, 2 % l) + (voiced ? 0.0 : 1.2) + 0.03 * rng.normal();
    utt.excitation(t, 3) = -1.0 + 0.3 * latent(t, 3 % l) + (voiced ? 0.0 : 0.6) + 0.03 * rng.normal();
    flags[t] = speech[t] ? 1 : 0;
  }
  utt.speech_flags = std::move(flags);
  return utt;
}

}  // namespace

SyntheticCorpus gen_synthetic_corpus(const SyntheticConfig& config) {
  if (config.n_utts < 2) throw ConfigError("synthetic corpus needs at least 2 utterances");
  if (config.frames_per_utt < 2 * config.silence_frames + 2) {
    throw ConfigError("frames_per_utt too short for the silence padding");
  }
  if (config.spectral_dim < 2 || config.latent_dim == 0) {
    throw ConfigError("synthetic corpus dimensions must be positive");
  }
  if (config.source_id == config.target_id) throw ConfigError("speaker ids must differ");

  Rng rng(config.seed);
  const std::size_t dims = config.spectral_dim;
  const std::size_t l = config.latent_dim;

  // Shared structure, then per-speaker deviations.
  Tensor common(Shape{dims, l});
  std::vector<double> base(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const double scale = d == 0 ? 0.8 : 0.5 / (1.0 + 0.15 * static_cast<double>(d));
    for (std::size_t k = 0; k < l; ++k) common(d, k) = scale * rng.normal();
    base[d] = d == 0 ? 1.0 : 0.3 / (1.0 + 0.1 * static_cast<double>(d)) * rng.normal();
  }
  SpeakerMap maps[2];
  const double f0_mean[2] = {5.4, 4.8};
  const double f0_spread[2] = {0.22, 0.16};
  for (int s = 0; s < 2; ++s) {
    maps[s].weight = common;
    maps[s].bias = base;
    for (std::size_t d = 0; d < dims; ++d) {
      const double scale = d == 0 ? 0.4 : 0.25 / (1.0 + 0.15 * static_cast<double>(d));
      for (std::size_t k = 0; k < l; ++k) maps[s].weight(d, k) += scale * rng.normal();
      maps[s].bias[d] += 0.35 / (1.0 + 0.1 * static_cast<double>(d)) * rng.normal();
    }
    maps[s].logf0_mean = f0_mean[s];
    maps[s].logf0_spread = f0_spread[s];
  }

  SyntheticCorpus corpus;
  const std::size_t frames = config.frames_per_utt;
  for (std::size_t u = 0; u < config.n_utts; ++u) {
    Tensor latent(Shape{frames, l});
    for (std::size_t k = 0; k < l; ++k) {
      for (int m = 0; m < 3; ++m) {
        const double amp = rng.uniform(0.3, 0.8);
        const double freq = rng.uniform(0.008, 0.05);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < frames; ++t) {
          latent(t, k) += amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) + phase);
        }
      }
    }
    std::vector<bool> speech(frames, true);
    for (std::size_t t = 0; t < config.silence_frames; ++t) {
      speech[t] = false;
      speech[frames - 1 - t] = false;
    }
    for (std::size_t t = 0; t < frames; ++t) {
      if (speech[t]) continue;
      for (std::size_t k = 0; k < l; ++k) latent(t, k) *= 0.1;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "utt%04zu", u);
    corpus.source.push_back({name, render(latent, speech, maps[0], config.source_id, rng)});
    corpus.target.push_back({name, render(latent, speech, maps[1], config.target_id, rng)});
  }
  return corpus;
}

}  // namespace cyclevae
