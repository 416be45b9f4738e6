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
#include <random>
#include <string>

namespace cyclevae {

/// Seeded run RNG. Distributions are computed here from raw engine output
/// rather than through <random> distribution objects, so draws are identical
/// across standard libraries and the whole state is the engine state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two engine outputs.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  /// Keep-mask entry for inverted dropout: 1/keep with probability keep, else 0.
  double dropout_mask(double keep) { return uniform() < keep ? 1.0 / keep : 0.0; }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace cyclevae
