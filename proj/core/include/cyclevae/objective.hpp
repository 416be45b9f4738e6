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

// Variational lower bounds.
//
// Conventional VAE, per frame t:
//   L = -KL(q(z|X_t) || N(0, I)) + log N(s_t; g(z_t, c_x), I)
//
// CycleVAE sums, over cycles n = 1..N,
//   -KL(q(z|X_n)) - KL(q(z|Y_n)) + log p(s | z_n, c_x) + log p(s | z'_n, c_x)
// where the converted input Y_n = [e_conv ; g(z_n, c_y)] is re-encoded to z'_n,
// the cyclic reconstruction g(z'_n, c_x) is scored against the observed
// spectra, and X_{n+1} = [e_x ; g(z'_n, c_x)] feeds the next cycle with
// gradients attached. The Gaussian likelihood constant is dropped.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cyclevae/autodiff.hpp"
#include "cyclevae/features.hpp"
#include "cyclevae/gradcheck.hpp"
#include "cyclevae/net.hpp"
#include "cyclevae/rng.hpp"

namespace cyclevae {

enum class TrainMode { kVae, kCycleVae };

const char* mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);

/// Network passes of one cycle, in build order.
enum PassSlot : std::size_t {
  kEncodeReal = 0,
  kDecodeRec,
  kDecodeConv,
  kEncodeConv,
  kDecodeCyc,
  kPassesPerCycle,
};

/// All stochastic draws of one segment. Draw order: real-path epsilon for
/// every cycle, then converted-path epsilon for every cycle, then dropout
/// masks pass by pass (conv mask before GRU mask).
struct CycleNoise {
  std::vector<Tensor> eps_real;        ///< per cycle, [T, D_z]
  std::vector<Tensor> eps_conv;        ///< per cycle, [T, D_z]
  std::vector<DropoutMasks> masks;     ///< per pass, empty in evaluation mode

  static CycleNoise draw(const ModelConfig& config, std::size_t frames, std::size_t cycles, Rng& rng);
  /// epsilon = 0 and no dropout: z = mu, deterministic.
  static CycleNoise deterministic(const ModelConfig& config, std::size_t frames, std::size_t cycles);

  const DropoutMasks* pass_masks(std::size_t cycle, PassSlot slot) const;
};

struct CycleTerms {
  double kl_real = 0.0;
  double kl_converted = 0.0;
  double loglik_rec = 0.0;
  double loglik_cyc = 0.0;

  double lower_bound() const { return -kl_real - kl_converted + loglik_rec + loglik_cyc; }
};

struct LossBreakdown {
  std::vector<CycleTerms> cycles;
  double lower_bound = 0.0;  ///< sum over cycles, summed over frames
  double objective = 0.0;    ///< -lower_bound / frames, minimized
  std::size_t frames = 0;

  double per_frame_lower_bound() const { return lower_bound / static_cast<double>(frames); }
};

/// Which terms enter the objective. The VAE baseline uses the real-path pair.
struct TermMask {
  bool kl_real = true;
  bool kl_converted = true;
  bool loglik_rec = true;
  bool loglik_cyc = true;

  static TermMask real_path_only() { return {true, false, true, false}; }
};

// Closed-form and sampling primitives, graph form.
/// Sum over frames of 0.5 * sum_d (exp(logvar) + mu^2 - 1 - logvar).
Var kl_to_standard_normal(Var mu, Var logvar);
/// mu + exp(logvar / 2) * epsilon
Var sample_latent(Var mu, Var logvar, Var epsilon);
/// Sum over frames of -0.5 * ||s_obs - s_hat||^2.
Var recon_loglik(Var s_hat, Var s_obs);

// Tensor conveniences for the same quantities.
double kl_to_standard_normal(const Tensor& mu, const Tensor& logvar);
Tensor sample_latent(const Tensor& mu, const Tensor& logvar, const Tensor& epsilon);
double recon_loglik(const Tensor& s_hat, const Tensor& s_obs);

/// Per-segment inputs. The converted excitation is precomputed (non-trainable).
struct SegmentInput {
  Tensor excitation;            ///< [T, D_e] observed
  Tensor spectra;               ///< [T, D_s] observed
  Tensor converted_excitation;  ///< [T, D_e] source-to-target excitation
  Tensor code_x;                ///< own speaker code
  Tensor code_y;                ///< other speaker code

  std::size_t frames() const { return spectra.rows(); }
};

/// Graph handles for one cycle.
struct CycleVars {
  Var input;         ///< X_n, raw features
  Var mu_real, logvar_real, z_real;
  Var s_rec;         ///< g(z_n, c_x)
  Var s_conv;        ///< g(z_n, c_y)
  Var converted;     ///< Y_n = [e_conv ; s_conv]
  Var mu_conv, logvar_conv, z_conv;
  Var s_cyc;         ///< g(z'_n, c_x)
  Var kl_real, kl_converted, loglik_rec, loglik_cyc;
  Var next_input;    ///< X_{n+1} = [e_x ; s_cyc]
  bool has_converted = false;
};

struct CycleGraph {
  std::vector<CycleVars> cycles;
  Var lower_bound;
  Var objective;
  /// Final recurrent states per pass slot (cycle * kPassesPerCycle + slot);
  /// only slots that were built are valid.
  std::vector<NetOutput> passes;
  std::vector<bool> built;
};

/// Carried recurrent states, one per pass slot, zero at utterance start.
std::vector<NetState> initial_pass_states(const ModelConfig& config, std::size_t cycles);

/// One cycle n (zero-based) starting from input X_n.
CycleVars cycle_step(const ModelGraph& model, Var input, const SegmentInput& seg, std::size_t cycle,
                     TrainMode mode, const CycleNoise& noise, std::span<const NetState> states,
                     CycleGraph& out);

/// Builds the loss graph for one segment. In VAE mode only the real path of
/// the first cycle is built, and cycles must be 1.
CycleGraph build_cycle_graph(const ModelGraph& model, const SegmentInput& seg, std::size_t cycles,
                             TrainMode mode, const CycleNoise& noise,
                             std::span<const NetState> states, TermMask mask = {});

/// Reads the evaluated per-cycle terms.
LossBreakdown read_breakdown(Graph& g, const CycleGraph& cg, std::size_t frames);

/// Next carried states after a forward pass.
std::vector<NetState> read_pass_states(Graph& g, const CycleGraph& cg, std::span<const NetState> previous);

/// Conventional VAE bound for one utterance with speaker code c_x.
LossBreakdown vae_loss(const Tensor& features, const Tensor& code_x, const ModelParams& params, Rng& rng);

/// CycleVAE bound over N cycles for one utterance.
LossBreakdown cyclevae_loss(const Tensor& features, const Tensor& converted_excitation,
                            const Tensor& code_x, const Tensor& code_y, const ModelParams& params,
                            std::size_t cycles, Rng& rng);

/// Segment input for an utterance of speaker x in a two-speaker setup.
SegmentInput make_segment_input(const UtteranceFeatures& utt, const CorpusStats& stats,
                                std::size_t code_dim);

/// Sum over the batch of the per-utterance objectives, each utterance using
/// its own speaker as x and the other speaker as y.
double bidirectional_loss(std::span<const Utterance> batch, const ModelParams& params,
                          const CorpusStats& stats, std::size_t cycles, TrainMode mode, Rng& rng,
                          std::vector<LossBreakdown>* per_utterance = nullptr);

/// Finite-difference check of the full objective on a random model and
/// random features. Weights, biases, normalization constants, epsilon and
/// dropout masks are drawn from seed; the noise is then held fixed.
GradCheckReport check_objective_gradients(const ModelConfig& config, std::size_t frames,
                                          std::size_t cycles, TrainMode mode, std::uint64_t seed,
                                          double step = 1e-5);

}  // namespace cyclevae
