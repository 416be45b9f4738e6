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

// Spectral RNN used for both the encoder and the decoder:
//
//   fixed normalization -> dilated conv stack (+-4 frames) -> GRU with output
//   feedback -> linear output -> fixed denormalization
//
// The encoder emits [mu ; logvar] per frame and takes no speaker code. The
// decoder consumes [z ; c] and emits denormalized mel-cepstra.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevae/autodiff.hpp"
#include "cyclevae/gradcheck.hpp"
#include "cyclevae/rng.hpp"
#include "cyclevae/tensor.hpp"

namespace cyclevae {

struct NetConfig {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t hidden_units = 32;  // 1024 in the full-scale setup
  std::size_t conv_kernel = 3;
  std::vector<std::size_t> conv_dilations{1, 3};
  double dropout_prob = 0.5;

  void validate() const;
  /// One-sided receptive field of the conv stack: sum of d * (k - 1) / 2.
  std::size_t context_frames() const;
  /// Conv layers preserve the channel count.
  std::size_t conv_channels() const { return input_dim; }
  /// Closed-form trainable parameter count.
  std::size_t parameter_count() const;
};

/// Whole-model dimensions. Defaults follow the reference setup except the
/// hidden size, which is kept at desk scale.
struct ModelConfig {
  std::size_t excitation_dim = 4;
  std::size_t spectral_dim = 35;
  std::size_t latent_dim = 16;
  std::size_t speaker_code_dim = 1;
  std::size_t hidden_units = 32;
  std::size_t conv_kernel = 3;
  std::vector<std::size_t> conv_dilations{1, 3};
  double dropout_prob = 0.5;

  std::size_t feature_dim() const { return excitation_dim + spectral_dim; }
  NetConfig encoder() const;
  NetConfig decoder() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Speaker code for speaker index 0 or 1. A single binary value when the code
/// dimension is 1, one-hot otherwise.
Tensor speaker_code(std::size_t speaker_index, std::size_t code_dim);

/// (frame - mean) / std per column; std must be strictly positive.
Tensor normalize(const Tensor& frames, const Tensor& mean, const Tensor& std);
Tensor denormalize(const Tensor& frames, const Tensor& mean, const Tensor& std);

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool is_bias = false;
};

/// Every trainable tensor of one network, prefixed (e.g. "enc.").
std::vector<ParamSpec> net_parameter_specs(const NetConfig& config, const std::string& prefix);
std::vector<ParamSpec> model_parameter_specs(const ModelConfig& config);

struct ModelParams {
  ModelConfig config;
  ParamMap weights;     ///< trainable, "enc.*" and "dec.*"
  Tensor input_mean;    ///< [D_e + D_s], encoder input normalization
  Tensor input_std;
  Tensor output_mean;   ///< [D_s], decoder output denormalization
  Tensor output_std;

  /// All-zero weights with the given normalization constants.
  static ModelParams zeros(const ModelConfig& config, Tensor input_mean, Tensor input_std,
                           Tensor output_mean, Tensor output_std);
  /// Identity normalization (mean 0, std 1).
  static ModelParams zeros(const ModelConfig& config);

  void validate() const;
  std::size_t trainable_count() const;
};

/// Recurrent state carried between calls: GRU hidden and the previous output
/// frame fed back into the GRU input. Both rows, zero at sequence start.
struct NetState {
  Tensor hidden;    ///< [1, H]
  Tensor feedback;  ///< [1, O]

  static NetState zeros(const NetConfig& config);
};

/// Inverted-dropout masks for one pass over a sequence.
struct DropoutMasks {
  Tensor conv;  ///< [T, C] after the conv stack
  Tensor gru;   ///< [T, H] after the GRU

  static DropoutMasks draw(const NetConfig& config, std::size_t frames, double keep, Rng& rng);
};

struct NetOutput {
  Var output;          ///< [T, O]
  Var final_hidden;    ///< [1, H]
  Var final_feedback;  ///< [1, O]
};

struct StepOutput {
  Var hidden;  ///< [1, H] after the gate update
  Var output;  ///< [1, O] linear layer output, also the next feedback
};

/// One network whose weights are bound as variables of a graph.
class NetGraph {
 public:
  NetGraph(Graph& graph, NetConfig config, const VarMap& vars, const std::string& prefix);

  const NetConfig& config() const { return config_; }

  /// Dilated conv stack with zero padding; tanh between layers. Same length.
  Var context(Var input, const Tensor* conv_mask) const;

  /// Input-side gate pre-activations [T, 3H] = [update | reset | candidate].
  Var input_gates(Var context) const;

  /// One GRU step given the input-side pre-activations of the frame.
  StepOutput step(Var gates_row, Var hidden, Var feedback, const Tensor* gru_mask_row) const;

  /// Full pass over a normalized input sequence.
  NetOutput forward(Var input, const NetState& state, const DropoutMasks* masks) const;

 private:
  Graph* graph_;
  NetConfig config_;
  std::vector<Var> conv_weight_;
  std::vector<Var> conv_bias_;
  Var w_input_[3];
  Var w_feedback_fused_;   // [O, 3H]
  Var u_update_reset_;     // [H, 2H]
  Var u_candidate_;        // [H, H]
  Var bias_[3];
  Var out_weight_;
  Var out_bias_;
};

/// Encoder and decoder bound into a graph together with the fixed
/// normalization constants.
class ModelGraph {
 public:
  ModelGraph(Graph& graph, const ModelParams& params);
  /// Uses weights already bound in vars; params supplies config and
  /// normalization constants only.
  ModelGraph(Graph& graph, const ModelParams& params, VarMap vars);

  Graph& graph() const { return *graph_; }
  const VarMap& vars() const { return vars_; }
  const ModelConfig& config() const { return config_; }
  const NetGraph& encoder() const { return encoder_; }
  const NetGraph& decoder() const { return decoder_; }

  /// Raw features [T, D_e + D_s] -> [T, 2 D_z] = [mu ; logvar].
  NetOutput encode(Var features, const NetState& state, const DropoutMasks* masks) const;
  /// Latents [T, D_z] and a speaker code [D_c] -> denormalized spectra [T, D_s].
  NetOutput decode(Var latents, const Tensor& code, const NetState& state,
                   const DropoutMasks* masks) const;

  Var normalize_input(Var features) const;
  Var denormalize_output(Var normalized) const;

 private:
  Graph* graph_;
  ModelConfig config_;
  VarMap vars_;
  NetGraph encoder_;
  NetGraph decoder_;
  Var in_shift_, in_inv_std_, out_mean_, out_std_;
};

struct LatentGaussian {
  Tensor mu;      ///< [T, D_z]
  Tensor logvar;  ///< [T, D_z]
};

/// Evaluation-mode encoder pass (no dropout).
LatentGaussian encoder_forward(const Tensor& features, const ModelParams& params);
/// Evaluation-mode decoder pass (no dropout).
Tensor decoder_forward(const Tensor& latents, const Tensor& code, const ModelParams& params);
/// Conv stack of one network on a normalized sequence, evaluation mode.
Tensor dilated_context(const Tensor& sequence, const ModelParams& params, const std::string& net);

struct GruStepResult {
  NetState state;
  Tensor hidden;
};

/// Single GRU step of one network ("enc" or "dec") on a conv-context row.
GruStepResult gru_step(const ModelParams& params, const std::string& net, const NetState& state,
                       const Tensor& context_row);

}  // namespace cyclevae
