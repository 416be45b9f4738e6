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

#include "cyclevae/net.hpp"

#include <cmath>

#include "cyclevae/error.hpp"

namespace cyclevae {

namespace {

const char* kGates[3] = {"update", "reset", "candidate"};

Tensor row_of(const Tensor& t, std::size_t r) { return t.row_range(r, r + 1); }

}  // namespace

void NetConfig::validate() const {
  if (input_dim == 0 || output_dim == 0 || hidden_units == 0) {
    throw ConfigError("network dimensions must be positive");
  }
  if (conv_kernel == 0 || conv_kernel % 2 == 0) {
    throw ConfigError("conv kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (conv_dilations.empty()) throw ConfigError("at least one conv layer is required");
  for (std::size_t d : conv_dilations)
    if (d == 0) throw ConfigError("conv dilation must be positive");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1)");
  }
}

std::size_t NetConfig::context_frames() const {
  std::size_t total = 0;
  for (std::size_t d : conv_dilations) total += d * (conv_kernel - 1) / 2;
  return total;
}

std::size_t NetConfig::parameter_count() const {
  const std::size_t c = conv_channels();
  const std::size_t h = hidden_units;
  const std::size_t o = output_dim;
  return conv_dilations.size() * (conv_kernel * c * c + c) + 3 * (c * h + h * h + o * h + h) +
         h * o + o;
}

NetConfig ModelConfig::encoder() const {
  return NetConfig{.input_dim = feature_dim(),
                   .output_dim = 2 * latent_dim,
                   .hidden_units = hidden_units,
                   .conv_kernel = conv_kernel,
                   .conv_dilations = conv_dilations,
                   .dropout_prob = dropout_prob};
}

NetConfig ModelConfig::decoder() const {
  return NetConfig{.input_dim = latent_dim + speaker_code_dim,
                   .output_dim = spectral_dim,
                   .hidden_units = hidden_units,
                   .conv_kernel = conv_kernel,
                   .conv_dilations = conv_dilations,
                   .dropout_prob = dropout_prob};
}

void ModelConfig::validate() const {
  if (excitation_dim == 0 || spectral_dim < 2 || latent_dim == 0 || speaker_code_dim == 0) {
    throw ConfigError("model dimensions must be positive (spectral_dim >= 2)");
  }
  encoder().validate();
  decoder().validate();
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"excitation_dim", c.excitation_dim}, {"spectral_dim", c.spectral_dim},
                     {"latent_dim", c.latent_dim},         {"speaker_code_dim", c.speaker_code_dim},
                     {"hidden_units", c.hidden_units},     {"conv_kernel", c.conv_kernel},
                     {"conv_dilations", c.conv_dilations}, {"dropout_prob", c.dropout_prob}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.excitation_dim = j.value("excitation_dim", c.excitation_dim);
  c.spectral_dim = j.value("spectral_dim", c.spectral_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.speaker_code_dim = j.value("speaker_code_dim", c.speaker_code_dim);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.conv_dilations = j.value("conv_dilations", c.conv_dilations);
  c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
}

Tensor speaker_code(std::size_t speaker_index, std::size_t code_dim) {
  if (speaker_index > 1) throw DataError("speaker index must be 0 or 1");
  if (code_dim == 0) throw ConfigError("speaker code dimension must be positive");
  Tensor code(Shape{code_dim});
  if (code_dim == 1) {
    code[0] = static_cast<double>(speaker_index);
  } else {
    code[speaker_index] = 1.0;
  }
  return code;
}

namespace {

void check_norm_args(const Tensor& frames, const Tensor& mean, const Tensor& std) {
  if (mean.size() != frames.cols() || std.size() != frames.cols()) {
    throw ShapeError("normalization constants " + mean.shape().str() + "/" + std.shape().str() +
                     " do not match frames " + frames.shape().str());
  }
  for (std::size_t d = 0; d < std.size(); ++d) {
    if (!(std[d] > 0.0)) {
      throw ConfigError("normalization std must be positive (dim " + std::to_string(d) + ")");
    }
  }
}

}  // namespace

Tensor normalize(const Tensor& frames, const Tensor& mean, const Tensor& std) {
  check_norm_args(frames, mean, std);
  Tensor out(frames.shape());
  const std::size_t cols = frames.cols();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out[i] = (frames[i] - mean[i % cols]) / std[i % cols];
  }
  return out;
}

Tensor denormalize(const Tensor& frames, const Tensor& mean, const Tensor& std) {
  check_norm_args(frames, mean, std);
  Tensor out(frames.shape());
  const std::size_t cols = frames.cols();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out[i] = frames[i] * std[i % cols] + mean[i % cols];
  }
  return out;
}

std::vector<ParamSpec> net_parameter_specs(const NetConfig& config, const std::string& prefix) {
  config.validate();
  const std::size_t c = config.conv_channels();
  const std::size_t h = config.hidden_units;
  const std::size_t o = config.output_dim;
  const std::size_t k = config.conv_kernel;
  std::vector<ParamSpec> specs;
  for (std::size_t l = 0; l < config.conv_dilations.size(); ++l) {
    const std::string base = prefix + "conv" + std::to_string(l);
    specs.push_back({base + ".weight", Shape{k * c, c}, k * c, k * c, false});
    specs.push_back({base + ".bias", Shape{c}, k * c, k * c, true});
  }
  for (const char* gate : kGates) {
    const std::string base = prefix + "gru." + gate;
    specs.push_back({base + ".input", Shape{c, h}, c, h, false});
    specs.push_back({base + ".recurrent", Shape{h, h}, h, h, false});
    specs.push_back({base + ".feedback", Shape{o, h}, o, h, false});
    specs.push_back({base + ".bias", Shape{h}, c, h, true});
  }
  specs.push_back({prefix + "out.weight", Shape{h, o}, h, o, false});
  specs.push_back({prefix + "out.bias", Shape{o}, h, o, true});
  return specs;
}

std::vector<ParamSpec> model_parameter_specs(const ModelConfig& config) {
  auto specs = net_parameter_specs(config.encoder(), "enc.");
  auto dec = net_parameter_specs(config.decoder(), "dec.");
  specs.insert(specs.end(), dec.begin(), dec.end());
  return specs;
}

ModelParams ModelParams::zeros(const ModelConfig& config, Tensor input_mean, Tensor input_std,
                               Tensor output_mean, Tensor output_std) {
  config.validate();
  ModelParams p;
  p.config = config;
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    p.weights.emplace(spec.name, Tensor(spec.shape));
  }
  p.input_mean = std::move(input_mean);
  p.input_std = std::move(input_std);
  p.output_mean = std::move(output_mean);
  p.output_std = std::move(output_std);
  p.validate();
  return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  return zeros(config, Tensor(Shape{config.feature_dim()}, 0.0),
               Tensor(Shape{config.feature_dim()}, 1.0), Tensor(Shape{config.spectral_dim}, 0.0),
               Tensor(Shape{config.spectral_dim}, 1.0));
}

void ModelParams::validate() const {
  config.validate();
  const auto check = [](const Tensor& t, std::size_t n, const char* what) {
    if (t.size() != n) {
      throw ShapeError(std::string(what) + " has shape " + t.shape().str() + ", expected [" +
                       std::to_string(n) + "]");
    }
  };
  check(input_mean, config.feature_dim(), "input_mean");
  check(input_std, config.feature_dim(), "input_std");
  check(output_mean, config.spectral_dim, "output_mean");
  check(output_std, config.spectral_dim, "output_std");
  for (const Tensor* s : {&input_std, &output_std}) {
    for (double v : s->data())
      if (!(v > 0.0)) throw ConfigError("normalization std must be strictly positive");
  }
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    auto it = weights.find(spec.name);
    if (it == weights.end()) throw ShapeError("missing parameter " + spec.name);
    if (!(it->second.shape() == spec.shape)) {
      throw ShapeError("parameter " + spec.name + " has shape " + it->second.shape().str() +
                       ", expected " + spec.shape.str());
    }
  }
  if (weights.size() != model_parameter_specs(config).size()) {
    throw ShapeError("unexpected extra parameters in model");
  }
}

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : weights) n += t.size();
  return n;
}

NetState NetState::zeros(const NetConfig& config) {
  return NetState{Tensor(Shape{1, config.hidden_units}), Tensor(Shape{1, config.output_dim})};
}

DropoutMasks DropoutMasks::draw(const NetConfig& config, std::size_t frames, double keep, Rng& rng) {
  DropoutMasks masks{Tensor(Shape{frames, config.conv_channels()}),
                     Tensor(Shape{frames, config.hidden_units})};
  for (double& v : masks.conv.data()) v = rng.dropout_mask(keep);
  for (double& v : masks.gru.data()) v = rng.dropout_mask(keep);
  return masks;
}

NetGraph::NetGraph(Graph& graph, NetConfig config, const VarMap& vars, const std::string& prefix)
    : graph_(&graph), config_(std::move(config)) {
  config_.validate();
  const auto get = [&](const std::string& name) {
    auto it = vars.find(prefix + name);
    if (it == vars.end()) throw ConfigError("unbound parameter " + prefix + name);
    return it->second;
  };
  for (std::size_t l = 0; l < config_.conv_dilations.size(); ++l) {
    conv_weight_.push_back(get("conv" + std::to_string(l) + ".weight"));
    conv_bias_.push_back(get("conv" + std::to_string(l) + ".bias"));
  }
  Var feedback[3];
  for (int i = 0; i < 3; ++i) {
    const std::string base = std::string("gru.") + kGates[i];
    w_input_[i] = get(base + ".input");
    feedback[i] = get(base + ".feedback");
    bias_[i] = get(base + ".bias");
  }
  w_feedback_fused_ = graph.concat(feedback, 1);
  const Var update_reset[2] = {get("gru.update.recurrent"), get("gru.reset.recurrent")};
  u_update_reset_ = graph.concat(update_reset, 1);
  u_candidate_ = get("gru.candidate.recurrent");
  out_weight_ = get("out.weight");
  out_bias_ = get("out.bias");
}

Var NetGraph::context(Var input, const Tensor* conv_mask) const {
  Graph& g = *graph_;
  if (input.shape().rank() != 2 || input.shape()[1] != config_.input_dim) {
    throw ShapeError("network input " + input.shape().str() + " does not have " +
                     std::to_string(config_.input_dim) + " features");
  }
  const auto half = static_cast<std::ptrdiff_t>(config_.conv_kernel / 2);
  Var x = input;
  for (std::size_t l = 0; l < conv_weight_.size(); ++l) {
    if (l > 0) x = g.tanh(x);
    const auto dilation = static_cast<std::ptrdiff_t>(config_.conv_dilations[l]);
    std::vector<Var> taps;
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
      taps.push_back(j == 0 ? x : g.shift_rows(x, j * dilation));
    }
    x = g.add_bias(g.matmul(g.concat(taps, 1), conv_weight_[l]), conv_bias_[l]);
  }
  if (conv_mask != nullptr) x = g.dropout(x, g.constant(*conv_mask));
  return x;
}

Var NetGraph::input_gates(Var context) const {
  Graph& g = *graph_;
  Var parts[3];
  for (int i = 0; i < 3; ++i) parts[i] = g.add_bias(g.matmul(context, w_input_[i]), bias_[i]);
  return g.concat(parts, 1);
}

StepOutput NetGraph::step(Var gates_row, Var hidden, Var feedback, const Tensor* gru_mask_row) const {
  Graph& g = *graph_;
  const std::size_t h = config_.hidden_units;
  const Var pre = gates_row + g.matmul(feedback, w_feedback_fused_);
  const Var rec = g.matmul(hidden, u_update_reset_);
  const Var update = g.sigmoid(g.slice(pre, 1, 0, h) + g.slice(rec, 1, 0, h));
  const Var reset = g.sigmoid(g.slice(pre, 1, h, 2 * h) + g.slice(rec, 1, h, 2 * h));
  const Var candidate = g.tanh(g.slice(pre, 1, 2 * h, 3 * h) + g.matmul(reset * hidden, u_candidate_));
  // (1 - z) * h + z * c
  const Var next = hidden + update * (candidate - hidden);
  Var emitted = next;
  if (gru_mask_row != nullptr) emitted = g.dropout(next, g.constant(*gru_mask_row));
  const Var output = g.add_bias(g.matmul(emitted, out_weight_), out_bias_);
  return StepOutput{next, output};
}

NetOutput NetGraph::forward(Var input, const NetState& state, const DropoutMasks* masks) const {
  Graph& g = *graph_;
  const std::size_t frames = input.shape()[0];
  if (masks != nullptr &&
      (masks->conv.rows() != frames || masks->gru.rows() != frames)) {
    throw ShapeError("dropout masks do not cover " + std::to_string(frames) + " frames");
  }
  const Var gates = input_gates(context(input, masks ? &masks->conv : nullptr));
  Var hidden = g.constant(state.hidden);
  Var feedback = g.constant(state.feedback);
  std::vector<Var> outputs;
  outputs.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Tensor mask_row;
    if (masks != nullptr) mask_row = row_of(masks->gru, t);
    const StepOutput s =
        step(g.slice(gates, 0, t, t + 1), hidden, feedback, masks ? &mask_row : nullptr);
    hidden = s.hidden;
    feedback = s.output;
    outputs.push_back(s.output);
  }
  return NetOutput{g.concat(outputs, 0), hidden, feedback};
}

ModelGraph::ModelGraph(Graph& graph, const ModelParams& params)
    : ModelGraph(graph, params, bind_parameters(graph, params.weights)) {}

ModelGraph::ModelGraph(Graph& graph, const ModelParams& params, VarMap vars)
    : graph_(&graph),
      config_(params.config),
      vars_(std::move(vars)),
      encoder_(graph, params.config.encoder(), vars_, "enc."),
      decoder_(graph, params.config.decoder(), vars_, "dec.") {
  params.validate();
  Tensor shift(params.input_mean.shape());
  Tensor inv_std(params.input_std.shape());
  for (std::size_t d = 0; d < shift.size(); ++d) {
    shift[d] = -params.input_mean[d];
    inv_std[d] = 1.0 / params.input_std[d];
  }
  in_shift_ = graph.constant(std::move(shift));
  in_inv_std_ = graph.constant(std::move(inv_std));
  out_mean_ = graph.constant(params.output_mean);
  out_std_ = graph.constant(params.output_std);
}

Var ModelGraph::normalize_input(Var features) const {
  return graph_->mul_bias(graph_->add_bias(features, in_shift_), in_inv_std_);
}

Var ModelGraph::denormalize_output(Var normalized) const {
  return graph_->add_bias(graph_->mul_bias(normalized, out_std_), out_mean_);
}

NetOutput ModelGraph::encode(Var features, const NetState& state, const DropoutMasks* masks) const {
  return encoder_.forward(normalize_input(features), state, masks);
}

NetOutput ModelGraph::decode(Var latents, const Tensor& code, const NetState& state,
                             const DropoutMasks* masks) const {
  if (code.size() != config_.speaker_code_dim) {
    throw ShapeError("speaker code has " + std::to_string(code.size()) + " values, expected " +
                     std::to_string(config_.speaker_code_dim));
  }
  if (latents.shape().rank() != 2 || latents.shape()[1] != config_.latent_dim) {
    throw ShapeError("latents " + latents.shape().str() + " do not have " +
                     std::to_string(config_.latent_dim) + " dims");
  }
  const std::size_t frames = latents.shape()[0];
  Tensor codes(Shape{frames, code.size()});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < code.size(); ++c) codes(t, c) = code[c];
  const Var parts[2] = {latents, graph_->constant(std::move(codes))};
  NetOutput out = decoder_.forward(graph_->concat(parts, 1), state, masks);
  out.output = denormalize_output(out.output);
  return out;
}

LatentGaussian encoder_forward(const Tensor& features, const ModelParams& params) {
  Graph g;
  ModelGraph model(g, params);
  const NetOutput out =
      model.encode(g.constant(features), NetState::zeros(params.config.encoder()), nullptr);
  const Tensor& value = g.forward(out.output);
  if (!value.all_finite()) throw DivergenceError("encoder produced non-finite output");
  const std::size_t dz = params.config.latent_dim;
  return LatentGaussian{value.col_range(0, dz), value.col_range(dz, 2 * dz)};
}

Tensor decoder_forward(const Tensor& latents, const Tensor& code, const ModelParams& params) {
  Graph g;
  ModelGraph model(g, params);
  const NetOutput out =
      model.decode(g.constant(latents), code, NetState::zeros(params.config.decoder()), nullptr);
  const Tensor& value = g.forward(out.output);
  if (!value.all_finite()) throw DivergenceError("decoder produced non-finite output");
  return value;
}

namespace {

const NetGraph& pick(const ModelGraph& model, const std::string& net) {
  if (net == "enc") return model.encoder();
  if (net == "dec") return model.decoder();
  throw ConfigError("unknown network '" + net + "' (expected enc or dec)");
}

}  // namespace

Tensor dilated_context(const Tensor& sequence, const ModelParams& params, const std::string& net) {
  Graph g;
  ModelGraph model(g, params);
  return g.forward(pick(model, net).context(g.constant(sequence), nullptr));
}

GruStepResult gru_step(const ModelParams& params, const std::string& net, const NetState& state,
                       const Tensor& context_row) {
  Graph g;
  ModelGraph model(g, params);
  const NetGraph& n = pick(model, net);
  const StepOutput s = n.step(n.input_gates(g.constant(context_row)), g.constant(state.hidden),
                              g.constant(state.feedback), nullptr);
  GruStepResult result;
  result.hidden = g.forward(s.hidden);
  result.state = NetState{result.hidden, g.forward(s.output)};
  return result;
}

}  // namespace cyclevae
