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

#include "cyclevae/objective.hpp"

#include <cmath>
#include <optional>

#include "cyclevae/error.hpp"

namespace cyclevae {

const char* mode_name(TrainMode mode) { return mode == TrainMode::kVae ? "vae" : "cyclevae"; }

TrainMode parse_mode(std::string_view name) {
  if (name == "vae") return TrainMode::kVae;
  if (name == "cyclevae") return TrainMode::kCycleVae;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected vae or cyclevae)");
}

namespace {

bool is_encoder_slot(std::size_t slot) { return slot == kEncodeReal || slot == kEncodeConv; }

Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

CycleNoise CycleNoise::draw(const ModelConfig& config, std::size_t frames, std::size_t cycles, Rng& rng) {
  CycleNoise noise;
  for (std::size_t n = 0; n < cycles; ++n) {
    noise.eps_real.push_back(normal_tensor(frames, config.latent_dim, rng));
  }
  for (std::size_t n = 0; n < cycles; ++n) {
    noise.eps_conv.push_back(normal_tensor(frames, config.latent_dim, rng));
  }
  const double keep = 1.0 - config.dropout_prob;
  const NetConfig enc = config.encoder();
  const NetConfig dec = config.decoder();
  for (std::size_t p = 0; p < cycles * kPassesPerCycle; ++p) {
    noise.masks.push_back(
        DropoutMasks::draw(is_encoder_slot(p % kPassesPerCycle) ? enc : dec, frames, keep, rng));
  }
  return noise;
}

CycleNoise CycleNoise::deterministic(const ModelConfig& config, std::size_t frames, std::size_t cycles) {
  CycleNoise noise;
  for (std::size_t n = 0; n < cycles; ++n) {
    noise.eps_real.emplace_back(Shape{frames, config.latent_dim});
    noise.eps_conv.emplace_back(Shape{frames, config.latent_dim});
  }
  return noise;
}

const DropoutMasks* CycleNoise::pass_masks(std::size_t cycle, PassSlot slot) const {
  if (masks.empty()) return nullptr;
  return &masks.at(cycle * kPassesPerCycle + slot);
}

Var kl_to_standard_normal(Var mu, Var logvar) {
  Graph& g = *mu.graph;
  const double count = static_cast<double>(mu.shape().numel());
  const Var inner = exp(logvar) + square(mu) - logvar;
  return g.scale(sum(inner) - g.constant(Tensor::scalar(count)), 0.5);
}

Var sample_latent(Var mu, Var logvar, Var epsilon) {
  Graph& g = *mu.graph;
  return mu + exp(g.scale(logvar, 0.5)) * epsilon;
}

Var recon_loglik(Var s_hat, Var s_obs) {
  return s_hat.graph->scale(sum(square(s_obs - s_hat)), -0.5);
}

double kl_to_standard_normal(const Tensor& mu, const Tensor& logvar) {
  Graph g;
  return g.forward(kl_to_standard_normal(g.constant(mu), g.constant(logvar))).item();
}

Tensor sample_latent(const Tensor& mu, const Tensor& logvar, const Tensor& epsilon) {
  Graph g;
  return g.forward(sample_latent(g.constant(mu), g.constant(logvar), g.constant(epsilon)));
}

double recon_loglik(const Tensor& s_hat, const Tensor& s_obs) {
  Graph g;
  return g.forward(recon_loglik(g.constant(s_hat), g.constant(s_obs))).item();
}

std::vector<NetState> initial_pass_states(const ModelConfig& config, std::size_t cycles) {
  std::vector<NetState> states;
  const NetState enc = NetState::zeros(config.encoder());
  const NetState dec = NetState::zeros(config.decoder());
  for (std::size_t p = 0; p < cycles * kPassesPerCycle; ++p) {
    states.push_back(is_encoder_slot(p % kPassesPerCycle) ? enc : dec);
  }
  return states;
}

CycleVars cycle_step(const ModelGraph& model, Var input, const SegmentInput& seg, std::size_t cycle,
                     TrainMode mode, const CycleNoise& noise, std::span<const NetState> states,
                     CycleGraph& out) {
  Graph& g = model.graph();
  const std::size_t dz = model.config().latent_dim;
  const std::size_t base = cycle * kPassesPerCycle;
  if (states.size() < base + kPassesPerCycle || noise.eps_real.size() <= cycle ||
      noise.eps_conv.size() <= cycle) {
    throw ConfigError("cycle " + std::to_string(cycle + 1) + " has no noise or state allocated");
  }
  const auto record = [&](PassSlot slot, const NetOutput& o) {
    out.passes[base + slot] = o;
    out.built[base + slot] = true;
  };

  CycleVars v;
  v.input = input;
  const Var observed = g.constant(seg.spectra);

  const NetOutput enc = model.encode(input, states[base + kEncodeReal], noise.pass_masks(cycle, kEncodeReal));
  record(kEncodeReal, enc);
  v.mu_real = g.slice(enc.output, 1, 0, dz);
  v.logvar_real = g.slice(enc.output, 1, dz, 2 * dz);
  v.z_real = sample_latent(v.mu_real, v.logvar_real, g.constant(noise.eps_real[cycle]));

  const NetOutput rec = model.decode(v.z_real, seg.code_x, states[base + kDecodeRec],
                                     noise.pass_masks(cycle, kDecodeRec));
  record(kDecodeRec, rec);
  v.s_rec = rec.output;
  v.kl_real = kl_to_standard_normal(v.mu_real, v.logvar_real);
  v.loglik_rec = recon_loglik(v.s_rec, observed);

  if (mode == TrainMode::kVae) return v;

  const NetOutput conv = model.decode(v.z_real, seg.code_y, states[base + kDecodeConv],
                                      noise.pass_masks(cycle, kDecodeConv));
  record(kDecodeConv, conv);
  v.s_conv = conv.output;
  const Var converted_parts[2] = {g.constant(seg.converted_excitation), v.s_conv};
  v.converted = g.concat(converted_parts, 1);

  const NetOutput enc2 = model.encode(v.converted, states[base + kEncodeConv],
                                      noise.pass_masks(cycle, kEncodeConv));
  record(kEncodeConv, enc2);
  v.mu_conv = g.slice(enc2.output, 1, 0, dz);
  v.logvar_conv = g.slice(enc2.output, 1, dz, 2 * dz);
  v.z_conv = sample_latent(v.mu_conv, v.logvar_conv, g.constant(noise.eps_conv[cycle]));

  const NetOutput cyc = model.decode(v.z_conv, seg.code_x, states[base + kDecodeCyc],
                                     noise.pass_masks(cycle, kDecodeCyc));
  record(kDecodeCyc, cyc);
  v.s_cyc = cyc.output;
  v.kl_converted = kl_to_standard_normal(v.mu_conv, v.logvar_conv);
  v.loglik_cyc = recon_loglik(v.s_cyc, observed);

  const Var next_parts[2] = {g.constant(seg.excitation), v.s_cyc};
  v.next_input = g.concat(next_parts, 1);
  v.has_converted = true;
  return v;
}

CycleGraph build_cycle_graph(const ModelGraph& model, const SegmentInput& seg, std::size_t cycles,
                             TrainMode mode, const CycleNoise& noise,
                             std::span<const NetState> states, TermMask mask) {
  if (cycles == 0) throw ConfigError("number of cycles must be at least 1");
  if (mode == TrainMode::kVae && cycles != 1) {
    throw ConfigError("the VAE objective has exactly one (real-path) cycle");
  }
  if (seg.excitation.rows() != seg.frames() || seg.converted_excitation.rows() != seg.frames()) {
    throw ShapeError("segment excitation and spectra lengths differ");
  }
  Graph& g = model.graph();
  CycleGraph cg;
  cg.passes.resize(cycles * kPassesPerCycle);
  cg.built.assign(cycles * kPassesPerCycle, false);

  Var input = g.constant(hconcat(seg.excitation, seg.spectra));
  bool have_total = false;
  for (std::size_t n = 0; n < cycles; ++n) {
    CycleVars v = cycle_step(model, input, seg, n, mode, noise, states, cg);
    // Per cycle: (loglik_rec - kl_real) + (loglik_cyc - kl_converted)
    const auto path = [&](bool use_loglik, Var loglik, bool use_kl, Var kl) -> std::optional<Var> {
      if (use_loglik && use_kl) return loglik - kl;
      if (use_loglik) return loglik;
      if (use_kl) return g.scale(kl, -1.0);
      return std::nullopt;
    };
    std::optional<Var> real = path(mask.loglik_rec, v.loglik_rec, mask.kl_real, v.kl_real);
    std::optional<Var> conv;
    if (v.has_converted) conv = path(mask.loglik_cyc, v.loglik_cyc, mask.kl_converted, v.kl_converted);
    const bool have_cycle = real || conv;
    Var cycle_total;
    if (real && conv) {
      cycle_total = *real + *conv;
    } else if (have_cycle) {
      cycle_total = real ? *real : *conv;
    }
    if (have_cycle) {
      cg.lower_bound = have_total ? cg.lower_bound + cycle_total : cycle_total;
      have_total = true;
    }
    if (v.has_converted) input = v.next_input;
    cg.cycles.push_back(v);
    if (mode == TrainMode::kVae) break;
  }
  if (!have_total) throw ConfigError("term mask disables every loss term");
  cg.objective = g.scale(cg.lower_bound, -1.0 / static_cast<double>(seg.frames()));
  return cg;
}

LossBreakdown read_breakdown(Graph& g, const CycleGraph& cg, std::size_t frames) {
  LossBreakdown b;
  b.frames = frames;
  const double objective = g.forward(cg.objective).item();
  if (!std::isfinite(objective)) throw DivergenceError("loss is not finite");
  b.objective = objective;
  b.lower_bound = g.value(cg.lower_bound).item();
  for (std::size_t n = 0; n < cg.cycles.size(); ++n) {
    const CycleVars& v = cg.cycles[n];
    CycleTerms t;
    t.kl_real = g.forward(v.kl_real).item();
    t.loglik_rec = g.forward(v.loglik_rec).item();
    if (v.has_converted) {
      t.kl_converted = g.forward(v.kl_converted).item();
      t.loglik_cyc = g.forward(v.loglik_cyc).item();
    }
    for (double x : {t.kl_real, t.loglik_rec, t.kl_converted, t.loglik_cyc}) {
      if (!std::isfinite(x)) throw DivergenceError("loss term of cycle " + std::to_string(n + 1) + " is not finite");
    }
    b.cycles.push_back(t);
  }
  return b;
}

std::vector<NetState> read_pass_states(Graph& g, const CycleGraph& cg,
                                       std::span<const NetState> previous) {
  std::vector<NetState> next(previous.begin(), previous.end());
  for (std::size_t p = 0; p < cg.passes.size() && p < next.size(); ++p) {
    if (!cg.built[p]) continue;
    next[p].hidden = g.forward(cg.passes[p].final_hidden);
    next[p].feedback = g.forward(cg.passes[p].final_feedback);
  }
  return next;
}

namespace {

SegmentInput split_features(const Tensor& features, const Tensor& converted_excitation,
                            const Tensor& code_x, const Tensor& code_y, const ModelConfig& config) {
  if (features.rank() != 2 || features.cols() != config.feature_dim()) {
    throw ShapeError("features " + features.shape().str() + " do not have " +
                     std::to_string(config.feature_dim()) + " dims");
  }
  SegmentInput seg;
  seg.excitation = features.col_range(0, config.excitation_dim);
  seg.spectra = features.col_range(config.excitation_dim, config.feature_dim());
  seg.converted_excitation = converted_excitation;
  seg.code_x = code_x;
  seg.code_y = code_y;
  return seg;
}

LossBreakdown evaluate_loss(const SegmentInput& seg, const ModelParams& params, std::size_t cycles,
                            TrainMode mode, Rng& rng) {
  const std::size_t noise_cycles = mode == TrainMode::kVae ? 1 : cycles;
  const CycleNoise noise = CycleNoise::draw(params.config, seg.frames(), noise_cycles, rng);
  Graph g;
  ModelGraph model(g, params);
  const auto states = initial_pass_states(params.config, noise_cycles);
  const CycleGraph cg = build_cycle_graph(model, seg, noise_cycles, mode, noise, states);
  return read_breakdown(g, cg, seg.frames());
}

}  // namespace

LossBreakdown vae_loss(const Tensor& features, const Tensor& code_x, const ModelParams& params, Rng& rng) {
  const SegmentInput seg = split_features(
      features, features.col_range(0, params.config.excitation_dim), code_x, code_x, params.config);
  return evaluate_loss(seg, params, 1, TrainMode::kVae, rng);
}

LossBreakdown cyclevae_loss(const Tensor& features, const Tensor& converted_excitation,
                            const Tensor& code_x, const Tensor& code_y, const ModelParams& params,
                            std::size_t cycles, Rng& rng) {
  if (cycles == 0) throw ConfigError("number of cycles must be at least 1");
  const SegmentInput seg = split_features(features, converted_excitation, code_x, code_y, params.config);
  return evaluate_loss(seg, params, cycles, TrainMode::kCycleVae, rng);
}

SegmentInput make_segment_input(const UtteranceFeatures& utt, const CorpusStats& stats,
                                std::size_t code_dim) {
  if (stats.speakers.size() != 2) {
    throw DataError("a one-to-one model needs exactly 2 speakers, statistics have " +
                    std::to_string(stats.speakers.size()));
  }
  const std::size_t x = stats.speaker_index(utt.speaker_id);
  const std::size_t y = 1 - x;
  const std::string other = stats.speaker_ids()[y];
  SegmentInput seg;
  seg.excitation = utt.excitation;
  seg.spectra = utt.spectra;
  seg.converted_excitation =
      build_converted_excitation(utt.excitation, stats.speaker(utt.speaker_id), stats.speaker(other));
  seg.code_x = speaker_code(x, code_dim);
  seg.code_y = speaker_code(y, code_dim);
  return seg;
}

double bidirectional_loss(std::span<const Utterance> batch, const ModelParams& params,
                          const CorpusStats& stats, std::size_t cycles, TrainMode mode, Rng& rng,
                          std::vector<LossBreakdown>* per_utterance) {
  if (batch.empty()) throw DataError("bidirectional_loss: empty batch");
  double total = 0.0;
  for (const Utterance& u : batch) {
    const SegmentInput seg = make_segment_input(u.features, stats, params.config.speaker_code_dim);
    const LossBreakdown b = evaluate_loss(seg, params, cycles, mode, rng);
    total += b.objective;
    if (per_utterance) per_utterance->push_back(b);
  }
  return total;
}

GradCheckReport check_objective_gradients(const ModelConfig& config, std::size_t frames,
                                          std::size_t cycles, TrainMode mode, std::uint64_t seed,
                                          double step) {
  config.validate();
  if (frames == 0) throw ConfigError("gradient check needs at least one frame");
  const std::size_t n = mode == TrainMode::kVae ? 1 : cycles;
  Rng rng(seed);
  const std::size_t dim = config.feature_dim();
  Tensor in_mean(Shape{dim}), in_std(Shape{dim});
  for (std::size_t d = 0; d < dim; ++d) {
    in_mean[d] = rng.uniform(-0.5, 0.5);
    in_std[d] = rng.uniform(0.5, 1.5);
  }
  Tensor out_mean = in_mean.reshaped(Shape{1, dim}).col_range(config.excitation_dim, dim).reshaped(Shape{config.spectral_dim});
  Tensor out_std = in_std.reshaped(Shape{1, dim}).col_range(config.excitation_dim, dim).reshaped(Shape{config.spectral_dim});
  ModelParams params = ModelParams::zeros(config, in_mean, in_std, out_mean, out_std);
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    const double bound = spec.is_bias ? 0.1 : std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
    for (double& v : params.weights.at(spec.name).data()) v = rng.uniform(-bound, bound);
  }

  SegmentInput seg;
  seg.excitation = Tensor(Shape{frames, config.excitation_dim});
  seg.spectra = Tensor(Shape{frames, config.spectral_dim});
  seg.converted_excitation = Tensor(Shape{frames, config.excitation_dim});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < config.excitation_dim; ++d) {
      seg.excitation(t, d) = in_mean[d] + in_std[d] * rng.normal();
      seg.converted_excitation(t, d) = in_mean[d] + in_std[d] * rng.normal();
    }
    for (std::size_t d = 0; d < config.spectral_dim; ++d) {
      seg.spectra(t, d) = out_mean[d] + 0.1 * out_std[d] * rng.normal();
    }
  }
  seg.code_x = speaker_code(0, config.speaker_code_dim);
  seg.code_y = speaker_code(1, config.speaker_code_dim);
  const CycleNoise noise = CycleNoise::draw(config, frames, n, rng);
  const std::vector<NetState> states = initial_pass_states(config, n);

  const ScalarFn fn = [&](Graph& g, const VarMap& vars) {
    ModelGraph model(g, params, vars);
    return build_cycle_graph(model, seg, n, mode, noise, states).objective;
  };
  return grad_check(fn, params.weights, step);
}

}  // namespace cyclevae
