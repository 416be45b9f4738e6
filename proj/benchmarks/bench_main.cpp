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

#include <benchmark/benchmark.h>

#include "cyclevae/autodiff.hpp"
#include "cyclevae/eval.hpp"
#include "cyclevae/net.hpp"
#include "cyclevae/objective.hpp"
#include "cyclevae/rng.hpp"

namespace {

using namespace cyclevae;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

ModelConfig bench_config(std::size_t hidden) {
  ModelConfig c;
  c.hidden_units = hidden;
  c.latent_dim = 8;
  return c;
}

ModelParams random_params(const ModelConfig& c, Rng& rng) {
  ModelParams p = ModelParams::zeros(c);
  for (const ParamSpec& spec : model_parameter_specs(c)) p.weights[spec.name] = random_tensor(spec.shape, rng, 0.1);
  return p;
}

void BM_GruStep(benchmark::State& state) {
  const ModelConfig c = bench_config(static_cast<std::size_t>(state.range(0)));
  Rng rng(1);
  const ModelParams p = random_params(c, rng);
  const Tensor ctx = random_tensor(Shape{1, c.encoder().input_dim}, rng);
  NetState s = NetState::zeros(c.encoder());
  for (auto _ : state) {
    GruStepResult r = gru_step(p, "enc", s, ctx);
    s = std::move(r.state);
    benchmark::DoNotOptimize(s.hidden.raw());
  }
}
BENCHMARK(BM_GruStep)->Arg(32)->Arg(128)->Arg(1024);

// One 80-frame TBPTT segment: graph build, forward and backward.
void BM_TrainingStep(benchmark::State& state) {
  const ModelConfig c = bench_config(32);
  const auto cycles = static_cast<std::size_t>(state.range(0));
  const TrainMode mode = cycles == 0 ? TrainMode::kVae : TrainMode::kCycleVae;
  const std::size_t n = cycles == 0 ? 1 : cycles;
  constexpr std::size_t kFrames = 80;
  Rng rng(2);
  const ModelParams p = random_params(c, rng);
  SegmentInput seg;
  seg.excitation = random_tensor(Shape{kFrames, c.excitation_dim}, rng);
  seg.spectra = random_tensor(Shape{kFrames, c.spectral_dim}, rng);
  seg.converted_excitation = random_tensor(Shape{kFrames, c.excitation_dim}, rng);
  seg.code_x = speaker_code(0, c.speaker_code_dim);
  seg.code_y = speaker_code(1, c.speaker_code_dim);
  for (auto _ : state) {
    const CycleNoise noise = CycleNoise::draw(c, kFrames, n, rng);
    Graph g;
    ModelGraph model(g, p);
    const CycleGraph cg = build_cycle_graph(model, seg, n, mode, noise, initial_pass_states(c, n));
    g.forward(cg.objective);
    g.backward(cg.objective);
    benchmark::DoNotOptimize(g.size());
  }
  state.SetItemsProcessed(state.iterations() * kFrames);
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Dtw(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor a = random_tensor(Shape{frames, kSpectralDim}, rng);
  const Tensor b = random_tensor(Shape{frames + frames / 10, kSpectralDim}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dtw_align(a, b, mcd_frame).cost);
}
BENCHMARK(BM_Dtw)->Arg(100)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  Rng rng(4);
  const Tensor a = random_tensor(Shape{m, k}, rng);
  const Tensor b = random_tensor(Shape{k, 3 * k}, rng);
  for (auto _ : state) {
    Graph g;
    const Var y = g.matmul(g.constant(a), g.parameter(b));
    const Var loss = g.sum(y);
    g.forward(loss);
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(y).raw());
  }
}
BENCHMARK(BM_Matmul)->Args({1, 32})->Args({80, 32})->Args({1, 1024})->Args({80, 128});

}  // namespace

BENCHMARK_MAIN();
