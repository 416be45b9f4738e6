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
#include <doctest.h>

#include <cmath>
#include <set>

#include "cyclevae/error.hpp"
#include "cyclevae/net.hpp"
#include "cyclevae/objective.hpp"
#include "test_util.hpp"

using namespace cyclevae;
using cyclevae::testing::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden_units = 8;
  c.latent_dim = 4;
  return c;
}

ModelParams random_params(const ModelConfig& config, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  ModelParams p = ModelParams::zeros(config);
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    p.weights[spec.name] = random_tensor(spec.shape, rng, -scale, scale);
  }
  for (double& v : p.input_mean.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.input_std.data()) v = rng.uniform(0.5, 2.0);
  for (double& v : p.output_mean.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.output_std.data()) v = rng.uniform(0.5, 2.0);
  return p;
}

// Independent count: conv layers keep channels, each GRU gate has input,
// recurrent, feedback and bias blocks.
std::size_t expected_count(std::size_t in, std::size_t out, std::size_t hidden,
                           std::size_t kernel, std::size_t layers) {
  const std::size_t conv = layers * (kernel * in * in + in);
  const std::size_t gate = in * hidden + hidden * hidden + out * hidden + hidden;
  return conv + 3 * gate + hidden * out + out;
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t r) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    if (a(r, c) != b(r, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("normalize examples and errors") {
  const Tensor x = Tensor::matrix({{3.0}});
  const Tensor mean = Tensor::vector({1.0});
  const Tensor std = Tensor::vector({2.0});
  CHECK(normalize(x, mean, std)(0, 0) == 1.0);
  CHECK(normalize(Tensor::matrix({{1.0}}), mean, std)(0, 0) == 0.0);
  CHECK_THROWS_AS(normalize(x, mean, Tensor::vector({0.0})), ConfigError);
  CHECK_THROWS_AS(normalize(x, mean, Tensor::vector({-1.0})), ConfigError);
  CHECK_THROWS_AS(normalize(x, Tensor::vector({1.0, 2.0}), Tensor::vector({1.0, 1.0})), ShapeError);
}

TEST_CASE("normalize and denormalize are inverse") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(Shape{7, 5}, rng, -10.0, 10.0);
    const Tensor mean = random_tensor(Shape{5}, rng, -3.0, 3.0);
    const Tensor std = random_tensor(Shape{5}, rng, 0.1, 4.0);
    CHECK(max_abs_diff(denormalize(normalize(x, mean, std), mean, std), x) < 1e-12);
    CHECK(max_abs_diff(normalize(denormalize(x, mean, std), mean, std), x) < 1e-12);
  }
}

TEST_CASE("speaker codes") {
  CHECK(speaker_code(0, 1)[0] == 0.0);
  CHECK(speaker_code(1, 1)[0] == 1.0);
  const Tensor onehot = speaker_code(1, 2);
  CHECK(onehot[0] == 0.0);
  CHECK(onehot[1] == 1.0);
  CHECK_THROWS_AS(speaker_code(2, 1), DataError);
}

TEST_CASE("parameter count closed form") {
  const ModelConfig c;  // defaults
  CHECK(c.encoder().context_frames() == 4);
  const std::size_t enc = expected_count(39, 32, 32, 3, 2);
  const std::size_t dec = expected_count(17, 35, 32, 3, 2);
  CHECK(enc == 20244);
  CHECK(dec == 11083);
  CHECK(c.encoder().parameter_count() == enc);
  CHECK(c.decoder().parameter_count() == dec);
  CHECK(ModelParams::zeros(c).trainable_count() == 31327);

  const ModelConfig s = small_config();
  CHECK(ModelParams::zeros(s).trainable_count() ==
        expected_count(39, 8, 8, 3, 2) + expected_count(5, 35, 8, 3, 2));
}

TEST_CASE("parameter names are unique and prefixed") {
  const auto specs = model_parameter_specs(ModelConfig{});
  std::set<std::string> names;
  for (const ParamSpec& s : specs) {
    CHECK(names.insert(s.name).second);
    CHECK((s.name.rfind("enc.", 0) == 0 || s.name.rfind("dec.", 0) == 0));
  }
  CHECK(names.count("enc.gru.update.feedback") == 1);
  CHECK(names.count("dec.out.bias") == 1);
}

TEST_CASE("model params validation") {
  ModelParams p = ModelParams::zeros(small_config());
  CHECK_NOTHROW(p.validate());
  ModelParams bad_std = p;
  bad_std.output_std[3] = 0.0;
  CHECK_THROWS_AS(bad_std.validate(), ConfigError);
  ModelParams missing = p;
  missing.weights.erase("dec.out.weight");
  CHECK_THROWS_AS(missing.validate(), ShapeError);
  ModelParams wrong = p;
  wrong.weights["enc.out.bias"] = Tensor(Shape{3});
  CHECK_THROWS_AS(wrong.validate(), ShapeError);
}

TEST_CASE("dilated context receptive field") {
  const ModelParams p = random_params(small_config(), 11);
  Rng rng(12);
  const std::size_t frames = 20;
  const std::size_t t = 8;
  const Tensor seq = random_tensor(Shape{frames, 39}, rng);
  const Tensor base = dilated_context(seq, p, "enc");
  CHECK(base.shape() == Shape{frames, 39});

  for (std::size_t far : {t + 5, t + 9, std::size_t{2}}) {  // t-6 is also outside
    Tensor moved = seq;
    for (std::size_t c = 0; c < 39; ++c) moved(far, c) += 5.0;
    CHECK(rows_equal(dilated_context(moved, p, "enc"), base, t));
  }
  for (std::size_t near : {t + 4, t - 4}) {
    Tensor moved = seq;
    for (std::size_t c = 0; c < 39; ++c) moved(near, c) += 5.0;
    CHECK_FALSE(rows_equal(dilated_context(moved, p, "enc"), base, t));
  }
}

TEST_CASE("encoder does not look more than four frames ahead") {
  const ModelParams p = random_params(small_config(), 21);
  Rng rng(22);
  const Tensor x = random_tensor(Shape{16, 39}, rng, -2.0, 2.0);
  const LatentGaussian base = encoder_forward(x, p);
  for (std::size_t t = 0; t < 10; ++t) {
    Tensor far = x;
    for (std::size_t c = 0; c < 39; ++c) far(t + 5, c) += 3.0;
    const LatentGaussian moved = encoder_forward(far, p);
    for (std::size_t s = 0; s <= t; ++s) {
      CHECK(rows_equal(moved.mu, base.mu, s));
      CHECK(rows_equal(moved.logvar, base.logvar, s));
    }
    Tensor near = x;
    for (std::size_t c = 0; c < 39; ++c) near(t + 4, c) += 3.0;
    CHECK_FALSE(rows_equal(encoder_forward(near, p).mu, base.mu, t));
  }
}

TEST_CASE("zero weights") {
  const ModelConfig c = small_config();
  Rng rng(5);
  Tensor in_mean = random_tensor(Shape{39}, rng);
  Tensor out_mean = random_tensor(Shape{35}, rng);
  const ModelParams p = ModelParams::zeros(c, in_mean, Tensor(Shape{39}, 2.0), out_mean,
                                           Tensor(Shape{35}, 3.0));
  const Tensor seq = random_tensor(Shape{6, 39}, rng);
  const Tensor ctx = dilated_context(seq, p, "enc");
  for (double v : ctx.data()) CHECK(v == 0.0);

  const LatentGaussian lg = encoder_forward(seq, p);
  CHECK(lg.mu.shape() == Shape{6, 4});
  for (double v : lg.mu.data()) CHECK(v == 0.0);

  const Tensor out = decoder_forward(random_tensor(Shape{6, 4}, rng), speaker_code(1, 1), p);
  CHECK(out.shape() == Shape{6, 35});
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t d = 0; d < 35; ++d) CHECK(out(t, d) == out_mean[d]);
}

TEST_CASE("gru step examples") {
  ModelConfig c = small_config();
  c.hidden_units = 1;
  const ModelParams p = ModelParams::zeros(c);
  NetState s = NetState::zeros(c.encoder());
  s.hidden(0, 0) = 1.0;
  const Tensor ctx(Shape{1, 39});
  GruStepResult r = gru_step(p, "enc", s, ctx);
  CHECK(r.hidden(0, 0) == 0.5);
  CHECK(r.state.hidden(0, 0) == 0.5);

  r = gru_step(p, "enc", NetState::zeros(c.encoder()), ctx);
  CHECK(r.hidden(0, 0) == 0.0);
  for (double v : r.state.feedback.data()) CHECK(v == 0.0);
}

TEST_CASE("gru step uses feedback and is deterministic") {
  const ModelParams p = random_params(small_config(), 31);
  Rng rng(32);
  NetState s = NetState::zeros(small_config().decoder());
  const Tensor ctx = random_tensor(Shape{1, 5}, rng);
  const GruStepResult a = gru_step(p, "dec", s, ctx);
  const GruStepResult b = gru_step(p, "dec", s, ctx);
  CHECK(a.hidden == b.hidden);
  CHECK(a.state.feedback == b.state.feedback);
  CHECK(a.state.feedback.shape() == Shape{1, 35});
  s.feedback = random_tensor(Shape{1, 35}, rng);
  CHECK_FALSE(gru_step(p, "dec", s, ctx).hidden == a.hidden);
}

TEST_CASE("eval forward is deterministic with expected shapes") {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 41);
  Rng rng(42);
  const Tensor x = random_tensor(Shape{12, 39}, rng);
  const LatentGaussian a = encoder_forward(x, p);
  const LatentGaussian b = encoder_forward(x, p);
  CHECK(a.mu.shape() == Shape{12, 4});
  CHECK(a.logvar.shape() == Shape{12, 4});
  CHECK(a.mu == b.mu);
  CHECK(a.logvar == b.logvar);
  CHECK_THROWS_AS(encoder_forward(Tensor(Shape{12, 38}), p), ShapeError);
}

TEST_CASE("decoder depends on the speaker code") {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 51);
  Rng rng(52);
  const Tensor z = random_tensor(Shape{10, 4}, rng);
  const Tensor x = decoder_forward(z, speaker_code(0, 1), p);
  const Tensor y = decoder_forward(z, speaker_code(1, 1), p);
  CHECK(max_abs_diff(x, y) > 1e-6);
  CHECK_THROWS_AS(decoder_forward(z, speaker_code(1, 2), p), ShapeError);
  CHECK_THROWS_AS(decoder_forward(Tensor(Shape{10, 3}), speaker_code(0, 1), p), ShapeError);
}

TEST_CASE("train mode forward is deterministic given the masks") {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 61);
  Rng data(62);
  const Tensor x = random_tensor(Shape{9, 39}, data);
  const auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    const DropoutMasks m = DropoutMasks::draw(c.encoder(), 9, 0.5, rng);
    Graph g;
    ModelGraph model(g, p);
    return g.forward(model.encode(g.constant(x), NetState::zeros(c.encoder()), &m).output);
  };
  CHECK(run(7) == run(7));
  CHECK_FALSE(run(7) == run(8));
}

TEST_CASE("KL gradient through the encoder") {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 71);
  Rng rng(72);
  const Tensor x = random_tensor(Shape{5, 39}, rng, -2.0, 2.0);
  ParamMap enc;
  for (const auto& [name, t] : p.weights)
    if (name.rfind("enc.", 0) == 0) enc[name] = t;
  const ScalarFn fn = [&](Graph& g, const VarMap& vars) {
    VarMap all = vars;
    for (const auto& [name, t] : p.weights)
      if (!all.count(name)) all[name] = g.constant(t);
    ModelGraph model(g, p, all);
    const NetOutput out = model.encode(g.constant(x), NetState::zeros(c.encoder()), nullptr);
    const Var mu = g.slice(out.output, 1, 0, c.latent_dim);
    const Var logvar = g.slice(out.output, 1, c.latent_dim, 2 * c.latent_dim);
    return kl_to_standard_normal(mu, logvar);
  };
  const GradCheckReport r = grad_check(fn, enc, 1e-5);
  INFO("worst " << r.worst_parameter << " analytic " << r.worst_analytic << " numeric "
                << r.worst_numeric);
  CHECK(r.entries_checked == c.encoder().parameter_count());
  CHECK(r.max_relative_error < 1e-4);
}
