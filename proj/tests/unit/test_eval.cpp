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
#include <limits>

#include "cyclevae/error.hpp"
#include "cyclevae/eval.hpp"
#include "cyclevae/synthetic.hpp"
#include "cyclevae/trainer.hpp"
#include "test_util.hpp"

using namespace cyclevae;
using cyclevae::testing::random_tensor;

namespace {

const double kUnitMcd = 10.0 / std::log(10.0) * std::sqrt(2.0);

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n, 1}, std::move(v));
}

// Exhaustive minimum over monotonic paths, summing front to back.
void enumerate(const Tensor& a, const Tensor& b, std::size_t i, std::size_t j, double acc,
               double& best) {
  acc += l2_distance(a.row(i), b.row(j));
  if (i + 1 == a.rows() && j + 1 == b.rows()) {
    best = std::min(best, acc);
    return;
  }
  if (i + 1 < a.rows() && j + 1 < b.rows()) enumerate(a, b, i + 1, j + 1, acc, best);
  if (i + 1 < a.rows()) enumerate(a, b, i + 1, j, acc, best);
  if (j + 1 < b.rows()) enumerate(a, b, i, j + 1, acc, best);
}

double brute_force_cost(const Tensor& a, const Tensor& b) {
  double best = std::numeric_limits<double>::infinity();
  enumerate(a, b, 0, 0, 0.0, best);
  return best;
}

void check_path(const AlignmentPath& p, std::size_t n, std::size_t m) {
  REQUIRE(!p.pairs.empty());
  CHECK(p.pairs.front() == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(p.pairs.back() == std::pair<std::size_t, std::size_t>{n - 1, m - 1});
  for (std::size_t k = 1; k < p.pairs.size(); ++k) {
    const std::size_t di = p.pairs[k].first - p.pairs[k - 1].first;
    const std::size_t dj = p.pairs[k].second - p.pairs[k - 1].second;
    CHECK(di <= 1);
    CHECK(dj <= 1);
    CHECK(di + dj >= 1);
  }
}

Tensor spectra_with_variance(std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor(Shape{frames, kSpectralDim}, rng, -2.0, 2.0);
}

std::vector<double> column_variance(const Tensor& s, std::size_t d, double* mean_out = nullptr) {
  double mean = 0.0;
  for (std::size_t t = 0; t < s.rows(); ++t) mean += s(t, d);
  mean /= static_cast<double>(s.rows());
  double var = 0.0;
  for (std::size_t t = 0; t < s.rows(); ++t) var += (s(t, d) - mean) * (s(t, d) - mean);
  if (mean_out) *mean_out = mean;
  return {var / static_cast<double>(s.rows())};
}

}  // namespace

TEST_CASE("dtw examples") {
  const Tensor a = column({0, 1});
  const Tensor b = column({0, 1, 1});
  const AlignmentPath p = dtw_align(a, b, l2_distance);
  CHECK(p.cost == 0.0);
  using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(p.pairs == Pairs{{0, 0}, {1, 1}, {1, 2}});

  Rng rng(1);
  const Tensor s = random_tensor(Shape{5, 3}, rng);
  const AlignmentPath self = dtw_align(s, s, l2_distance);
  CHECK(self.cost == 0.0);
  CHECK(self.pairs == Pairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}});

  CHECK_THROWS_AS(dtw_align(s, Tensor(Shape{2, 4}), l2_distance), ShapeError);
}

TEST_CASE("dtw cost equals exhaustive enumeration") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(6);
    const std::size_t m = 1 + rng.index(6);
    const std::size_t dim = 1 + rng.index(3);
    const Tensor a = random_tensor(Shape{n, dim}, rng);
    const Tensor b = random_tensor(Shape{m, dim}, rng);
    const AlignmentPath p = dtw_align(a, b, l2_distance);
    CHECK(p.cost == brute_force_cost(a, b));
    check_path(p, n, m);
    double along = 0.0;
    for (const auto& [i, j] : p.pairs) along += l2_distance(a.row(i), b.row(j));
    CHECK(along == p.cost);
    CHECK(dtw_align(b, a, l2_distance).cost == doctest::Approx(p.cost).epsilon(1e-14));
  }
}

TEST_CASE("mcd unit values") {
  Rng rng(3);
  const Tensor a = random_tensor(Shape{6, kSpectralDim}, rng);
  const AlignmentPath self = dtw_align(a, a, mcd_frame);
  CHECK(mcd(a, a, self).mcd_db == 0.0);

  Tensor x(Shape{1, kSpectralDim}), y(Shape{1, kSpectralDim});
  y(0, 7) = 1.0;
  AlignmentPath one;
  one.pairs = {{0, 0}};
  CHECK(std::abs(mcd(x, y, one).mcd_db - kUnitMcd) < 1e-9);
  CHECK(std::abs(kUnitMcd - 6.14185) < 1e-5);

  // power coefficient excluded
  Tensor z = x;
  z(0, 0) = 5.0;
  CHECK(mcd(x, z, one).mcd_db == 0.0);
  CHECK_THROWS_AS(mcd(Tensor(Shape{1, 34}), Tensor(Shape{1, 34}), one), ShapeError);
  CHECK_NOTHROW(mcd(Tensor(Shape{1, 34}), Tensor(Shape{1, 34}), one, 0));
}

TEST_CASE("mcd homogeneity and symmetry") {
  Rng rng(4);
  const Tensor a = random_tensor(Shape{8, kSpectralDim}, rng);
  const Tensor b = random_tensor(Shape{8, kSpectralDim}, rng);
  AlignmentPath diag;
  for (std::size_t t = 0; t < 8; ++t) diag.pairs.push_back({t, t});
  Tensor doubled = a;
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t d = 0; d < kSpectralDim; ++d) doubled(t, d) = a(t, d) + 2.0 * (b(t, d) - a(t, d));
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(mcd_frame(a.row(t), doubled.row(t)) ==
          doctest::Approx(2.0 * mcd_frame(a.row(t), b.row(t))).epsilon(1e-12));
  }
  const McdReport r = mcd(a, b, diag);
  CHECK(r.mcd_db == mcd(b, a, diag).mcd_db);
  CHECK(r.frames_used == 8);
  CHECK(r.mcd_db > 0.0);

  AlignmentPath bad = diag;
  bad.pairs[3] = {4, 2};
  CHECK_THROWS_AS(mcd(a, b, bad), DataError);
  AlignmentPath short_path;
  short_path.pairs = {{0, 0}, {1, 1}};
  CHECK_THROWS_AS(mcd(a, b, short_path), DataError);
}

TEST_CASE("gv postfilter properties") {
  const Tensor s = spectra_with_variance(40, 5);
  Rng rng(6);
  std::vector<double> gv(kSpectralDim);
  for (double& v : gv) v = rng.uniform(0.05, 3.0);
  const Tensor out = gv_postfilter(s, gv);
  for (std::size_t t = 0; t < 40; ++t) CHECK(out(t, 0) == s(t, 0));
  for (std::size_t d = 1; d < kSpectralDim; ++d) {
    double m_in = 0.0, m_out = 0.0;
    column_variance(s, d, &m_in);
    CHECK(std::abs(column_variance(out, d, &m_out)[0] - gv[d]) < 1e-9);
    CHECK(std::abs(m_out - m_in) < 1e-9);
  }
  CHECK(max_abs_diff(gv_postfilter(out, gv), out) < 1e-9);

  std::vector<double> own(kSpectralDim);
  for (std::size_t d = 0; d < kSpectralDim; ++d) own[d] = column_variance(s, d)[0];
  CHECK(max_abs_diff(gv_postfilter(s, own), s) < 1e-12);

  Tensor flat = s;
  for (std::size_t t = 0; t < 40; ++t) flat(t, 4) = 0.7;
  const Tensor kept = gv_postfilter(flat, gv);
  for (std::size_t t = 0; t < 40; ++t) CHECK(kept(t, 4) == 0.7);

  CHECK_THROWS_AS(gv_postfilter(s, std::vector<double>(3)), ShapeError);
}

TEST_CASE("latent cosine examples") {
  Rng rng(7);
  const Tensor mu = random_tensor(Shape{9, 4}, rng);
  CHECK(latent_cosine(mu, mu).mean == doctest::Approx(1.0).epsilon(1e-15));

  Tensor twice = mu;
  for (double& v : twice.data()) v *= 2.0;
  CHECK(latent_cosine(mu, twice).mean == doctest::Approx(1.0).epsilon(1e-15));

  const Tensor e0 = Tensor::matrix({{1, 0}, {1, 0}, {1, 0}});
  const Tensor e1 = Tensor::matrix({{0, 1}, {0, 1}});
  const LatentCosine orth = latent_cosine(e0, e1);
  CHECK(orth.mean == 0.0);
  CHECK(orth.pairs >= 3);

  const Tensor with_zero = Tensor::matrix({{1, 0}, {0, 0}, {1, 0}});
  const LatentCosine skip = latent_cosine(with_zero, with_zero);
  CHECK(skip.skipped == 1);
  CHECK(skip.pairs == 2);
  CHECK(skip.mean == 1.0);

  for (int trial = 0; trial < 50; ++trial) {
    const LatentCosine c = latent_cosine(random_tensor(Shape{1 + rng.index(8), 3}, rng),
                                         random_tensor(Shape{1 + rng.index(8), 3}, rng));
    CHECK(c.mean >= -1.0);
    CHECK(c.mean <= 1.0);
  }
}

TEST_CASE("conversion on a trained model") {
  SyntheticConfig sc;
  sc.n_utts = 4;
  sc.frames_per_utt = 100;
  const SyntheticCorpus synth = gen_synthetic_corpus(sc);
  TrainData data;
  data.corpus = synth.source;
  data.corpus.insert(data.corpus.end(), synth.target.begin(), synth.target.end());
  data.stats = compute_stats(data.corpus);

  TrainConfig tc;
  tc.mode = TrainMode::kVae;
  tc.epochs = 15;
  tc.learning_rate = 3e-3;
  tc.model.hidden_units = 16;
  tc.model.latent_dim = 8;
  tc.holdout_per_speaker = 0;
  const ModelParams params = train(tc, data).params;

  const UtteranceFeatures& src = synth.source[0].features;
  const double threshold = default_speech_threshold(data.stats, kExcitationDim);

  SUBCASE("deterministic, with pass-through excitation flags") {
    const UtteranceFeatures a = convert_utterance(params, src, "spk_b", data.stats, true);
    const UtteranceFeatures b = convert_utterance(params, src, "spk_b", data.stats, true);
    CHECK(encode_features(a) == encode_features(b));
    CHECK(a.speaker_id == "spk_b");
    CHECK(a.speech_flags == src.speech_flags);
    CHECK(a.frames() == src.frames());
    for (std::size_t t = 0; t < src.frames(); ++t) {
      CHECK(a.excitation(t, kVoicedDim) == src.excitation(t, kVoicedDim));
      CHECK(a.excitation(t, 2) == src.excitation(t, 2));
    }
    CHECK_THROWS_AS(convert_utterance(params, src, "spk_c", data.stats, false), DataError);
    UtteranceFeatures silent = src;
    silent.speech_flags = std::vector<std::uint8_t>(src.frames(), 0);
    CHECK_THROWS_AS(speech_mcd(silent, src, threshold), DataError);
  }

  SUBCASE("same-speaker conversion approximates the input") {
    const UtteranceFeatures same = convert_utterance(params, src, "spk_a", data.stats, false);
    CHECK(same.excitation == src.excitation);
    Rng rng(8);
    UtteranceFeatures noise = src;
    for (std::size_t t = 0; t < src.frames(); ++t)
      for (std::size_t d = 0; d < kSpectralDim; ++d)
        noise.spectra(t, d) = data.stats.feat_mean[kExcitationDim + d] +
                              data.stats.feat_std[kExcitationDim + d] * rng.normal();
    const double out_mcd = speech_mcd(same, src, threshold).mcd_db;
    const double noise_mcd = speech_mcd(noise, src, threshold).mcd_db;
    INFO("identity " << out_mcd << " dB, noise " << noise_mcd << " dB");
    CHECK(out_mcd < noise_mcd);
  }

  SUBCASE("utterance latent cosine") {
    const LatentCosine self = latent_cosine(src, src, params, threshold);
    CHECK(self.mean == doctest::Approx(1.0).epsilon(1e-12));
    const LatentCosine pair = latent_cosine(src, synth.target[0].features, params, threshold);
    CHECK(pair.mean <= 1.0);
    CHECK(pair.pairs > 0);
  }

  SUBCASE("corpus report") {
    const EvalReport report = evaluate_corpus(params, data.stats, data.corpus);
    CHECK(report.utterances.size() == 8);
    for (const UtteranceEval& u : report.utterances) {
      CHECK(u.has_reference);
      CHECK(u.source_speaker != u.target_speaker);
      CHECK(u.init_mcd > 0.0);
      CHECK(u.cv_frames > 0);
    }
    REQUIRE(report.mean_cv_mcd().has_value());
    const auto j = report_to_json(report);
    for (const char* key : {"aggregate", "utterances", "notes"}) CHECK(j.contains(key));
    for (const char* key : {"rec_mcd_db", "init_mcd_db", "cv_mcd_db", "pf_mcd_db", "latent_cosine"})
      CHECK(j["aggregate"].contains(key));
    for (const char* key : {"name", "source", "target", "cv_mcd_db", "frames_used", "latent_cosine"})
      CHECK(j["utterances"][0].contains(key));
    CHECK(j["utterances"].size() == 8);

    const EvalReport unpaired = evaluate_corpus(params, data.stats, synth.source);
    CHECK_FALSE(unpaired.mean_cv_mcd().has_value());
    CHECK_FALSE(unpaired.notes.empty());
    CHECK_THROWS_AS(evaluate_corpus(params, data.stats, {}), DataError);
  }
}
