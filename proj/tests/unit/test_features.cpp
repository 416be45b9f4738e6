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
#include <filesystem>

#include "cyclevae/error.hpp"
#include "cyclevae/eval.hpp"
#include "cyclevae/features.hpp"
#include "cyclevae/synthetic.hpp"
#include "test_util.hpp"

using namespace cyclevae;
using cyclevae::testing::random_tensor;
using cyclevae::testing::read_bytes;
using cyclevae::testing::TempDir;

namespace {

// f32-representable values so a round trip through the file is exact.
UtteranceFeatures make_utt(std::size_t frames, std::uint64_t seed, const std::string& id,
                           bool flags) {
  Rng rng(seed);
  UtteranceFeatures u;
  u.speaker_id = id;
  u.excitation = Tensor(Shape{frames, kExcitationDim});
  u.spectra = Tensor(Shape{frames, kSpectralDim});
  for (std::size_t t = 0; t < frames; ++t) {
    u.excitation(t, kLogF0Dim) = static_cast<float>(rng.uniform(4.5, 5.5));
    u.excitation(t, kVoicedDim) = (t % 3 == 0) ? 0.0 : 1.0;
    u.excitation(t, 2) = static_cast<float>(rng.uniform(-1, 0));
    u.excitation(t, 3) = static_cast<float>(rng.uniform(-1, 0));
    for (std::size_t d = 0; d < kSpectralDim; ++d)
      u.spectra(t, d) = static_cast<float>(rng.uniform(-2, 2));
  }
  if (flags) {
    std::vector<std::uint8_t> f(frames);
    for (std::size_t t = 0; t < frames; ++t) f[t] = (t % 4 != 0);
    u.speech_flags = f;
  }
  return u;
}

FormatError::Code decode_error(std::string_view bytes) {
  try {
    decode_features(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  FAIL("expected a format error");
  return FormatError::Code::kCorrupt;
}

double sample_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("feature file round trip") {
  TempDir dir;
  for (bool flags : {false, true}) {
    const UtteranceFeatures u = make_utt(17, 3, "spk_a", flags);
    write_features(u, dir / "u.feat");
    const UtteranceFeatures back = read_features(dir / "u.feat");
    CHECK(back == u);
    const std::string bytes = read_bytes(dir / "u.feat");
    CHECK(encode_features(back) == bytes);
    CHECK(bytes.substr(0, 4) == "VCFT");
  }
}

TEST_CASE("feature file payload arithmetic") {
  const UtteranceFeatures u = make_utt(100, 4, "ab", false);
  const std::string bytes = encode_features(u);
  // header: magic + 6 u32 + u16 id length + id bytes
  const std::size_t header = 4 + 6 * 4 + 2 + 2;
  CHECK(bytes.size() == header + 100 * 39 * 4);
  const UtteranceFeatures f = make_utt(100, 4, "ab", true);
  CHECK(encode_features(f).size() == header + 100 * 39 * 4 + 100);
}

TEST_CASE("feature file errors") {
  const std::string bytes = encode_features(make_utt(10, 5, "x", true));
  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  CHECK(decode_error(bad) == FormatError::Code::kBadMagic);
  bad = bytes;
  bad[4] = 2;
  CHECK(decode_error(bad) == FormatError::Code::kUnsupportedVersion);
  CHECK(decode_error(bytes.substr(0, bytes.size() - 1)) == FormatError::Code::kTruncated);
  CHECK(decode_error(bytes.substr(0, 12)) == FormatError::Code::kTruncated);
  CHECK(decode_error(bytes + "zz") == FormatError::Code::kDimMismatch);
  bad = bytes;
  bad.back() = 7;
  CHECK(decode_error(bad) == FormatError::Code::kCorrupt);
}

TEST_CASE("utterance validation") {
  UtteranceFeatures u = make_utt(5, 6, "a", false);
  CHECK_NOTHROW(u.validate());
  UtteranceFeatures v = u;
  v.excitation(2, kVoicedDim) = 0.5;
  CHECK_THROWS_AS(v.validate(), DataError);
  v = u;
  v.excitation(1, kLogF0Dim) = std::nan("");
  CHECK_THROWS_AS(v.validate(), DataError);
  v = u;
  v.spectra = Tensor(Shape{4, kSpectralDim});
  CHECK_THROWS_AS(v.validate(), ShapeError);
}

TEST_CASE("corpus directory round trip") {
  TempDir dir;
  Corpus c;
  c.push_back({"s02", make_utt(8, 1, "spk_b", true)});
  c.push_back({"s01", make_utt(9, 2, "spk_a", false)});
  write_corpus(c, dir.path());
  const Corpus back = read_corpus(dir.path());
  REQUIRE(back.size() == 2);
  // sorted by file name: spk_a_s01, spk_b_s02
  CHECK(back[0].name == "s01");
  CHECK(back[0].features == c[1].features);
  CHECK(back[1].features == c[0].features);
  CHECK_THROWS_AS(read_corpus(dir / "missing"), IoError);
}

TEST_CASE("stats example with population convention") {
  // frames 0 and 3 unvoiced, dim 5 alternates 1, 3
  UtteranceFeatures u = make_utt(4, 7, "a", false);
  for (std::size_t t = 0; t < 4; ++t) u.spectra(t, 5) = (t % 2 == 0) ? 1.0 : 3.0;
  const CorpusStats s = compute_stats({{"u", u}});
  const std::size_t d = kExcitationDim + 5;
  CHECK(s.feat_mean[d] == 2.0);
  CHECK(s.feat_std[d] == 1.0);
  CHECK(s.feat_mean[kVoicedDim] == 0.5);
  CHECK(s.feat_std[kVoicedDim] == 0.5);
  CHECK(s.speakers.at("a").gv[5] == 1.0);
  CHECK(s.speakers.at("a").logf0_mean ==
        doctest::Approx((u.excitation(1, 0) + u.excitation(2, 0)) / 2).epsilon(1e-15));
  CHECK(s.speakers.at("a").logf0_std ==
        doctest::Approx(std::abs(u.excitation(1, 0) - u.excitation(2, 0)) / 2).epsilon(1e-12));
}

TEST_CASE("stats errors") {
  UtteranceFeatures u = make_utt(6, 8, "a", false);
  for (std::size_t t = 0; t < 6; ++t) u.spectra(t, 9) = 0.7;
  CHECK_THROWS_WITH_AS(compute_stats({{"u", u}}), doctest::Contains("13"), DataError);
  CHECK_THROWS_AS(compute_stats({}), DataError);
  UtteranceFeatures unvoiced = make_utt(6, 9, "b", false);
  for (std::size_t t = 0; t < 6; ++t) unvoiced.excitation(t, kVoicedDim) = 0.0;
  CHECK_THROWS_AS(compute_stats({{"u", make_utt(6, 10, "a", false)}, {"v", unvoiced}}), DataError);
}

TEST_CASE("gv of a constant track is zero") {
  Tensor s(Shape{10, 3}, 0.7);
  for (double v : utterance_variance(s)) CHECK(v == 0.0);
  Tensor t = Tensor::matrix({{1, 0}, {3, 0}});
  CHECK(utterance_variance(t)[0] == 1.0);
}

TEST_CASE("stats json round trip and speaker order") {
  const CorpusStats s =
      compute_stats({{"x", make_utt(12, 11, "zed", false)}, {"y", make_utt(12, 12, "amy", false)}});
  CHECK(s.speaker_ids() == std::vector<std::string>{"amy", "zed"});
  CHECK(s.speaker_index("zed") == 1);
  CHECK_THROWS_AS(s.speaker_index("bob"), DataError);
  TempDir dir;
  write_stats(s, dir / "stats.json");
  CHECK(read_stats(dir / "stats.json") == s);
}

TEST_CASE("log-F0 transform examples") {
  SpeakerStats src, tgt;
  src.logf0_mean = 5.0;
  src.logf0_std = 0.2;
  tgt.logf0_mean = 5.5;
  tgt.logf0_std = 0.3;
  CHECK(transform_logf0(5.2, src, tgt) == doctest::Approx(5.8).epsilon(1e-14));
  CHECK(transform_logf0(5.0, src, tgt) == 5.5);
  CHECK(transform_logf0(4.71, src, src) == doctest::Approx(4.71).epsilon(1e-15));
  SpeakerStats zero = src;
  zero.logf0_std = 0.0;
  CHECK_THROWS_AS(transform_logf0(5.0, zero, tgt), DataError);
}

TEST_CASE("converted excitation") {
  SpeakerStats src, tgt;
  src.logf0_mean = 5.0;
  src.logf0_std = 0.2;
  tgt.logf0_mean = 5.5;
  tgt.logf0_std = 0.3;
  UtteranceFeatures u = make_utt(9, 13, "a", false);

  UtteranceFeatures unvoiced = u;
  for (std::size_t t = 0; t < 9; ++t) unvoiced.excitation(t, kVoicedDim) = 0.0;
  CHECK(build_converted_excitation(unvoiced.excitation, src, tgt) == unvoiced.excitation);
  CHECK(build_converted_excitation(u.excitation, src, src) == u.excitation);

  Tensor one = unvoiced.excitation;
  one(4, kVoicedDim) = 1.0;
  one(4, kLogF0Dim) = 5.0;
  const Tensor conv = build_converted_excitation(one, src, tgt);
  CHECK(conv(4, kLogF0Dim) == 5.5);
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t d = 1; d < kExcitationDim; ++d) CHECK(conv(t, d) == one(t, d));
}

TEST_CASE("transformed training log-F0 matches the target moments") {
  const SyntheticCorpus sc = gen_synthetic_corpus(SyntheticConfig{});
  Corpus all = sc.source;
  all.insert(all.end(), sc.target.begin(), sc.target.end());
  const CorpusStats s = compute_stats(all);
  const SpeakerStats& src = s.speaker("spk_a");
  const SpeakerStats& tgt = s.speaker("spk_b");
  std::vector<double> mapped;
  for (const Utterance& u : sc.source) {
    const Tensor e = build_converted_excitation(u.features.excitation, src, tgt);
    for (std::size_t t = 0; t < e.rows(); ++t)
      if (e(t, kVoicedDim) > 0.5) mapped.push_back(e(t, kLogF0Dim));
  }
  CHECK(std::abs(sample_mean(mapped) - tgt.logf0_mean) < 1e-9);
  CHECK(std::abs(sample_std(mapped) - tgt.logf0_std) < 1e-9);
}

TEST_CASE("speech frames") {
  UtteranceFeatures u = make_utt(8, 14, "a", true);
  CHECK(speech_frames(u, 100.0) == std::vector<std::size_t>{1, 2, 3, 5, 6, 7});
  u.speech_flags.reset();
  for (std::size_t t = 0; t < 8; ++t) u.spectra(t, 0) = static_cast<double>(t);
  CHECK(speech_frames(u, 4.5) == std::vector<std::size_t>{5, 6, 7});
}

TEST_CASE("synthetic corpus") {
  SyntheticConfig cfg;
  cfg.n_utts = 3;
  const SyntheticCorpus a = gen_synthetic_corpus(cfg);
  const SyntheticCorpus b = gen_synthetic_corpus(cfg);
  REQUIRE(a.source.size() == 3);
  REQUIRE(a.target.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(encode_features(a.source[i].features) == encode_features(b.source[i].features));
    CHECK(encode_features(a.target[i].features) == encode_features(b.target[i].features));
    CHECK(a.source[i].name == a.target[i].name);
    CHECK(a.source[i].features.frames() == a.target[i].features.frames());
    CHECK_NOTHROW(a.source[i].features.validate());
    CHECK(a.source[i].features.speaker_id == "spk_a");
    CHECK(a.target[i].features.speaker_id == "spk_b");
    // frame-aligned pair: the identity path is a valid alignment
    AlignmentPath diag;
    for (std::size_t t = 0; t < a.source[i].features.frames(); ++t) diag.pairs.push_back({t, t});
    CHECK(mcd(a.source[i].features.spectra, a.target[i].features.spectra, diag).mcd_db > 1.0);
  }
  cfg.seed = 2;
  CHECK_FALSE(encode_features(gen_synthetic_corpus(cfg).source[0].features) ==
              encode_features(a.source[0].features));
  cfg.n_utts = 1;
  CHECK_THROWS_AS(gen_synthetic_corpus(cfg), ConfigError);
}
