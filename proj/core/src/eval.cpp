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

#include "cyclevae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "cyclevae/error.hpp"

namespace cyclevae {

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("l2_distance: frame sizes differ");
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) sum += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(sum);
}

double mcd_frame(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("mcd_frame: frame sizes differ");
  double sum = 0.0;
  for (std::size_t d = 1; d < a.size(); ++d) sum += (a[d] - b[d]) * (a[d] - b[d]);
  return (10.0 / std::log(10.0)) * std::sqrt(2.0 * sum);
}

AlignmentPath dtw_align(const Tensor& a, const Tensor& b, const FrameKernel& kernel) {
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  if (a.rank() != 2 || b.rank() != 2 || n == 0 || m == 0) {
    throw DataError("dtw_align: both sequences must be non-empty (got " + a.shape().str() + " and " +
                    b.shape().str() + ")");
  }
  if (a.cols() != b.cols()) {
    throw ShapeError("dtw_align: frame sizes differ, " + a.shape().str() + " vs " + b.shape().str());
  }
  enum Move : std::uint8_t { kStart, kDiag, kDown, kRight };
  std::vector<double> acc(n * m);
  std::vector<Move> from(n * m);
  const auto at = [m](std::size_t i, std::size_t j) { return i * m + j; };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = kernel(a.row(i), b.row(j));
      if (i == 0 && j == 0) {
        acc[0] = d;
        from[0] = kStart;
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      Move move = kStart;
      if (i > 0 && j > 0 && acc[at(i - 1, j - 1)] < best) {
        best = acc[at(i - 1, j - 1)];
        move = kDiag;
      }
      if (i > 0 && acc[at(i - 1, j)] < best) {
        best = acc[at(i - 1, j)];
        move = kDown;
      }
      if (j > 0 && acc[at(i, j - 1)] < best) {
        best = acc[at(i, j - 1)];
        move = kRight;
      }
      acc[at(i, j)] = best + d;
      from[at(i, j)] = move;
    }
  }

  AlignmentPath path;
  path.cost = acc[at(n - 1, m - 1)];
  std::size_t i = n - 1;
  std::size_t j = m - 1;
  while (true) {
    path.pairs.emplace_back(i, j);
    const Move move = from[at(i, j)];
    if (move == kStart) break;
    if (move != kRight) --i;
    if (move != kDown) --j;
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

McdReport mcd(const Tensor& a, const Tensor& b, const AlignmentPath& path, std::size_t expected_dim) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("mcd: incompatible sequences " + a.shape().str() + " and " + b.shape().str());
  }
  if (expected_dim != 0 && a.cols() < expected_dim) {
    throw ShapeError("mcd: expected " + std::to_string(expected_dim) + " coefficients, got " +
                     std::to_string(a.cols()));
  }
  if (path.pairs.empty()) throw DataError("mcd: empty alignment path");
  const auto [first_i, first_j] = path.pairs.front();
  const auto [last_i, last_j] = path.pairs.back();
  if (first_i != 0 || first_j != 0 || last_i + 1 != a.rows() || last_j + 1 != b.rows()) {
    throw DataError("mcd: path does not span both sequences");
  }
  McdReport report;
  double total = 0.0;
  for (std::size_t k = 0; k < path.pairs.size(); ++k) {
    const auto [i, j] = path.pairs[k];
    if (k > 0) {
      const auto [pi, pj] = path.pairs[k - 1];
      if (i - pi > 1 || j - pj > 1 || i < pi || j < pj || (i == pi && j == pj)) {
        throw DataError("mcd: path step " + std::to_string(k) + " is not a valid DTW step");
      }
    }
    total += mcd_frame(a.row(i), b.row(j));
  }
  report.frames_used = path.pairs.size();
  report.mcd_db = total / static_cast<double>(report.frames_used);
  report.path = path;
  return report;
}

Tensor select_frames(const Tensor& seq, std::span<const std::size_t> frames) {
  Tensor out(Shape{frames.size(), seq.cols()});
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k] >= seq.rows()) throw ShapeError("select_frames: frame index out of range");
    const auto src = seq.row(frames[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

namespace {

std::vector<std::size_t> require_speech(const UtteranceFeatures& utt, double threshold) {
  auto frames = speech_frames(utt, threshold);
  if (frames.empty()) {
    throw DataError("utterance of speaker '" + utt.speaker_id + "' has no speech frames");
  }
  return frames;
}

}  // namespace

McdReport speech_mcd(const UtteranceFeatures& a, const UtteranceFeatures& b, double speech_threshold,
                     std::size_t expected_dim) {
  const Tensor sa = select_frames(a.spectra, require_speech(a, speech_threshold));
  const Tensor sb = select_frames(b.spectra, require_speech(b, speech_threshold));
  return mcd(sa, sb, dtw_align(sa, sb, mcd_frame), expected_dim);
}

Tensor gv_postfilter(const Tensor& spectra, std::span<const double> target_gv) {
  const std::size_t frames = spectra.rows();
  const std::size_t dims = spectra.cols();
  if (spectra.rank() != 2 || frames == 0) throw DataError("gv_postfilter: empty sequence");
  if (target_gv.size() != dims) {
    throw ShapeError("gv_postfilter: target GV has " + std::to_string(target_gv.size()) +
                     " dims, spectra have " + std::to_string(dims));
  }
  Tensor out = spectra;
  for (std::size_t d = 1; d < dims; ++d) {
    // Deviations from the first frame keep a constant track at exactly zero.
    const double first = spectra(0, d);
    double shift = 0.0;
    for (std::size_t t = 0; t < frames; ++t) shift += spectra(t, d) - first;
    shift /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double diff = (spectra(t, d) - first) - shift;
      var += diff * diff;
    }
    var /= static_cast<double>(frames);
    const double mean = first + shift;
    if (var == 0.0) {
      spdlog::warn("gv_postfilter: coefficient {} has zero variance, left unchanged", d);
      continue;
    }
    if (target_gv[d] < 0.0) throw DataError("gv_postfilter: negative target variance");
    const double ratio = std::sqrt(target_gv[d] / var);
    for (std::size_t t = 0; t < frames; ++t) out(t, d) = ratio * (spectra(t, d) - mean) + mean;
  }
  return out;
}

LatentCosine latent_cosine(const Tensor& mu_a, const Tensor& mu_b) {
  const AlignmentPath path = dtw_align(mu_a, mu_b, l2_distance);
  LatentCosine result;
  double total = 0.0;
  for (const auto& [i, j] : path.pairs) {
    const auto a = mu_a.row(i);
    const auto b = mu_b.row(j);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      dot += a[d] * b[d];
      na += a[d] * a[d];
      nb += b[d] * b[d];
    }
    if (na == 0.0 || nb == 0.0) {
      ++result.skipped;
      continue;
    }
    total += std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    ++result.pairs;
  }
  if (result.pairs > 0) result.mean = total / static_cast<double>(result.pairs);
  return result;
}

LatentCosine latent_cosine(const UtteranceFeatures& a, const UtteranceFeatures& b,
                           const ModelParams& params, double speech_threshold) {
  const Tensor mu_a = encoder_forward(a.joint(), params).mu;
  const Tensor mu_b = encoder_forward(b.joint(), params).mu;
  return latent_cosine(select_frames(mu_a, require_speech(a, speech_threshold)),
                       select_frames(mu_b, require_speech(b, speech_threshold)));
}

namespace {

Tensor code_for(const CorpusStats& stats, const std::string& speaker, const ModelParams& params) {
  if (!stats.speakers.contains(speaker)) {
    throw DataError("speaker '" + speaker + "' is not in the statistics");
  }
  return speaker_code(stats.speaker_index(speaker), params.config.speaker_code_dim);
}

}  // namespace

Tensor reconstruct_spectra(const ModelParams& params, const UtteranceFeatures& utt,
                           const CorpusStats& stats) {
  const Tensor code = code_for(stats, utt.speaker_id, params);
  return decoder_forward(encoder_forward(utt.joint(), params).mu, code, params);
}

UtteranceFeatures convert_utterance(const ModelParams& params, const UtteranceFeatures& utt,
                                    const std::string& target_speaker, const CorpusStats& stats,
                                    bool postfilter) {
  const Tensor target_code = code_for(stats, target_speaker, params);
  code_for(stats, utt.speaker_id, params);
  UtteranceFeatures out;
  out.excitation = build_converted_excitation(utt.excitation, stats.speaker(utt.speaker_id),
                                              stats.speaker(target_speaker));
  out.spectra = decoder_forward(encoder_forward(utt.joint(), params).mu, target_code, params);
  if (postfilter) out.spectra = gv_postfilter(out.spectra, stats.speaker(target_speaker).gv);
  out.speech_flags = utt.speech_flags;
  out.frame_shift_ms = utt.frame_shift_ms;
  out.speaker_id = target_speaker;
  return out;
}

Tensor cyclic_spectra(const ModelParams& params, const UtteranceFeatures& utt, const CorpusStats& stats) {
  const auto ids = stats.speaker_ids();
  if (ids.size() != 2) throw DataError("cyclic reconstruction needs exactly 2 speakers");
  const std::string& other = ids[0] == utt.speaker_id ? ids[1] : ids[0];
  const UtteranceFeatures converted = convert_utterance(params, utt, other, stats, false);
  const Tensor code = code_for(stats, utt.speaker_id, params);
  return decoder_forward(encoder_forward(converted.joint(), params).mu, code, params);
}

namespace {

std::optional<double> mean_of(const std::vector<UtteranceEval>& utts, double UtteranceEval::*field) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& u : utts) {
    if (!u.has_reference) continue;
    total += u.*field;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace

double EvalReport::mean_rec_mcd() const {
  if (utterances.empty()) return 0.0;
  double total = 0.0;
  for (const auto& u : utterances) total += u.rec_mcd;
  return total / static_cast<double>(utterances.size());
}

std::optional<double> EvalReport::mean_init_mcd() const { return mean_of(utterances, &UtteranceEval::init_mcd); }
std::optional<double> EvalReport::mean_cv_mcd() const { return mean_of(utterances, &UtteranceEval::cv_mcd); }
std::optional<double> EvalReport::mean_pf_mcd() const { return mean_of(utterances, &UtteranceEval::pf_mcd); }
std::optional<double> EvalReport::mean_latent_cosine() const {
  return mean_of(utterances, &UtteranceEval::latent_cosine);
}

EvalReport evaluate_corpus(const ModelParams& params, const CorpusStats& stats, const Corpus& corpus,
                           const EvalOptions& options) {
  if (corpus.empty()) throw DataError("evaluation corpus is empty");
  const auto ids = stats.speaker_ids();
  if (ids.size() != 2) throw DataError("evaluation needs statistics for exactly 2 speakers");
  const double threshold =
      options.speech_threshold.value_or(default_speech_threshold(stats, params.config.excitation_dim));
  const std::size_t dims = params.config.spectral_dim;

  std::map<std::pair<std::string, std::string>, const Utterance*> by_key;
  for (const Utterance& u : corpus) by_key[{u.features.speaker_id, u.name}] = &u;

  EvalReport report;
  report.postfilter = options.postfilter;
  std::size_t missing = 0;
  for (const Utterance& u : corpus) {
    const std::string& src = u.features.speaker_id;
    if (!stats.speakers.contains(src)) throw DataError("speaker '" + src + "' is not in the statistics");
    UtteranceEval e;
    e.name = u.name;
    e.source_speaker = src;
    e.target_speaker = ids[0] == src ? ids[1] : ids[0];

    UtteranceFeatures rec = u.features;
    rec.spectra = reconstruct_spectra(params, u.features, stats);
    const McdReport rec_mcd = speech_mcd(u.features, rec, threshold, dims);
    e.rec_mcd = rec_mcd.mcd_db;
    e.rec_frames = rec_mcd.frames_used;

    const auto ref = by_key.find({e.target_speaker, u.name});
    if (ref != by_key.end()) {
      const UtteranceFeatures& target = ref->second->features;
      e.has_reference = true;
      e.init_mcd = speech_mcd(u.features, target, threshold, dims).mcd_db;
      const UtteranceFeatures cv = convert_utterance(params, u.features, e.target_speaker, stats, false);
      const McdReport cv_mcd = speech_mcd(cv, target, threshold, dims);
      e.cv_mcd = cv_mcd.mcd_db;
      e.cv_frames = cv_mcd.frames_used;
      if (options.postfilter) {
        UtteranceFeatures pf = cv;
        pf.spectra = gv_postfilter(cv.spectra, stats.speaker(e.target_speaker).gv);
        e.pf_mcd = speech_mcd(pf, target, threshold, dims).mcd_db;
      }
      e.latent_cosine = latent_cosine(u.features, target, params, threshold).mean;
    } else {
      ++missing;
    }
    report.utterances.push_back(std::move(e));
  }
  if (missing > 0) {
    report.notes.push_back(std::to_string(missing) +
                           " utterance(s) have no parallel reference; converted MCD and latent cosine "
                           "are omitted for them");
  }
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json agg;
  agg["utterances"] = report.utterances.size();
  agg["rec_mcd_db"] = report.mean_rec_mcd();
  const auto put = [&](const char* key, std::optional<double> v) {
    if (v) agg[key] = *v;
  };
  put("init_mcd_db", report.mean_init_mcd());
  put("cv_mcd_db", report.mean_cv_mcd());
  if (report.postfilter) put("pf_mcd_db", report.mean_pf_mcd());
  put("latent_cosine", report.mean_latent_cosine());
  j["aggregate"] = agg;

  nlohmann::ordered_json utts = nlohmann::ordered_json::array();
  for (const auto& u : report.utterances) {
    nlohmann::ordered_json e;
    e["name"] = u.name;
    e["source"] = u.source_speaker;
    e["target"] = u.target_speaker;
    e["rec_mcd_db"] = u.rec_mcd;
    e["rec_frames_used"] = u.rec_frames;
    if (u.has_reference) {
      e["init_mcd_db"] = u.init_mcd;
      e["cv_mcd_db"] = u.cv_mcd;
      if (report.postfilter) e["pf_mcd_db"] = u.pf_mcd;
      e["frames_used"] = u.cv_frames;
      e["latent_cosine"] = u.latent_cosine;
    }
    utts.push_back(std::move(e));
  }
  j["utterances"] = std::move(utts);
  j["notes"] = report.notes;
  return j;
}

}  // namespace cyclevae
