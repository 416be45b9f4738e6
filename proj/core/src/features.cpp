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

#include "cyclevae/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cyclevae/error.hpp"

namespace cyclevae {

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(FormatError::Code::kTruncated,
                        std::string("feature file truncated while reading ") + what);
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void UtteranceFeatures::validate() const {
  if (spectra.rank() != 2 || excitation.rank() != 2) {
    throw ShapeError("features must be rank-2 [frames, dims]");
  }
  if (spectra.rows() != excitation.rows()) {
    throw ShapeError("excitation has " + std::to_string(excitation.rows()) +
                     " frames but spectra has " + std::to_string(spectra.rows()));
  }
  if (excitation.cols() <= kVoicedDim) throw ShapeError("excitation lacks log-F0 and U/V dims");
  for (std::size_t t = 0; t < frames(); ++t) {
    const double uv = excitation(t, kVoicedDim);
    if (uv != 0.0 && uv != 1.0) {
      throw DataError("U/V flag at frame " + std::to_string(t) + " is not binary");
    }
    if (!std::isfinite(excitation(t, kLogF0Dim))) {
      throw DataError("non-finite log-F0 at frame " + std::to_string(t));
    }
  }
  if (speech_flags && speech_flags->size() != frames()) {
    throw ShapeError("speech flags cover " + std::to_string(speech_flags->size()) + " of " +
                     std::to_string(frames()) + " frames");
  }
  if (speaker_id.size() > UINT16_MAX) throw DataError("speaker id too long");
}

std::string encode_features(const UtteranceFeatures& utt) {
  utt.validate();
  const std::size_t frames = utt.frames();
  const std::size_t de = utt.excitation.cols();
  const std::size_t ds = utt.spectra.cols();
  std::string out;
  out.reserve(32 + utt.speaker_id.size() + frames * (de + ds) * 4 + frames);
  out.append(kFeatureMagic, 4);
  put<std::uint32_t>(out, kFeatureVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(frames));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(de));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds));
  put<std::uint32_t>(out, utt.speech_flags ? 1u : 0u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(std::lround(utt.frame_shift_ms * 1000.0)));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(utt.speaker_id.size()));
  out.append(utt.speaker_id);
  for (std::size_t t = 0; t < frames; ++t) {
    for (double v : utt.excitation.row(t)) put<float>(out, static_cast<float>(v));
    for (double v : utt.spectra.row(t)) put<float>(out, static_cast<float>(v));
  }
  if (utt.speech_flags) {
    for (std::uint8_t f : *utt.speech_flags) out.push_back(static_cast<char>(f ? 1 : 0));
  }
  return out;
}

UtteranceFeatures decode_features(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kFeatureMagic, 4)) {
    throw FormatError(FormatError::Code::kBadMagic, "not a feature file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion) {
    throw FormatError(FormatError::Code::kUnsupportedVersion,
                      "unsupported feature file version " + std::to_string(version));
  }
  const auto frames = r.get<std::uint32_t>("frame count");
  const auto de = r.get<std::uint32_t>("d_e");
  const auto ds = r.get<std::uint32_t>("d_s");
  const auto flags = r.get<std::uint32_t>("flags");
  const auto shift_us = r.get<std::uint32_t>("frame shift");
  const auto id_len = r.get<std::uint16_t>("speaker id length");
  UtteranceFeatures utt;
  utt.speaker_id = std::string(r.bytes(id_len, "speaker id"));
  utt.frame_shift_ms = shift_us / 1000.0;
  if (frames == 0 || de == 0 || ds == 0) {
    throw FormatError(FormatError::Code::kDimMismatch, "feature header has a zero dimension");
  }
  const bool has_flags = (flags & 1u) != 0;
  const std::size_t payload = std::size_t{frames} * (de + ds) * sizeof(float);
  const std::size_t expected = payload + (has_flags ? frames : 0);
  if (r.remaining() < expected) {
    throw FormatError(FormatError::Code::kTruncated,
                      "feature payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(expected));
  }
  if (r.remaining() > expected) {
    throw FormatError(FormatError::Code::kDimMismatch,
                      "feature payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(expected));
  }
  utt.excitation = Tensor(Shape{frames, de});
  utt.spectra = Tensor(Shape{frames, ds});
  for (std::size_t t = 0; t < frames; ++t) {
    for (double& v : utt.excitation.row(t)) v = r.get<float>("excitation");
    for (double& v : utt.spectra.row(t)) v = r.get<float>("spectra");
  }
  if (has_flags) {
    std::vector<std::uint8_t> speech(frames);
    for (auto& f : speech) {
      f = r.get<std::uint8_t>("speech flags");
      if (f > 1) throw FormatError(FormatError::Code::kCorrupt, "speech flag is not 0/1");
    }
    utt.speech_flags = std::move(speech);
  }
  utt.validate();
  return utt;
}

void write_features(const UtteranceFeatures& utt, const std::filesystem::path& path) {
  spit(path, encode_features(utt));
}

UtteranceFeatures read_features(const std::filesystem::path& path) {
  try {
    return decode_features(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path.string() + ": " + e.what());
  }
}

Corpus read_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == kFeatureExtension) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  for (const auto& f : files) {
    Utterance u;
    u.features = read_features(f);
    u.name = f.stem().string();
    const std::string prefix = u.features.speaker_id + "_";
    if (u.name.starts_with(prefix) && u.name.size() > prefix.size()) {
      u.name = u.name.substr(prefix.size());
    }
    corpus.push_back(std::move(u));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const Utterance& u : corpus) {
    write_features(u.features, dir / (u.features.speaker_id + "_" + u.name + kFeatureExtension));
  }
}

const SpeakerStats& CorpusStats::speaker(const std::string& id) const {
  auto it = speakers.find(id);
  if (it == speakers.end()) throw DataError("unknown speaker '" + id + "'");
  return it->second;
}

std::vector<std::string> CorpusStats::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : speakers) ids.push_back(id);
  return ids;
}

std::size_t CorpusStats::speaker_index(const std::string& id) const {
  std::size_t i = 0;
  for (const auto& [name, s] : speakers) {
    if (name == id) return i;
    ++i;
  }
  throw DataError("unknown speaker '" + id + "'");
}

void to_json(nlohmann::json& j, const CorpusStats& s) {
  j = nlohmann::json{{"feat_mean", s.feat_mean}, {"feat_std", s.feat_std}};
  nlohmann::json speakers = nlohmann::json::object();
  for (const auto& [id, st] : s.speakers) {
    speakers[id] = {{"logf0_mean", st.logf0_mean}, {"logf0_std", st.logf0_std}, {"gv", st.gv}};
  }
  j["speakers"] = std::move(speakers);
}

void from_json(const nlohmann::json& j, CorpusStats& s) {
  s.feat_mean = j.at("feat_mean").get<std::vector<double>>();
  s.feat_std = j.at("feat_std").get<std::vector<double>>();
  s.speakers.clear();
  for (const auto& [id, st] : j.at("speakers").items()) {
    SpeakerStats sp;
    sp.logf0_mean = st.at("logf0_mean").get<double>();
    sp.logf0_std = st.at("logf0_std").get<double>();
    sp.gv = st.at("gv").get<std::vector<double>>();
    s.speakers.emplace(id, std::move(sp));
  }
}

void write_stats(const CorpusStats& stats, const std::filesystem::path& path) {
  spit(path, nlohmann::json(stats).dump(2) + "\n");
}

CorpusStats read_stats(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(slurp(path)).get<CorpusStats>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Code::kCorrupt, path.string() + ": " + e.what());
  }
}

std::vector<double> utterance_variance(const Tensor& spectra) {
  // Deviations are taken from the first frame so a constant track yields
  // exactly zero.
  const std::size_t frames = spectra.rows();
  const std::size_t dims = spectra.cols();
  std::vector<double> shift(dims, 0.0), var(dims, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t d = 0; d < dims; ++d) shift[d] += spectra(t, d) - spectra(0, d);
  for (double& m : shift) m /= static_cast<double>(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < dims; ++d) {
      const double diff = (spectra(t, d) - spectra(0, d)) - shift[d];
      var[d] += diff * diff;
    }
  }
  for (double& v : var) v /= static_cast<double>(frames);
  return var;
}

CorpusStats compute_stats(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("cannot compute statistics of an empty corpus");
  const std::size_t de = corpus.front().features.excitation.cols();
  const std::size_t ds = corpus.front().features.spectra.cols();
  const std::size_t dim = de + ds;

  struct Accum {
    std::size_t frames = 0;
    std::size_t utterances = 0;
    double f0_sum = 0.0;
    std::size_t voiced = 0;
    std::vector<double> gv_sum;
  };
  std::map<std::string, Accum> per_speaker;
  std::vector<double> sum(dim, 0.0);
  std::size_t total = 0;

  for (const Utterance& u : corpus) {
    const UtteranceFeatures& f = u.features;
    f.validate();
    if (f.excitation.cols() != de || f.spectra.cols() != ds) {
      throw DataError("utterance " + u.name + " has dims (" + std::to_string(f.excitation.cols()) +
                      ", " + std::to_string(f.spectra.cols()) + "), expected (" +
                      std::to_string(de) + ", " + std::to_string(ds) + ")");
    }
    Accum& acc = per_speaker[f.speaker_id];
    if (acc.gv_sum.empty()) acc.gv_sum.assign(ds, 0.0);
    acc.frames += f.frames();
    acc.utterances += 1;
    const std::vector<double> var = utterance_variance(f.spectra);
    for (std::size_t d = 0; d < ds; ++d) acc.gv_sum[d] += var[d];
    for (std::size_t t = 0; t < f.frames(); ++t) {
      for (std::size_t d = 0; d < de; ++d) sum[d] += f.excitation(t, d);
      for (std::size_t d = 0; d < ds; ++d) sum[de + d] += f.spectra(t, d);
      if (f.voiced(t)) {
        acc.f0_sum += f.excitation(t, kLogF0Dim);
        acc.voiced += 1;
      }
    }
    total += f.frames();
  }

  CorpusStats stats;
  stats.feat_mean.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) stats.feat_mean[d] = sum[d] / static_cast<double>(total);
  // Spread is measured relative to the first frame, as in utterance_variance.
  const UtteranceFeatures& first = corpus.front().features;
  const auto value = [&](const UtteranceFeatures& f, std::size_t t, std::size_t d) {
    return d < de ? f.excitation(t, d) : f.spectra(t, d - de);
  };
  std::vector<double> shift(dim, 0.0), sq(dim, 0.0);
  for (const Utterance& u : corpus) {
    for (std::size_t t = 0; t < u.features.frames(); ++t)
      for (std::size_t d = 0; d < dim; ++d) shift[d] += value(u.features, t, d) - value(first, 0, d);
  }
  for (double& m : shift) m /= static_cast<double>(total);
  for (const Utterance& u : corpus) {
    for (std::size_t t = 0; t < u.features.frames(); ++t) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = (value(u.features, t, d) - value(first, 0, d)) - shift[d];
        sq[d] += diff * diff;
      }
    }
  }
  stats.feat_std.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    stats.feat_std[d] = std::sqrt(sq[d] / static_cast<double>(total));
    if (!(stats.feat_std[d] > 0.0)) {
      throw DataError("feature dimension " + std::to_string(d) + " has zero variance");
    }
  }

  for (auto& [id, acc] : per_speaker) {
    if (acc.frames < 2) throw DataError("speaker '" + id + "' has fewer than 2 frames");
    if (acc.voiced == 0) throw DataError("speaker '" + id + "' has no voiced frames");
    SpeakerStats sp;
    sp.logf0_mean = acc.f0_sum / static_cast<double>(acc.voiced);
    std::vector<double> f0;
    f0.reserve(acc.voiced);
    for (const Utterance& u : corpus) {
      const UtteranceFeatures& f = u.features;
      if (f.speaker_id != id) continue;
      for (std::size_t t = 0; t < f.frames(); ++t)
        if (f.voiced(t)) f0.push_back(f.excitation(t, kLogF0Dim));
    }
    double f0_shift = 0.0;
    for (double v : f0) f0_shift += v - f0.front();
    f0_shift /= static_cast<double>(f0.size());
    double f0_sq = 0.0;
    for (double v : f0) {
      const double diff = (v - f0.front()) - f0_shift;
      f0_sq += diff * diff;
    }
    sp.logf0_std = std::sqrt(f0_sq / static_cast<double>(acc.voiced));
    if (!(sp.logf0_std > 0.0)) throw DataError("speaker '" + id + "' has constant log-F0");
    sp.gv.resize(ds);
    for (std::size_t d = 0; d < ds; ++d) {
      sp.gv[d] = acc.gv_sum[d] / static_cast<double>(acc.utterances);
    }
    stats.speakers.emplace(id, std::move(sp));
  }
  return stats;
}

double transform_logf0(double logf0, const SpeakerStats& src, const SpeakerStats& tgt) {
  if (!(src.logf0_std > 0.0)) throw DataError("source log-F0 std must be positive");
  if (src.logf0_mean == tgt.logf0_mean && src.logf0_std == tgt.logf0_std) return logf0;
  return tgt.logf0_mean + (tgt.logf0_std / src.logf0_std) * (logf0 - src.logf0_mean);
}

Tensor build_converted_excitation(const Tensor& excitation, const SpeakerStats& src,
                                  const SpeakerStats& tgt) {
  if (!(src.logf0_std > 0.0)) throw DataError("source log-F0 std must be positive");
  Tensor out = excitation;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    if (out(t, kVoicedDim) > 0.5) out(t, kLogF0Dim) = transform_logf0(out(t, kLogF0Dim), src, tgt);
  }
  return out;
}

std::vector<std::size_t> speech_frames(const UtteranceFeatures& utt, double c0_threshold) {
  std::vector<std::size_t> frames;
  for (std::size_t t = 0; t < utt.frames(); ++t) {
    const bool speech = utt.speech_flags ? (*utt.speech_flags)[t] != 0 : utt.spectra(t, 0) > c0_threshold;
    if (speech) frames.push_back(t);
  }
  return frames;
}

double default_speech_threshold(const CorpusStats& stats, std::size_t excitation_dim) {
  if (stats.feat_mean.size() <= excitation_dim) throw DataError("statistics lack spectral dims");
  return stats.feat_mean[excitation_dim];
}

}  // namespace cyclevae
