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

#include "cyclevae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cyclevae/error.hpp"

namespace cyclevae {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

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
    std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw FormatError(FormatError::Code::kTruncated,
                        std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find_tensor(std::string_view name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const std::string* Checkpoint::find_blob(std::string_view key) const {
  for (const auto& [k, v] : blobs)
    if (k == key) return &v;
  return nullptr;
}

void Checkpoint::set_blob(std::string key, std::string value) {
  for (auto& [k, v] : blobs) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  blobs.emplace_back(std::move(key), std::move(value));
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t i = 0; i < tensor.rank(); ++i) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.shape()[i]));
    }
    for (double v : tensor.data()) w.put<double>(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [key, value] : ckpt.blobs) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.size()));
    w.bytes(key);
    w.put<std::uint64_t>(value.size());
    w.bytes(value);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError(FormatError::Code::kBadMagic, "not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Code::kUnsupportedVersion,
                      "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.bytes(name_len, "tensor name"));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > Shape::kMaxRank) {
      throw FormatError(FormatError::Code::kCorrupt, "tensor " + name + " has rank " +
                                                         std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
      d = r.get<std::uint32_t>("dims");
      if (d == 0) throw FormatError(FormatError::Code::kCorrupt, "zero dimension in " + name);
    }
    const Shape shape{std::span<const std::size_t>(dims)};
    std::vector<double> data(shape.numel());
    for (double& v : data) v = r.get<double>("tensor payload");
    ckpt.tensors.emplace_back(std::move(name), Tensor(shape, std::move(data)));
  }
  const auto blob_count = r.get<std::uint32_t>("blob count");
  for (std::uint32_t i = 0; i < blob_count; ++i) {
    const auto key_len = r.get<std::uint32_t>("blob key length");
    std::string key(r.bytes(key_len, "blob key"));
    const auto len = r.get<std::uint64_t>("blob length");
    std::string value(r.bytes(static_cast<std::size_t>(len), "blob payload"));
    ckpt.blobs.emplace_back(std::move(key), std::move(value));
  }
  if (!r.done()) throw FormatError(FormatError::Code::kCorrupt, "trailing bytes after checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  // Write-then-rename so an interrupted save never clobbers the previous file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

Checkpoint model_to_checkpoint(const ModelParams& params) {
  params.validate();
  Checkpoint ckpt;
  for (const auto& [name, tensor] : params.weights) ckpt.tensors.emplace_back(name, tensor);
  ckpt.tensors.emplace_back("norm.input_mean", params.input_mean);
  ckpt.tensors.emplace_back("norm.input_std", params.input_std);
  ckpt.tensors.emplace_back("norm.output_mean", params.output_mean);
  ckpt.tensors.emplace_back("norm.output_std", params.output_std);
  ckpt.set_blob("model_config", nlohmann::json(params.config).dump());
  return ckpt;
}

ModelParams model_from_checkpoint(const Checkpoint& ckpt) {
  const std::string* cfg = ckpt.find_blob("model_config");
  if (cfg == nullptr) throw FormatError(FormatError::Code::kCorrupt, "checkpoint has no model_config");
  ModelConfig config;
  try {
    config = nlohmann::json::parse(*cfg).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Code::kCorrupt, std::string("bad model_config: ") + e.what());
  }
  const auto need = [&](const std::string& name) -> const Tensor& {
    const Tensor* t = ckpt.find_tensor(name);
    if (t == nullptr) throw FormatError(FormatError::Code::kCorrupt, "checkpoint lacks " + name);
    return *t;
  };
  ModelParams params;
  params.config = config;
  for (const ParamSpec& spec : model_parameter_specs(config)) {
    params.weights.emplace(spec.name, need(spec.name));
  }
  params.input_mean = need("norm.input_mean");
  params.input_std = need("norm.input_std");
  params.output_mean = need("norm.output_mean");
  params.output_std = need("norm.output_std");
  params.validate();
  return params;
}

}  // namespace cyclevae
