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

// Checkpoint container, little-endian:
//
//   "CVCK" | version u32 | tensor count u32
//   per tensor: name length u32 | UTF-8 name | rank u32 | dims u32 x rank | f64 payload
//   blob count u32
//   per blob:   key length u32 | UTF-8 key | byte length u64 | bytes
//
// Blobs carry the model configuration, corpus statistics, optimizer
// bookkeeping and the RNG state.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cyclevae/net.hpp"
#include "cyclevae/tensor.hpp"

namespace cyclevae {

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> blobs;

  const Tensor* find_tensor(std::string_view name) const;
  const std::string* find_blob(std::string_view key) const;
  void set_blob(std::string key, std::string value);
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model weights as "enc.*"/"dec.*", normalization as "norm.*", and the
/// configuration as the "model_config" blob.
Checkpoint model_to_checkpoint(const ModelParams& params);
ModelParams model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace cyclevae
