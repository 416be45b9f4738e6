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

// Subcommands of the cyclevae tool: gen, stats, train, convert, eval and
// gradcheck. Kept in a library so tests can drive them in-process.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevae/synthetic.hpp"
#include "cyclevae/trainer.hpp"

namespace cyclevae::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
};

/// Every setting any subcommand reads. Serialized as flat JSON.
struct RunConfig {
  TrainConfig train;

  // gen
  std::uint64_t gen_seed = 1;
  std::size_t utts_per_speaker = 8;  ///< non-parallel training utterances per speaker
  std::size_t test_utts = 4;         ///< parallel test utterances per speaker
  std::size_t utt_frames = 250;

  // convert / eval
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path report;
  std::string target_speaker;
  bool postfilter = false;

  // gradcheck
  std::size_t check_frames = 3;
  double check_step = 1e-5;
};

/// Canonical form: every key present, fixed key order.
nlohmann::ordered_json to_json(const RunConfig& c);
/// Keys absent from j keep the values already in c; unknown keys are errors.
void merge_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Synthetic corpus split: out/train holds non-overlapping sentences per
/// speaker, out/test holds parallel sentences of both speakers.
void cmd_gen(const RunConfig& c, const std::filesystem::path& out_dir);
void cmd_stats(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_path);
TrainResult cmd_train(const RunConfig& c);
void cmd_convert(const RunConfig& c);
nlohmann::ordered_json cmd_eval(const RunConfig& c);
/// Returns the report; the caller decides pass or fail.
GradCheckReport cmd_gradcheck(const RunConfig& c);

inline constexpr double kGradCheckTolerance = 1e-4;

/// Parses argv-style arguments (without the program name) and runs the
/// subcommand. Errors are reported on err and mapped to an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cyclevae::cli
