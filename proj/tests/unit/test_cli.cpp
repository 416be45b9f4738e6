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

#include <algorithm>
#include <sstream>

#include "cli.hpp"
#include "cyclevae/checkpoint.hpp"
#include "cyclevae/error.hpp"
#include "cyclevae/features.hpp"
#include "test_util.hpp"

using namespace cyclevae;
using cyclevae::testing::read_bytes;
using cyclevae::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_bytes(e.path());
  }
  return files;
}

// Small corpus plus statistics shared by the train/convert/eval cases.
struct Workspace {
  TempDir dir;
  fs::path data() const { return dir / "data"; }
  fs::path stats() const { return dir / "stats.json"; }

  Workspace() {
    REQUIRE(invoke({"gen", "--out", data().string(), "--n-utts", "2", "--test-utts", "2", "--frames",
                 "60", "--log-level", "warn"})
                .code == 0);
    REQUIRE(invoke({"stats", "--corpus", (data() / "train").string(), "--out", stats().string(),
                    "--log-level", "warn"})
                .code == 0);
  }

  Outcome train(const std::string& mode, const fs::path& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{"train",   "--corpus",     (data() / "train").string(),
                                  "--stats", stats().string(), "--out",
                                  out.string(), "--mode",   mode,
                                  "--hidden", "4",           "--latent-dim",
                                  "2",        "--cycles",    "1",
                                  "--log-level", "warn"};
    if (std::find(extra.begin(), extra.end(), "--epochs") == extra.end()) {
      extra.insert(extra.end(), {"--epochs", "1"});
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }
};

}  // namespace

TEST_CASE("run config json round trip") {
  cli::RunConfig c;
  c.train.cycles = 2;
  c.train.model.latent_dim = 5;
  c.train.mode = TrainMode::kVae;
  c.train.corpus_dir = "/x/y";
  c.train.stop_after_epoch = 7;
  c.target_speaker = "spk_b";
  c.postfilter = true;
  const auto j = cli::to_json(c);
  cli::RunConfig back;
  cli::merge_json(nlohmann::json::parse(j.dump()), back);
  CHECK(cli::to_json(back).dump() == j.dump());
  CHECK(j.begin().key() == "mode");

  cli::RunConfig partial;
  cli::merge_json(nlohmann::json{{"epochs", 12}}, partial);
  CHECK(partial.train.epochs == 12);
  CHECK(partial.train.cycles == 3);
  CHECK_THROWS_AS(cli::merge_json(nlohmann::json{{"epoch", 12}}, partial), ConfigError);

  TempDir dir;
  std::ofstream(dir / "c.json") << j.dump();
  CHECK(cli::to_json(cli::load_run_config(dir / "c.json")).dump() == j.dump());
}

TEST_CASE("defaults follow the reference optimum") {
  const cli::RunConfig c;
  CHECK(c.train.cycles == 3);
  CHECK(c.train.model.latent_dim == 16);
  CHECK(c.train.mode == TrainMode::kCycleVae);
}

TEST_CASE("help lists every flag with defaults") {
  const Outcome top = invoke({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"gen", "stats", "train", "convert", "eval", "gradcheck"})
    CHECK(top.out.find(sub) != std::string::npos);

  const Outcome tr = invoke({"train", "--help"});
  CHECK(tr.code == 0);
  for (const char* flag : {"--mode", "--cycles", "--latent-dim", "--hidden", "--batch-frames", "--lr",
                           "--epochs", "--seed", "--dropout", "--corpus", "--stats", "--out",
                           "--resume", "--config"})
    CHECK(tr.out.find(flag) != std::string::npos);
  for (const char* note : {"default 3", "default 16", "default 80", "default 1e-4", "default 0.5"})
    CHECK(tr.out.find(note) != std::string::npos);
  CHECK(invoke({"convert", "--help"}).out.find("--postfilter") != std::string::npos);
}

TEST_CASE("exit codes for usage errors") {
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"train", "--no-such-flag"}).code == cli::kExitUsage);
  CHECK(invoke({"train", "--mode", "gan"}).code == cli::kExitUsage);
  CHECK(invoke({"train"}).code == cli::kExitUsage);
  TempDir dir;
  CHECK(invoke({"gen", "--out", dir.path().string(), "--n-utts", "0"}).code == cli::kExitUsage);
  CHECK(invoke({"train", "--config", (dir / "missing.json").string()}).code == cli::kExitData);
}

TEST_CASE("gen is deterministic") {
  TempDir a, b, c;
  const std::vector<std::string> common{"--n-utts", "2", "--test-utts", "1", "--frames", "40"};
  auto args = [&](const TempDir& d, const char* seed) {
    std::vector<std::string> v{"gen", "--out", d.path().string(), "--seed", seed};
    v.insert(v.end(), common.begin(), common.end());
    return v;
  };
  REQUIRE(invoke(args(a, "5")).code == 0);
  REQUIRE(invoke(args(b, "5")).code == 0);
  REQUIRE(invoke(args(c, "6")).code == 0);
  const auto ta = tree_bytes(a.path());
  CHECK(ta == tree_bytes(b.path()));
  CHECK_FALSE(ta == tree_bytes(c.path()));
  // 2 training utterances per speaker, 1 parallel test utterance per speaker
  CHECK(read_corpus(a / "train").size() == 4);
  const Corpus test = read_corpus(a / "test");
  REQUIRE(test.size() == 2);
  CHECK(test[0].name == test[1].name);
  const Corpus train = read_corpus(a / "train");
  for (const Utterance& u : train) CHECK(u.name != test[0].name);
}

TEST_CASE("stats command") {
  Workspace w;
  const CorpusStats s = read_stats(w.stats());
  CHECK(s.speakers.size() == 2);
  const std::string first = read_bytes(w.stats());
  REQUIRE(invoke({"stats", "--corpus", (w.data() / "train").string(), "--out", w.stats().string()}).code ==
          0);
  CHECK(read_bytes(w.stats()) == first);

  TempDir empty;
  const Outcome e = invoke({"stats", "--corpus", empty.path().string(), "--out", (empty / "s.json").string()});
  CHECK(e.code == cli::kExitData);

  TempDir mixed;
  Corpus c = read_corpus(w.data() / "train");
  write_corpus(c, mixed.path());
  UtteranceFeatures odd = c[0].features;
  odd.spectra = odd.spectra.col_range(0, 20);
  write_features(odd, mixed / "zz_odd.feat");
  const Outcome m = invoke({"stats", "--corpus", mixed.path().string(), "--out", (mixed / "s.json").string()});
  CHECK(m.code == cli::kExitData);
  CHECK(m.err.find("zz_odd") != std::string::npos);
}

TEST_CASE("train, convert and eval") {
  Workspace w;
  const fs::path vae = w.dir / "vae";
  const fs::path cyc = w.dir / "cyc";
  REQUIRE(w.train("vae", vae).code == 0);
  REQUIRE(w.train("cyclevae", cyc).code == 0);
  CHECK(read_bytes(vae / kLatestCheckpoint) != read_bytes(cyc / kLatestCheckpoint));
  CHECK(fs::exists(cyc / kMetricsFile));
  const auto logged = nlohmann::json::parse(read_bytes(cyc / "run_config.json"));
  CHECK(logged["mode"] == "cyclevae");
  CHECK(logged["latent_dim"] == 2);

  SUBCASE("identical runs give identical checkpoints") {
    const fs::path again = w.dir / "cyc2";
    REQUIRE(w.train("cyclevae", again).code == 0);
    CHECK(read_bytes(again / kLatestCheckpoint) == read_bytes(cyc / kLatestCheckpoint));
    CHECK(read_bytes(again / kMetricsFile) == read_bytes(cyc / kMetricsFile));
  }

  SUBCASE("convert") {
    const Corpus test = read_corpus(w.data() / "test");
    const Utterance* src = nullptr;
    for (const Utterance& u : test)
      if (u.features.speaker_id == "spk_a") src = &u;
    REQUIRE(src != nullptr);
    write_features(src->features, w.dir / "in.feat");
    const auto convert = [&](const std::string& out, bool pf, const std::string& target = "spk_b") {
      std::vector<std::string> args{"convert",  "--checkpoint",    (cyc / kLatestCheckpoint).string(),
                                    "--input",  (w.dir / "in.feat").string(), "--target-speaker",
                                    target,     "--output",        (w.dir / out).string()};
      if (pf) args.push_back("--postfilter");
      return invoke(args);
    };
    REQUIRE(convert("a.feat", false).code == 0);
    REQUIRE(convert("b.feat", false).code == 0);
    REQUIRE(convert("pf.feat", true).code == 0);
    CHECK(read_bytes(w.dir / "a.feat") == read_bytes(w.dir / "b.feat"));
    const UtteranceFeatures a = read_features(w.dir / "a.feat");
    const UtteranceFeatures pf = read_features(w.dir / "pf.feat");
    CHECK(a.frames() == src->features.frames());
    CHECK(a.speaker_id == "spk_b");
    CHECK(pf.excitation == a.excitation);
    CHECK_FALSE(pf.spectra == a.spectra);
    CHECK(convert("c.feat", false, "spk_z").code == cli::kExitData);
  }

  SUBCASE("eval report") {
    const fs::path report = w.dir / "report.json";
    const Outcome o = invoke({"eval", "--checkpoint", (cyc / kLatestCheckpoint).string(), "--corpus",
                           (w.data() / "test").string(), "--report", report.string(), "--postfilter"});
    REQUIRE(o.code == 0);
    const auto j = nlohmann::json::parse(read_bytes(report));
    CHECK(nlohmann::json::parse(o.out) == j);
    for (const char* key : {"utterances", "rec_mcd_db", "init_mcd_db", "cv_mcd_db", "pf_mcd_db",
                            "latent_cosine"})
      CHECK(j["aggregate"].contains(key));
    CHECK(j["utterances"].size() == 4);
    CHECK(j["notes"].empty());

    const Outcome unpaired = invoke({"eval", "--checkpoint", (cyc / kLatestCheckpoint).string(),
                                  "--corpus", (w.data() / "train").string()});
    REQUIRE(unpaired.code == 0);
    const auto u = nlohmann::json::parse(unpaired.out);
    CHECK_FALSE(u["aggregate"].contains("cv_mcd_db"));
    CHECK_FALSE(u["notes"].empty());
  }

  SUBCASE("divergence exits with code 3") {
    const fs::path run = w.dir / "div";
    REQUIRE(w.train("cyclevae", run, {"--epochs", "2", "--stop-after", "1"}).code == 0);
    Checkpoint ck = read_checkpoint(run / kLatestCheckpoint);
    for (auto& [name, t] : ck.tensors)
      if (name == "enc.out.bias") t.fill(1e6);
    write_checkpoint(run / kLatestCheckpoint, ck);
    const Outcome o = w.train("cyclevae", run, {"--epochs", "2", "--resume"});
    CHECK(o.code == cli::kExitDivergence);
    CHECK(o.err.find("epoch 2") != std::string::npos);
  }
}

TEST_CASE("gradcheck command passes on the tiny default model") {
  const Outcome o = invoke({"gradcheck", "--log-level", "warn"});
  INFO(o.out << o.err);
  CHECK(o.code == 0);
  CHECK(o.out.rfind("PASS", 0) == 0);
}
