// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "uttenc/errors.hpp"
#include "uttenc/evalkit.hpp"
#include "uttenc/pipeline.hpp"

using namespace uttenc;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "uttenc_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(UTTENC_CLI_PATH) + " " + args + " > " +
                          (kWork / "stdout.txt").string() + " 2> " + (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::string w(const std::string& name) { return (kWork / name).string(); }

struct Fresh {
  Fresh() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

const char* kTinyTrain =
    "--width 0.125 --embedding-dim 16 --epochs 1 --batch-size 4 --crop-min 16 --crop-max 16";

}  // namespace

TEST_CASE("synth writes the requested corpus and is byte-identical per seed") {
  Fresh f;
  REQUIRE(run("synth --out " + w("a") + " --classes 3 --per-class 2 --seed 4 --trials " + w("a.trials")) == 0);
  REQUIRE(run("synth --out " + w("b") + " --classes 3 --per-class 2 --seed 4") == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(kWork / "a")) {
    if (e.path().extension() != ".uefb") continue;
    ++files;
    CHECK(read_text(e.path()) == read_text(kWork / "b" / e.path().filename()));
  }
  CHECK(files == 6);
  CHECK(read_text(kWork / "a" / "manifest.csv") == read_text(kWork / "b" / "manifest.csv"));
  CHECK(read_trials(kWork / "a.trials").size() == 15);
  const auto corpus = read_corpus(kWork / "a");
  CHECK(corpus.size() == 6);
}

TEST_CASE("existing outputs need --force") {
  Fresh f;
  REQUIRE(run("synth --out " + w("c") + " --classes 2 --per-class 2") == 0);
  CHECK(run("synth --out " + w("c") + " --classes 2 --per-class 2") == kExitConfig);
  CHECK(read_text(kWork / "stderr.txt").find("--force") != std::string::npos);
  CHECK(fs::exists(kWork / "c" / "manifest.csv"));
  CHECK(run("synth --out " + w("c") + " --classes 2 --per-class 2 --force") == 0);
}

TEST_CASE("configuration errors exit with code 2") {
  Fresh f;
  REQUIRE(run("synth --out " + w("c") + " --classes 2 --per-class 2") == 0);
  CHECK(run("train --corpus " + w("c") + " --out " + w("m.ckpt") + " --loss asoftmax --margin 5") ==
        kExitConfig);
  CHECK_FALSE(fs::exists(kWork / "m.ckpt"));
  CHECK(run("train --corpus " + w("c") + " --out " + w("m.ckpt") + " --encoder bogus") == kExitConfig);
  CHECK(run("frobnicate") == kExitConfig);
  {
    std::ofstream os(kWork / "bad.json");
    os << R"({"train": {"epochs": 1, "typo": 2}})";
  }
  CHECK(run("train --config " + w("bad.json") + " --corpus " + w("c") + " --out " + w("m.ckpt")) ==
        kExitConfig);
  CHECK(read_text(kWork / "stderr.txt").find("train.typo") != std::string::npos);
}

TEST_CASE("missing data exits with code 3") {
  Fresh f;
  CHECK(run("train --corpus " + w("nowhere") + " --out " + w("m.ckpt")) == kExitData);
}

TEST_CASE("embed, score and eval agree with end-to-end eval") {
  Fresh f;
  REQUIRE(run("synth --out " + w("c") + " --classes 3 --per-class 3 --min-frames 16 --max-frames 32 --trials " +
              w("t.txt")) == 0);
  REQUIRE(run("train --corpus " + w("c") + " --out " + w("m.ckpt") + " " + kTinyTrain) == 0);
  CHECK(fs::exists(kWork / "m.ckpt.log.csv"));
  REQUIRE(run("embed --checkpoint " + w("m.ckpt") + " --features " + w("c") + " --out " + w("e")) == 0);
  REQUIRE(run("score --embeddings " + w("e") + " --trials " + w("t.txt") + " --out " + w("s.txt")) == 0);
  REQUIRE(run("eval --trials " + w("t.txt") + " --scores " + w("s.txt") + " --report " + w("r1.json")) == 0);
  REQUIRE(run("eval --trials " + w("t.txt") + " --checkpoint " + w("m.ckpt") + " --features " + w("c") +
              " --report " + w("r2.json")) == 0);
  const auto r1 = nlohmann::json::parse(read_text(kWork / "r1.json"));
  const auto r2 = nlohmann::json::parse(read_text(kWork / "r2.json"));
  CHECK(r1 == r2);
  CHECK(read_text(kWork / "r1.json.det.csv").rfind("threshold,p_miss,p_fa", 0) == 0);
}

TEST_CASE("report JSON follows the documented schema") {
  Fresh f;
  REQUIRE(run("synth --out " + w("c") + " --classes 2 --per-class 3 --min-frames 16 --max-frames 24 --trials " +
              w("t.txt")) == 0);
  REQUIRE(run("train --corpus " + w("c") + " --out " + w("m.ckpt") + " " + kTinyTrain) == 0);
  REQUIRE(run("eval --trials " + w("t.txt") + " --checkpoint " + w("m.ckpt") + " --features " + w("c") +
              " --report " + w("r.json") + " --p-target 0.05") == 0);
  const auto j = nlohmann::json::parse(read_text(kWork / "r.json"));
  REQUIRE(j.is_object());
  CHECK(j.size() == 6);
  for (const char* k : {"eer", "min_cdet"}) {
    REQUIRE(j.contains(k));
    CHECK(j[k].is_number_float());
    CHECK(j[k].get<double>() >= 0.0);
    CHECK(j[k].get<double>() <= 1.0);
  }
  for (const char* k : {"n_trials", "n_target", "n_nontarget"}) {
    REQUIRE(j.contains(k));
    CHECK(j[k].is_number_unsigned());
  }
  CHECK(j["n_trials"].get<int>() == 15);
  CHECK(j["n_target"].get<int>() + j["n_nontarget"].get<int>() == 15);
  REQUIRE(j.contains("params"));
  CHECK(j["params"].size() == 3);
  CHECK(j["params"]["p_target"].get<double>() == 0.05);
  CHECK(j["params"]["c_miss"].is_number());
  CHECK(j["params"]["c_fa"].is_number());
  const auto back = VerificationReport::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("train is deterministic for a fixed seed") {
  Fresh f;
  REQUIRE(run("synth --out " + w("c") + " --classes 2 --per-class 3 --min-frames 16 --max-frames 24") == 0);
  const std::string common = std::string(kTinyTrain) + " --precision float64 --seed 3";
  REQUIRE(run("train --corpus " + w("c") + " --out " + w("a.ckpt") + " " + common) == 0);
  REQUIRE(run("train --corpus " + w("c") + " --out " + w("b.ckpt") + " " + common) == 0);
  CHECK(read_text(kWork / "a.ckpt") == read_text(kWork / "b.ckpt"));
}
