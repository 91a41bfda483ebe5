/*
 * Copyright 2026 The semshap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Runs the installed command-line tool as a subprocess.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "gtest/gtest.h"
#include "json.hpp"
#include "scenes.hpp"
#include "semshap/image.hpp"
#include "semshap/record.hpp"
#include "temp_dir.hpp"

namespace semshap {
namespace {

namespace fs = std::filesystem;
using ::semshap::testing::kSceneDims;
using ::semshap::testing::TempDir;
using ::semshap::testing::ThreeRegionConfig;
using ::semshap::testing::WriteConfig;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult RunCli(const std::string& args) {
  const std::string command = std::string(SEMSHAP_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(command.c_str(), "r");
  RunResult result;
  if (pipe == nullptr) return result;
  char buffer[4096];
  while (std::fgets(buffer, sizeof(buffer), pipe) != nullptr) result.output += buffer;
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = WriteConfig(dir_.path(), ThreeRegionConfig());
    image_ = dir_.path() / "scene.png";
    WritePng(image_, PaintOracleScene(ThreeRegionConfig(), kSceneDims));
  }

  std::string Oracle() const { return "--model oracle:" + config_.string(); }
  std::string External(const std::string& extra = "") const {
    return "--model '" + std::string(SEMSHAP_FAKE_MODEL_PATH) + " --oracle " + config_.string() +
           extra + "'";
  }
  fs::path Out(const std::string& name) const { return dir_.path() / name; }

  TempDir dir_;
  fs::path config_;
  fs::path image_;
};

TEST_F(CliTest, SuperpixelExactOnOracle) {
  const auto r = RunCli("explain --image " + image_.string() + " " + Oracle() +
                        " --features superpixel --grid 3x4 --sampler exact --out " +
                        Out("sp").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const ExplanationRecord record = ExplanationRecord::Load(Out("sp") / "record.json");
  EXPECT_EQ(record.num_features(), 12);
  EXPECT_LE(record.explanation.EfficiencyResidual(), 1e-9);
  EXPECT_EQ(record.reference_caption, "dog ball grass");
  EXPECT_EQ(record.feature_config.grid_rows, 3);
  for (const char* file : {"attribution.f32", "attribution.json", "attribution.png",
                           "masks/mask_0.png", "masks/mask_11.png", "masks/masks.json"}) {
    EXPECT_TRUE(fs::exists(Out("sp") / file)) << file;
  }
}

TEST_F(CliTest, DffBudgetIsRecorded) {
  const auto r = RunCli("explain --image " + image_.string() + " " + Oracle() +
                        " --features dff --k 10 --sampler priority --budget 2048 --out " +
                        Out("dff").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const ExplanationRecord record = ExplanationRecord::Load(Out("dff") / "record.json");
  EXPECT_EQ(record.num_features(), 11);
  EXPECT_EQ(record.explanation.budget, 2048);
  EXPECT_EQ(record.explanation.evaluated, 2046);
  EXPECT_EQ(record.feature_kinds.back(), "leftover");
  EXPECT_EQ(record.feature_config.heatmap_normalization, "minmax_before_upsample");
  EXPECT_LE(record.explanation.EfficiencyResidual(), 1e-9);
}

TEST_F(CliTest, MissingImageLeavesNoOutput) {
  const auto r = RunCli("explain --image " + (dir_.path() / "absent.png").string() + " " +
                        Oracle() + " --features superpixel --sampler exact --out " +
                        Out("none").string());
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_FALSE(fs::exists(Out("none")));
  for (const auto& entry : fs::directory_iterator(dir_.path())) {
    EXPECT_EQ(entry.path().filename().string().find(".none.staging"), std::string::npos);
  }
}

TEST_F(CliTest, ConfigurationErrorsExitOne) {
  const std::string common = "explain --image " + image_.string() + " " + Oracle();
  const std::string out = " --out " + Out("x").string();
  EXPECT_EQ(RunCli(common + " --features frcnn --sampler exact" + out).exit_code, 1);
  const std::string grey = " --features superpixel --baseline grey --sampler exact";
  EXPECT_EQ(RunCli(common + grey + out).exit_code, 1);
  EXPECT_EQ(RunCli(common + " --sampler sideways" + out).exit_code, 1);
  EXPECT_FALSE(fs::exists(Out("x")));
}

TEST_F(CliTest, ModelFailureExitsTwo) {
  const auto r = RunCli("explain --image " + image_.string() + " " +
                        External(" --crash-after 3") +
                        " --features superpixel --grid 2x2 --sampler exact --out " +
                        Out("crash").string());
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_NE(r.output.find("status 7"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(Out("crash")));
}

TEST_F(CliTest, NumericalFailureExitsThree) {
  const auto r = RunCli("explain --image " + image_.string() + " " + Oracle() +
                        " --features superpixel --grid 1x2 --sampler exact --out " +
                        Out("ok").string());
  EXPECT_EQ(r.exit_code, 0) << r.output;
  const auto normalize =
      RunCli("analyze normalize --record " + (Out("ok") / "record.json").string());
  EXPECT_EQ(normalize.exit_code, 0) << normalize.output;
  // Doctor the record so one mask is empty: size normalization is undefined.
  auto j = nlohmann::json::parse(ReadBinaryFile(Out("ok") / "record.json"));
  j["feature_areas"][1] = 0;
  const std::string text = j.dump();
  WriteBinaryFile(dir_.path() / "bad.json", std::vector<std::uint8_t>(text.begin(), text.end()));
  const auto bad = RunCli("analyze normalize --record " + (dir_.path() / "bad.json").string());
  EXPECT_EQ(bad.exit_code, 3) << bad.output;
  EXPECT_NE(bad.output.find("feature 1"), std::string::npos) << bad.output;
}

TEST_F(CliTest, ExternalModelWithEmbeddingsAndQuestion) {
  const auto r = RunCli("explain --image " + image_.string() + " " + External(" --embed") +
                        " --question 'what is shown?' --features dff --k 4 --sampler montecarlo"
                        " --budget 20 --seed 5 --out " + Out("ext").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const ExplanationRecord record = ExplanationRecord::Load(Out("ext") / "record.json");
  EXPECT_EQ(record.question, "what is shown?");
  EXPECT_EQ(record.reference_caption, "what is shown? dog ball grass");
  EXPECT_EQ(record.explanation.seed, 5u);
  EXPECT_EQ(record.game_config.embedder.rfind("model:", 0), 0u) << record.game_config.embedder;
  EXPECT_LE(record.explanation.EfficiencyResidual(), 1e-9);
}

TEST_F(CliTest, ExternalMasksAndManifest) {
  const auto first = RunCli("explain --image " + image_.string() + " " + Oracle() +
                            " --features superpixel --grid 2x2 --sampler exact --out " +
                            Out("first").string());
  ASSERT_EQ(first.exit_code, 0) << first.output;
  const std::string manifest = (dir_.path() / "list.txt").string();
  const std::string text = "# images\nscene.png\n\nscene.png\n";
  WriteBinaryFile(manifest, std::vector<std::uint8_t>(text.begin(), text.end()));
  const auto r = RunCli("explain --manifest " + manifest + " " + Oracle() + " --features masks:" +
                        (Out("first") / "masks").string() + " --sampler exact --out " +
                        Out("batch").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto a = ExplanationRecord::Load(Out("batch") / "0_scene" / "record.json");
  const auto b = ExplanationRecord::Load(Out("batch") / "1_scene" / "record.json");
  const auto original = ExplanationRecord::Load(Out("first") / "record.json");
  EXPECT_EQ(a.num_features(), 4);
  EXPECT_EQ(a.explanation.phi, original.explanation.phi);
  EXPECT_EQ(a.explanation, b.explanation);
}

TEST_F(CliTest, AnalyzeRbo) {
  const auto r = RunCli("analyze rbo --a 1,2,3 --b 2,1,3 --p 0.9");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NEAR(std::stod(r.output), 0.9, 1e-12);
  EXPECT_EQ(RunCli("analyze rbo --a 1,2 --b 1,2,3").exit_code, 1);
}

TEST_F(CliTest, AnalyzeSamplingError) {
  const auto r = RunCli("analyze sampling-error --image " + image_.string() + " " + Oracle() +
                        " --features superpixel --grid 2x3 --budgets 32,16,8 --runs 3 --out " +
                        Out("err").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto j = nlohmann::json::parse(ReadBinaryFile(Out("err") / "error.json"));
  EXPECT_EQ(j["budgets"], nlohmann::json({32, 16, 8}));
  EXPECT_EQ(j["runs"], 3);
  EXPECT_TRUE(fs::exists(Out("err") / "error.csv"));
}

TEST_F(CliTest, RefusesToOverwriteOutput) {
  fs::create_directories(Out("busy"));
  WriteBinaryFile(Out("busy") / "keep.txt", std::vector<std::uint8_t>{'x'});
  const auto r = RunCli("explain --image " + image_.string() + " " + Oracle() +
                        " --features superpixel --grid 2x2 --sampler exact --out " +
                        Out("busy").string());
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_TRUE(fs::exists(Out("busy") / "keep.txt"));
}

}  // namespace
}  // namespace semshap
