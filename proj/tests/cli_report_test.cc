// Copyright 2026 The xdiag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "test_util.h"
#include "xdiag/attribution.h"
#include "xdiag/cli.h"
#include "xdiag/report.h"

namespace xdiag {
namespace {

namespace fs = std::filesystem;
using ::xdiag::testing::PlantedKeywordDataset;
using ::xdiag::testing::SentenceRationaleDataset;

std::string ReadText(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

size_t CountLines(const std::string& text) {
  size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

size_t CountOccurrences(const std::string& text, const std::string& needle) {
  size_t n = 0;
  for (size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) {
    ++n;
  }
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("xdiag_cli_" + std::string(::testing::UnitTest::GetInstance()
                                           ->current_test_info()
                                           ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the installed binary; returns the exit status and keeps stderr.
  int Run(const std::string& args) {
    const std::string err_path = Path("stderr.txt");
    const std::string cmd = std::string(XDIAG_BINARY) + " " + args + " > " +
                            Path("stdout.txt") + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    stderr_ = ReadText(err_path);
    stdout_ = ReadText(Path("stdout.txt"));
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string WriteKeywordData(size_t n = 40) {
    const std::string p = Path("data.jsonl");
    write_dataset(p, PlantedKeywordDataset(n, 1));
    return p;
  }

  fs::path dir_;
  std::string stdout_;
  std::string stderr_;
};

// ---------------------------------------------------------------------------
// saliency

TEST_F(CliTest, SaliencyWritesOneMapPerInstance) {
  const std::string data = WriteKeywordData(25);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique occlusion --out " +
                Path("s.jsonl")),
            0)
      << stderr_;
  EXPECT_EQ(CountLines(ReadText(Path("s.jsonl"))), 25u);
  EXPECT_TRUE(fs::exists(Path("s.jsonl.manifest.json")));
  const RunManifest m = read_manifest(Path("s.jsonl.manifest.json"));
  EXPECT_EQ(m.techniques, (std::vector<std::string>{"occlusion"}));
  EXPECT_EQ(m.model_digests.size(), 1u);
  EXPECT_EQ(m.dataset_digest.size(), 64u);
  EXPECT_EQ(m.version, kToolkitVersion);
}

TEST_F(CliTest, SaliencyTechniqueListIsExpanded) {
  const std::string data = WriteKeywordData(10);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique occlusion,random"
                " --technique gradient_l2 --workers 2 --out " + Path("s.jsonl")),
            0)
      << stderr_;
  EXPECT_EQ(CountLines(ReadText(Path("s.jsonl"))), 30u);
}

TEST_F(CliTest, UnknownTechniqueIsAUsageError) {
  const std::string data = WriteKeywordData(5);
  EXPECT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique foo --out " + Path("s.jsonl")),
            kExitUsage);
  EXPECT_NE(stderr_.find("unknown technique 'foo'"), std::string::npos);
  for (const auto& tag : technique_tags()) {
    EXPECT_NE(stderr_.find(tag), std::string::npos) << tag;
  }
}

TEST_F(CliTest, MissingFilesAreRuntimeErrors) {
  EXPECT_EQ(Run("saliency --data " + Path("nope.jsonl") +
                " --model linear_boe:seed=1 --technique random --out " + Path("s.jsonl")),
            kExitRuntime);
  EXPECT_EQ(Run("frobnicate"), kExitUsage);
  EXPECT_EQ(Run("saliency --data x"), kExitUsage);
}

TEST_F(CliTest, ReplayReproducesSaliencyBytes) {
  const std::string data = WriteKeywordData(15);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model relu_mlp:seed=2,hidden=8 --technique shapley,lime --seed 5"
                " --n-samples 20 --n-perturbations 40 --workers 3 --out " +
                Path("s.jsonl")),
            0)
      << stderr_;
  const std::string first = ReadText(Path("s.jsonl"));
  fs::remove(Path("s.jsonl"));
  ASSERT_EQ(Run("replay --manifest " + Path("s.jsonl.manifest.json")), 0) << stderr_;
  EXPECT_EQ(ReadText(Path("s.jsonl")), first);
}

TEST_F(CliTest, ReplayDetectsChangedOutputs) {
  const std::string data = WriteKeywordData(5);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique random --seed 1 --out " +
                Path("s.jsonl")),
            0);
  // Changing the dataset changes what the recorded command produces.
  write_dataset(data, PlantedKeywordDataset(6, 9));
  EXPECT_EQ(Run("replay --manifest " + Path("s.jsonl.manifest.json")), kExitRuntime);
  EXPECT_NE(stderr_.find("differs"), std::string::npos);
}

// ---------------------------------------------------------------------------
// diag

TEST_F(CliTest, DiagHumanAgreementOnGoldEqualSaliency) {
  const Dataset ds = PlantedKeywordDataset(12, 3);
  const std::string data = Path("data.jsonl");
  write_dataset(data, ds);
  std::vector<SaliencyMap> maps;
  for (const auto& inst : ds.instances) {
    SaliencyMap m;
    m.instance_id = inst.id;
    m.technique = "gold";
    m.class_scores = Eigen::MatrixXd::Zero(2, inst.tokens.size());
    for (size_t t = 0; t < inst.tokens.size(); ++t) {
      m.class_scores(inst.label, t) = (*inst.token_rationale)[t];
    }
    m.predicted_class = 1 - inst.label;
    maps.push_back(m);
  }
  write_saliency_file(Path("gold.jsonl"), maps);
  ASSERT_EQ(Run("diag --data " + data + " --saliency " + Path("gold.jsonl") +
                " --property ha --gold-class --out " + Path("r.json")),
            0)
      << stderr_;
  const Report r = read_report(Path("r.json"));
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].score.value, 1.0);
  EXPECT_EQ(r.entries[0].technique, "gold");

  // Scoring the predicted-class row instead finds no rationale there.
  ASSERT_EQ(Run("diag --data " + data + " --saliency " + Path("gold.jsonl") +
                " --property ha --predicted-class --out " + Path("p.json")),
            0);
  EXPECT_LT(read_report(Path("p.json")).entries[0].score.value, 1.0);
}

TEST_F(CliTest, DiagRcNeedsTwoModels) {
  const std::string data = WriteKeywordData(5);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique random --out " + Path("s.jsonl")),
            0);
  EXPECT_EQ(Run("diag --data " + data + " --model linear_boe:seed=1 --saliency " +
                Path("s.jsonl") + " --property rc"),
            kExitUsage);
  EXPECT_NE(stderr_.find("RC requires ≥2 models"), std::string::npos);
}

TEST_F(CliTest, DiagFaithfulnessUsesTheGivenThresholds) {
  const std::string data = WriteKeywordData(20);
  ASSERT_EQ(Run("saliency --data " + data +
                " --model linear_boe:seed=1 --technique gradient_l2 --out " +
                Path("s.jsonl")),
            0);
  ASSERT_EQ(Run("diag --data " + data + " --model linear_boe:seed=1 --saliency " +
                Path("s.jsonl") + " --property f --thresholds 0,50,100 --out " +
                Path("r.json")),
            0)
      << stderr_;
  const Report r = read_report(Path("r.json"));
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].score.series.at("thresholds"), (std::vector<double>{0, 50, 100}));
  EXPECT_EQ(r.entries[0].score.series.at("performance").size(), 3u);
  EXPECT_EQ(read_manifest(Path("r.json.manifest.json")).schedule,
            (std::vector<double>{0, 50, 100}));

  EXPECT_EQ(Run("diag --data " + data + " --model linear_boe:seed=1 --saliency " +
                Path("s.jsonl") + " --property f --thresholds 50,10"),
            kExitUsage);
  EXPECT_EQ(Run("diag --data " + data + " --saliency " + Path("s.jsonl") +
                " --property bogus"),
            kExitUsage);
}

TEST_F(CliTest, DiagRcWithTwoModelsAndReplay) {
  const std::string data = WriteKeywordData(20);
  for (int s : {1, 2}) {
    ASSERT_EQ(Run("saliency --data " + data + " --model relu_mlp:seed=" +
                  std::to_string(s) + ",hidden=8 --technique gradient_l2 --out " +
                  Path("s" + std::to_string(s) + ".jsonl")),
              0);
  }
  const std::string diag = "diag --data " + data +
                           " --model relu_mlp:seed=1,hidden=8 --model relu_mlp:seed=2,hidden=8"
                           " --saliency " + Path("s1.jsonl") + " --saliency " +
                           Path("s2.jsonl") + " --property rc,ci --seed 4 --out " +
                           Path("r.json");
  ASSERT_EQ(Run(diag), 0) << stderr_;
  const std::string first = ReadText(Path("r.json"));
  const Report r = read_report(Path("r.json"));
  size_t rc = 0;
  for (const auto& e : r.entries) rc += e.score.property == Property::kRC;
  EXPECT_EQ(rc, 1u);
  fs::remove(Path("r.json"));
  ASSERT_EQ(Run("replay --manifest " + Path("r.json.manifest.json")), 0) << stderr_;
  EXPECT_EQ(ReadText(Path("r.json")), first);
}

TEST_F(CliTest, DiagSkipsDegenerateEntriesWithAWarning) {
  const std::string data = WriteKeywordData(25);
  // Random maps do not depend on the model, so both runs share every map and
  // all saliency distances are zero.
  for (int s : {1, 2}) {
    ASSERT_EQ(Run("saliency --data " + data + " --model linear_boe:seed=" + std::to_string(s) +
                  " --technique random,occlusion --seed 3 --out " +
                  Path("s" + std::to_string(s) + ".jsonl")),
              0);
  }
  ASSERT_EQ(Run("diag --data " + data +
                " --model linear_boe:seed=1 --model linear_boe:seed=2 --saliency " +
                Path("s1.jsonl") + " --saliency " + Path("s2.jsonl") +
                " --property rc --out " + Path("r.json")),
            0)
      << stderr_;
  EXPECT_NE(stderr_.find("RC / random skipped"), std::string::npos) << stderr_;
  const Report r = read_report(Path("r.json"));
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].technique, "occlusion");
}

// ---------------------------------------------------------------------------
// train-guided

std::string WriteRationaleData(const std::string& path, size_t n, uint64_t seed) {
  write_dataset(path, SentenceRationaleDataset(n, seed));
  return path;
}

TEST_F(CliTest, TrainGuidedHistoryColumns) {
  const std::string data = WriteRationaleData(Path("d.jsonl"), 20, 1);
  ASSERT_EQ(Run("train-guided --data " + data +
                " --objectives supervised,dc --mask-k 2 --epochs 2 --out " + Path("m.bin")),
            0)
      << stderr_;
  const std::string history = ReadText(Path("m.bin.history.csv"));
  const std::string header = history.substr(0, history.find('\n'));
  EXPECT_NE(header.find("loss_sup"), std::string::npos);
  EXPECT_NE(header.find("loss_dc"), std::string::npos);
  EXPECT_EQ(CountLines(history), 3u);
  EXPECT_TRUE(fs::exists(Path("m.bin.json")));
  EXPECT_NO_THROW(ToyJointModel::load(Path("m.bin")));
}

TEST_F(CliTest, TrainGuidedRejectsBadLambda) {
  const std::string data = WriteRationaleData(Path("d.jsonl"), 5, 1);
  EXPECT_EQ(Run("train-guided --data " + data + " --objectives f --lambda 1.5 --out " +
                Path("m.bin")),
            kExitUsage);
  EXPECT_NE(stderr_.find("lambda"), std::string::npos);
  EXPECT_EQ(Run("train-guided --data " + data + " --objectives nope --out " + Path("m.bin")),
            kExitUsage);
}

TEST_F(CliTest, TrainGuidedIsSeedDeterministic) {
  const std::string data = WriteRationaleData(Path("d.jsonl"), 20, 2);
  const std::string common = "train-guided --data " + data +
                             " --objectives supervised,f,dc,ci --baseline --epochs 2";
  ASSERT_EQ(Run(common + " --seed 7 --out " + Path("a.bin")), 0) << stderr_;
  ASSERT_EQ(Run(common + " --seed 7 --out " + Path("b.bin")), 0) << stderr_;
  EXPECT_EQ(ReadText(Path("a.bin")), ReadText(Path("b.bin")));
  EXPECT_EQ(ReadText(Path("a.bin.history.csv")), ReadText(Path("b.bin.history.csv")));
  ASSERT_EQ(Run(common + " --seed 8 --out " + Path("c.bin")), 0);
  EXPECT_NE(ReadText(Path("a.bin")), ReadText(Path("c.bin")));
}

TEST_F(CliTest, TrainGuidedConfigFile) {
  const std::string data = WriteRationaleData(Path("d.jsonl"), 10, 3);
  GuidedConfig cfg;
  cfg.objectives = {Objective::kSupervised, Objective::kConfidence};
  cfg.epochs = 1;
  std::ofstream(Path("cfg.json")) << guided_config_to_json(cfg);
  ASSERT_EQ(Run("train-guided --data " + data + " --config " + Path("cfg.json") +
                " --out " + Path("m.bin")),
            0)
      << stderr_;
  EXPECT_NE(ReadText(Path("m.bin.history.csv")).find("loss_ci"), std::string::npos);
  ASSERT_EQ(Run("replay --manifest " + Path("m.bin.manifest.json")), 0) << stderr_;
}

// ---------------------------------------------------------------------------
// report

Report FiveByTwo() {
  Report r;
  const char* techniques[] = {"gradient_l2", "occlusion"};
  const Property properties[] = {Property::kHA, Property::kCI, Property::kF, Property::kRC,
                                 Property::kDC};
  double v = 0.1;
  for (const char* t : techniques) {
    for (Property p : properties) {
      ReportEntry e{"toy", std::string(64, 'a'), "linear_boe:seed=1", t, {}};
      e.score.property = p;
      e.score.value = v;
      v += 0.07;
      if (p == Property::kF) {
        e.score.series["thresholds"] = {0, 50, 100};
        e.score.series["performance"] = {0.9, 0.6, 0.5};
      }
      r.upsert(e);
    }
  }
  return r;
}

TEST_F(CliTest, ReportSpiderAndCsvShapes) {
  write_report(Path("r.json"), FiveByTwo());
  ASSERT_EQ(Run("report --report " + Path("r.json") + " --out-dir " + Path("out")), 0)
      << stderr_;
  const std::string csv = ReadText(Path("out/report.csv"));
  EXPECT_EQ(CountLines(csv), 1u + 2 * 5);
  std::vector<fs::path> spiders, curves;
  for (const auto& f : fs::directory_iterator(Path("out"))) {
    const std::string name = f.path().filename().string();
    if (name.rfind("spider_", 0) == 0) spiders.push_back(f.path());
    if (name.rfind("curve_", 0) == 0) curves.push_back(f.path());
  }
  ASSERT_EQ(spiders.size(), 1u);
  EXPECT_EQ(curves.size(), 2u);
  const std::string svg = ReadText(spiders[0]);
  EXPECT_EQ(CountOccurrences(svg, "stroke=\"#999\""), 5u);
  EXPECT_EQ(CountOccurrences(svg, "class=\"series\""), 2u);
  EXPECT_TRUE(fs::exists(Path("out/report.csv.manifest.json")));
}

TEST_F(CliTest, ReportWithOnlyFaithfulnessSkipsTheSpider) {
  Report r;
  for (const char* t : {"a", "b"}) {
    ReportEntry e{"toy", std::string(64, 'b'), "", t, {}};
    e.score.property = Property::kF;
    e.score.series["thresholds"] = {0, 100};
    e.score.series["performance"] = {1, 0.5};
    r.upsert(e);
  }
  write_report(Path("r.json"), r);
  ASSERT_EQ(Run("report --report " + Path("r.json") + " --out-dir " + Path("out")), 0);
  EXPECT_NE(stderr_.find("spider chart"), std::string::npos);
  EXPECT_NE(stderr_.find("skipped"), std::string::npos);
  size_t svgs = 0;
  for (const auto& f : fs::directory_iterator(Path("out"))) {
    const std::string name = f.path().filename().string();
    EXPECT_NE(name.rfind("spider_", 0), 0u);
    svgs += f.path().extension() == ".svg";
  }
  EXPECT_EQ(svgs, 2u);
}

TEST_F(CliTest, EmptyReportIsAnError) {
  write_report(Path("r.json"), Report{});
  EXPECT_EQ(Run("report --report " + Path("r.json") + " --out-dir " + Path("out")),
            kExitRuntime);
}

TEST(ReportTest, UpsertKeepsKeysUniqueAndSorted) {
  Report r;
  ReportEntry e{"d", "m", "", "t2", {}};
  e.score.property = Property::kHA;
  e.score.value = 0.5;
  r.upsert(e);
  e.score.value = 0.7;
  r.upsert(e);
  e.technique = "t1";
  r.upsert(e);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].technique, "t1");
  EXPECT_EQ(r.entries[1].score.value, 0.7);
}

TEST(ReportTest, JsonRoundTripIsExact) {
  Report r = FiveByTwo();
  r.entries[0].score.aux["p_value"] = 0.1 + 0.2;
  r.entries[0].score.warnings = {"w"};
  r.entries[0].score.n = 17;
  const std::string text = report_to_json(r);
  EXPECT_EQ(report_to_json(report_from_json(text)), text);
  EXPECT_EQ(report_from_json(text).entries[0].score.aux.at("p_value"), 0.1 + 0.2);
  EXPECT_THROW(report_from_json("{\"entries\": 3}"), ReportError);
}

TEST(ReportTest, SpiderScalesEachAxis) {
  const std::string svg =
      spider_svg("t", {"a", "b", "c"}, {{"x", {0, 5, 1}}, {"y", {1, 10, 1}}});
  EXPECT_EQ(CountOccurrences(svg, "class=\"series\""), 2u);
  EXPECT_EQ(CountOccurrences(svg, "stroke=\"#999\""), 3u);
}

TEST(ManifestTest, RoundTrip) {
  RunManifest m;
  m.argv = {"saliency", "--seed", "3"};
  m.seed = 3;
  m.dataset_digest = std::string(64, 'c');
  m.model_digests = {"x", "y"};
  m.techniques = {"random"};
  m.schedule = {0, 10};
  m.timestamp = utc_timestamp();
  m.outputs["a"] = "b";
  m.wall_seconds = 1.25;
  const std::string text = manifest_to_json(m);
  EXPECT_EQ(manifest_to_json(manifest_from_json(text)), text);
  EXPECT_EQ(manifest_path_for("out/s.jsonl"), fs::path("out/s.jsonl.manifest.json"));
  EXPECT_EQ(m.timestamp.back(), 'Z');
}

}  // namespace
}  // namespace xdiag
