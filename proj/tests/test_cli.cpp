#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "bgr/bgrm.hpp"
#include "bgr/graphs.hpp"
#include "bgr/panoptic.hpp"
#include "bgr/toytask.hpp"
#include "bgr/train.hpp"
#include "run_cli.hpp"

using namespace bgr;
using cli_test::run;
using cli_test::fresh_dir;
using cli_test::slurp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path small_config(const fs::path& dir, int iterations = 40) {
  const fs::path p = dir / "run.json";
  std::ofstream(p) << json{{"iterations", iterations}, {"eval_every", 0}}.dump();
  return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("gradcheck").code, 2);
  EXPECT_EQ(run("eval --checkpoint /nonexistent/dir").code, 2);
  EXPECT_EQ(run("train --mode sideways --out /tmp/bgr_cli_never").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, GradcheckFilterAndCorruption) {
  const auto ok = run("gradcheck matmul");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("matmul/0"), std::string::npos);
  EXPECT_EQ(ok.out.find("softmax"), std::string::npos);

  const auto none = run("gradcheck no_such_op");
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.out.find("no ops matched"), std::string::npos);

  const auto bad = run("gradcheck --corrupt 'pipeline.*'");
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, SceneThenPqOfGroundTruthAgainstItselfIsOne) {
  const fs::path d = fresh_dir("pq");
  ASSERT_EQ(run("scene --seed 3 --out " + q(d)).code, 0);
  for (const char* f : {"features.bgrm", "features.bgrm.json", "scores.bgrm", "gt.bgrp",
                        "gt.bgrp.json", "semantic.bgrm", "instances.json", "scene.json"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const auto r = run("pq --pred " + q(d / "gt.bgrp") + " --gt " + q(d / "gt.bgrp") + " --out " +
                     q(d / "pq.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(d / "pq.json");
  const json report = json::parse(in);
  EXPECT_EQ(report["PQ"], 1.0);
  EXPECT_EQ(report["SQ"], 1.0);
}

TEST(Cli, FuseWithoutInstancesGivesStuffOnly) {
  const fs::path d = fresh_dir("fuse");
  ASSERT_EQ(run("scene --seed 4 --out " + q(d)).code, 0);
  std::ofstream(d / "empty.json") << R"({"height":12,"width":12,"instances":[]})";
  const auto r = run("fuse --instances " + q(d / "empty.json") + " --semantic " +
                     q(d / "semantic.bgrm") + " --out " + q(d / "f.bgrp") + " --min-stuff-area 0");
  ASSERT_EQ(r.code, 0) << r.out;
  const PanopticMap m = load_panoptic(d / "f.bgrp");
  const Mat sem = load_bgrm(d / "semantic.bgrm");
  for (const auto& s : m.segments) EXPECT_FALSE(s.is_thing);
  for (std::size_t p = 0; p < m.ids.size(); ++p)
    EXPECT_EQ(m.find(m.ids[p])->class_id, static_cast<int>(sem[p]));

  // the scene's own proposals fuse into a valid map with things
  const auto full = run("fuse --instances " + q(d / "instances.json") + " --semantic " +
                        q(d / "semantic.bgrm") + " --out " + q(d / "g.bgrp"));
  ASSERT_EQ(full.code, 0) << full.out;
  EXPECT_NE(json::parse(full.out)["things"], 0);
  EXPECT_EQ(run("fuse --instances " + q(d / "empty.json") + " --semantic " + q(d / "features.bgrm") +
                " --out " + q(d / "h.bgrp"))
                .code,
            2);
}

// On a noise-free scene, pixels most similar to a class center are the
// pixels of that class.
TEST(Cli, CentersSimilarityPicksOutTheClass) {
  const fs::path d = fresh_dir("centers");
  ASSERT_EQ(run("scene --seed 5 --noise 0 --out " + q(d)).code, 0);
  const ChannelRaster f = load_raster(d / "features.bgrm");
  const ChannelRaster s = load_raster(d / "scores.bgrm");
  std::vector<Mat> sims;
  for (std::size_t c = 0; c < s.channels(); ++c) {
    const fs::path out = d / ("sim" + std::to_string(c) + ".bgrm");
    ASSERT_EQ(run("centers --features " + q(d / "features.bgrm") + " --scores " +
                  q(d / "scores.bgrm") + " --class " + std::to_string(c) + " --out " + q(out))
                  .code,
              0);
    sims.push_back(load_raster(out).values());
  }
  const Mat sem = load_bgrm(d / "semantic.bgrm");
  const PanopticMap gt = load_panoptic(d / "gt.bgrp");
  std::size_t agree = 0, total = 0;
  for (std::size_t p = 0; p < f.pixels(); ++p) {
    if (gt.find(gt.ids[p])->is_thing) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < sims.size(); ++c)
      if (sims[c][p] > sims[best][p]) best = c;
    ++total;
    agree += static_cast<int>(best) == static_cast<int>(sem[p]);
  }
  ASSERT_GT(total, 0u);
  EXPECT_GE(static_cast<double>(agree), 0.99 * static_cast<double>(total));
  EXPECT_EQ(run("centers --features " + q(d / "features.bgrm") + " --scores " +
                q(d / "scores.bgrm") + " --class 9 --out " + q(d / "x.bgrm"))
                .code,
            2);
}

TEST(Cli, TrainAndEvalAreDeterministic) {
  const fs::path d = fresh_dir("det");
  const fs::path cfg = small_config(d);
  ASSERT_EQ(run("train --config " + q(cfg) + " --out " + q(d / "a")).code, 0);
  ASSERT_EQ(run("train --config " + q(cfg) + " --out " + q(d / "b")).code, 0);
  EXPECT_EQ(slurp(d / "a/train.jsonl"), slurp(d / "b/train.jsonl"));
  for (const auto& e : fs::directory_iterator(d / "a/checkpoint")) {
    if (e.path().filename() == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(d / "b/checkpoint" / e.path().filename()));
  }
  const auto e1 = run("eval --checkpoint " + q(d / "a/checkpoint") + " -n 8 --out " + q(d / "e1.json"));
  const auto e2 = run("eval --checkpoint " + q(d / "b/checkpoint") + " -n 8 --out " + q(d / "e2.json"));
  ASSERT_EQ(e1.code, 0) << e1.out;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_EQ(slurp(d / "e1.json"), slurp(d / "e2.json"));
  EXPECT_EQ(json::parse(slurp(d / "e1.json"))["scenes"], 8);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path d = fresh_dir("cfg");
  std::ofstream(d / "bad.json") << R"({"iterations":5,"learning_rate":0.1})";
  EXPECT_EQ(run("train --config " + q(d / "bad.json") + " --out " + q(d / "o")).code, 2);
  std::ofstream(d / "broken.json") << "{\"iterations\":";
  EXPECT_EQ(run("train --config " + q(d / "broken.json") + " --out " + q(d / "o")).code, 2);
}

TEST(Cli, DivergentTrainingExitsOne) {
  const fs::path d = fresh_dir("div");
  std::ofstream(d / "hot.json") << R"({"iterations":20,"eval_every":0,"lr":1e6})";
  const auto r = run("train --config " + q(d / "hot.json") + " --out " + q(d / "o"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_TRUE(fs::exists(d / "o/checkpoint/manifest.json"));
}

TEST(Cli, AblateCoversEveryModeWithOneSeed) {
  const fs::path d = fresh_dir("ablate");
  const fs::path cfg = small_config(d, 30);
  const auto r = run("ablate --config " + q(cfg) + " --seed 4 -n 6 --out " + q(d / "ab"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json doc = json::parse(slurp(d / "ab/ablation.json"));
  ASSERT_EQ(doc["rows"].size(), 7u);
  std::set<std::string> modes;
  for (const auto& row : doc["rows"]) {
    modes.insert(row["mode"].get<std::string>());
    EXPECT_EQ(row["seed"], 4);
    EXPECT_EQ(row["scenes"], 6);
  }
  EXPECT_EQ(modes.size(), 7u);
  EXPECT_TRUE(fs::exists(d / "ab/ablation.txt"));

  // the disconnected row equals a separate train + eval with the same settings
  ASSERT_EQ(run("train --config " + q(cfg) + " --seed 4 --mode disconnected --out " + q(d / "solo")).code, 0);
  ASSERT_EQ(run("eval --checkpoint " + q(d / "solo/checkpoint") + " -n 6 --out " + q(d / "solo.json")).code, 0);
  const json solo = json::parse(slurp(d / "solo.json"));
  for (const auto& row : doc["rows"])
    if (row["mode"] == "disconnected") {
      EXPECT_EQ(row["PQ"], solo["PQ"]);
      EXPECT_EQ(row["PQ_th"], solo["PQ_th"]);
    }
}

TEST(Cli, WrittenFilesReadBackAndRewriteIdentically) {
  const fs::path d = fresh_dir("rt");
  ASSERT_EQ(run("scene --seed 8 --out " + q(d)).code, 0);
  save_raster(d / "f2.bgrm", load_raster(d / "features.bgrm"));
  EXPECT_EQ(slurp(d / "f2.bgrm"), slurp(d / "features.bgrm"));
  EXPECT_EQ(slurp(d / "f2.bgrm.json"), slurp(d / "features.bgrm.json"));
  save_panoptic(d / "g2.bgrp", load_panoptic(d / "gt.bgrp"));
  EXPECT_EQ(slurp(d / "g2.bgrp"), slurp(d / "gt.bgrp"));
  EXPECT_EQ(slurp(d / "g2.bgrp.json"), slurp(d / "gt.bgrp.json"));
}
