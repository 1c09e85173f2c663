// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dualsplat/io/checkpoint.hpp"
#include "dualsplat/io/manifest.hpp"
#include "dualsplat/io/metrics.hpp"
#include "dualsplat/io/png.hpp"
#include "dualsplat/segquery.hpp"
#include "test_util.hpp"

#ifndef DUALSPLAT_CLI_PATH
#error "DUALSPLAT_CLI_PATH must name the CLI binary"
#endif

namespace dualsplat {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(DUALSPLAT_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new std::string(testing::temp_dir("cli"));
    std::ofstream(*root_ + "/scene.cfg") << "objects = 2\ngaussians_per_object = 40\nviews = 6\neval_stride = 3\n"
                                            "width = 32\nheight = 32\nfloaters = 1\n";
    std::ofstream(*root_ + "/train.cfg") << "lambda_o = 0.3\ngrad_threshold = 0.005\nlog_interval = 5\n";
    synth_ = new RunResult(run("synth --out " + *root_ + "/scene --config " + *root_ + "/scene.cfg"));
    train_ = new RunResult(run("train --scene " + scene() + " --labels " + *root_ + "/scene/labels.txt --iters 40 "
                               "--stage2 25 --config " + *root_ + "/train.cfg --out " + *root_ + "/run --quiet"));
  }
  static void TearDownTestSuite() {
    delete synth_;
    delete train_;
    delete root_;
  }
  static std::string scene() { return *root_ + "/scene/scene.txt"; }
  static std::string ckpt() { return *root_ + "/run/checkpoint.ply"; }

  static std::string* root_;
  static RunResult* synth_;
  static RunResult* train_;
};
std::string* Cli::root_ = nullptr;
RunResult* Cli::synth_ = nullptr;
RunResult* Cli::train_ = nullptr;

TEST_F(Cli, SynthWritesManifestsAndData) {
  ASSERT_EQ(synth_->code, 0);
  for (const char* f : {"scene.txt", "labels.txt", "init.ply", "truth.ply", "scene_config.txt",
                        "images/view_000.png", "labels/ids_005.png"}) {
    EXPECT_TRUE(fs::exists(*root_ + "/scene/" + f)) << f;
  }
  const io::SceneManifest m = io::load_scene_manifest(scene());
  EXPECT_EQ(m.dataset.cameras.size(), 6u);
  EXPECT_EQ(m.dataset.eval_views, std::vector<int>({2, 5}));
  EXPECT_EQ(m.gt_object_count(), 2);
  EXPECT_EQ(io::load_checkpoint(*root_ + "/scene/truth.ply").size(), 81u);
}

TEST_F(Cli, TrainWritesCheckpointAndEchoedConfig) {
  ASSERT_EQ(train_->code, 0);
  const GaussianCloud c = io::load_checkpoint(ckpt());
  EXPECT_TRUE(c.instance_ready);
  EXPECT_EQ(c.object_count, 2);
  const io::MetricsLog log = io::parse_metrics_log(slurp(*root_ + "/run/metrics.log"));
  EXPECT_EQ(log.records.size(), 8u);
  EXPECT_EQ(log.records.back().iteration, 40);
  EXPECT_EQ(log.records.back().stage, 2);
  EXPECT_NE(std::find(log.config.begin(), log.config.end(), "lambda_o = 0.3"), log.config.end());
  EXPECT_NE(std::find(log.config.begin(), log.config.end(), "total_iters = 40"), log.config.end());
}

TEST_F(Cli, SameSeedGivesByteIdenticalCheckpoint) {
  ASSERT_EQ(train_->code, 0);
  const RunResult again = run("train --scene " + scene() + " --labels " + *root_ + "/scene/labels.txt --iters 40 "
                              "--stage2 25 --config " + *root_ + "/train.cfg --out " + *root_ + "/run2 --quiet");
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(ckpt()), slurp(*root_ + "/run2/checkpoint.ply"));
}

TEST_F(Cli, RenderWritesRequestedMaps) {
  ASSERT_EQ(train_->code, 0);
  const std::string out = *root_ + "/render";
  const RunResult r = run("render --checkpoint " + ckpt() + " --scene " + scene() +
                          " --view 1 --object 2 --instance-map --float --out-dir " + out);
  ASSERT_EQ(r.code, 0);
  for (const char* f : {"color.png", "occupancy_2.png", "instance_ids.png", "instance.png"}) {
    EXPECT_TRUE(fs::exists(out + "/" + f)) << f;
  }
  const ImageBuffer color = io::read_rgb(out + "/color.png");
  EXPECT_EQ(color.width, 32);
  const GaussianCloud c = io::load_checkpoint(ckpt());
  const io::SceneManifest m = io::load_scene_manifest(scene());
  const RenderOutput ref = render(c, {m.dataset.cameras[1], Vec3::Zero(), {2}, true});
  EXPECT_EQ(io::read_id_map(out + "/instance_ids.png").values, ref.instance_labels.values);
}

TEST_F(Cli, SegmentReportMatchesOfflineRecomputation) {
  ASSERT_EQ(train_->code, 0);
  const std::string out = *root_ + "/seg";
  const RunResult r = run("segment --checkpoint " + ckpt() + " --scene " + scene() + " --views eval --out-dir " + out);
  ASSERT_EQ(r.code, 0);
  const io::SceneManifest m = io::load_scene_manifest(scene());
  double sum = 0.0;
  int pairs = 0;
  std::istringstream report(slurp(out + "/report.txt"));
  std::string line;
  double reported = -1.0;
  while (std::getline(report, line)) {
    int v = 0, j = 0;
    double i = 0, b = 0;
    if (std::sscanf(line.c_str(), "view=%d object=%d iou=%lf biou=%lf", &v, &j, &i, &b) == 4) {
      char name[64];
      std::snprintf(name, sizeof(name), "/mask_v%03d_o%02d.png", v, j);
      const double offline = iou(io::read_mask(out + name), m.gt_masks.at({v, j}));
      EXPECT_NEAR(offline, i, 1e-6);
      sum += offline;
      ++pairs;
    }
    std::sscanf(line.c_str(), "miou=%lf", &reported);
  }
  EXPECT_EQ(pairs, 4);
  EXPECT_NEAR(reported, sum / pairs, 1e-6);
}

TEST_F(Cli, QueryWithStubAndExternalProvider) {
  ASSERT_EQ(train_->code, 0);
  const std::string base = "query --checkpoint " + std::string(*root_ + "/scene/truth.ply") + " --scene " + scene();
  EXPECT_EQ(run(base + " --prompt red").out, "object 1\n");
  EXPECT_EQ(run(base + " --prompt green").out, "object 2\n");
  const std::string server = "'cmd:" + std::string(DUALSPLAT_CLI_PATH) + " embed-server'";
  EXPECT_EQ(run(base + " --prompt green --provider " + server).out, "object 2\n");
}

TEST_F(Cli, ExitCodesSeparateUsageFromDataErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("bogus").code, 1);
  EXPECT_EQ(run("train --scene x").code, 1);
  EXPECT_EQ(run("segment --checkpoint " + ckpt() + " --scene " + scene() + " --tau 1.5 --out-dir /tmp").code, 1);
  EXPECT_EQ(run("render --checkpoint /nonexistent.ply --camera 4 4 4 4 1.5 1.5 1 0 0 0 1 0 0 0 1 0 0 0 --out-dir " +
                *root_ + "/x")
                .code,
            2);
  std::ofstream(*root_ + "/bad.cfg") << "lambda_o 0.3\n";
  EXPECT_EQ(run("train --scene " + scene() + " --labels " + *root_ + "/scene/labels.txt --config " + *root_ +
                "/bad.cfg --out " + *root_ + "/bad")
                .code,
            2);
}

}  // namespace
}  // namespace dualsplat
