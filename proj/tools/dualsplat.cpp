// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry points. Exit codes: 0 success, 1 usage error,
// 2 data or invariant failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualsplat.hpp"

namespace fs = std::filesystem;
using namespace dualsplat;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

/// Thrown for bad argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string view_name(const char* prefix, int v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", prefix, v);
  return buf;
}

std::string mask_name(int v, int j) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "mask_v%03d_o%02d.png", v, j);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::string config;
};

void run_synth(const SynthArgs& a) {
  SceneSpec spec;
  if (!a.config.empty()) io::apply_scene_spec(io::read_config_file(a.config), spec, a.config);
  spec.validate();
  const SyntheticScene scene = generate_scene(spec);
  for (const char* sub : {"images", "labels", "gt"}) ensure_dir((fs::path(a.out) / sub).string());

  std::vector<std::string> images, maps;
  std::map<std::pair<int, int>, std::string> gt;
  for (int v = 0; v < static_cast<int>(scene.dataset.cameras.size()); ++v) {
    images.push_back((fs::path(a.out) / "images" / view_name("view", v)).string());
    io::write_image(images.back(), scene.dataset.images[v]);
    maps.push_back((fs::path(a.out) / "labels" / view_name("ids", v)).string());
    io::write_id_map(maps.back(), scene.pseudo_labels.maps[v]);
    for (int j = 1; j <= scene.object_count(); ++j) {
      const std::string p = (fs::path(a.out) / "gt" / mask_name(v, j)).string();
      io::write_mask(p, scene.true_mask(v, j));
      gt[{v, j}] = p;
    }
  }
  const std::string init = (fs::path(a.out) / "init.ply").string();
  io::save_checkpoint(init, initial_cloud(scene, spec.seed + 1));
  io::save_checkpoint((fs::path(a.out) / "truth.ply").string(), scene.cloud);
  io::write_scene_manifest((fs::path(a.out) / "scene.txt").string(), scene.dataset, images, gt, init);
  io::write_labels_manifest((fs::path(a.out) / "labels.txt").string(), scene.object_count(), maps);
  std::ofstream echo(fs::path(a.out) / "scene_config.txt");
  echo << io::echo_scene_spec(spec);
  std::printf("wrote %zu views, %d objects, %d floaters to %s\n", scene.dataset.cameras.size(),
              scene.object_count(), spec.floaters, a.out.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string scene;
  std::string labels;
  std::string config;
  std::string init;
  std::string out;
  long iters = 0;
  long stage2 = 0;
  bool quiet = false;
};

void run_train(const TrainArgs& a) {
  const io::SceneManifest scene = io::load_scene_manifest(a.scene);
  const PseudoLabelSet labels = io::load_labels_manifest(a.labels);
  TrainConfig config;
  if (a.iters > 0) config = config.scaled_to(a.iters, a.stage2);
  else if (a.stage2 > 0) throw UsageError("--stage2 requires --iters");
  if (!a.config.empty()) io::apply_train_config(io::read_config_file(a.config), config, a.config);
  config.validate();

  std::string init_path = a.init;
  if (init_path.empty()) {
    if (!scene.init_checkpoint) throw UsageError("no --init given and the scene manifest has no init record");
    init_path = *scene.init_checkpoint;
  }
  const GaussianCloud init = io::load_checkpoint(init_path);
  ensure_dir(a.out);

  TrainObserver progress;
  if (!a.quiet) {
    progress = [&config](long it, const GaussianCloud& c) {
      if (it % 500 == 0 || it == config.total_iters) {
        std::fprintf(stderr, "iter %ld/%ld  primitives %zu\n", it, config.total_iters, c.size());
      }
    };
  }
  const TrainResult result = train(scene.dataset, labels, init, config, false, progress);
  const std::string ckpt = (fs::path(a.out) / "checkpoint.ply").string();
  io::save_checkpoint(ckpt, result.cloud);
  io::write_metrics_log((fs::path(a.out) / "metrics.log").string(), result.log, io::echo_train_config(config));
  const MetricsRecord& last = result.log.back();
  std::printf("trained %ld iterations: %zu primitives, psnr %.3f, checkpoint %s\n", config.total_iters,
              result.cloud.size(), last.psnr, ckpt.c_str());
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string checkpoint;
  std::string scene;
  int view = -1;
  std::vector<double> camera;
  std::vector<int> objects;
  bool instance_map = false;
  bool float_dump = false;
  std::string out_dir;
  int workers = 1;
};

Camera camera_from_numbers(const std::vector<double>& n) {
  if (n.size() != 18) throw UsageError("--camera takes 18 numbers: w h fx fy cx cy R(9, row-major) t(3)");
  Camera cam;
  cam.width = static_cast<int>(n[0]);
  cam.height = static_cast<int>(n[1]);
  cam.fx = n[2];
  cam.fy = n[3];
  cam.cx = n[4];
  cam.cy = n[5];
  for (int k = 0; k < 9; ++k) cam.rotation(k / 3, k % 3) = n[6 + k];
  for (int k = 0; k < 3; ++k) cam.translation[k] = n[15 + k];
  cam.validate();
  return cam;
}

Camera pick_camera(const std::string& scene_path, int view, const std::vector<double>& numbers) {
  if (!numbers.empty()) {
    if (!scene_path.empty()) throw UsageError("give either --camera or --scene/--view, not both");
    return camera_from_numbers(numbers);
  }
  if (scene_path.empty() || view < 0) throw UsageError("need --camera or --scene with --view");
  const io::SceneManifest scene = io::load_scene_manifest(scene_path);
  if (view >= static_cast<int>(scene.dataset.cameras.size())) {
    throw std::out_of_range("view " + std::to_string(view) + " not in scene (" +
                            std::to_string(scene.dataset.cameras.size()) + " views)");
  }
  return scene.dataset.cameras[view];
}

void run_render(const RenderArgs& a) {
  const GaussianCloud cloud = io::load_checkpoint(a.checkpoint);
  RenderRequest req;
  req.camera = pick_camera(a.scene, a.view, a.camera);
  req.object_ids = a.objects;
  req.render_instance_map = a.instance_map;
  req.workers = a.workers;
  if ((!a.objects.empty() || a.instance_map) && !cloud.instance_ready) {
    throw std::invalid_argument("checkpoint has no instance field (stage 2 never ran)");
  }
  const RenderOutput out = render(cloud, req);
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  io::write_image((dir / "color.png").string(), out.color);
  if (a.float_dump) io::write_pfm((dir / "color.pfm").string(), out.color);
  for (const auto& [j, occ] : out.occupancy) {
    const std::string stem = "occupancy_" + std::to_string(j);
    io::write_occupancy((dir / (stem + ".png")).string(), occ);
    if (a.float_dump) io::write_pfm((dir / (stem + ".pfm")).string(), occ);
  }
  if (a.instance_map) {
    io::write_id_map((dir / "instance_ids.png").string(), out.instance_labels);
    io::write_image((dir / "instance.png").string(), io::colorize_labels(out.instance_labels));
  }
  std::printf("rendered %dx%d to %s\n", req.camera.width, req.camera.height, a.out_dir.c_str());
}

// ---------------------------------------------------------------------------
// segment

struct SegmentArgs {
  std::string checkpoint;
  std::string scene;
  std::string views = "eval";
  double tau = kDefaultMaskThreshold;
  std::string out_dir;
};

std::vector<int> parse_views(const std::string& spec, const Dataset& data) {
  if (spec == "eval") return data.eval_views;
  if (spec == "train") return data.train_views;
  std::vector<int> out;
  if (spec == "all") {
    for (int v = 0; v < static_cast<int>(data.cameras.size()); ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0 || v >= static_cast<int>(data.cameras.size())) {
      throw UsageError("--views expects eval, train, all or comma-separated view indices; got '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void run_segment(const SegmentArgs& a) {
  if (!(a.tau > 0.0 && a.tau < 1.0)) throw UsageError("--tau must lie in (0, 1)");
  const GaussianCloud cloud = io::load_checkpoint(a.checkpoint);
  if (!cloud.instance_ready) throw std::invalid_argument("checkpoint has no instance field (stage 2 never ran)");
  const io::SceneManifest scene = io::load_scene_manifest(a.scene);
  const std::vector<int> views = parse_views(a.views, scene.dataset);
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);

  std::vector<int> ids;
  for (int j = 1; j <= cloud.object_count; ++j) ids.push_back(j);
  std::ostringstream report;
  report << "# tau " << a.tau << "\n";
  double iou_sum = 0.0, biou_sum = 0.0;
  int pairs = 0;
  for (int v : views) {
    RenderRequest req;
    req.camera = scene.dataset.cameras[v];
    req.object_ids = ids;
    const RenderOutput out = render(cloud, req);
    for (int j : ids) {
      const BinaryMask pred = extract_mask(out.occupancy.at(j), a.tau);
      io::write_mask((dir / mask_name(v, j)).string(), pred);
      const auto gt = scene.gt_masks.find({v, j});
      if (gt == scene.gt_masks.end()) continue;
      const double i = iou(pred, gt->second);
      const double b = boundary_iou(pred, gt->second);
      char line[128];
      std::snprintf(line, sizeof(line), "view=%d object=%d iou=%.6f biou=%.6f\n", v, j, i, b);
      report << line;
      iou_sum += i;
      biou_sum += b;
      ++pairs;
    }
  }
  if (pairs > 0) {
    char line[128];
    std::snprintf(line, sizeof(line), "miou=%.6f mbiou=%.6f pairs=%d\n", iou_sum / pairs, biou_sum / pairs, pairs);
    report << line;
    std::printf("%s", line);
  } else {
    report << "# no ground truth masks for the selected views\n";
    std::printf("wrote masks for %zu views (no ground truth)\n", views.size());
  }
  std::ofstream((dir / "report.txt").string()) << report.str();
}

// ---------------------------------------------------------------------------
// query

struct QueryArgs {
  std::string checkpoint;
  std::string scene;
  std::string prompt;
  std::string provider = "stub";
  int view = -1;
  int pool_views = kDefaultQueryViews;
  std::string out_dir;
};

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec) {
  if (spec == "stub") return std::make_unique<StubEmbeddingProvider>();
  if (spec.rfind("cmd:", 0) == 0 && spec.size() > 4) return std::make_unique<io::ProcessEmbeddingProvider>(spec.substr(4));
  throw UsageError("--provider must be 'stub' or 'cmd:<command>'");
}

void run_query(const QueryArgs& a) {
  const GaussianCloud cloud = io::load_checkpoint(a.checkpoint);
  if (!cloud.instance_ready) throw std::invalid_argument("checkpoint has no instance field (stage 2 never ran)");
  const io::SceneManifest scene = io::load_scene_manifest(a.scene);
  auto provider = make_provider(a.provider);
  const ObjectEmbeddingPool pool = build_embedding_pool(cloud, scene.dataset.cameras, *provider, a.pool_views);
  const int id = query(a.prompt, pool, *provider);
  std::printf("object %d\n", id);
  if (a.out_dir.empty()) return;
  int view = a.view;
  if (view < 0) {
    const auto best = select_views(cloud, scene.dataset.cameras, id, 1);
    view = best.empty() ? 0 : best.front();
  }
  if (view >= static_cast<int>(scene.dataset.cameras.size())) throw UsageError("--view out of range");
  RenderRequest req;
  req.camera = scene.dataset.cameras[view];
  req.object_ids = {id};
  ensure_dir(a.out_dir);
  io::write_mask((fs::path(a.out_dir) / mask_name(view, id)).string(),
                 extract_mask(render(cloud, req).occupancy.at(id)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualsplat: splat training with an instance occupancy field"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic multi-object scene");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--config", sa.config, "Scene config (key = value)")->check(CLI::ExistingFile);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train appearance, then the instance field");
  tr->add_option("--scene", ta.scene, "Scene manifest")->required();
  tr->add_option("--labels", ta.labels, "Pseudo-label manifest")->required();
  tr->add_option("--config", ta.config, "Training config (key = value), applied after --iters");
  tr->add_option("--init", ta.init, "Initial checkpoint (defaults to the manifest's init record)");
  tr->add_option("--iters", ta.iters, "Scale the default schedule to this many iterations")->check(CLI::Range(2L, 100000000L));
  tr->add_option("--stage2", ta.stage2, "Stage-2 start when scaling with --iters")->check(CLI::PositiveNumber);
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_flag("--quiet", ta.quiet, "No progress on stderr");

  RenderArgs ra;
  auto* rd = app.add_subcommand("render", "Render color, occupancy maps and the instance label map");
  rd->add_option("--checkpoint", ra.checkpoint, "Checkpoint")->required();
  rd->add_option("--scene", ra.scene, "Scene manifest providing cameras");
  rd->add_option("--view", ra.view, "View index in the scene manifest");
  rd->add_option("--camera", ra.camera, "w h fx fy cx cy R(9) t(3)")->expected(18);
  rd->add_option("--object", ra.objects, "Object ids whose occupancy maps to render");
  rd->add_flag("--instance-map", ra.instance_map, "Also render the instance label map");
  rd->add_flag("--float", ra.float_dump, "Also dump raw float maps as PFM");
  rd->add_option("--workers", ra.workers, "Worker threads")->check(CLI::PositiveNumber);
  rd->add_option("--out-dir", ra.out_dir, "Output directory")->required();

  SegmentArgs sg;
  auto* seg = app.add_subcommand("segment", "Threshold occupancy maps and score them against ground truth");
  seg->add_option("--checkpoint", sg.checkpoint, "Checkpoint")->required();
  seg->add_option("--scene", sg.scene, "Scene manifest")->required();
  seg->add_option("--views", sg.views, "eval, train, all, or comma-separated indices")->capture_default_str();
  seg->add_option("--tau", sg.tau, "Mask threshold")->capture_default_str();
  seg->add_option("--out-dir", sg.out_dir, "Output directory")->required();

  QueryArgs qa;
  auto* qy = app.add_subcommand("query", "Open-vocabulary object query");
  qy->add_option("--checkpoint", qa.checkpoint, "Checkpoint")->required();
  qy->add_option("--scene", qa.scene, "Scene manifest providing cameras")->required();
  qy->add_option("--prompt", qa.prompt, "Text prompt")->required();
  qy->add_option("--provider", qa.provider, "stub or cmd:<command>")->capture_default_str();
  qy->add_option("--pool-views", qa.pool_views, "Views per object descriptor")->check(CLI::PositiveNumber);
  qy->add_option("--view", qa.view, "View for the rendered mask (default: largest)");
  qy->add_option("--out-dir", qa.out_dir, "Write the winning object's mask here");

  int embed_dim = 8, embed_input = 32;
  auto* es = app.add_subcommand("embed-server", "Serve the stub encoder over stdin/stdout");
  es->add_option("--dim", embed_dim, "Embedding dimension")->check(CLI::Range(3, 4096));
  es->add_option("--input", embed_input, "Crop size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) run_synth(sa);
    if (*tr) run_train(ta);
    if (*rd) run_render(ra);
    if (*seg) run_segment(sg);
    if (*qy) run_query(qa);
    if (*es) {
      StubEmbeddingProvider stub(embed_dim, embed_input);
      io::serve_embeddings(stub, std::cin, std::cout);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
