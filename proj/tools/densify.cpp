// densify: command line front end for the panorama densifier.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "panodense/config.hpp"
#include "panodense/dataset.hpp"
#include "panodense/evaluation.hpp"
#include "panodense/pipeline.hpp"
#include "panodense/ply.hpp"
#include "panodense/synth.hpp"
#include "panodense/synth_dataset.hpp"

namespace fs = std::filesystem;
using namespace panodense;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::io: return 3;
    case ErrorCategory::domain: return 4;
    case ErrorCategory::ordering: return 5;
  }
  return 1;
}

struct RunArgs {
  std::string dataset;
  std::string config;
  std::string out;
  ConfigOverrides overrides;
};

int cmd_run(const RunArgs& a) {
  EngineConfig config;
  if (!a.config.empty()) config = load_config(a.config);
  apply_overrides(config, a.overrides);

  const Dataset ds = load_dataset(a.dataset);
  spdlog::info("dataset {} keyframes={} camera={}x{}", a.dataset, ds.keyframes.size(), ds.camera.width(),
               ds.camera.height());
  spdlog::debug("config {}", config_to_json(config).dump());
  const OfflineResult result = run_offline(ds, config);
  write_run_outputs(a.out, ds, config, result);

  const auto& r = result.report;
  spdlog::info("accepted {}/{} keyframes, {} depth jobs, {} points", r["view_filter"]["accepted"].get<int>(),
               r["view_filter"]["submitted"].get<int>(), r["depth_jobs"].get<int>(), result.cloud.size());
  if (r.contains("completeness")) spdlog::info("mean completeness {:.4f}", r["completeness"]["mean"].get<double>());
  if (r.contains("accuracy")) {
    const auto& d = r["accuracy"]["depth"];
    if (d["defined"].get<bool>()) {
      spdlog::info("depth mean abs rel error {:.4f}, inliers(2%) {:.4f}", d["mean_abs_rel"].get<double>(),
                   d["inlier_fraction_2pct"].get<double>());
    }
  }
  spdlog::info("total {:.2f}s, depth {:.2f}s per job", result.timing["total_s"].get<double>(),
               result.timing["depth_s_per_job"].get<double>());
  spdlog::info("outputs written to {}", a.out);
  return 0;
}

int cmd_eval(const std::string& dataset, const std::string& out_dir) {
  const Dataset ds = load_dataset(dataset);
  const FusedCloud cloud = read_ply(fs::path(out_dir) / "cloud.ply");
  std::vector<RigidPose> poses;
  for (const auto& k : ds.keyframes) poses.push_back(k.pose);
  const CompletenessReport comp = completeness(cloud, poses);
  nlohmann::json out;
  nlohmann::json series = nlohmann::json::array();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    series.push_back({{"id", ds.keyframes[i].id}, {"completeness", comp.per_keyframe[i]}});
  }
  out["completeness"] = {{"width", comp.width}, {"height", comp.height}, {"point_count", comp.point_count},
                         {"mean", comp.mean()}, {"per_keyframe", series}};

  // Depth maps saved by `run --save-depth`, compared with ground truth.
  detail::AccuracyAccumulator acc{.inlier_rel = 0.02};
  int compared = 0;
  for (const auto& k : ds.keyframes) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(k.id));
    const fs::path path = fs::path(out_dir) / "depth" / name;
    if (!fs::exists(path)) continue;
    const auto gt = load_ground_truth(ds, k);
    if (!gt) continue;
    const DepthPanorama pred = read_depth_png(path);
    const DepthPanorama truth = gt->camera == pred.camera ? *gt : resample_nearest(*gt, pred.camera);
    for (int y = 0; y < pred.height(); ++y) {
      for (int x = 0; x < pred.width(); ++x) {
        if (pred.is_valid(x, y) && truth.is_valid(x, y)) acc.add(pred.depth.at(x, y), truth.depth.at(x, y));
      }
    }
    ++compared;
  }
  if (compared > 0) out["accuracy"] = {{"depth_maps", compared}, {"depth", detail::accuracy_json(acc.report())}};

  const fs::path report = fs::path(out_dir) / "eval.json";
  std::ofstream f(report);
  if (!f) throw IoError("cannot write " + report.string());
  f << out.dump(2) << "\n";
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

struct SynthArgs {
  std::string scene;
  int keyframes = 20;
  std::string out;
  std::string resolution = "512x256";
  int density = 200;
  double step = 0.0;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a) {
  const auto kind = parse_scene_kind(a.scene);
  if (!kind) throw ConfigError("unknown scene '" + a.scene + "' (box_room, corridor, sphere_shell)");
  if (a.keyframes < 3) throw ConfigError("--keyframes must be >= 3");
  const auto [w, h] = parse_resolution(a.resolution);
  SyntheticDatasetOptions options;
  try {
    options.camera = EquirectCamera(w, h);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("--resolution: ") + e.what());
  }
  options.sparse_density = a.density;
  options.seed = a.seed;
  const SyntheticScene scene = make_scene(*kind, a.keyframes, a.step);
  const Dataset ds = make_dataset(scene, a.out, options);
  spdlog::info("wrote {} keyframes of scene {} to {}", ds.keyframes.size(), to_string(*kind), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense depth panoramas and point clouds from posed equirectangular keyframes"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");
  app.add_flag("-v,--verbose", verbose, "Log debug messages");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Densify a dataset");
  run_cmd->add_option("dataset", run.dataset, "Dataset directory")->required();
  run_cmd->add_option("--config", run.config, "JSON configuration file");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--seed", run.overrides.seed, "Random seed");
  run_cmd->add_option("--workers", run.overrides.workers, "Worker threads for depth estimation (0 = all)");
  run_cmd->add_flag("--no-warp", run.overrides.no_warp, "Disable plane map warping");
  run_cmd->add_flag("--save-depth", run.overrides.save_depth, "Write per-keyframe depth PNGs");
  run_cmd->add_option("--resolution", run.overrides.resolution, "Processing resolution WIDTHxHEIGHT");

  std::string eval_dataset, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a run directory against its dataset");
  eval_cmd->add_option("dataset", eval_dataset, "Dataset directory")->required();
  eval_cmd->add_option("out_dir", eval_out, "Run output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("scene", synth.scene, "box_room, corridor or sphere_shell")->required();
  synth_cmd->add_option("--keyframes", synth.keyframes, "Number of keyframes");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--resolution", synth.resolution, "Image resolution WIDTHxHEIGHT");
  synth_cmd->add_option("--density", synth.density, "Sparse landmarks per keyframe");
  synth_cmd->add_option("--step", synth.step, "Trajectory step in meters (0 = scene default)");
  synth_cmd->add_option("--seed", synth.seed, "Random seed for landmarks");

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("densify");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*eval_cmd) return cmd_eval(eval_dataset, eval_out);
    if (*synth_cmd) return cmd_synth(synth);
  } catch (const Error& e) {
    spdlog::error("category={} {}", to_string(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    spdlog::error("category=internal {}", e.what());
    return 1;
  }
  return 0;
}
