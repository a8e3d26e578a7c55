#pragma once

// Offline densification pipeline. Three stages connected by bounded queues:
// ingestion + view filter, depth estimation, consistency filter + fusion.

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "panodense/config.hpp"
#include "panodense/consistency.hpp"
#include "panodense/dataset.hpp"
#include "panodense/depth_io.hpp"
#include "panodense/evaluation.hpp"
#include "panodense/fusion.hpp"
#include "panodense/keyframe.hpp"
#include "panodense/patchmatch.hpp"
#include "panodense/ply.hpp"
#include "panodense/view_filter.hpp"

namespace panodense {

/// FIFO with a fixed capacity. push blocks while full; pop blocks while empty
/// and returns nothing once the queue is closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    max_depth_ = std::max(max_depth_, items_.size());
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t max_depth() const {
    std::lock_guard lock(mutex_);
    return max_depth_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  std::size_t max_depth_ = 0;
  bool closed_ = false;
};

/// Three consecutive accepted keyframes; the middle one is the reference.
struct StereoJob {
  Keyframe previous;
  Keyframe reference;
  Keyframe next;
};

/// View filter plus the sliding three-keyframe stereo buffer.
class KeyframeScheduler {
 public:
  explicit KeyframeScheduler(ViewFilterConfig config) : config_(config) { config_.validate(); }

  struct Decision {
    bool accepted = false;
    ViewFilterResult filter;
    std::optional<StereoJob> job;
  };

  Decision submit(Keyframe keyframe) {
    if (last_id_ && keyframe.id <= *last_id_) {
      throw OrderingError("keyframe " + std::to_string(keyframe.id) + " submitted after keyframe " +
                          std::to_string(*last_id_));
    }
    last_id_ = keyframe.id;
    ++submitted_;
    Decision d;
    if (buffer_.empty()) {
      d.filter.accepted = true;
      d.filter.reason = "first";
    } else {
      d.filter = view_filter_accept(keyframe, buffer_.back(), config_);
    }
    d.accepted = d.filter.accepted;
    if (!d.accepted) return d;
    ++accepted_;
    buffer_.push_back(std::move(keyframe));
    if (buffer_.size() > 3) buffer_.pop_front();
    if (buffer_.size() == 3) d.job = StereoJob{buffer_[0], buffer_[1], buffer_[2]};
    return d;
  }

  int submitted() const { return submitted_; }
  int accepted() const { return accepted_; }

 private:
  ViewFilterConfig config_;
  std::deque<Keyframe> buffer_;
  std::optional<std::int64_t> last_id_;
  int submitted_ = 0;
  int accepted_ = 0;
};

/// Depth range of a stereo group: the configured range, optionally narrowed
/// to the distances of the reference landmarks.
inline DepthRange group_depth_range(const Keyframe& reference, const EngineConfig& config) {
  const DepthRange& base = config.patchmatch.depth_range;
  if (!config.auto_depth_range || reference.sparse_points.size() < 10) return base;
  std::vector<double> d;
  for (const auto& p : reference.sparse_points) d.push_back((p - reference.center()).norm());
  std::sort(d.begin(), d.end());
  const auto pick = [&](double q) { return d[static_cast<std::size_t>(q * static_cast<double>(d.size() - 1))]; };
  DepthRange r{std::max(base.min, pick(0.02) / config.auto_range_margin),
               std::min(base.max, pick(0.98) * config.auto_range_margin)};
  if (!(r.max > r.min) || !(r.min > 0.0)) return base;
  return r;
}

struct DepthJobStats {
  std::int64_t id = 0;
  DepthRange range;
  double warped_fraction = 0.0;
  double raw_valid_ratio = 0.0;
  double filtered_valid_ratio = 0.0;
  double seconds = 0.0;
};

/// Runs PatchMatch for consecutive stereo jobs, warping each result into the
/// next job's initialization.
class DepthEstimator {
 public:
  DepthEstimator(EngineConfig config, EquirectCamera camera) : config_(std::move(config)), camera_(camera) {
    config_.validate();
  }

  DepthFrame process(const StereoJob& job, DepthJobStats* stats = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    auto gray = [&](const Keyframe& k) {
      if (!k.image || k.image->width() != camera_.width() || k.image->height() != camera_.height()) {
        throw DomainError("keyframe " + std::to_string(k.id) + " image does not match the processing resolution");
      }
      return std::make_shared<const GrayImage>(to_gray(*k.image));
    };
    const StereoGroup group{camera_,
                            {gray(job.reference), job.reference.pose},
                            {StereoView{gray(job.previous), job.previous.pose}, StereoView{gray(job.next), job.next.pose}}};
    PatchMatchOptions options = config_.patchmatch;
    options.depth_range = group_depth_range(job.reference, config_);
    const std::uint64_t seed = detail::mix64(config_.seed ^ detail::mix64(static_cast<std::uint64_t>(job.reference.id)));

    PlaneMap init(camera_);
    double warped = 0.0;
    if (config_.warp && previous_) {
      init = warp_plane_map(previous_->planes, previous_->pose, job.reference.pose, camera_, options.depth_range);
      warped = static_cast<double>(init.valid_count()) / camera_.pixel_count();
    }
    random_init(init, options.depth_range, seed, true);

    PatchMatchResult result = run_patchmatch(group, std::move(init), options, seed);
    DepthPanorama filtered = median_outlier_filter(result.depth, options.median_window, options.median_rel_threshold);
    if (config_.warp) previous_ = Previous{std::move(result.planes), job.reference.pose};

    if (stats) {
      stats->id = job.reference.id;
      stats->range = options.depth_range;
      stats->warped_fraction = warped;
      stats->raw_valid_ratio = result.depth.valid_ratio();
      stats->filtered_valid_ratio = filtered.valid_ratio();
      stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return DepthFrame{job.reference.id, std::move(filtered), job.reference.pose, job.reference.image};
  }

 private:
  struct Previous {
    PlaneMap planes;
    RigidPose pose;
  };

  EngineConfig config_;
  EquirectCamera camera_;
  std::optional<Previous> previous_;
};

struct OfflineResult {
  FusedCloud cloud;
  /// Consistency-filtered depth of every reference keyframe.
  std::map<std::int64_t, DepthPanorama> depth;
  /// Deterministic metrics.
  nlohmann::json report;
  /// Wall-clock and scheduling dependent figures.
  nlohmann::json timing;
};

inline EquirectCamera processing_camera(const Dataset& ds, const EngineConfig& config) {
  if (config.processing.width == 0) {
    if (ds.camera.width() % 4 != 0) throw ConfigError("dataset width must be a multiple of 4; set processing.width");
    return ds.camera;
  }
  return EquirectCamera(config.processing.width, config.processing.height);
}

namespace detail {

inline nlohmann::json accuracy_json(const AccuracyReport& a) {
  return {{"defined", a.defined},
          {"count", a.count},
          {"mean_abs_rel", a.mean_abs_rel},
          {"rmse", a.rmse},
          {"inlier_fraction_2pct", a.inlier_fraction}};
}

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace detail

/// Processes every keyframe of a loaded dataset.
inline OfflineResult run_offline(const Dataset& ds, const EngineConfig& config) {
  config.validate();
  using nlohmann::json;
  const auto t_start = std::chrono::steady_clock::now();
  const EquirectCamera camera = processing_camera(ds, config);
  const auto capacity = static_cast<std::size_t>(config.processing.queue_capacity);

  BoundedQueue<StereoJob> jobs(capacity);
  BoundedQueue<std::pair<DepthFrame, DepthJobStats>> depth_queue(capacity);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto fail = [&](std::exception_ptr e) {
    std::lock_guard lock(failure_mutex);
    if (!failure) failure = e;
    jobs.close();
    depth_queue.close();
  };

  json filter_log = json::array();
  int submitted = 0, accepted = 0, job_count = 0;
  double ingest_seconds = 0.0, depth_seconds = 0.0;

  std::thread ingest([&] {
    try {
      KeyframeScheduler scheduler(config.view_filter);
      for (const auto& record : ds.keyframes) {
        const auto t = std::chrono::steady_clock::now();
        Keyframe k = load_keyframe(ds, record, camera);
        const auto d = scheduler.submit(std::move(k));
        filter_log.push_back({{"id", record.id},
                              {"accepted", d.accepted},
                              {"reason", d.filter.reason},
                              {"fraction", d.filter.fraction},
                              {"common_points", d.filter.common_points}});
        ingest_seconds += detail::seconds_since(t);
        if (d.job) {
          ++job_count;
          if (!jobs.push(*d.job)) break;
        }
      }
      submitted = scheduler.submitted();
      accepted = scheduler.accepted();
      jobs.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  std::thread depth([&] {
    try {
      DepthEstimator estimator(config, camera);
      while (auto job = jobs.pop()) {
        DepthJobStats stats;
        DepthFrame frame = estimator.process(*job, &stats);
        depth_seconds += stats.seconds;
        if (!depth_queue.push({std::move(frame), stats})) break;
      }
      depth_queue.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  OfflineResult result;
  json depth_log = json::array();
  json fusion_log = json::array();
  std::map<std::int64_t, double> raw_ratio;
  double consistency_seconds = 0.0, fusion_seconds = 0.0;
  ConsistencyStage consistency(config.consistency);
  FusionStage fusion(config.fusion);
  auto fuse = [&](std::vector<DepthFrame> frames) {
    for (auto& f : frames) {
      result.depth[f.id] = f.depth;
      const auto t = std::chrono::steady_clock::now();
      for (const auto& e : fusion.push(std::move(f), result.cloud)) fusion_log.push_back({{"id", e.id}, {"added", e.added}});
      fusion_seconds += detail::seconds_since(t);
    }
  };
  try {
    while (auto item = depth_queue.pop()) {
      const DepthJobStats& s = item->second;
      depth_log.push_back({{"id", s.id},
                           {"depth_min", s.range.min},
                           {"depth_max", s.range.max},
                           {"warped_fraction", s.warped_fraction},
                           {"raw_valid_ratio", s.raw_valid_ratio},
                           {"median_filtered_valid_ratio", s.filtered_valid_ratio}});
      const auto t = std::chrono::steady_clock::now();
      auto done = consistency.push(std::move(item->first));
      consistency_seconds += detail::seconds_since(t);
      fuse(std::move(done));
    }
  } catch (...) {
    fail(std::current_exception());
  }
  ingest.join();
  depth.join();
  if (failure) std::rethrow_exception(failure);

  {
    const auto t = std::chrono::steady_clock::now();
    auto rest = consistency.flush();
    consistency_seconds += detail::seconds_since(t);
    fuse(std::move(rest));
    const auto t2 = std::chrono::steady_clock::now();
    for (const auto& e : fusion.flush(result.cloud)) fusion_log.push_back({{"id", e.id}, {"added", e.added}});
    fusion_seconds += detail::seconds_since(t2);
  }
  for (auto& entry : depth_log) {
    const auto id = entry["id"].get<std::int64_t>();
    const auto it = result.depth.find(id);
    entry["consistent_valid_ratio"] = it == result.depth.end() ? 0.0 : it->second.valid_ratio();
  }

  json& report = result.report;
  report["processing"] = {{"width", camera.width()}, {"height", camera.height()}};
  report["view_filter"] = {{"submitted", submitted},
                           {"accepted", accepted},
                           {"acceptance_rate", submitted > 0 ? static_cast<double>(accepted) / submitted : 0.0},
                           {"decisions", filter_log}};
  report["depth_jobs"] = job_count;
  report["depth"] = depth_log;
  report["fusion"] = {{"points", result.cloud.size()}, {"emitted", fusion_log}};

  const auto t_eval = std::chrono::steady_clock::now();
  if (config.output.evaluate) {
    std::vector<RigidPose> poses;
    for (const auto& k : ds.keyframes) poses.push_back(k.pose);
    const CompletenessReport comp = completeness(result.cloud, poses);
    json series = json::array();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      series.push_back({{"id", ds.keyframes[i].id}, {"completeness", comp.per_keyframe[i]}});
    }
    report["completeness"] = {{"width", comp.width},
                              {"height", comp.height},
                              {"point_count", comp.point_count},
                              {"mean", comp.mean()},
                              {"per_keyframe", series}};

    std::map<std::int64_t, DepthPanorama> truth;
    for (const auto& k : ds.keyframes) {
      if (auto gt = load_ground_truth(ds, k)) {
        truth.emplace(k.id, gt->camera == camera ? std::move(*gt) : resample_nearest(*gt, camera));
      }
    }
    if (!truth.empty()) {
      detail::AccuracyAccumulator acc{.inlier_rel = 0.02};
      std::map<std::int64_t, GroundTruthView> views;
      for (const auto& k : ds.keyframes) {
        const auto it = truth.find(k.id);
        if (it == truth.end()) continue;
        views[k.id] = {k.pose, &it->second};
        const auto d = result.depth.find(k.id);
        if (d == result.depth.end()) continue;
        for (int y = 0; y < camera.height(); ++y) {
          for (int x = 0; x < camera.width(); ++x) {
            if (d->second.is_valid(x, y) && it->second.is_valid(x, y)) {
              acc.add(d->second.depth.at(x, y), it->second.depth.at(x, y));
            }
          }
        }
      }
      report["accuracy"] = {{"depth", detail::accuracy_json(acc.report())},
                            {"cloud", detail::accuracy_json(accuracy(result.cloud, views))}};
    }
  }
  const double eval_seconds = detail::seconds_since(t_eval);

  result.timing = {{"total_s", detail::seconds_since(t_start)},
                   {"stages",
                    {{"ingest_s", ingest_seconds},
                     {"depth_s", depth_seconds},
                     {"consistency_s", consistency_seconds},
                     {"fusion_s", fusion_seconds},
                     {"evaluation_s", eval_seconds}}},
                   {"depth_s_per_job", job_count > 0 ? depth_seconds / job_count : 0.0},
                   {"workers", resolve_workers(config.patchmatch.workers)},
                   {"queues",
                    {{"capacity", capacity},
                     {"keyframe_jobs_max_depth", jobs.max_depth()},
                     {"depth_maps_max_depth", depth_queue.max_depth()}}}};
  return result;
}

inline OfflineResult run_offline(const std::filesystem::path& dataset_path, const EngineConfig& config) {
  config.validate();
  return run_offline(load_dataset(dataset_path), config);
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

/// Writes cloud.ply, depth maps, metrics.json, config.json and run.json.
inline void write_run_outputs(const std::filesystem::path& out_dir, const Dataset& ds, const EngineConfig& config,
                              const OfflineResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (config.output.write_cloud) write_ply(out_dir / "cloud.ply", result.cloud);
  if (config.output.save_depth) {
    fs::create_directories(out_dir / "depth");
    for (const auto& [id, depth] : result.depth) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(id));
      write_depth_png(out_dir / "depth" / name, depth);
    }
  }
  save_config(out_dir / "config.json", config);
  nlohmann::json metrics = result.report;
  metrics["timing"] = result.timing;
  std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << "\n";
  const nlohmann::json run = {{"seed", config.seed},
                              {"dataset", fs::absolute(ds.root).string()},
                              {"manifest_sha256", sha256_file(ds.manifest_path())},
                              {"keyframes", ds.keyframes.size()}};
  std::ofstream out(out_dir / "run.json");
  if (!out) throw IoError("cannot write " + (out_dir / "run.json").string());
  out << run.dump(2) << "\n";
}

}  // namespace panodense
