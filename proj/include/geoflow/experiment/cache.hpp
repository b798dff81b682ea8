#pragma once

// On-disk trajectory cache.
//
// One binary file per trajectory, named by a content hash of (chart
// description, theta0 bits, span, step policy). Readers never lock: files
// appear atomically via rename. Writers are serialized by a mutex.
//
// Layout (native endianness): "GFTRAJ1\n", key (u64), sample count (u64),
// truncated (u8), accepted, rejected (u64), h_smallest, max_speed_drift
// (f64), then count rows of t, x, y, vx, vy, K (f64).

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "geoflow/errors.hpp"
#include "geoflow/experiment/config.hpp"
#include "geoflow/geodesic.hpp"

namespace geoflow::experiment {

class TrajectoryCache {
 public:
  explicit TrajectoryCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  /// GEOFLOW_CACHE_DIR if set, else `<out>/.cache`.
  static std::filesystem::path default_dir(const std::filesystem::path& out_dir) {
    if (const char* env = std::getenv("GEOFLOW_CACHE_DIR"); env && *env) return env;
    return out_dir / ".cache";
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

  static std::uint64_t key(const MetricChart& chart, const UnitTangentVector& theta, TimeSpan span,
                           const StepPolicy& p) {
    std::uint64_t h = fnv1a(chart.describe());
    const double nums[] = {theta.base().x, theta.base().y, theta.dir().x, theta.dir().y, span.lo, span.hi,
                           p.local_tol,    p.sample_dt,    p.h_max,       p.pad};
    return fnv1a(nums, sizeof nums, h);
  }

  std::filesystem::path path_for(std::uint64_t k) const { return dir_ / (hex64(k) + ".gftraj"); }

  GeodesicTrajectory get_or_compute(const MetricChart& chart, const UnitTangentVector& theta, TimeSpan span,
                                    const StepPolicy& policy) {
    const auto k = key(chart, theta, span, policy);
    if (auto t = load(chart, theta, k)) {
      ++hits_;
      return std::move(*t);
    }
    ++misses_;
    auto traj = integrate_geodesic(chart, theta, span, policy);
    store(traj, k);
    return traj;
  }

 private:
  static constexpr char kMagic[8] = {'G', 'F', 'T', 'R', 'A', 'J', '1', '\n'};

  template <class T>
  static bool get(std::istream& is, T& v) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
  }
  template <class T>
  static void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

  // A missing, foreign or damaged file is a miss; the entry gets rewritten.
  std::optional<GeodesicTrajectory> load(const MetricChart& chart, const UnitTangentVector& theta,
                                         std::uint64_t k) const {
    std::ifstream is(path_for(k), std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) return std::nullopt;
    std::uint64_t stored = 0, n = 0;
    std::uint8_t truncated = 0;
    TrajectoryStats stats;
    std::uint64_t acc = 0, rej = 0;
    if (!get(is, stored) || stored != k || !get(is, n) || n == 0 || n > (1u << 26)) return std::nullopt;
    if (!get(is, truncated) || !get(is, acc) || !get(is, rej) || !get(is, stats.h_smallest) ||
        !get(is, stats.max_speed_drift))
      return std::nullopt;
    stats.accepted = acc;
    stats.rejected = rej;
    std::vector<double> t(n);
    std::vector<State4> z(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      double row[6];
      if (!is.read(reinterpret_cast<char*>(row), sizeof row)) return std::nullopt;
      t[i] = row[0];
      z[i] = {row[1], row[2], row[3], row[4]};
    }
    return GeodesicTrajectory(chart, theta, std::move(t), std::move(z), stats, truncated != 0);
  }

  void store(const GeodesicTrajectory& traj, std::uint64_t k) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
    const auto final_path = path_for(k);
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot write cache file " + tmp.string());
      os.write(kMagic, 8);
      put(os, k);
      put(os, static_cast<std::uint64_t>(traj.size()));
      put(os, static_cast<std::uint8_t>(traj.truncated() ? 1 : 0));
      put(os, static_cast<std::uint64_t>(traj.stats().accepted));
      put(os, static_cast<std::uint64_t>(traj.stats().rejected));
      put(os, traj.stats().h_smallest);
      put(os, traj.stats().max_speed_drift);
      for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto& s = traj.states()[i];
        const double row[6] = {traj.times()[i], s[0], s[1], s[2], s[3], traj.curvature()[i]};
        os.write(reinterpret_cast<const char*>(row), sizeof row);
      }
      os.close();
      if (!os) throw IoError("cannot write cache file " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw IoError("cannot install cache file " + final_path.string() + ": " + ec.message());
  }

  std::filesystem::path dir_;
  std::mutex write_mutex_;
  std::atomic<std::size_t> hits_{0}, misses_{0};
};

}  // namespace geoflow::experiment
