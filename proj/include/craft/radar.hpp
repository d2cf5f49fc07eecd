#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "craft/error.hpp"
#include "craft/geometry.hpp"

namespace craft {

struct RadarPoint {
  Vec3 position = Vec3::Zero();
  double rcs = 0.0;                 // dBsm
  Vec2 doppler = Vec2::Zero();      // ego-compensated radial velocity, x/y components
  double sweep_age = 0.0;           // s, relative to the reference sweep
};

struct RadarSweep {
  std::vector<RadarPoint> points;
  std::optional<Pose> ego_pose;  // vehicle -> world at capture time
  double timestamp = 0.0;
};

/// Number of per-point radar features: rcs, doppler x, doppler y, sweep age.
inline constexpr std::size_t kRadarFeatureDim = 4;

using RadarFeatures = std::array<double, kRadarFeatureDim>;

inline RadarFeatures raw_features(const RadarPoint& p) {
  return {p.rcs, p.doppler.x(), p.doppler.y(), p.sweep_age};
}

struct FeatureStats {
  RadarFeatures mean{0.0, 0.0, 0.0, 0.0};
  RadarFeatures std{1.0, 1.0, 1.0, 1.0};
};

/// Population mean/std of the raw features. Constant features get std 1.
inline FeatureStats compute_feature_stats(const std::vector<RadarPoint>& points) {
  FeatureStats s;
  if (points.empty()) return s;
  const double n = static_cast<double>(points.size());
  for (const auto& p : points) {
    const auto f = raw_features(p);
    for (std::size_t j = 0; j < kRadarFeatureDim; ++j) s.mean[j] += f[j];
  }
  for (auto& m : s.mean) m /= n;
  RadarFeatures var{};
  for (const auto& p : points) {
    const auto f = raw_features(p);
    for (std::size_t j = 0; j < kRadarFeatureDim; ++j) var[j] += (f[j] - s.mean[j]) * (f[j] - s.mean[j]);
  }
  for (std::size_t j = 0; j < kRadarFeatureDim; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.std[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

/// Moves every point of the first n_sweeps sweeps into the reference frame.
/// sweeps[0] is the reference sweep; older sweeps follow. A point captured tau
/// seconds before the reference is rigidly transformed by the ego motion between
/// the two captures and then advanced along its compensated Doppler by tau (x/y
/// only).
inline std::vector<RadarPoint> accumulate_sweeps(const std::vector<RadarSweep>& sweeps, const Pose& reference,
                                                 std::size_t n_sweeps) {
  if (n_sweeps < 1 || n_sweeps > sweeps.size())
    throw ConfigError("accumulate_sweeps: n_sweeps must be in [1, number of sweeps]");
  const Pose world_to_ref = reference.inverse();
  const double t_ref = sweeps.front().timestamp;
  std::vector<RadarPoint> out;
  for (std::size_t s = 0; s < n_sweeps; ++s) {
    const RadarSweep& sweep = sweeps[s];
    if (!sweep.ego_pose) throw ConfigError("accumulate_sweeps: sweep has no ego pose");
    const Pose sweep_to_ref = world_to_ref.compose(*sweep.ego_pose);
    const double tau = t_ref - sweep.timestamp;
    if (tau < 0.0) throw ConfigError("accumulate_sweeps: sweep timestamps must not increase after the reference");
    for (const RadarPoint& p : sweep.points) {
      RadarPoint q = p;
      const Vec3 vel = sweep_to_ref.apply_direction(Vec3(p.doppler.x(), p.doppler.y(), 0.0));
      q.position = sweep_to_ref.apply(p.position);
      q.position.x() += vel.x() * tau;
      q.position.y() += vel.y() * tau;
      q.doppler = vel.head<2>();
      q.sweep_age = p.sweep_age + tau;
      out.push_back(q);
    }
  }
  return out;
}

/// Fixed-size radar input: k_max slots, each referring to a source point.
struct PreparedRadar {
  std::vector<RadarPoint> points;
  std::vector<RadarFeatures> features;  // z-scored
  std::vector<int> source_index;        // -1 for the empty-input sentinel
  std::vector<bool> valid;

  std::size_t size() const { return points.size(); }
};

inline RadarFeatures normalize_features(const RadarPoint& p, const FeatureStats& stats) {
  RadarFeatures f = raw_features(p);
  for (std::size_t j = 0; j < kRadarFeatureDim; ++j) f[j] = (f[j] - stats.mean[j]) / stats.std[j];
  return f;
}

/// Range filter, seeded sample/duplicate to exactly k_max points, feature
/// normalization. With no point in range every slot is an invalid all-zero
/// sentinel.
inline PreparedRadar prepare_radar_input(const std::vector<RadarPoint>& points, double max_range, std::size_t k_max,
                                         const FeatureStats& stats, std::uint64_t rng_seed) {
  if (k_max == 0) throw ConfigError("prepare_radar_input: k_max must be positive");
  for (double s : stats.std)
    if (!(s > 0.0)) throw ConfigError("prepare_radar_input: feature std must be positive");

  std::vector<int> in_range;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (std::hypot(points[i].position.x(), points[i].position.y()) <= max_range) in_range.push_back(static_cast<int>(i));

  PreparedRadar out;
  out.points.reserve(k_max);
  if (in_range.empty()) {
    out.points.assign(k_max, RadarPoint{});
    out.features.assign(k_max, RadarFeatures{});
    out.source_index.assign(k_max, -1);
    out.valid.assign(k_max, false);
    return out;
  }

  std::mt19937_64 rng(rng_seed);
  std::vector<int> chosen;
  if (in_range.size() > k_max) {
    chosen = in_range;
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(k_max);
    std::sort(chosen.begin(), chosen.end());
  } else {
    chosen = in_range;
    std::uniform_int_distribution<std::size_t> pick(0, in_range.size() - 1);
    while (chosen.size() < k_max) chosen.push_back(in_range[pick(rng)]);
  }

  for (int idx : chosen) {
    out.points.push_back(points[idx]);
    out.features.push_back(normalize_features(points[idx], stats));
    out.source_index.push_back(idx);
    out.valid.push_back(true);
  }
  return out;
}

/// Slots holding the first occurrence of each valid source point, in slot
/// order. Padding duplicates and sentinels are dropped.
inline std::vector<std::size_t> distinct_slots(const PreparedRadar& r) {
  std::vector<std::size_t> out;
  std::vector<int> seen;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!r.valid[i]) continue;
    const auto it = std::lower_bound(seen.begin(), seen.end(), r.source_index[i]);
    if (it != seen.end() && *it == r.source_index[i]) continue;
    seen.insert(it, r.source_index[i]);
    out.push_back(i);
  }
  return out;
}

}  // namespace craft
