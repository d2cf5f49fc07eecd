#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "craft/error.hpp"
#include "craft/geometry.hpp"
#include "craft/proposal.hpp"
#include "craft/radar.hpp"

namespace craft {

struct AssociationConfig {
  double gamma = 5.0;   // minimum radial slack, m
  double delta = 10.0;  // radius modulation divisor
  std::size_t k_prime = 128;

  void validate() const {
    if (!(gamma >= 0.0) || !(delta > 0.0) || k_prime < 1) throw ConfigError("invalid association config");
  }
};

struct AssociationSet {
  std::vector<std::vector<int>> entries;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.size();
    return n;
  }
};

enum class Associator { spa, ball_query, roipool };

inline Associator parse_associator(const std::string& s) {
  if (s == "spa") return Associator::spa;
  if (s == "ball" || s == "ball_query") return Associator::ball_query;
  if (s == "roipool") return Associator::roipool;
  throw ConfigError("unknown associator: " + s);
}

/// Azimuth interval [start, start + extent] on the circle; extent >= 2*pi
/// means the full circle.
struct AzimuthInterval {
  double start = 0.0;
  double extent = 0.0;

  bool full() const { return extent >= 2.0 * kPi; }

  /// Strict interior membership.
  bool contains(double phi) const {
    if (full()) return true;
    const double d = phi - start - 2.0 * kPi * std::floor((phi - start) / (2.0 * kPi));
    return d > 0.0 && d < extent;
  }
};

/// Smallest arc covering all angles: the complement of the largest gap
/// between consecutive sorted angles. Arcs wider than pi become the full circle.
inline AzimuthInterval covering_arc(std::array<double, 8> angles) {
  std::array<int, 8> order{};
  for (int i = 0; i < 8; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return angles[a] < angles[b]; });
  double best_gap = -1.0;
  int best = 0;
  for (int k = 0; k < 8; ++k) {
    const double a = angles[order[k]];
    const double b = k + 1 < 8 ? angles[order[k + 1]] : angles[order[0]] + 2.0 * kPi;
    if (b - a > best_gap) {
      best_gap = b - a;
      best = k;
    }
  }
  AzimuthInterval arc;
  arc.start = angles[order[(best + 1) % 8]];
  arc.extent = 2.0 * kPi - best_gap;
  if (arc.extent > kPi) arc.extent = 2.0 * kPi;
  return arc;
}

/// Polar extent of a proposal box used by SPA.
struct PolarWindow {
  AzimuthInterval azimuth;
  double r_front = 0.0;
  double r_back = 0.0;
  double r_center = 0.0;
  double slack = 0.0;

  bool contains(const PolarPoint& p) const {
    return azimuth.contains(p.phi) && p.r > r_front - slack && p.r < r_back + slack;
  }
};

inline PolarWindow polar_window(const ImageProposal& proposal, const AssociationConfig& cfg) {
  const auto corners = box_corners(proposal.box);
  std::array<double, 8> phis{};
  double r_min = INFINITY, r_max = -INFINITY;
  for (int j = 0; j < 8; ++j) {
    const PolarPoint pc = cart_to_polar(corners[j]);
    phis[j] = pc.phi;
    r_min = std::min(r_min, pc.r);
    r_max = std::max(r_max, pc.r);
  }
  PolarWindow w;
  w.azimuth = covering_arc(phis);
  w.r_front = r_min;
  w.r_back = r_max;
  w.r_center = 0.5 * (r_min + r_max);
  w.slack = cfg.gamma + proposal.depth_std() * w.r_center / cfg.delta;
  return w;
}

/// Keeps at most k_prime indices, preferring points radially closest to
/// r_center (ties by index); the kept list is returned in ascending index order.
inline std::vector<int> truncate_by_radial_proximity(std::vector<int> idx, const std::vector<RadarPoint>& points,
                                                     double r_center, std::size_t k_prime) {
  if (idx.size() <= k_prime) return idx;
  auto key = [&](int i) { return std::abs(std::hypot(points[i].position.x(), points[i].position.y()) - r_center); };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ka = key(a), kb = key(b);
    return ka < kb || (ka == kb && a < b);
  });
  idx.resize(k_prime);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Untruncated SPA candidates of one proposal.
inline std::vector<int> spa_candidates(const ImageProposal& proposal, const std::vector<RadarPoint>& points,
                                       const AssociationConfig& cfg) {
  const PolarWindow w = polar_window(proposal, cfg);
  std::vector<int> hits;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (w.contains(cart_to_polar(points[i].position))) hits.push_back(static_cast<int>(i));
  return hits;
}

/// Soft Polar Association: azimuth bounded by the proposal's corner arc,
/// range window widened by gamma plus a depth-uncertainty term.
inline AssociationSet soft_polar_associate(const std::vector<ImageProposal>& proposals,
                                           const std::vector<RadarPoint>& points, const AssociationConfig& cfg) {
  cfg.validate();
  AssociationSet out;
  out.entries.reserve(proposals.size());
  for (const auto& prop : proposals) {
    if (!(prop.depth_var >= 0.0)) throw InvalidInput("soft_polar_associate: negative depth variance");
    const PolarWindow w = polar_window(prop, cfg);
    out.entries.push_back(truncate_by_radial_proximity(spa_candidates(prop, points, cfg), points, w.r_center, cfg.k_prime));
  }
  return out;
}

/// RoIPool (inside the BEV footprint) and ball-query (BEV radius) baselines.
inline AssociationSet baseline_associate(Associator mode, const std::vector<ImageProposal>& proposals,
                                         const std::vector<RadarPoint>& points, double radius, std::size_t k_prime) {
  if (mode == Associator::ball_query && !(radius > 0.0)) throw ConfigError("ball query radius must be positive");
  if (mode == Associator::spa) throw UsageError("baseline_associate: use soft_polar_associate for SPA");
  AssociationSet out;
  for (const auto& prop : proposals) {
    std::vector<int> hits;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec2 p = points[i].position.head<2>();
      const bool keep = mode == Associator::roipool ? inside_bev(prop.box, p)
                                                    : (p - prop.box.center.head<2>()).norm() <= radius;
      if (keep) hits.push_back(static_cast<int>(i));
    }
    AssociationConfig dummy;
    const double r_center = polar_window(prop, dummy).r_center;
    out.entries.push_back(truncate_by_radial_proximity(std::move(hits), points, r_center, k_prime));
  }
  return out;
}

inline AssociationSet associate(Associator mode, const std::vector<ImageProposal>& proposals,
                                const std::vector<RadarPoint>& points, const AssociationConfig& cfg,
                                double ball_radius) {
  if (mode == Associator::spa) return soft_polar_associate(proposals, points, cfg);
  return baseline_associate(mode, proposals, points, ball_radius, cfg.k_prime);
}

/// Fraction of proposals with a matched gt box whose associated points include
/// one inside that box, inflated by margin in BEV. A proposal with no
/// associated points counts as a miss. No matched proposal yields no value.
inline std::optional<double> association_recall(const AssociationSet& assoc, const std::vector<RadarPoint>& points,
                                                const std::vector<int>& proposal_gt,
                                                const std::vector<BBox3D>& gt_boxes, double margin) {
  std::size_t eligible = 0, hit = 0;
  for (std::size_t m = 0; m < assoc.entries.size(); ++m) {
    const int g = m < proposal_gt.size() ? proposal_gt[m] : -1;
    if (g < 0) continue;
    ++eligible;
    const BBox3D& box = gt_boxes.at(static_cast<std::size_t>(g));
    for (int i : assoc.entries[m]) {
      if (inside_bev(box, points[i].position.head<2>(), margin)) {
        ++hit;
        break;
      }
    }
  }
  if (eligible == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(eligible);
}

/// Mean over proposals with associations of the fraction of associated points
/// that are not inside the proposal's matched gt box.
inline std::optional<double> association_clutter_fraction(const AssociationSet& assoc,
                                                          const std::vector<RadarPoint>& points,
                                                          const std::vector<int>& proposal_gt,
                                                          const std::vector<BBox3D>& gt_boxes, double margin) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < assoc.entries.size(); ++m) {
    const auto& e = assoc.entries[m];
    if (e.empty()) continue;
    const int g = m < proposal_gt.size() ? proposal_gt[m] : -1;
    std::size_t bad = 0;
    for (int i : e)
      if (g < 0 || !inside_bev(gt_boxes.at(static_cast<std::size_t>(g)), points[i].position.head<2>(), margin)) ++bad;
    sum += static_cast<double>(bad) / static_cast<double>(e.size());
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace craft
