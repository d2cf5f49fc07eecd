#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "craft/eval.hpp"

namespace craft::fixture {

/// Independent single-frame AP: explicit rank order, TP flags recomputed from
/// scratch, precision/recall at every cut, and the 101 recall samples read
/// straight off the best precision at or beyond each recall level.
inline double oracle_ap(const std::vector<Detection>& dets, const std::vector<BBox3D>& gts,
                        const std::vector<int>& gt_classes, int cls, double thr, double min_recall = 0.1,
                        double min_precision = 0.1) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].class_id == cls) idx.push_back(i);
  // insertion sort: descending score, lower index first on ties
  for (std::size_t a = 1; a < idx.size(); ++a)
    for (std::size_t b = a; b > 0 && dets[idx[b]].score > dets[idx[b - 1]].score; --b) std::swap(idx[b], idx[b - 1]);
  std::size_t n_gt = 0;
  for (int c : gt_classes) n_gt += c == cls;
  if (n_gt == 0) return 0.0;

  std::vector<bool> used(gts.size(), false), tp(idx.size(), false);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double best = INFINITY;
    std::size_t which = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_classes[g] != cls || used[g]) continue;
      const double dx = dets[idx[k]].box.center.x() - gts[g].center.x();
      const double dy = dets[idx[k]].box.center.y() - gts[g].center.y();
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d < best) best = d, which = g;
    }
    if (which < gts.size() && best <= thr) {
      used[which] = true;
      tp[k] = true;
    }
  }
  std::vector<double> prec, rec;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto hits = static_cast<double>(std::count(tp.begin(), tp.begin() + static_cast<long>(k) + 1, true));
    prec.push_back(hits / static_cast<double>(k + 1));
    rec.push_back(hits / static_cast<double>(n_gt));
  }
  double total = 0.0;
  int used_levels = 0;
  for (int level = 0; level <= 100; ++level) {
    if (level <= static_cast<int>(std::lround(100 * min_recall))) continue;
    double p = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k)
      if (rec[k] * 100.0 >= level - 1e-9) p = std::max(p, prec[k]);
    total += std::max(0.0, (p - min_precision) / (1.0 - min_precision));
    ++used_levels;
  }
  return std::min(1.0, total / used_levels);
}

/// Small random instance: a handful of gts and detections in a 12 m square,
/// some near a gt, some anywhere.
struct RandomInstance {
  std::vector<Detection> dets;
  std::vector<BBox3D> gts;
  std::vector<int> gt_classes;
};

inline RandomInstance random_instance(std::mt19937_64& rng, int max_items = 10, int n_classes = 2) {
  std::uniform_int_distribution<int> count(0, max_items), cls(0, n_classes - 1);
  std::uniform_real_distribution<double> pos(-6.0, 6.0), score(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  RandomInstance r;
  const int ng = count(rng), nd = count(rng);
  for (int i = 0; i < ng; ++i) {
    BBox3D b;
    b.center = Vec3(pos(rng), pos(rng), 0.0);
    r.gts.push_back(b);
    r.gt_classes.push_back(cls(rng));
  }
  for (int i = 0; i < nd; ++i) {
    Detection d;
    d.class_id = cls(rng);
    if (ng > 0 && score(rng) < 0.7) {
      const auto g = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, ng - 1)(rng));
      d.box.center = r.gts[g].center + Vec3(jitter(rng), jitter(rng), 0.0);
    } else {
      d.box.center = Vec3(pos(rng), pos(rng), 0.0);
    }
    // coarse scores so ties occur
    d.score = std::round(score(rng) * 20.0) / 20.0;
    r.dets.push_back(d);
  }
  return r;
}

}  // namespace craft::fixture
