#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "craft/detection.hpp"
#include "craft/error.hpp"
#include "craft/geometry.hpp"

namespace craft {

/// Greedy class-wise BEV NMS: a detection is dropped when a kept detection of
/// the same class lies closer than `dist_threshold`. Survivors keep their
/// input order.
inline std::vector<Detection> nms_bev(const std::vector<Detection>& dets, double dist_threshold) {
  if (!(dist_threshold > 0.0)) throw ConfigError("nms_bev: threshold must be positive");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> keep(dets.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept)
      if (dets[k].class_id == dets[i].class_id && bev_distance(dets[k].box.center, dets[i].box.center) < dist_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) {
      kept.push_back(i);
      keep[i] = true;
    }
  }
  std::vector<Detection> out;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (keep[i]) out.push_back(dets[i]);
  return out;
}

/// Detections and ground truth of one frame.
struct EvalFrame {
  std::vector<Detection> dets;
  std::vector<BBox3D> gts;
  std::vector<int> gt_classes;
};

struct EvalOptions {
  double min_recall = 0.1;
  double min_precision = 0.1;
};

struct MatchPair {
  std::size_t frame = 0;
  std::size_t det = 0;
  std::size_t gt = 0;
  double distance = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::size_t n_gt = 0;
  std::vector<double> recall, precision;  // one entry per ranked detection
  std::vector<MatchPair> matches;
};

/// Area under the 101-point precision envelope, with the low-recall and
/// low-precision parts cut off and the result rescaled to [0, 1].
inline double interpolated_ap(const std::vector<double>& recall, const std::vector<double>& precision,
                              const EvalOptions& opt) {
  if (recall.empty()) return 0.0;
  std::array<double, 101> env{};
  for (std::size_t k = 0; k < 101; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
    env[k] = best;
  }
  const auto first = static_cast<std::size_t>(std::lround(100.0 * opt.min_recall)) + 1;
  if (first >= 101) return 0.0;
  double sum = 0.0;
  for (std::size_t k = first; k < 101; ++k) sum += std::max(env[k] - opt.min_precision, 0.0) / (1.0 - opt.min_precision);
  return std::min(sum / static_cast<double>(101 - first), 1.0);
}

/// Greedy matching of one class over many frames. Detections are ranked by
/// score (ties by frame, then index); each takes the closest unmatched gt of
/// its class in its frame when that lies within `threshold` in BEV.
inline ApResult match_and_ap(const std::vector<EvalFrame>& frames, int class_id, double threshold,
                             const EvalOptions& opt = {}) {
  struct Ranked {
    std::size_t frame, det;
    double score;
  };
  std::vector<Ranked> ranked;
  ApResult res;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].gts.size() != frames[f].gt_classes.size()) throw ShapeError("match_and_ap: one class per gt");
    for (std::size_t i = 0; i < frames[f].dets.size(); ++i)
      if (frames[f].dets[i].class_id == class_id) ranked.push_back({f, i, frames[f].dets[i].score});
    for (int c : frames[f].gt_classes) res.n_gt += c == class_id;
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].gts.size(), false);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const EvalFrame& fr = frames[ranked[k].frame];
    const Vec3& c = fr.dets[ranked[k].det].box.center;
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      if (fr.gt_classes[g] != class_id || taken[ranked[k].frame][g]) continue;
      const double d = bev_distance(c, fr.gts[g].center);
      if (!best || d < best_d) best = g, best_d = d;
    }
    if (best && best_d <= threshold) {
      taken[ranked[k].frame][*best] = true;
      res.matches.push_back({ranked[k].frame, ranked[k].det, *best, best_d});
      ++tp;
    }
    res.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    res.recall.push_back(res.n_gt ? static_cast<double>(tp) / static_cast<double>(res.n_gt) : 0.0);
  }
  res.ap = res.n_gt ? interpolated_ap(res.recall, res.precision, opt) : 0.0;
  return res;
}

/// Single-frame convenience form.
inline ApResult match_and_ap(const std::vector<Detection>& dets, const std::vector<BBox3D>& gts,
                             const std::vector<int>& gt_classes, int class_id, double threshold,
                             const EvalOptions& opt = {}) {
  return match_and_ap(std::vector<EvalFrame>{{dets, gts, gt_classes}}, class_id, threshold, opt);
}

/// Classes present in the ground truth, ascending.
inline std::vector<int> gt_class_set(const std::vector<EvalFrame>& frames) {
  std::vector<int> out;
  for (const auto& f : frames)
    for (int c : f.gt_classes)
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  std::sort(out.begin(), out.end());
  return out;
}

/// Mean over classes with ground truth; 0 when there is none.
inline double class_mean_ap(const std::vector<EvalFrame>& frames, double threshold, const EvalOptions& opt = {}) {
  const auto classes = gt_class_set(frames);
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (int c : classes) s += match_and_ap(frames, c, threshold, opt).ap;
  return s / static_cast<double>(classes.size());
}

struct TpErrors {
  double ate = 0.0;  // m
  double ave = 0.0;  // m/s
  std::size_t n_tp = 0;
};

/// Translation and velocity error averaged over true positives at `threshold`.
inline TpErrors tp_errors(const std::vector<EvalFrame>& frames, double threshold, const EvalOptions& opt = {}) {
  TpErrors e;
  for (int c : gt_class_set(frames)) {
    const auto r = match_and_ap(frames, c, threshold, opt);
    for (const auto& m : r.matches) {
      const auto& det = frames[m.frame].dets[m.det].box;
      const auto& gt = frames[m.frame].gts[m.gt];
      e.ate += m.distance;
      e.ave += (det.velocity - gt.velocity).norm();
      ++e.n_tp;
    }
  }
  if (e.n_tp) {
    e.ate /= static_cast<double>(e.n_tp);
    e.ave /= static_cast<double>(e.n_tp);
  }
  return e;
}

/// Restricts frames to the gts selected by `keep_gt`. A detection stays when
/// its nearest same-class gt is kept; with no same-class gt in the frame it
/// stays only if `keep_unmatched` says so.
template <class KeepGt, class KeepDet>
std::vector<EvalFrame> restrict_frames(const std::vector<EvalFrame>& frames, KeepGt keep_gt, KeepDet keep_unmatched) {
  std::vector<EvalFrame> out;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const EvalFrame& in = frames[f];
    EvalFrame o;
    std::vector<bool> kept(in.gts.size());
    for (std::size_t g = 0; g < in.gts.size(); ++g) {
      kept[g] = keep_gt(f, g);
      if (kept[g]) {
        o.gts.push_back(in.gts[g]);
        o.gt_classes.push_back(in.gt_classes[g]);
      }
    }
    for (const auto& d : in.dets) {
      std::optional<std::size_t> near;
      double best = 0.0;
      for (std::size_t g = 0; g < in.gts.size(); ++g) {
        if (in.gt_classes[g] != d.class_id) continue;
        const double dist = bev_distance(d.box.center, in.gts[g].center);
        if (!near || dist < best) near = g, best = dist;
      }
      if (near ? kept[*near] : keep_unmatched(d)) o.dets.push_back(d);
    }
    out.push_back(std::move(o));
  }
  return out;
}

struct BinMetrics {
  std::string label;
  std::size_t n_gt = 0;
  std::vector<double> ap;  // per threshold
};

struct MetricsReport {
  std::vector<double> thresholds;
  std::vector<double> ap;  // class-mean AP per threshold
  double mean_ap = 0.0;
  TpErrors tp;
  std::vector<std::vector<double>> recall_curves;  // per threshold, pooled over classes
  std::vector<BinMetrics> distance_bins, point_bins;
  std::optional<double> radial_median, azimuth_median;  // m, per-proposal localisation
  std::size_t n_frames = 0, n_gt = 0, n_dets = 0, n_fused = 0;
};

inline std::string format_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// name,bin,value rows.
inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  auto thr = [](double t) { return format_value(t); };
  os << "name,bin,value\n";
  os << "frames,all," << r.n_frames << "\n";
  os << "gt,all," << r.n_gt << "\n";
  os << "detections,all," << r.n_dets << "\n";
  os << "fused,all," << r.n_fused << "\n";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) os << "ap@" << thr(r.thresholds[i]) << ",all," << format_value(r.ap[i]) << "\n";
  os << "map,all," << format_value(r.mean_ap) << "\n";
  os << "ate,all," << format_value(r.tp.ate) << "\n";
  os << "ave,all," << format_value(r.tp.ave) << "\n";
  os << "tp,all," << r.tp.n_tp << "\n";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    const auto& rc = r.recall_curves[i];
    os << "max_recall@" << thr(r.thresholds[i]) << ",all," << format_value(rc.empty() ? 0.0 : rc.back()) << "\n";
  }
  if (r.radial_median) os << "radial_error_median,all," << format_value(*r.radial_median) << "\n";
  if (r.azimuth_median) os << "azimuth_error_median,all," << format_value(*r.azimuth_median) << "\n";
  for (const auto* bins : {&r.distance_bins, &r.point_bins})
    for (const auto& b : *bins) {
      os << "gt," << b.label << "," << b.n_gt << "\n";
      for (std::size_t i = 0; i < r.thresholds.size(); ++i)
        os << "ap@" << thr(r.thresholds[i]) << "," << b.label << "," << format_value(b.ap[i]) << "\n";
    }
}

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace craft
