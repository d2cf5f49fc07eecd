#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craft/association.hpp"
#include "craft/config.hpp"
#include "craft/eval.hpp"
#include "craft/fusion.hpp"
#include "craft/optim.hpp"
#include "craft/radar.hpp"
#include "craft/scene_io.hpp"

namespace craft {

/// Sweeps of a frame moved into the reference sweep's vehicle frame.
inline std::vector<RadarPoint> accumulate_frame(const sim::Frame& f, std::size_t n_sweeps) {
  if (f.sweeps.empty() || n_sweeps == 0) return {};
  const std::size_t n = std::min(n_sweeps, f.sweeps.size());
  const Pose reference = f.sweeps.front().ego_pose.value_or(Pose());
  return accumulate_sweeps(f.sweeps, reference, n);
}

/// Distinct radar points of one frame and their normalized features.
struct RadarFrame {
  std::vector<RadarPoint> points;
  std::vector<RadarFeatures> features;
};

inline RadarFrame prepare_frame_radar(const std::vector<RadarPoint>& accumulated, const RadarInputConfig& cfg,
                                      const FeatureStats& stats, std::uint64_t seed) {
  const PreparedRadar prep = prepare_radar_input(accumulated, cfg.max_range, cfg.k_max, stats, seed);
  RadarFrame out;
  for (std::size_t s : distinct_slots(prep)) {
    out.points.push_back(prep.points[s]);
    out.features.push_back(prep.features[s]);
  }
  return out;
}

/// Radar-only augmentation: independent position jitter and random drops.
inline void augment_radar(std::vector<RadarPoint>& pts, const AugmentConfig& a, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<RadarPoint> kept;
  kept.reserve(pts.size());
  for (auto p : pts) {
    const double e[3] = {n01(rng), n01(rng), n01(rng)};
    if (u01(rng) < a.radar_drop_prob) continue;
    p.position += a.radar_jitter * Vec3(e[0], e[1], e[2]);
    kept.push_back(p);
  }
  pts = std::move(kept);
}

inline AssociationSet run_association(const AssociationRunConfig& cfg, const std::vector<ImageProposal>& proposals,
                                      const std::vector<RadarPoint>& points) {
  return associate(cfg.associator, proposals, points, cfg.spa, cfg.ball_radius);
}

/// Feature statistics over every accumulated point of a corpus.
inline FeatureStats corpus_feature_stats(const SceneFile& scenes, const RadarInputConfig& cfg) {
  std::vector<RadarPoint> all;
  for (const auto& f : scenes.frames) {
    const auto acc = accumulate_frame(f, cfg.n_sweeps);
    for (const auto& p : acc)
      if (std::hypot(p.position.x(), p.position.y()) <= cfg.max_range) all.push_back(p);
  }
  return compute_feature_stats(all);
}

inline std::uint64_t frame_radar_seed(const sim::Frame& f) { return sim::mix_seed(f.id, 0x7ad47); }

// ---------------------------------------------------------------------------
// Inference

struct FrameResult {
  RadarFrame radar;
  AssociationSet assoc;
  std::vector<FusionOutput> outputs;  // empty in camera-only mode
  std::vector<Detection> decoded;     // one per proposal
  std::vector<Detection> detections;  // after NMS
};

/// Camera-only when `model` is null.
inline FrameResult infer_frame(const FusionModel* model, const SceneFile& scenes, const sim::Frame& f,
                               const RunConfig& cfg) {
  FrameResult r;
  const FeatureStats stats = model ? model->feature_stats : FeatureStats{};
  r.radar = prepare_frame_radar(accumulate_frame(f, cfg.radar.n_sweeps), cfg.radar, stats, frame_radar_seed(f));
  r.assoc = run_association(cfg.association, f.proposals, r.radar.points);
  if (model) {
    const auto maps = scenes.feature_maps(f);
    FrameInput in;
    in.proposals = &f.proposals;
    in.cameras = &scenes.cameras;
    in.maps = &maps;
    in.points = r.radar.points;
    in.features = r.radar.features;
    in.assoc = r.assoc;
    r.outputs = forward_frame(*model, in).outputs;
    // no associated radar: the proposal passes through untouched
    for (std::size_t m = 0; m < f.proposals.size(); ++m)
      r.decoded.push_back(r.assoc.entries[m].empty()
                              ? Detection{f.proposals[m].box, proposal_score(f.proposals[m]), f.proposals[m].class_id,
                                          DetectionSource::camera_only}
                              : decode_and_score(f.proposals[m], r.outputs[m], model->config().fusion_threshold));
  } else {
    for (const auto& p : f.proposals)
      r.decoded.push_back({p.box, proposal_score(p), p.class_id, DetectionSource::camera_only});
  }
  r.detections = nms_bev(r.decoded, cfg.eval.nms_threshold);
  return r;
}

/// Radar points inside a gt footprint, inflated by `margin`.
inline std::size_t points_in_box(const BBox3D& b, const std::vector<RadarPoint>& pts, double margin) {
  std::size_t n = 0;
  for (const auto& p : pts) n += inside_bev(b, p.position.head<2>(), margin);
  return n;
}

/// Everything needed to score a run, kept per frame.
struct EvaluationRun {
  std::vector<EvalFrame> frames;
  std::vector<std::vector<std::size_t>> gt_points;  // on-object radar points per gt
  std::vector<double> radial_errors, azimuth_errors;
};

inline EvaluationRun collect_evaluation(const FusionModel* model, const SceneFile& scenes, const RunConfig& cfg) {
  EvaluationRun run;
  for (const auto& f : scenes.frames) {
    const FrameResult r = infer_frame(model, scenes, f, cfg);
    run.frames.push_back({r.detections, f.gt_boxes, f.gt_classes});
    std::vector<std::size_t> counts;
    for (const auto& g : f.gt_boxes) counts.push_back(points_in_box(g, r.radar.points, cfg.fusion.in_box_margin));
    run.gt_points.push_back(std::move(counts));
    for (std::size_t m = 0; m < f.proposals.size(); ++m) {
      const int g = f.proposal_gt[m];
      if (g < 0) continue;
      const PolarPoint d = cart_to_polar(r.decoded[m].box.center);
      const PolarPoint t = cart_to_polar(f.gt_boxes[static_cast<std::size_t>(g)].center);
      run.radial_errors.push_back(std::abs(d.r - t.r));
      run.azimuth_errors.push_back(std::abs(angle_diff(d.phi, t.phi)) * t.r);
    }
  }
  return run;
}

inline std::string range_label(const char* prefix, double lo, std::optional<double> hi) {
  std::string s = std::string(prefix) + format_value(lo);
  return hi ? s + "-" + format_value(*hi) : s + "+";
}

inline MetricsReport score_evaluation(const EvaluationRun& run, const EvalConfig& ec) {
  const EvalOptions opt{ec.min_recall, ec.min_precision};
  MetricsReport rep;
  rep.thresholds = ec.thresholds;
  rep.n_frames = run.frames.size();
  for (const auto& f : run.frames) {
    rep.n_gt += f.gts.size();
    rep.n_dets += f.dets.size();
    for (const auto& d : f.dets) rep.n_fused += d.source == DetectionSource::fused;
  }
  const auto classes = gt_class_set(run.frames);
  for (double t : ec.thresholds) {
    rep.ap.push_back(class_mean_ap(run.frames, t, opt));
    // recall after each rank, all classes pooled
    std::size_t n_gt = 0;
    std::vector<std::vector<bool>> matched(run.frames.size());
    for (std::size_t f = 0; f < run.frames.size(); ++f) matched[f].assign(run.frames[f].dets.size(), false);
    for (int c : classes) {
      const auto r = match_and_ap(run.frames, c, t, opt);
      n_gt += r.n_gt;
      for (const auto& m : r.matches) matched[m.frame][m.det] = true;
    }
    std::vector<std::pair<double, bool>> ranked;
    for (std::size_t f = 0; f < run.frames.size(); ++f)
      for (std::size_t i = 0; i < run.frames[f].dets.size(); ++i)
        ranked.push_back({run.frames[f].dets[i].score, matched[f][i]});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> curve;
    std::size_t tp = 0;
    for (const auto& [score, hit] : ranked) {
      tp += hit;
      curve.push_back(n_gt ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0);
    }
    rep.recall_curves.push_back(std::move(curve));
  }
  rep.mean_ap = rep.ap.empty() ? 0.0 : std::accumulate(rep.ap.begin(), rep.ap.end(), 0.0) / rep.ap.size();
  rep.tp = tp_errors(run.frames, ec.tp_threshold, opt);
  rep.radial_median = median(run.radial_errors);
  rep.azimuth_median = median(run.azimuth_errors);

  auto make_bin = [&](const std::string& label, auto keep_gt, auto keep_unmatched) {
    const auto sub = restrict_frames(run.frames, keep_gt, keep_unmatched);
    BinMetrics b;
    b.label = label;
    for (const auto& f : sub) b.n_gt += f.gts.size();
    for (double t : ec.thresholds) b.ap.push_back(class_mean_ap(sub, t, opt));
    return b;
  };
  const auto& db = ec.distance_bins;
  for (std::size_t i = 0; i + 1 < db.size(); ++i) {
    const double lo = db[i], hi = db[i + 1];
    auto in_bin = [&](double r) { return r >= lo && r < hi; };
    rep.distance_bins.push_back(make_bin(
        range_label("dist_", lo, hi),
        [&](std::size_t f, std::size_t g) { return in_bin(run.frames[f].gts[g].center.head<2>().norm()); },
        [&](const Detection& d) { return in_bin(d.box.center.head<2>().norm()); }));
  }
  const auto& pb = ec.point_bins;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const std::size_t lo = pb[i];
    const std::optional<std::size_t> hi = i + 1 < pb.size() ? std::optional<std::size_t>(pb[i + 1]) : std::nullopt;
    auto in_bin = [&](std::size_t n) { return n >= lo && (!hi || n < *hi); };
    const std::string label = hi ? (*hi - lo == 1 ? "pts_" + std::to_string(lo)
                                                  : "pts_" + std::to_string(lo) + "-" + std::to_string(*hi - 1))
                                 : "pts_" + std::to_string(lo) + "+";
    rep.point_bins.push_back(make_bin(
        label, [&](std::size_t f, std::size_t g) { return in_bin(run.gt_points[f][g]); },
        [](const Detection&) { return false; }));
  }
  return rep;
}

/// Full evaluation; camera-only when `model` is null.
inline MetricsReport run_evaluation(const FusionModel* model, const SceneFile& scenes, const RunConfig& cfg) {
  return score_evaluation(collect_evaluation(model, scenes, cfg), cfg.eval);
}

// ---------------------------------------------------------------------------
// Training

struct EpochLoss {
  std::size_t epoch = 0;
  double loss = 0.0, point = 0.0, score = 0.0, centerness = 0.0, offset = 0.0, speed = 0.0;
  std::size_t frames = 0;
};

struct TrainOptions {
  std::string loss_csv;   // written after every epoch when set
  std::string dump_path = "craft_nan_dump.json";
  std::function<void(const EpochLoss&)> on_epoch;
};

inline void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& curve) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot write loss curve: " + path);
  os << "epoch,loss,point,score,centerness,offset,speed\n";
  for (const auto& e : curve)
    os << e.epoch << ',' << format_value(e.loss) << ',' << format_value(e.point) << ',' << format_value(e.score) << ','
       << format_value(e.centerness) << ',' << format_value(e.offset) << ',' << format_value(e.speed) << '\n';
}

/// One augmented training sample: network inputs plus targets in the
/// augmented frame.
struct TrainingSample {
  FrameInput input;
  TrainingTargets targets;
};

inline BevTransform random_bev_transform(const AugmentConfig& a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  BevTransform t;
  t.yaw = a.max_rotation * u(rng);
  t.flip = u01(rng) < a.flip_prob;
  t.shift = a.max_shift * Vec2(u(rng), u(rng));
  return t;
}

inline TrainingSample make_training_sample(const FusionModel& model, const SceneFile& scenes, const sim::Frame& f,
                                           const std::vector<FeatureMap>& maps, const RunConfig& cfg,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const AugmentConfig& a = cfg.train.augment;
  std::size_t n_sweeps = cfg.radar.n_sweeps;
  if (a.enabled) n_sweeps = std::uniform_int_distribution<std::size_t>(a.min_sweeps, cfg.radar.n_sweeps)(rng);
  auto acc = accumulate_frame(f, n_sweeps);
  if (a.enabled) augment_radar(acc, a, rng);
  const RadarFrame radar = prepare_frame_radar(acc, cfg.radar, model.feature_stats, rng());

  TrainingSample s;
  s.input.proposals = &f.proposals;
  s.input.cameras = &scenes.cameras;
  s.input.maps = &maps;
  s.input.assoc = run_association(cfg.association, f.proposals, radar.points);
  s.input.points = radar.points;
  s.input.features = radar.features;
  if (a.enabled) s.input.augment = random_bev_transform(a, rng);

  const BevTransform& t = s.input.augment;
  std::vector<ImageProposal> props = f.proposals;
  for (auto& p : props) p.box = t.apply(p.box);
  std::vector<BBox3D> gts = f.gt_boxes;
  for (auto& g : gts) g = t.apply(g);
  std::vector<RadarPoint> pts = radar.points;
  for (auto& p : pts) p.position = t.apply(p.position);
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t m = 0; m < props.size(); ++m)
    for (int k : s.input.assoc.entries[m]) pairs.emplace_back(static_cast<int>(m), k);
  s.targets = build_targets(props, f.proposal_gt, gts, pts, pairs, model.config().coord_mode,
                            model.config().in_box_margin);
  return s;
}

inline void write_nan_dump(const std::string& path, const sim::Frame& f, const TrainingSample& s,
                           const LossBreakdown& l, std::size_t epoch) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["frame_id"] = f.id;
  j["proposals"] = f.proposals.size();
  j["radar_points"] = s.input.points.size();
  std::vector<std::size_t> sizes;
  for (const auto& e : s.input.assoc.entries) sizes.push_back(e.size());
  j["association_sizes"] = sizes;
  j["augment"] = {{"yaw", s.input.augment.yaw}, {"flip", s.input.augment.flip}};
  j["loss"] = {{"point", l.point}, {"score", l.score}, {"centerness", l.centerness}, {"offset", l.offset},
               {"speed", l.speed}};
  j["frame"] = io_detail::frame_json(f);
  std::ofstream os(path);
  os << j.dump(1) << '\n';
}

/// Trains in place; returns the per-epoch mean losses.
inline std::vector<EpochLoss> run_training(FusionModel& model, const SceneFile& scenes, const RunConfig& cfg,
                                           std::uint64_t seed, const TrainOptions& opts = {}) {
  model.feature_stats = corpus_feature_stats(scenes, cfg.radar);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < scenes.frames.size(); ++i)
    if (!scenes.frames[i].proposals.empty()) usable.push_back(i);
  const std::size_t fps = cfg.train.frames_per_step;
  const std::size_t steps_per_epoch = (usable.size() + fps - 1) / fps;
  const std::size_t total_steps = steps_per_epoch * cfg.train.epochs;

  tc::AdamW::Options ao;
  ao.weight_decay = cfg.train.weight_decay;
  ao.max_grad_norm = cfg.train.max_grad_norm;
  tc::AdamW opt(ao);
  auto& store = model.store();
  std::vector<EpochLoss> curve;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::mt19937_64 shuffle_rng(sim::mix_seed(seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss el;
    el.epoch = epoch;
    store.zero_grad();
    std::size_t in_step = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const sim::Frame& f = scenes.frames[order[k]];
      const auto maps = scenes.feature_maps(f);
      const TrainingSample s =
          make_training_sample(model, scenes, f, maps, cfg, sim::mix_seed(seed, (epoch + 1) * 1000003ULL + f.id));
      const FrameForward fw = forward_frame(model, s.input);
      const LossBreakdown l = compute_losses(fw.head_raw, fw.point_logits, s.targets);
      const double total = l.total.item();
      if (!std::isfinite(total)) {
        write_nan_dump(opts.dump_path, f, s, l, epoch);
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", frame " + std::to_string(f.id) +
                            "; dump written to " + opts.dump_path);
      }
      tc::backward(tc::scale(l.total, 1.0 / static_cast<double>(fps)));
      el.loss += total;
      el.point += l.point;
      el.score += l.score;
      el.centerness += l.centerness;
      el.offset += l.offset;
      el.speed += l.speed;
      ++el.frames;
      if (++in_step == fps || k + 1 == order.size()) {
        opt.step(store, tc::cosine_lr(cfg.train.lr, step, total_steps));
        store.zero_grad();
        ++step;
        in_step = 0;
      }
    }
    if (el.frames) {
      const double n = static_cast<double>(el.frames);
      for (double* v : {&el.loss, &el.point, &el.score, &el.centerness, &el.offset, &el.speed}) *v /= n;
    }
    curve.push_back(el);
    if (!opts.loss_csv.empty()) write_loss_csv(opts.loss_csv, curve);
    if (opts.on_epoch) opts.on_epoch(el);
  }
  return curve;
}

}  // namespace craft
