// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "association_oracle.hpp"
#include "craft/attention.hpp"
#include "craft/gradcheck.hpp"
#include "craft/pipeline.hpp"
#include "eval_oracle.hpp"
#include "fusion_fixture.hpp"

using namespace craft;
using namespace craft::tc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failures = 0;

void report(int id, bool ok, const std::string& detail, double secs, double budget) {
  const bool in_time = secs < budget;
  if (!(ok && in_time)) ++g_failures;
  std::printf("criterion %d: %s  %s  [%.1f s / %.0f s budget]\n", id, ok && in_time ? "PASS" : "FAIL", detail.c_str(),
              secs, budget);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor weighted_sum(const Tensor& y) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(y.size());
  for (auto& x : w) x = u(rng);
  return sum(mul(y, Tensor::from(y.shape(), w)));
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in, double h = 1e-5) {
    const double e = gradcheck(f, std::move(in), h).max_rel_error;
    if (e > worst || std::isnan(e)) worst = std::isnan(e) ? INFINITY : e, worst_name = name;
  };

  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {4, 5});
  for (auto& v : x.mutable_values())
    if (std::abs(v) < 1e-3) v = 0.5;
  auto r = random_tensor(rng, {5});
  auto y = random_tensor(rng, {4, 2});
  check("sigmoid", [&] { return weighted_sum(sigmoid(x)); }, {x});
  check("relu", [&] { return weighted_sum(relu(x)); }, {x});
  check("softmax", [&] { return weighted_sum(softmax(x)); }, {x});
  check("add_row", [&] { return weighted_sum(add_row(x, r)); }, {x, r});
  check("mul/scale", [&] { return weighted_sum(scale(mul(x, x), 0.3)); }, {x});
  check("max_pool", [&] { return weighted_sum(max_pool_groups(x, 2)); }, {x});
  check("gather_rows", [&] { return weighted_sum(gather_rows(x, {3, 0, 3, 1})); }, {x});
  check("select_blocks", [&] { return weighted_sum(select_blocks(reshape(x, {4, 5}), {0, 4, 2, 1}, 1)); }, {x});
  check("concat_cols", [&] { return weighted_sum(concat_cols({x, y})); }, {x, y});
  check("concat_rows", [&] { return weighted_sum(concat_rows({x, x})); }, {x});
  check("column", [&] { return weighted_sum(column(x, 2)); }, {x});

  auto a = random_tensor(rng, {3, 4});
  auto W = random_tensor(rng, {4, 6});
  auto b = random_tensor(rng, {6});
  auto g = random_tensor(rng, {6});
  auto beta = random_tensor(rng, {6});
  check("linear", [&] { return weighted_sum(linear(a, W, b)); }, {a, W, b});
  check("layer_norm", [&] { return weighted_sum(layer_norm(linear(a, W, b), g, beta)); }, {a, W, b, g, beta});

  auto z = random_tensor(rng, {6}, 2.0);
  const std::vector<double> t{1, 0, 1, 0.3, 0, 1}, w{1, 1, 0, 2, 1, 0.5}, target{5, -5, 5, -5, 5, -5};
  check("bce", [&] { return bce_with_logits_sum(z, t, w); }, {z});
  check("l1", [&] { return l1_sum(z, target, w); }, {z});

  auto map = random_tensor(rng, {2, 4, 5, 3});
  auto locs = Tensor::from({5, 2}, {0.3, 0.6, 2.7, 1.2, 4.4, 3.5, -0.6, 1.3, 3.25, -0.4}, true);
  check("bilinear", [&] { return weighted_sum(bilinear_sample(map, locs, {0, 1, 1, 0, 1})); }, {map, locs});

  {
    ParameterStore store(7);
    const auto p = MhaParams::create(store, "mha", 8);
    for (auto& prm : store.all())
      for (auto& v : prm.tensor.mutable_values()) v += 0.1 * std::normal_distribution<double>()(rng);
    auto q = random_tensor(rng, {3, 8});
    auto kv = random_tensor(rng, {5, 8});
    std::vector<Tensor> all{q, kv};
    for (auto& prm : store.all()) all.push_back(prm.tensor);
    for (bool sink : {false, true})
      check(sink ? "attention+sink" : "attention", [&] { return weighted_sum(mh_cross_attention(q, kv, p, 2, sink)); },
            all);
    const std::vector<Segment> seg{{0, 2}, {2, 2}, {1, 5}};
    check("attention segments", [&] { return weighted_sum(mh_cross_attention(q, kv, kv, p, 4, true, seg)); }, all);
  }
  {
    ParameterStore store(8);
    auto p = DeformParams::create(store, "def", 8, 6, 2, 3);
    for (auto& prm : store.all())
      for (auto& v : prm.tensor.mutable_values()) v += 0.2 * std::normal_distribution<double>()(rng);
    auto q = random_tensor(rng, {4, 8});
    auto maps = random_tensor(rng, {4, 7, 7, 6});
    const std::vector<double> refs{3.1, 3.2, 2.6, 3.7, 3.3, 2.9, 0.2, 6.4};
    std::vector<Tensor> all{q, maps};
    for (auto& prm : store.all()) all.push_back(prm.tensor);
    check("deformable", [&] { return weighted_sum(deformable_cross_attention(q, refs, maps, {0, 1, 2, 3}, p, 2, 3)); },
          all);
  }
  for (CoordMode mode : {CoordMode::polar, CoordMode::cartesian}) {
    const auto cfg = fixture::tiny_config(mode);
    FusionModel model(cfg, 11);
    fixture::randomize(model, 12, 0.2);
    fixture::ToyFrame f(cfg.channels);
    std::vector<Tensor> params;
    for (auto& p : model.store().all()) params.push_back(p.tensor);
    check("end-to-end " + to_string(mode), [&] { return fixture::toy_loss(model, f); }, params, 1e-6);
  }
  report(1, worst < kTol, "worst relative error " + fmt("%.3g", worst) + " (" + worst_name + ") < 1e-4",
         seconds_since(t0), 60);
}

void criterion_association_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(31337);
  AssociationConfig cfg;
  cfg.k_prime = 1u << 20;  // no truncation
  std::size_t mismatches = 0, wrap_props = 0, pairs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = oracle::random_instance(rng, 64, 512);
    const auto got = soft_polar_associate(inst.proposals, inst.points, cfg);
    for (std::size_t m = 0; m < inst.proposals.size(); ++m) {
      const auto want = oracle::spa_brute_force(inst.proposals[m], inst.points, cfg.gamma, cfg.delta);
      mismatches += got.entries[m] != want;
      pairs += want.size();
      wrap_props += std::abs(std::atan2(inst.proposals[m].box.center.y(), inst.proposals[m].box.center.x())) > 3.0;
    }
  }
  report(2, mismatches == 0 && wrap_props > 0,
         std::to_string(mismatches) + " mismatching proposals over 1000 instances (" + std::to_string(pairs) +
             " pairs, " + std::to_string(wrap_props) + " seam proposals)",
         seconds_since(t0), 30);
}

void criterion_patch_size() {
  const auto t0 = Clock::now();
  const PatchConfig cfg;
  const int a = adaptive_patch_size_raw(0.0, cfg), b = adaptive_patch_size_raw(55.0, cfg),
            c = adaptive_patch_size_raw(110.0, cfg);
  auto raw = [](double d) { return static_cast<int>(std::floor(3.5 * std::exp(2.0 - d / 55.0))); };
  const bool ok = a == 25 && b == 9 && c == 3 && a == raw(0) && b == raw(55) && c == raw(110);
  report(3, ok, "tau(0,55,110) = " + std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(c), seconds_since(t0),
         1);
}

void criterion_association_direction() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  const SceneFile scenes = simulate_scene_file(cfg.corpus, 500, 4242);
  const Associator modes[3] = {Associator::roipool, Associator::ball_query, Associator::spa};
  double recall_sum[3] = {}, clutter_sum[3] = {};
  std::size_t recall_n[3] = {}, clutter_n[3] = {};
  for (const auto& f : scenes.frames) {
    const RadarFrame radar = prepare_frame_radar(accumulate_frame(f, cfg.radar.n_sweeps), cfg.radar, FeatureStats{},
                                                 frame_radar_seed(f));
    for (int k = 0; k < 3; ++k) {
      AssociationRunConfig ac = cfg.association;
      ac.associator = modes[k];
      const auto assoc = run_association(ac, f.proposals, radar.points);
      const double margin = cfg.fusion.in_box_margin;
      if (auto r = association_recall(assoc, radar.points, f.proposal_gt, f.gt_boxes, margin)) {
        recall_sum[k] += *r;
        ++recall_n[k];
      }
      if (auto c = association_clutter_fraction(assoc, radar.points, f.proposal_gt, f.gt_boxes, margin)) {
        clutter_sum[k] += *c;
        ++clutter_n[k];
      }
    }
  }
  double rec[3], clu[3];
  for (int k = 0; k < 3; ++k) {
    rec[k] = recall_n[k] ? recall_sum[k] / recall_n[k] : 0.0;
    clu[k] = clutter_n[k] ? clutter_sum[k] / clutter_n[k] : 1.0;
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "recall roipool %.4f ball %.4f spa %.4f; clutter ball %.4f spa %.4f (500 frames)",
                rec[0], rec[1], rec[2], clu[1], clu[2]);
  report(4, rec[0] < rec[1] && rec[0] < rec[2] && clu[2] < clu[1], buf, seconds_since(t0), 300);
}

// Shared corpus and models for the learning criteria.
struct LearningRun {
  RunConfig cfg;
  SceneFile train, test;
  std::unique_ptr<FusionModel> polar, cartesian;
  double train_secs = 0.0;
};

constexpr std::size_t kTrainFrames = 300, kTestFrames = 300;
constexpr std::uint64_t kModelSeed = 7;

LearningRun& learning_run() {
  static LearningRun run = [] {
    LearningRun r;
    const auto t0 = Clock::now();
    r.train = simulate_scene_file(r.cfg.corpus, kTrainFrames, 1001);
    r.test = simulate_scene_file(r.cfg.corpus, kTestFrames, 2002);
    for (CoordMode mode : {CoordMode::polar, CoordMode::cartesian}) {
      RunConfig c = r.cfg;
      c.fusion.coord_mode = mode;
      auto model = std::make_unique<FusionModel>(c.fusion, kModelSeed);
      run_training(*model, r.train, c, kModelSeed, {});
      (mode == CoordMode::polar ? r.polar : r.cartesian) = std::move(model);
    }
    r.train_secs = seconds_since(t0);
    return r;
  }();
  return run;
}

void criterion_polar_vs_cartesian() {
  auto& run = learning_run();
  const auto t0 = Clock::now();
  RunConfig pc = run.cfg, cc = run.cfg;
  cc.fusion.coord_mode = CoordMode::cartesian;
  const MetricsReport p = run_evaluation(run.polar.get(), run.test, pc);
  const MetricsReport c = run_evaluation(run.cartesian.get(), run.test, cc);
  const double pr = p.radial_median.value_or(INFINITY), pa = p.azimuth_median.value_or(INFINITY);
  const double cr = c.radial_median.value_or(INFINITY), ca = c.azimuth_median.value_or(INFINITY);
  char buf[256];
  std::snprintf(buf, sizeof buf, "median radial polar %.4f < cartesian %.4f, median azimuthal polar %.4f < cartesian %.4f",
                pr, cr, pa, ca);
  report(5, pr < cr && pa < ca, buf, run.train_secs + seconds_since(t0), 1800);
}

void criterion_fusion_vs_camera() {
  auto& run = learning_run();
  const auto t0 = Clock::now();
  const MetricsReport cam = run_evaluation(nullptr, run.test, run.cfg);
  const MetricsReport fus = run_evaluation(run.polar.get(), run.test, run.cfg);
  // thresholds 0.5 and 1 are the first two configured
  auto margin = [&](const std::vector<BinMetrics>& fb, const std::vector<BinMetrics>& cb, const std::string& label) {
    for (std::size_t i = 0; i < fb.size(); ++i)
      if (fb[i].label == label) return 0.5 * ((fb[i].ap[0] - cb[i].ap[0]) + (fb[i].ap[1] - cb[i].ap[1]));
    return std::nan("");
  };
  const double near = margin(fus.distance_bins, cam.distance_bins, "dist_0-20");
  const double far = margin(fus.distance_bins, cam.distance_bins, "dist_35-55");
  const double none = margin(fus.point_bins, cam.point_bins, "pts_0");
  const double many = margin(fus.point_bins, cam.point_bins, "pts_6+");
  const bool overall = fus.ap[0] > cam.ap[0] && fus.ap[1] > cam.ap[1];
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "AP@0.5 %.4f -> %.4f, AP@1 %.4f -> %.4f; margin 35-55 m %.4f > 0-20 m %.4f; margin >=6 pts %.4f > 0 pts "
                "%.4f",
                cam.ap[0], fus.ap[0], cam.ap[1], fus.ap[1], far, near, many, none);
  report(6, overall && far > near && many > none, buf, seconds_since(t0), 300);
}

void criterion_robustness() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  FusionModel model(cfg.fusion, 3);
  fixture::randomize(model, 4, 0.3);
  SceneFile base = simulate_scene_file(cfg.corpus, 6, 515);
  model.feature_stats = corpus_feature_stats(base, cfg.radar);

  SceneFile no_radar = base, clutter = base, no_props = base;
  for (auto& f : no_radar.frames)
    for (auto& s : f.sweeps) s.points.clear();
  {
    sim::CorpusSpec spec = cfg.corpus;
    spec.sensor.class_miss_prob = {1, 1, 1, 1};
    spec.sensor.clutter_rate = 120.0;
    clutter = simulate_scene_file(spec, 6, 515);
  }
  for (auto& f : no_props.frames) {
    f.proposals.clear();
    f.proposal_gt.clear();
  }

  bool ok = true;
  std::size_t gated = 0, fused = 0, total = 0;
  std::string why;
  auto bits_equal = [](const Detection& a, const Detection& b) {
    return a.box.center == b.box.center && a.box.dims == b.box.dims && a.box.yaw == b.box.yaw &&
           a.box.velocity == b.box.velocity && a.score == b.score && a.class_id == b.class_id &&
           a.source == DetectionSource::camera_only;
  };
  for (const SceneFile* sf : {&base, &no_radar, &clutter, &no_props}) {
    try {
      const MetricsReport rep = run_evaluation(&model, *sf, cfg);
      if (!std::isfinite(rep.mean_ap)) ok = false, why = "non-finite metrics";
      for (const auto& f : sf->frames) {
        const FrameResult fr = infer_frame(&model, *sf, f, cfg);
        const FrameResult cam = infer_frame(nullptr, *sf, f, cfg);
        if (fr.decoded.size() != f.proposals.size()) ok = false, why = "decoded count";
        for (std::size_t m = 0; m < fr.decoded.size(); ++m) {
          ++total;
          if (fr.outputs[m].fusion_score < cfg.fusion.fusion_threshold) {
            ++gated;
            if (!bits_equal(fr.decoded[m], cam.decoded[m])) ok = false, why = "gated output differs from camera-only";
          } else {
            ++fused;
          }
          if (!std::isfinite(fr.decoded[m].score)) ok = false, why = "non-finite score";
        }
        if (sf == &no_radar && fr.detections.size() != cam.detections.size()) ok = false, why = "zero-radar detections";
      }
    } catch (const std::exception& e) {
      ok = false;
      why = e.what();
    }
  }
  report(7, ok && gated > 0,
         "zero radar, all clutter, zero proposals evaluated; " + std::to_string(gated) + "/" + std::to_string(total) +
             " gated proposals bit-identical to camera-only" + (why.empty() ? "" : " (" + why + ")"),
         seconds_since(t0), 300);
}

void criterion_metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(808);
  std::size_t bad_oracle = 0, bad_mono = 0, bad_nms = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = fixture::random_instance(rng);
    for (int cls : {0, 1})
      for (double t : {0.5, 1.0, 2.0, 4.0}) {
        const double got = match_and_ap(inst.dets, inst.gts, inst.gt_classes, cls, t).ap;
        const double want = fixture::oracle_ap(inst.dets, inst.gts, inst.gt_classes, cls, t);
        bad_oracle += std::abs(got - want) > 1e-12;
      }
  }
  for (int i = 0; i < 1000; ++i) {
    const auto inst = fixture::random_instance(rng, 20);
    double prev = -1.0;
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const double ap = match_and_ap(inst.dets, inst.gts, inst.gt_classes, 0, t).ap;
      bad_mono += ap < prev || ap < 0.0 || ap > 1.0;
      prev = ap;
    }
    const auto once = nms_bev(inst.dets, 1.0);
    const auto twice = nms_bev(once, 1.0);
    bool same = once.size() == twice.size();
    for (std::size_t k = 0; same && k < once.size(); ++k)
      same = once[k].box.center == twice[k].box.center && once[k].score == twice[k].score;
    bad_nms += !same;
  }
  report(8, bad_oracle + bad_mono + bad_nms == 0,
         "oracle mismatches " + std::to_string(bad_oracle) + "/1600, monotonicity violations " +
             std::to_string(bad_mono) + "/1000, NMS not idempotent " + std::to_string(bad_nms) + "/1000",
         seconds_since(t0), 30);
}

void criterion_determinism() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "craft_acceptance";
  fs::create_directories(dir);
  RunConfig cfg;
  cfg.train.epochs = 5;
  cfg.fusion.channels = cfg.fusion.image_channels = cfg.corpus.feature_map.C = 16;
  cfg.fusion.mlp_hidden = 32;
  std::string scenes_bytes[2], ckpt[2], loss[2], metrics[2];
  for (int k = 0; k < 2; ++k) {
    const std::string tag = std::to_string(k);
    const std::string sp = (dir / ("scenes" + tag + ".jsonl")).string();
    write_scene_file(sp, simulate_scene_file(cfg.corpus, 12, 99));
    scenes_bytes[k] = slurp(sp);
    const SceneFile scenes = read_scene_file(sp);
    FusionModel model(cfg.fusion, 5);
    TrainOptions opts;
    opts.loss_csv = (dir / ("loss" + tag + ".csv")).string();
    run_training(model, scenes, cfg, 5, opts);
    const std::string cp = (dir / ("model" + tag + ".ckpt")).string();
    model.save(cp);
    ckpt[k] = slurp(cp);
    loss[k] = slurp(opts.loss_csv);
    FusionModel loaded(cfg.fusion, 123);
    loaded.load(cp);
    std::ostringstream os;
    write_metrics_csv(os, run_evaluation(&loaded, scenes, cfg));
    metrics[k] = os.str();
  }
  fs::remove_all(dir);
  const bool sim_ok = scenes_bytes[0] == scenes_bytes[1] && !scenes_bytes[0].empty();
  const bool train_ok = ckpt[0] == ckpt[1] && loss[0] == loss[1] && !ckpt[0].empty();
  const bool eval_ok = metrics[0] == metrics[1] && !metrics[0].empty();
  report(9, sim_ok && train_ok && eval_ok,
         std::string("simulate ") + (sim_ok ? "identical" : "differs") + ", train " +
             (train_ok ? "identical" : "differs") + ", eval " + (eval_ok ? "identical" : "differs"),
         seconds_since(t0), 600);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::pair<int, void (*)()> all[] = {
      {1, criterion_gradients},          {2, criterion_association_oracle}, {3, criterion_patch_size},
      {4, criterion_association_direction}, {5, criterion_polar_vs_cartesian}, {6, criterion_fusion_vs_camera},
      {7, criterion_robustness},         {8, criterion_metric_oracle},       {9, criterion_determinism},
  };
  for (const auto& [id, fn] : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("threw: ") + e.what(), 0.0, 1.0);
    }
  }
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
