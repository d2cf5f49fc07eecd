#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "craft/gradcheck.hpp"
#include "craft/pipeline.hpp"

using namespace craft;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string associator;
  std::string coord_mode;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.associator.empty()) cfg.association.associator = parse_associator(c.associator);
  if (!c.coord_mode.empty()) cfg.fusion.coord_mode = parse_coord_mode(c.coord_mode);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("-s,--seed", c.seed, "override the config seed");
  app->add_option("--associator", c.associator, "spa | ball | roipool")
      ->check(CLI::IsMember({"spa", "ball", "roipool"}));
  app->add_option("--coord-mode", c.coord_mode, "polar | cartesian")->check(CLI::IsMember({"polar", "cartesian"}));
}

int cmd_simulate(const Common& c, std::optional<std::size_t> frames, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const SceneFile s = simulate_scene_file(cfg.corpus, frames.value_or(cfg.frames), cfg.seed);
  write_scene_file(out, s);
  std::cerr << "wrote " << s.frames.size() << " frames to " << out << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& scenes_path, const std::string& ckpt, const std::string& loss_csv) {
  const RunConfig cfg = resolve(c);
  const SceneFile scenes = read_scene_file(scenes_path);
  FusionModel model(cfg.fusion, cfg.seed);
  TrainOptions opts;
  opts.loss_csv = loss_csv;
  opts.on_epoch = [](const EpochLoss& e) {
    std::cerr << "epoch " << e.epoch << " loss " << e.loss << " (" << e.frames << " frames)\n";
  };
  run_training(model, scenes, cfg, cfg.seed, opts);
  model.save(ckpt);
  return 0;
}

int cmd_eval(const Common& c, const std::string& scenes_path, const std::string& ckpt, bool camera_only,
             const std::string& metrics) {
  const RunConfig cfg = resolve(c);
  const SceneFile scenes = read_scene_file(scenes_path);
  std::unique_ptr<FusionModel> model;
  if (!camera_only) {
    if (ckpt.empty()) throw UsageError("eval needs --checkpoint or --camera-only");
    model = std::make_unique<FusionModel>(cfg.fusion, cfg.seed);
    model->load(ckpt);
  }
  const MetricsReport rep = run_evaluation(model.get(), scenes, cfg);
  if (metrics.empty() || metrics == "-") {
    write_metrics_csv(std::cout, rep);
  } else {
    std::ofstream os(metrics);
    if (!os) throw LoadError("cannot write metrics: " + metrics);
    write_metrics_csv(os, rep);
  }
  return 0;
}

int cmd_associate(const Common& c, const std::string& scenes_path, std::size_t frame) {
  const RunConfig cfg = resolve(c);
  const SceneFile scenes = read_scene_file(scenes_path);
  if (frame >= scenes.frames.size()) throw UsageError("frame index out of range");
  const auto& f = scenes.frames[frame];
  const RadarFrame radar =
      prepare_frame_radar(accumulate_frame(f, cfg.radar.n_sweeps), cfg.radar, FeatureStats{}, frame_radar_seed(f));
  const AssociationSet a = run_association(cfg.association, f.proposals, radar.points);
  for (std::size_t m = 0; m < a.entries.size(); ++m) {
    std::cout << m;
    for (int k : a.entries[m]) std::cout << ' ' << k;
    std::cout << '\n';
  }
  return 0;
}

/// End-to-end finite-difference check on a two-proposal, eight-point slice of
/// a simulated frame with a narrow network.
int cmd_gradcheck(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.corpus.feature_map.C = 8;
  FusionConfig& fc = cfg.fusion;
  fc.channels = fc.image_channels = 8;
  fc.heads = 2;
  fc.mlp_hidden = 16;
  fc.n_points = 2;
  fc.backbone = {{1.0, 3, {8, 8}}, {2.0, 3, {8}}};
  fc.validate();

  const SceneFile scenes = simulate_scene_file(cfg.corpus, 8, cfg.seed);
  for (const auto& f : scenes.frames) {
    const RadarFrame radar =
        prepare_frame_radar(accumulate_frame(f, cfg.radar.n_sweeps), cfg.radar, FeatureStats{}, frame_radar_seed(f));
    const AssociationSet full = run_association(cfg.association, f.proposals, radar.points);
    std::vector<std::size_t> props;
    for (std::size_t m = 0; m < f.proposals.size() && props.size() < 2; ++m)
      if (!full.entries[m].empty() && f.proposal_gt[m] >= 0) props.push_back(m);
    if (props.size() < 2) continue;

    std::vector<ImageProposal> proposals;
    std::vector<int> proposal_gt;
    std::vector<RadarPoint> points;
    std::vector<RadarFeatures> features;
    std::map<int, int> remap;
    AssociationSet assoc;
    for (std::size_t m : props) {
      proposals.push_back(f.proposals[m]);
      proposal_gt.push_back(f.proposal_gt[m]);
      std::vector<int> entry;
      for (int k : full.entries[m]) {
        auto it = remap.find(k);
        if (it == remap.end()) {
          if (points.size() == 8) continue;
          it = remap.emplace(k, static_cast<int>(points.size())).first;
          points.push_back(radar.points[static_cast<std::size_t>(k)]);
          features.push_back(radar.features[static_cast<std::size_t>(k)]);
        }
        entry.push_back(it->second);
      }
      std::sort(entry.begin(), entry.end());
      assoc.entries.push_back(entry);
    }
    const auto maps = scenes.feature_maps(f);
    FusionModel model(fc, cfg.seed);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> n01(0.0, 0.2);
    for (auto& p : model.store().all())
      for (auto& v : p.tensor.mutable_values()) v += n01(rng);

    FrameInput in;
    in.proposals = &proposals;
    in.cameras = &scenes.cameras;
    in.maps = &maps;
    in.points = points;
    in.features = features;
    in.assoc = assoc;
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t m = 0; m < assoc.entries.size(); ++m)
      for (int k : assoc.entries[m]) pairs.emplace_back(static_cast<int>(m), k);
    const TrainingTargets t = build_targets(proposals, proposal_gt, f.gt_boxes, points, pairs, fc.coord_mode,
                                            fc.in_box_margin);
    std::vector<tc::Tensor> params;
    for (auto& p : model.store().all()) params.push_back(p.tensor);
    const auto r = tc::gradcheck(
        [&] {
          const FrameForward fw = forward_frame(model, in);
          return compute_losses(fw.head_raw, fw.point_logits, t).total;
        },
        params, 1e-6);
    const bool ok = r.max_rel_error < 1e-4;
    std::cout << "frame " << f.id << ": " << points.size() << " points, " << params.size()
              << " parameter tensors, max relative error " << r.max_rel_error << " ("
              << model.store().all()[r.worst_input].name << ") " << (ok ? "ok" : "FAILED") << "\n";
    return ok ? 0 : 1;
  }
  throw GenerationError("no frame with two associated proposals");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-radar fusion pipeline"};
  app.require_subcommand(1);
  Common common;

  auto* sim = app.add_subcommand("simulate", "generate a scene file");
  add_common(sim, common);
  std::optional<std::size_t> frames;
  std::string out;
  sim->add_option("-n,--frames", frames, "number of frames (default from config)");
  sim->add_option("-o,--out", out, "output scene file")->required();

  auto* train = app.add_subcommand("train", "train a fusion model");
  add_common(train, common);
  std::string scenes, ckpt, loss_csv, metrics;
  train->add_option("--scenes", scenes, "scene file")->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", ckpt, "checkpoint to write")->required();
  train->add_option("--loss-csv", loss_csv, "per-epoch loss curve CSV");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or the camera-only path");
  add_common(eval, common);
  bool camera_only = false;
  eval->add_option("--scenes", scenes, "scene file")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ckpt, "checkpoint to load")->check(CLI::ExistingFile);
  eval->add_flag("--camera-only", camera_only, "skip fusion and score the image proposals");
  eval->add_option("--metrics", metrics, "metrics CSV (default stdout)");

  auto* assoc = app.add_subcommand("associate", "print the association of one frame");
  add_common(assoc, common);
  std::size_t frame = 0;
  assoc->add_option("--scenes", scenes, "scene file")->required()->check(CLI::ExistingFile);
  assoc->add_option("--frame", frame, "frame index");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the fusion loss");
  add_common(grad, common);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(common, frames, out);
    if (*train) return cmd_train(common, scenes, ckpt, loss_csv);
    if (*eval) return cmd_eval(common, scenes, ckpt, camera_only, metrics);
    if (*assoc) return cmd_associate(common, scenes, frame);
    if (*grad) return cmd_gradcheck(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
