#pragma once

#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craft/association.hpp"
#include "craft/fusion.hpp"
#include "craft/simulator.hpp"

namespace craft {

struct RadarInputConfig {
  double max_range = 55.0;
  std::size_t k_max = 2048;
  std::size_t n_sweeps = 6;
};

struct AssociationRunConfig {
  Associator associator = Associator::spa;
  AssociationConfig spa;
  double ball_radius = 6.0;
};

struct AugmentConfig {
  bool enabled = true;
  double max_rotation = kPi;  // rad, uniform in [-max, max]
  double flip_prob = 0.5;
  double max_shift = 0.0;  // m per axis
  double radar_jitter = 0.05;  // m, radar-only, before feature extraction
  double radar_drop_prob = 0.1;
  std::size_t min_sweeps = 3;
};

struct TrainConfig {
  std::size_t epochs = 12;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  double max_grad_norm = 5.0;
  std::size_t frames_per_step = 1;
  AugmentConfig augment;
};

struct EvalConfig {
  std::vector<double> thresholds{0.5, 1.0, 2.0, 4.0};
  double tp_threshold = 2.0;
  double nms_threshold = 0.5;
  std::vector<double> distance_bins{0.0, 20.0, 35.0, 55.0};
  std::vector<std::size_t> point_bins{0, 1, 3, 6};  // lower edges; last bin open
  double min_recall = 0.1;
  double min_precision = 0.1;
};

struct RunConfig {
  sim::CorpusSpec corpus;
  std::size_t frames = 200;
  std::uint64_t seed = 1;
  RadarInputConfig radar;
  AssociationRunConfig association;
  FusionConfig fusion;
  TrainConfig train;
  EvalConfig eval;

  void validate() const {
    corpus.sensor.validate();
    association.spa.validate();
    fusion.validate();
    if (!(radar.max_range > 0.0) || radar.k_max == 0 || radar.n_sweeps == 0)
      throw ConfigError("radar: max_range, k_max and n_sweeps must be positive");
    if (corpus.feature_map.C != fusion.image_channels)
      throw ConfigError("fusion.image_channels must equal simulator.feature_map.channels");
    if (radar.n_sweeps > corpus.n_sweeps) throw ConfigError("radar: n_sweeps exceeds simulated sweeps");
    if (!(association.ball_radius > 0.0)) throw ConfigError("association: ball_radius must be positive");
    if (train.frames_per_step == 0 || !(train.lr >= 0.0)) throw ConfigError("train: bad optimizer settings");
    if (train.augment.min_sweeps == 0 || train.augment.min_sweeps > radar.n_sweeps)
      throw ConfigError("train: min_sweeps must be in [1, radar.n_sweeps]");
    if (eval.thresholds.empty() || !(eval.nms_threshold > 0.0)) throw ConfigError("eval: thresholds");
    if (eval.distance_bins.size() < 2 || eval.point_bins.empty()) throw ConfigError("eval: bins");
    for (std::size_t i = 1; i < eval.distance_bins.size(); ++i)
      if (!(eval.distance_bins[i] > eval.distance_bins[i - 1])) throw ConfigError("eval: distance bins must increase");
    for (std::size_t i = 1; i < eval.point_bins.size(); ++i)
      if (!(eval.point_bins[i] > eval.point_bins[i - 1])) throw ConfigError("eval: point bins must increase");
  }
};

namespace detail {

/// Reads keys from one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const nlohmann::json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  RunConfig c;
  detail::Section top(root, "config");
  if (top.has("simulator")) {
    detail::Section s(top.sub("simulator"), "simulator");
    s.get("frames", c.frames);
    s.get("seed", c.seed);
    s.get("n_sweeps", c.corpus.n_sweeps);
    s.get("max_proposals", c.corpus.max_proposals);
    s.get("mean_counts", c.corpus.mean_counts);
    if (s.has("scene")) {
      detail::Section sc(s.sub("scene"), "simulator.scene");
      auto& ss = c.corpus.scene;
      sc.get("min_range", ss.min_range);
      sc.get("max_range", ss.max_range);
      sc.get("max_ego_speed", ss.max_ego_speed);
      sc.get("max_yaw_rate", ss.max_yaw_rate);
      sc.get("min_gap", ss.min_gap);
      sc.get("max_retries", ss.max_retries);
    }
    if (s.has("sensor")) {
      detail::Section se(s.sub("sensor"), "simulator.sensor");
      auto& m = c.corpus.sensor;
      se.get("radar_radial_sigma", m.radar_radial_sigma);
      se.get("radar_azimuth_sigma", m.radar_azimuth_sigma);
      se.get("clutter_rate", m.clutter_rate);
      se.get("miss_prob_base", m.miss_prob_base);
      se.get("class_miss_prob", m.class_miss_prob);
      se.get("rcs_by_class", m.rcs_by_class);
      se.get("rcs_sigma", m.rcs_sigma);
      se.get("return_scale", m.return_scale);
      se.get("return_ref_range", m.return_ref_range);
      se.get("clutter_min_range", m.clutter_min_range);
      se.get("clutter_max_range", m.clutter_max_range);
      se.get("clutter_speed_sigma", m.clutter_speed_sigma);
      se.get("sweep_interval", m.sweep_interval);
      se.get("cam_depth_sigma_rate", m.cam_depth_sigma_rate);
      se.get("cam_pixel_sigma", m.cam_pixel_sigma);
      se.get("cam_yaw_sigma", m.cam_yaw_sigma);
      se.get("cam_dim_sigma_rate", m.cam_dim_sigma_rate);
      se.get("cam_velocity_sigma", m.cam_velocity_sigma);
      se.get("false_proposal_rate", m.false_proposal_rate);
      se.get("feature_noise", m.feature_noise);
      se.get("signature_scale", m.signature_scale);
    }
    if (s.has("feature_map")) {
      detail::Section fm(s.sub("feature_map"), "simulator.feature_map");
      fm.get("height", c.corpus.feature_map.H);
      fm.get("width", c.corpus.feature_map.W);
      fm.get("channels", c.corpus.feature_map.C);
      fm.get("stride", c.corpus.feature_map.stride);
    }
  }
  if (top.has("radar")) {
    detail::Section s(top.sub("radar"), "radar");
    s.get("max_range", c.radar.max_range);
    s.get("k_max", c.radar.k_max);
    s.get("n_sweeps", c.radar.n_sweeps);
  }
  if (top.has("association")) {
    detail::Section s(top.sub("association"), "association");
    std::string mode = "spa";
    s.get("associator", mode);
    c.association.associator = parse_associator(mode);
    s.get("gamma", c.association.spa.gamma);
    s.get("delta", c.association.spa.delta);
    s.get("k_prime", c.association.spa.k_prime);
    s.get("ball_radius", c.association.ball_radius);
  }
  if (top.has("fusion")) {
    detail::Section s(top.sub("fusion"), "fusion");
    auto& f = c.fusion;
    s.get("channels", f.channels);
    s.get("image_channels", f.image_channels);
    s.get("heads", f.heads);
    s.get("i2r_layers", f.i2r_layers);
    s.get("r2i_layers", f.r2i_layers);
    s.get("mlp_hidden", f.mlp_hidden);
    s.get("n_points", f.n_points);
    s.get("num_classes", f.num_classes);
    s.get("max_proposals", f.max_proposals);
    s.get("patch_scale", f.patch.W_scale);
    s.get("patch_alpha", f.patch.alpha);
    s.get("patch_beta", f.patch.beta);
    s.get("patch_size", f.patch.out_size);
    s.get("window_scale", f.window_scale);
    s.get("deform_ring", f.deform_ring);
    s.get("fusion_threshold", f.fusion_threshold);
    std::string mode = to_string(f.coord_mode);
    s.get("coord_mode", mode);
    f.coord_mode = parse_coord_mode(mode);
    s.get("pos_scale_r", f.pos_scale_r);
    s.get("pos_scale_phi", f.pos_scale_phi);
    s.get("pos_scale_xy", f.pos_scale_xy);
    s.get("in_box_margin", f.in_box_margin);
    if (s.has("backbone")) {
      const auto& arr = s.sub("backbone");
      if (!arr.is_array()) throw ConfigError("fusion.backbone must be a list of stages");
      f.backbone.clear();
      for (const auto& st : arr) {
        detail::Section b(st, "fusion.backbone[]");
        BackboneStage stage;
        b.get("radius", stage.radius);
        b.get("nsample", stage.nsample);
        b.get("mlp", stage.mlp);
        f.backbone.push_back(stage);
      }
    }
  }
  if (top.has("train")) {
    detail::Section s(top.sub("train"), "train");
    auto& t = c.train;
    s.get("epochs", t.epochs);
    s.get("lr", t.lr);
    s.get("weight_decay", t.weight_decay);
    s.get("max_grad_norm", t.max_grad_norm);
    s.get("frames_per_step", t.frames_per_step);
    if (s.has("augment")) {
      detail::Section a(s.sub("augment"), "train.augment");
      a.get("enabled", t.augment.enabled);
      a.get("max_rotation", t.augment.max_rotation);
      a.get("flip_prob", t.augment.flip_prob);
      a.get("max_shift", t.augment.max_shift);
      a.get("radar_jitter", t.augment.radar_jitter);
      a.get("radar_drop_prob", t.augment.radar_drop_prob);
      a.get("min_sweeps", t.augment.min_sweeps);
    }
  }
  if (top.has("eval")) {
    detail::Section s(top.sub("eval"), "eval");
    auto& e = c.eval;
    s.get("thresholds", e.thresholds);
    s.get("tp_threshold", e.tp_threshold);
    s.get("nms_threshold", e.nms_threshold);
    s.get("distance_bins", e.distance_bins);
    s.get("point_bins", e.point_bins);
    s.get("min_recall", e.min_recall);
    s.get("min_precision", e.min_precision);
  }
  if (c.fusion.num_classes != sim::kNumClasses) throw ConfigError("fusion.num_classes must match the simulator classes");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace craft
