#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craft/error.hpp"
#include "craft/simulator.hpp"

namespace craft {

/// A scene file: one header line, then one JSON record per frame.
///
/// Header: {"format": "craft-scenes", "version": 1, "cameras": [...],
///          "feature_map": {...}, "feature_noise": x, "signature_scale": x}
/// Camera: {"width", "height", "intrinsics": [fu, fv, cx, cy],
///          "rotation": [9, row-major], "translation": [3]}
/// Frame:  {"id", "feature_seed", "gt": [box...], "sweeps": [sweep...],
///          "proposals": [proposal...]}
/// Box:    {"center": [3], "dims": [w, l, h], "yaw", "velocity": [2], "class"}
/// Sweep:  {"timestamp", "pose": {"rotation", "translation"} or null,
///          "points": [[x, y, z, rcs, doppler_x, doppler_y, sweep_age], ...]}
/// Proposal: box fields plus "depth_var", "class_conf", "keypoint": [2],
///          "camera", "gt" (-1 for false proposals), "feature": [C]
///
/// Feature maps are not stored; they are rendered again from gt, cameras and
/// feature_seed.
struct SceneFile {
  std::vector<CameraRig> cameras;
  sim::FeatureMapSpec feature_map;
  double feature_noise = 0.3;
  double signature_scale = 1.0;
  std::vector<sim::Frame> frames;

  std::vector<FeatureMap> feature_maps(const sim::Frame& f) const {
    sim::SensorModel m;
    m.feature_noise = feature_noise;
    m.signature_scale = signature_scale;
    return sim::render_feature_maps(f.gt_boxes, f.gt_classes, cameras, feature_map, m, f.feature_seed);
  }
};

inline constexpr int kSceneFormatVersion = 1;

namespace io_detail {

using nlohmann::json;

inline json pose_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.rotation()(i, j));
  const Vec3& t = p.translation();
  return {{"rotation", r}, {"translation", {t.x(), t.y(), t.z()}}};
}

inline Pose pose_from(const json& j) {
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw LoadError("scene file: malformed pose");
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) R(i, k) = r[static_cast<std::size_t>(3 * i + k)];
  return Pose(R, Vec3(t[0], t[1], t[2]));
}

inline void put_box(json& j, const BBox3D& b) {
  j["center"] = {b.center.x(), b.center.y(), b.center.z()};
  j["dims"] = {b.dims.x(), b.dims.y(), b.dims.z()};
  j["yaw"] = b.yaw;
  j["velocity"] = {b.velocity.x(), b.velocity.y()};
}

inline BBox3D box_from(const json& j) {
  const auto c = j.at("center").get<std::array<double, 3>>();
  const auto d = j.at("dims").get<std::array<double, 3>>();
  const auto v = j.at("velocity").get<std::array<double, 2>>();
  BBox3D b;
  b.center = Vec3(c[0], c[1], c[2]);
  b.dims = Vec3(d[0], d[1], d[2]);
  b.yaw = j.at("yaw").get<double>();
  b.velocity = Vec2(v[0], v[1]);
  return b;
}

inline json header_json(const SceneFile& s) {
  json cams = json::array();
  for (const auto& c : s.cameras) {
    json cj = pose_json(c.cam_to_vehicle);
    cj["width"] = c.width;
    cj["height"] = c.height;
    cj["intrinsics"] = {c.intrinsics.fu, c.intrinsics.fv, c.intrinsics.cx, c.intrinsics.cy};
    cams.push_back(cj);
  }
  const auto& fm = s.feature_map;
  return {{"format", "craft-scenes"},
          {"version", kSceneFormatVersion},
          {"cameras", cams},
          {"feature_map", {{"height", fm.H}, {"width", fm.W}, {"channels", fm.C}, {"stride", fm.stride}}},
          {"feature_noise", s.feature_noise},
          {"signature_scale", s.signature_scale}};
}

inline json frame_json(const sim::Frame& f) {
  json gt = json::array();
  for (std::size_t i = 0; i < f.gt_boxes.size(); ++i) {
    json b;
    put_box(b, f.gt_boxes[i]);
    b["class"] = f.gt_classes[i];
    gt.push_back(b);
  }
  json sweeps = json::array();
  for (const auto& s : f.sweeps) {
    json pts = json::array();
    for (const auto& p : s.points)
      pts.push_back({p.position.x(), p.position.y(), p.position.z(), p.rcs, p.doppler.x(), p.doppler.y(), p.sweep_age});
    sweeps.push_back({{"timestamp", s.timestamp},
                      {"pose", s.ego_pose ? pose_json(*s.ego_pose) : json(nullptr)},
                      {"points", pts}});
  }
  json props = json::array();
  for (std::size_t i = 0; i < f.proposals.size(); ++i) {
    const auto& p = f.proposals[i];
    json j;
    put_box(j, p.box);
    j["class"] = p.class_id;
    j["depth_var"] = p.depth_var;
    j["class_conf"] = p.class_conf;
    j["keypoint"] = {p.keypoint.x(), p.keypoint.y()};
    j["camera"] = p.camera_id;
    j["gt"] = f.proposal_gt[i];
    j["feature"] = p.feature;
    props.push_back(j);
  }
  return {{"id", f.id}, {"feature_seed", f.feature_seed}, {"gt", gt}, {"sweeps", sweeps}, {"proposals", props}};
}

inline sim::Frame frame_from(const json& j) {
  sim::Frame f;
  f.id = j.at("id").get<std::uint64_t>();
  f.feature_seed = j.at("feature_seed").get<std::uint64_t>();
  for (const auto& b : j.at("gt")) {
    f.gt_boxes.push_back(box_from(b));
    f.gt_classes.push_back(b.at("class").get<int>());
  }
  for (const auto& s : j.at("sweeps")) {
    RadarSweep sw;
    sw.timestamp = s.at("timestamp").get<double>();
    if (!s.at("pose").is_null()) sw.ego_pose = pose_from(s.at("pose"));
    for (const auto& p : s.at("points")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 7) throw LoadError("scene file: radar point needs 7 values");
      RadarPoint rp;
      rp.position = Vec3(v[0], v[1], v[2]);
      rp.rcs = v[3];
      rp.doppler = Vec2(v[4], v[5]);
      rp.sweep_age = v[6];
      sw.points.push_back(rp);
    }
    f.sweeps.push_back(std::move(sw));
  }
  for (const auto& p : j.at("proposals")) {
    ImageProposal q;
    q.box = box_from(p);
    q.class_id = p.at("class").get<int>();
    q.depth_var = p.at("depth_var").get<double>();
    q.class_conf = p.at("class_conf").get<double>();
    const auto kp = p.at("keypoint").get<std::array<double, 2>>();
    q.keypoint = Vec2(kp[0], kp[1]);
    q.camera_id = p.at("camera").get<int>();
    q.feature = p.at("feature").get<std::vector<double>>();
    f.proposals.push_back(std::move(q));
    f.proposal_gt.push_back(p.at("gt").get<int>());
  }
  return f;
}

}  // namespace io_detail

inline void write_scene_file(const std::string& path, const SceneFile& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write scene file: " + path);
  os << io_detail::header_json(s).dump() << '\n';
  for (const auto& f : s.frames) os << io_detail::frame_json(f).dump() << '\n';
  if (!os) throw LoadError("write failed: " + path);
}

inline SceneFile read_scene_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open scene file: " + path);
  SceneFile s;
  std::string line;
  if (!std::getline(is, line)) throw LoadError("scene file is empty: " + path);
  std::size_t lineno = 1;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != "craft-scenes") throw LoadError("not a scene file: " + path);
    if (h.at("version").get<int>() != kSceneFormatVersion)
      throw LoadError("unsupported scene file version in " + path);
    for (const auto& c : h.at("cameras")) {
      const auto k = c.at("intrinsics").get<std::array<double, 4>>();
      s.cameras.push_back(CameraRig{CameraIntrinsics{k[0], k[1], k[2], k[3]}, io_detail::pose_from(c),
                                    c.at("width").get<int>(), c.at("height").get<int>()});
    }
    const auto& fm = h.at("feature_map");
    s.feature_map.H = fm.at("height").get<std::size_t>();
    s.feature_map.W = fm.at("width").get<std::size_t>();
    s.feature_map.C = fm.at("channels").get<std::size_t>();
    s.feature_map.stride = fm.at("stride").get<double>();
    s.feature_noise = h.at("feature_noise").get<double>();
    s.signature_scale = h.at("signature_scale").get<double>();
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      s.frames.push_back(io_detail::frame_from(nlohmann::json::parse(line)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
  for (const auto& f : s.frames)
    for (int c : f.gt_classes)
      if (c < 0 || static_cast<std::size_t>(c) >= sim::kNumClasses) throw LoadError("scene file: bad gt class");
  return s;
}

inline SceneFile simulate_scene_file(const sim::CorpusSpec& spec, std::size_t n_frames, std::uint64_t seed,
                                     std::vector<CameraRig> cameras = sim::default_cameras()) {
  SceneFile s;
  s.frames = sim::generate_corpus(spec, cameras, n_frames, seed);
  s.cameras = std::move(cameras);
  s.feature_map = spec.feature_map;
  s.feature_noise = spec.sensor.feature_noise;
  s.signature_scale = spec.sensor.signature_scale;
  return s;
}

}  // namespace craft
