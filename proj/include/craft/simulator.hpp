#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "craft/camera.hpp"
#include "craft/error.hpp"
#include "craft/geometry.hpp"
#include "craft/proposal.hpp"
#include "craft/radar.hpp"

namespace craft::sim {

inline constexpr std::size_t kNumClasses = 4;
inline const std::array<std::string, kNumClasses> kClassNames{"car", "truck", "pedestrian", "bicycle"};

struct ClassProfile {
  Vec3 dims;  // w, l, h
  double dim_jitter = 0.1;
  double max_speed = 0.0;
  double static_prob = 0.3;
};

struct SceneSpec {
  std::array<std::size_t, kNumClasses> counts{0, 0, 0, 0};
  std::array<ClassProfile, kNumClasses> profiles{ClassProfile{Vec3(1.9, 4.5, 1.6), 0.1, 12.0, 0.3},
                                                ClassProfile{Vec3(2.5, 8.0, 3.2), 0.15, 10.0, 0.3},
                                                ClassProfile{Vec3(0.7, 0.7, 1.75), 0.1, 1.6, 0.3},
                                                ClassProfile{Vec3(0.7, 1.8, 1.4), 0.1, 6.0, 0.3}};
  double min_range = 3.0;
  double max_range = 54.0;
  double max_ego_speed = 12.0;
  double max_yaw_rate = 0.1;  // rad/s
  double min_gap = 0.3;       // BEV clearance between boxes, m
  std::size_t max_retries = 200;
};

struct SensorModel {
  double radar_radial_sigma = 0.1;
  double radar_azimuth_sigma = 0.0175;
  double clutter_rate = 20.0;  // expected clutter points per sweep
  double miss_prob_base = 0.0;
  std::array<double, kNumClasses> class_miss_prob{0.05, 0.05, 0.35, 0.25};
  std::array<double, kNumClasses> rcs_by_class{10.0, 15.0, -8.0, -3.0};  // dBsm
  double rcs_sigma = 3.0;
  double return_scale = 0.5;   // expected returns per sweep at the reference range for 0 dBsm
  double return_ref_range = 20.0;
  double clutter_min_range = 1.0;
  double clutter_max_range = 60.0;
  double clutter_speed_sigma = 0.5;
  double sweep_interval = 0.075;  // s
  double cam_depth_sigma_rate = 0.04;
  double cam_pixel_sigma = 1.0;
  double cam_yaw_sigma = 0.08;
  double cam_dim_sigma_rate = 0.05;
  double cam_velocity_sigma = 1.0;
  double false_proposal_rate = 1.0;  // expected false proposals per frame
  double feature_noise = 0.3;
  double signature_scale = 1.0;

  void validate() const {
    const double sig[] = {radar_radial_sigma, radar_azimuth_sigma, rcs_sigma, cam_depth_sigma_rate, cam_pixel_sigma,
                          cam_yaw_sigma, cam_dim_sigma_rate, cam_velocity_sigma, feature_noise, clutter_speed_sigma};
    for (double s : sig)
      if (!(s >= 0.0)) throw ConfigError("sensor model: sigmas must be non-negative");
    if (!(miss_prob_base >= 0.0 && miss_prob_base <= 1.0)) throw ConfigError("sensor model: miss_prob_base");
    for (double p : class_miss_prob)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sensor model: class miss probability");
    if (!(clutter_rate >= 0.0) || !(false_proposal_rate >= 0.0) || !(return_scale >= 0.0))
      throw ConfigError("sensor model: rates must be non-negative");
    if (!(clutter_max_range > clutter_min_range) || !(clutter_min_range >= 0.0))
      throw ConfigError("sensor model: clutter annulus");
    if (!(sweep_interval > 0.0) || !(return_ref_range > 0.0)) throw ConfigError("sensor model: intervals");
  }
};

struct FeatureMapSpec {
  std::size_t H = 28, W = 50, C = 64;
  double stride = 4.0;
};

/// Four cameras covering 360 degrees, 200 x 112 images.
inline std::vector<CameraRig> default_cameras() {
  std::vector<CameraRig> rig;
  const CameraIntrinsics k{84.0, 84.0, 100.0, 56.0};
  for (int i = 0; i < 4; ++i) rig.push_back(CameraRig::looking_at(i * kPi / 2, 1.5, k, 200, 112));
  return rig;
}

struct Scene {
  std::vector<BBox3D> gt_boxes;  // reference vehicle frame at timestamps[0]
  std::vector<int> gt_classes;
  std::vector<Pose> ego_trajectory;  // vehicle -> reference frame, one per sweep
  std::vector<double> timestamps;    // [0] is the reference, older ones follow
  std::vector<CameraRig> cameras;
};

/// Deterministic sub-seed derivation.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t n_sweeps, double sweep_interval,
                            std::vector<CameraRig> cameras = default_cameras()) {
  if (n_sweeps < 1) throw ConfigError("generate_scene: n_sweeps must be >= 1");
  if (cameras.empty()) throw ConfigError("generate_scene: at least one camera");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  Scene s;
  s.cameras = std::move(cameras);

  const double ego_speed = spec.max_ego_speed * u01(rng);
  const double yaw_rate = spec.max_yaw_rate * (2.0 * u01(rng) - 1.0);
  for (std::size_t k = 0; k < n_sweeps; ++k) {
    const double t = -static_cast<double>(k) * sweep_interval;
    s.timestamps.push_back(t);
    // constant-speed arc; the reference pose is the identity
    const double yaw = yaw_rate * t;
    const Vec3 pos = std::abs(yaw_rate) > 1e-9
                         ? Vec3(ego_speed / yaw_rate * std::sin(yaw), ego_speed / yaw_rate * (1 - std::cos(yaw)), 0.0)
                         : Vec3(ego_speed * t, 0.0, 0.0);
    s.ego_trajectory.push_back(Pose::from_yaw(yaw, pos));
  }

  std::vector<std::pair<int, std::size_t>> order;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < spec.counts[c]; ++i) order.emplace_back(static_cast<int>(c), i);
  for (const auto& [cls, i] : order) {
    (void)i;
    const ClassProfile& prof = spec.profiles[static_cast<std::size_t>(cls)];
    BBox3D b;
    for (int a = 0; a < 3; ++a) b.dims[a] = prof.dims[a] * std::max(0.5, 1.0 + prof.dim_jitter * n01(rng));
    const double half_diag = 0.5 * std::hypot(b.width(), b.length());
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      const double hi = spec.max_range - half_diag;
      if (hi <= spec.min_range) break;
      const double r = std::sqrt(spec.min_range * spec.min_range +
                                 u01(rng) * (hi * hi - spec.min_range * spec.min_range));
      const double phi = kPi * (2.0 * u01(rng) - 1.0);
      b.center = Vec3(r * std::cos(phi), r * std::sin(phi), 0.5 * b.height());
      b.yaw = wrap_angle(kPi * (2.0 * u01(rng) - 1.0));
      placed = true;
      for (const auto& o : s.gt_boxes) {
        const double other = 0.5 * std::hypot(o.width(), o.length());
        if (bev_distance(o.center, b.center) < half_diag + other + spec.min_gap) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) throw GenerationError("generate_scene: could not place object without overlap");
    const double speed = u01(rng) < prof.static_prob ? 0.0 : prof.max_speed * u01(rng);
    b.velocity = speed * heading(b.yaw);
    s.gt_boxes.push_back(b);
    s.gt_classes.push_back(cls);
  }
  return s;
}

/// Box as seen at time t in the vehicle frame of pose `ego`.
inline BBox3D box_at(const BBox3D& ref_box, double t, const Pose& ego) {
  BBox3D b = ref_box;
  const Vec3 world(ref_box.center.x() + ref_box.velocity.x() * t, ref_box.center.y() + ref_box.velocity.y() * t,
                   ref_box.center.z());
  const Pose inv = ego.inverse();
  b.center = inv.apply(world);
  b.yaw = wrap_angle(ref_box.yaw - ego.yaw());
  b.velocity = inv.apply_direction(Vec3(ref_box.velocity.x(), ref_box.velocity.y(), 0.0)).head<2>();
  return b;
}

/// Uniform point on the BEV box edges that face the sensor at the origin.
inline Vec2 sample_visible_perimeter(const BBox3D& b, std::mt19937_64& rng) {
  const Vec2 c = b.center.head<2>();
  const Vec2 f = heading(b.yaw), l(-f.y(), f.x());
  const double hl = b.length() / 2, hw = b.width() / 2;
  const std::array<Vec2, 4> corner{c + f * hl + l * hw, c - f * hl + l * hw, c - f * hl - l * hw, c + f * hl - l * hw};
  std::array<double, 4> weight{};
  double total = 0.0;
  for (int e = 0; e < 4; ++e) {
    const Vec2 a = corner[e], bb = corner[(e + 1) % 4];
    const Vec2 mid = (a + bb) / 2;
    const Vec2 normal = mid - c;
    if (normal.dot(mid) < 0) weight[e] = (bb - a).norm();
    total += weight[e];
  }
  if (total == 0.0) {
    for (int e = 0; e < 4; ++e) weight[e] = (corner[(e + 1) % 4] - corner[e]).norm();
    total = weight[0] + weight[1] + weight[2] + weight[3];
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double pick = u01(rng) * total;
  int e = 0;
  while (e < 3 && pick > weight[e]) pick -= weight[e++];
  while (weight[e] == 0.0) e = (e + 1) % 4;
  const double s = u01(rng);
  return corner[e] + s * (corner[(e + 1) % 4] - corner[e]);
}

/// Ego-compensated Doppler of a target moving with `velocity` at `p`: the
/// radial component, as an x/y vector.
inline Vec2 radial_doppler(const Vec3& p, const Vec2& velocity) {
  const Vec2 d = p.head<2>();
  const double n = d.norm();
  if (n < 1e-9) return Vec2::Zero();
  const Vec2 u = d / n;
  return velocity.dot(u) * u;
}

inline std::vector<RadarSweep> render_radar(const Scene& scene, const SensorModel& model, std::size_t n_sweeps,
                                            std::uint64_t seed) {
  if (n_sweeps < 1 || n_sweeps > scene.timestamps.size()) throw ConfigError("render_radar: bad sweep count");
  model.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  std::vector<bool> missed(scene.gt_boxes.size());
  for (std::size_t i = 0; i < scene.gt_boxes.size(); ++i) {
    const double p = std::min(1.0, model.miss_prob_base + model.class_miss_prob[static_cast<std::size_t>(scene.gt_classes[i])]);
    missed[i] = u01(rng) < p;
  }

  std::vector<RadarSweep> sweeps;
  for (std::size_t s = 0; s < n_sweeps; ++s) {
    RadarSweep sweep;
    sweep.timestamp = scene.timestamps[s];
    sweep.ego_pose = scene.ego_trajectory[s];
    for (std::size_t i = 0; i < scene.gt_boxes.size(); ++i) {
      if (missed[i]) continue;
      const BBox3D b = box_at(scene.gt_boxes[i], sweep.timestamp, *sweep.ego_pose);
      const double r = std::max(std::hypot(b.center.x(), b.center.y()), 1.0);
      const double rcs = model.rcs_by_class[static_cast<std::size_t>(scene.gt_classes[i])];
      const double lambda = model.return_scale * std::pow(10.0, rcs / 20.0) * model.return_ref_range / r;
      std::poisson_distribution<int> count(lambda);
      const int n = lambda > 0 ? count(rng) : 0;
      for (int k = 0; k < n; ++k) {
        const Vec2 surf = sample_visible_perimeter(b, rng);
        const double z = b.center.z() + b.height() * (u01(rng) - 0.5);
        PolarPoint pp = cart_to_polar(Vec3(surf.x(), surf.y(), z));
        pp.r = std::max(0.0, pp.r + model.radar_radial_sigma * n01(rng));
        pp.phi = wrap_angle(pp.phi + model.radar_azimuth_sigma * n01(rng));
        RadarPoint rp;
        rp.position = polar_to_cart(pp);
        rp.doppler = radial_doppler(rp.position, b.velocity);
        rp.rcs = rcs + model.rcs_sigma * n01(rng);
        sweep.points.push_back(rp);
      }
    }
    std::poisson_distribution<int> clutter(model.clutter_rate);
    const int nc = model.clutter_rate > 0 ? clutter(rng) : 0;
    const double r0 = model.clutter_min_range, r1 = model.clutter_max_range;
    for (int k = 0; k < nc; ++k) {
      const double r = std::sqrt(r0 * r0 + u01(rng) * (r1 * r1 - r0 * r0));
      const double phi = kPi * (2.0 * u01(rng) - 1.0);
      RadarPoint rp;
      rp.position = Vec3(r * std::cos(phi), r * std::sin(phi), 2.0 * u01(rng));
      rp.doppler = model.clutter_speed_sigma * n01(rng) * heading(phi);
      rp.rcs = -5.0 + 5.0 * n01(rng);
      sweep.points.push_back(rp);
    }
    sweeps.push_back(std::move(sweep));
  }
  return sweeps;
}

/// Fixed per-class feature signatures, shared by every frame.
inline std::vector<std::vector<double>> class_signatures(std::size_t C, double scale) {
  std::mt19937_64 rng(0x5157a7u);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::vector<double>> sig(kNumClasses, std::vector<double>(C));
  for (auto& v : sig) {
    double norm = 0.0;
    for (auto& x : v) {
      x = n01(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x *= scale * std::sqrt(static_cast<double>(C)) / norm;
  }
  return sig;
}

/// Synthetic camera features: gaussian noise plus the class signature stamped
/// over each object's projected box (nearer objects drawn last).
inline std::vector<FeatureMap> render_feature_maps(const std::vector<BBox3D>& gts, const std::vector<int>& classes,
                                                   const std::vector<CameraRig>& cameras, const FeatureMapSpec& fm,
                                                   const SensorModel& model, std::uint64_t feature_seed) {
  std::mt19937_64 rng(feature_seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto sig = class_signatures(fm.C, model.signature_scale);
  std::vector<std::size_t> order(gts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gts[a].center.head<2>().norm() > gts[b].center.head<2>().norm();
  });
  std::vector<FeatureMap> maps;
  for (const auto& cam : cameras) {
    FeatureMap map(fm.H, fm.W, fm.C, fm.stride);
    for (auto& v : map.data) v = model.feature_noise * n01(rng);
    for (std::size_t i : order) {
      if (cam.to_camera(gts[i].center).z() <= 0.5) continue;
      double u0 = 1e18, v0 = 1e18, u1 = -1e18, v1 = -1e18;
      bool any = false;
      for (const auto& c : box_corners(gts[i])) {
        const auto px = cam.pixel_of(c);
        if (!px) continue;
        any = true;
        u0 = std::min(u0, px->x()), u1 = std::max(u1, px->x());
        v0 = std::min(v0, px->y()), v1 = std::max(v1, px->y());
      }
      if (!any) continue;
      const long x0 = std::max(0L, static_cast<long>(std::floor(u0 / fm.stride)));
      const long x1 = std::min(static_cast<long>(fm.W) - 1, static_cast<long>(std::floor(u1 / fm.stride)));
      const long y0 = std::max(0L, static_cast<long>(std::floor(v0 / fm.stride)));
      const long y1 = std::min(static_cast<long>(fm.H) - 1, static_cast<long>(std::floor(v1 / fm.stride)));
      const auto& s = sig[static_cast<std::size_t>(classes[i])];
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          double* cell = map.cell(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
          for (std::size_t c = 0; c < fm.C; ++c) cell[c] = s[c] + model.feature_noise * n01(rng);
        }
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

struct CameraOutput {
  std::vector<ImageProposal> proposals;
  std::vector<int> proposal_gt;  // -1 for false proposals
};

/// Camera whose image holds the projected centre closest to its principal
/// point, or -1.
inline int best_camera(const std::vector<CameraRig>& cams, const Vec3& p) {
  int best = -1;
  double best_d = 1e18;
  for (std::size_t c = 0; c < cams.size(); ++c) {
    const auto px = cams[c].pixel_of(p);
    if (!px || !cams[c].in_image(*px)) continue;
    const double d = std::abs(px->x() - cams[c].intrinsics.cx);
    if (d < best_d) best_d = d, best = static_cast<int>(c);
  }
  return best;
}

inline ImageProposal make_proposal(const CameraRig& cam, int camera_id, const Vec2& keypoint, double depth,
                                   double depth_var, const BBox3D& shape, int class_id, double conf,
                                   const FeatureMap& map) {
  ImageProposal p;
  p.box = shape;
  p.box.center = cam.cam_to_vehicle.apply(unproject_keypoint(keypoint.x(), keypoint.y(), depth, cam.intrinsics));
  p.depth_var = depth_var;
  p.class_id = class_id;
  p.class_conf = conf;
  p.keypoint = keypoint;
  p.camera_id = camera_id;
  const Vec2 cell = map.to_cells(keypoint);
  p.feature = map.sample(cell.x(), cell.y());
  return p;
}

inline CameraOutput render_proposals(const Scene& scene, const SensorModel& model, const std::vector<FeatureMap>& maps,
                                     std::size_t max_per_camera, std::uint64_t seed) {
  model.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto& cams = scene.cameras;
  std::vector<std::vector<std::pair<ImageProposal, int>>> per_cam(cams.size());

  for (std::size_t i = 0; i < scene.gt_boxes.size(); ++i) {
    const BBox3D& gt = scene.gt_boxes[i];
    const int c = best_camera(cams, gt.center);
    // the draws happen for every object so visibility does not shift later noise
    const double e_depth = n01(rng), e_u = n01(rng), e_v = n01(rng), e_yaw = n01(rng), e_conf = n01(rng);
    const double e_dim[3] = {n01(rng), n01(rng), n01(rng)};
    const double e_vel[2] = {n01(rng), n01(rng)};
    if (c < 0) continue;
    const CameraRig& cam = cams[static_cast<std::size_t>(c)];
    const Vec3 pc = cam.to_camera(gt.center);
    const Vec2 kp = project_point(pc, cam.intrinsics) + model.cam_pixel_sigma * Vec2(e_u, e_v);
    const double sd = model.cam_depth_sigma_rate * pc.z();
    const double depth = std::max(0.5, pc.z() + sd * e_depth);
    BBox3D shape = gt;
    for (int a = 0; a < 3; ++a) shape.dims[a] = std::max(0.1, gt.dims[a] * (1.0 + model.cam_dim_sigma_rate * e_dim[a]));
    shape.yaw = wrap_angle(gt.yaw + model.cam_yaw_sigma * e_yaw);
    shape.velocity = gt.velocity + model.cam_velocity_sigma * Vec2(e_vel[0], e_vel[1]);
    const double ease = std::exp(-pc.z() / 40.0);
    const double conf = std::clamp(0.55 + 0.4 * ease + 0.05 * e_conf, 0.05, 0.99);
    per_cam[static_cast<std::size_t>(c)].emplace_back(
        make_proposal(cam, c, kp, depth, sd * sd, shape, scene.gt_classes[i], conf,
                      maps[static_cast<std::size_t>(c)]),
        static_cast<int>(i));
  }

  std::poisson_distribution<int> nfalse(model.false_proposal_rate);
  const int n_false = model.false_proposal_rate > 0 ? nfalse(rng) : 0;
  std::uniform_int_distribution<std::size_t> pick_cam(0, cams.size() - 1);
  std::uniform_int_distribution<int> pick_cls(0, static_cast<int>(kNumClasses) - 1);
  const SceneSpec defaults;
  for (int k = 0; k < n_false; ++k) {
    const std::size_t c = pick_cam(rng);
    const CameraRig& cam = cams[c];
    const Vec2 kp(u01(rng) * cam.width, u01(rng) * cam.height);
    const double depth = 5.0 + 45.0 * u01(rng);
    const int cls = pick_cls(rng);
    BBox3D shape;
    shape.dims = defaults.profiles[static_cast<std::size_t>(cls)].dims;
    shape.yaw = wrap_angle(kPi * (2.0 * u01(rng) - 1.0));
    const double sd = model.cam_depth_sigma_rate * depth;
    const double conf = 0.05 + 0.35 * u01(rng);
    per_cam[c].emplace_back(make_proposal(cam, static_cast<int>(c), kp, depth, sd * sd, shape, cls, conf, maps[c]), -1);
  }

  CameraOutput out;
  for (auto& list : per_cam) {
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return proposal_score(a.first) > proposal_score(b.first);
    });
    if (list.size() > max_per_camera) list.resize(max_per_camera);
    for (auto& [p, g] : list) {
      out.proposals.push_back(std::move(p));
      out.proposal_gt.push_back(g);
    }
  }
  return out;
}

/// One simulated frame: scene, sweeps and camera proposals. Feature maps are
/// regenerated from feature_seed on demand.
struct Frame {
  std::uint64_t id = 0;
  std::uint64_t feature_seed = 0;
  std::vector<BBox3D> gt_boxes;
  std::vector<int> gt_classes;
  std::vector<RadarSweep> sweeps;
  std::vector<ImageProposal> proposals;
  std::vector<int> proposal_gt;
};

struct CorpusSpec {
  SceneSpec scene;  // counts are per-frame means
  SensorModel sensor;
  FeatureMapSpec feature_map;
  std::size_t n_sweeps = 6;
  std::size_t max_proposals = 64;
  std::array<double, kNumClasses> mean_counts{8.0, 2.0, 4.0, 2.0};
};

inline Frame generate_frame(const CorpusSpec& spec, const std::vector<CameraRig>& cameras, std::uint64_t seed,
                            std::uint64_t id) {
  std::mt19937_64 rng(mix_seed(seed, 0));
  SceneSpec ss = spec.scene;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::poisson_distribution<int> n(spec.mean_counts[c]);
    ss.counts[c] = spec.mean_counts[c] > 0 ? static_cast<std::size_t>(n(rng)) : 0;
  }
  const Scene scene = generate_scene(ss, mix_seed(seed, 1), spec.n_sweeps, spec.sensor.sweep_interval, cameras);
  Frame f;
  f.id = id;
  f.feature_seed = mix_seed(seed, 2);
  f.gt_boxes = scene.gt_boxes;
  f.gt_classes = scene.gt_classes;
  f.sweeps = render_radar(scene, spec.sensor, spec.n_sweeps, mix_seed(seed, 3));
  const auto maps = render_feature_maps(f.gt_boxes, f.gt_classes, cameras, spec.feature_map, spec.sensor, f.feature_seed);
  auto cam = render_proposals(scene, spec.sensor, maps, spec.max_proposals, mix_seed(seed, 4));
  f.proposals = std::move(cam.proposals);
  f.proposal_gt = std::move(cam.proposal_gt);
  return f;
}

inline std::vector<Frame> generate_corpus(const CorpusSpec& spec, const std::vector<CameraRig>& cameras,
                                          std::size_t n_frames, std::uint64_t seed) {
  std::vector<Frame> frames;
  frames.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) frames.push_back(generate_frame(spec, cameras, mix_seed(seed, 100 + i), i));
  return frames;
}

}  // namespace craft::sim
