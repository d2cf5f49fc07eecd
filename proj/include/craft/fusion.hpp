#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "craft/association.hpp"
#include "craft/attention.hpp"
#include "craft/camera.hpp"
#include "craft/detection.hpp"
#include "craft/ops.hpp"
#include "craft/params.hpp"
#include "craft/proposal.hpp"
#include "craft/radar.hpp"

namespace craft {

using tc::Tensor;

enum class CoordMode { polar, cartesian };

inline CoordMode parse_coord_mode(const std::string& s) {
  if (s == "polar") return CoordMode::polar;
  if (s == "cartesian") return CoordMode::cartesian;
  throw ConfigError("unknown coordinate mode: " + s);
}

inline std::string to_string(CoordMode m) { return m == CoordMode::polar ? "polar" : "cartesian"; }

/// One set-abstraction stage: ball-query grouping on every point, shared MLP
/// with layer norm, max-pool over the group.
struct BackboneStage {
  double radius = 0.4;
  std::size_t nsample = 4;
  std::vector<std::size_t> mlp;
};

struct FusionConfig {
  std::size_t channels = 64;
  std::size_t image_channels = 64;
  std::size_t heads = 8;
  std::size_t i2r_layers = 4;
  std::size_t r2i_layers = 4;
  std::size_t mlp_hidden = 256;
  std::size_t n_points = 4;
  std::size_t num_classes = 4;
  std::size_t max_proposals = 64;  // per camera
  PatchConfig patch;
  double window_scale = 0.25;  // feature-map cells per image pixel
  double deform_ring = 1.0;    // initial sampling offset radius, patch cells
  double fusion_threshold = 0.3;
  CoordMode coord_mode = CoordMode::polar;
  std::vector<BackboneStage> backbone{
      {0.4, 4, {16, 16, 32}}, {0.8, 4, {32, 32, 64}}, {1.2, 8, {64, 64, 64}}, {1.6, 8, {64, 64, 64}}};
  double pos_scale_r = 5.0;
  double pos_scale_phi = 0.1;
  double pos_scale_xy = 5.0;
  double in_box_margin = 0.5;

  void validate() const {
    if (channels == 0 || heads == 0 || channels % heads != 0) throw ConfigError("fusion: channels must divide by heads");
    if (image_channels != channels) throw ConfigError("fusion: proposal feature width must equal channels");
    if (n_points == 0 || mlp_hidden == 0 || num_classes == 0) throw ConfigError("fusion: zero-sized layer");
    if (!(window_scale > 0.0) || !(pos_scale_r > 0.0) || !(pos_scale_phi > 0.0) || !(pos_scale_xy > 0.0))
      throw ConfigError("fusion: scales must be positive");
    if (!(fusion_threshold >= 0.0 && fusion_threshold <= 1.0)) throw ConfigError("fusion: threshold outside [0,1]");
    if (backbone.empty()) throw ConfigError("fusion: backbone needs at least one stage");
    for (const auto& s : backbone)
      if (!(s.radius > 0.0) || s.nsample == 0 || s.mlp.empty()) throw ConfigError("fusion: bad backbone stage");
    patch.validate();
  }
};

// ---------------------------------------------------------------------------
// Parameter blocks

struct Linear {
  Tensor W, b;

  static Linear make(tc::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                     bool zero = false) {
    Linear l;
    l.W = zero ? store.constant(name + ".w", {in, out}, 0.0) : store.xavier(name + ".w", in, out);
    l.b = store.constant(name + ".b", {out}, 0.0);
    return l;
  }
  Tensor operator()(const Tensor& x) const { return tc::linear(x, W, b); }
};

struct Norm {
  Tensor g, b;

  static Norm make(tc::ParameterStore& store, const std::string& name, std::size_t c) {
    return {store.constant(name + ".g", {c}, 1.0), store.constant(name + ".b", {c}, 0.0)};
  }
  Tensor operator()(const Tensor& x) const { return tc::layer_norm(x, g, b); }
};

struct BackboneParams {
  struct Layer {
    Linear fc;
    Norm ln;
  };
  std::vector<std::vector<Layer>> stages;
  Linear out;
};

struct I2RParams {
  struct Layer {
    Norm ln1;
    tc::DeformParams deform;
    Norm ln2;
    Linear fc1, fc2;
  };
  Linear patch_proj;
  std::vector<Layer> layers;
  Norm head_ln;
  Linear head1, head2;
};

struct R2IParams {
  struct Layer {
    Norm lnq, lnkv;
    tc::MhaParams mha;
    Norm ln2;
    Linear fc1, fc2;
  };
  Linear pos1, pos2;
  std::vector<Layer> layers;
};

struct HeadParams {
  Norm ln;
  Linear fc1, fc2, out;
};

/// Per-class head layout: fusion logit, two offsets, centerness logit, speed.
inline constexpr std::size_t kHeadOutputs = 5;

// ---------------------------------------------------------------------------
// Radar backbone

/// Neighbour lists for every point: indices (ascending) within `radius`, first
/// nsample kept, short lists padded with their first entry. Each point is its
/// own neighbour so no list is empty.
inline std::vector<int> ball_query(const std::vector<Vec3>& pts, double radius, std::size_t nsample) {
  const std::size_t n = pts.size();
  const double r2 = radius * radius;
  std::vector<int> out(n * nsample);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t found = 0;
    for (std::size_t j = 0; j < n && found < nsample; ++j)
      if ((pts[j] - pts[i]).squaredNorm() <= r2) out[i * nsample + found++] = static_cast<int>(j);
    for (std::size_t k = found; k < nsample; ++k) out[i * nsample + k] = out[i * nsample];
  }
  return out;
}

inline BackboneParams make_backbone(tc::ParameterStore& store, const FusionConfig& cfg) {
  BackboneParams p;
  std::size_t in = kRadarFeatureDim;
  for (std::size_t s = 0; s < cfg.backbone.size(); ++s) {
    std::vector<BackboneParams::Layer> layers;
    std::size_t width = in + 3;
    for (std::size_t l = 0; l < cfg.backbone[s].mlp.size(); ++l) {
      const std::string name = "backbone.sa" + std::to_string(s) + "." + std::to_string(l);
      const std::size_t out = cfg.backbone[s].mlp[l];
      layers.push_back({Linear::make(store, name, width, out), Norm::make(store, name + ".ln", out)});
      width = out;
    }
    p.stages.push_back(std::move(layers));
    in = width;
  }
  p.out = Linear::make(store, "backbone.out", in, cfg.channels);
  return p;
}

/// Per-point C-dim features of a radar point set; no subsampling.
inline Tensor radar_backbone_encode(const BackboneParams& p, const FusionConfig& cfg, const std::vector<Vec3>& pos,
                                    const std::vector<RadarFeatures>& feats) {
  if (pos.size() != feats.size()) throw ShapeError("radar_backbone_encode: positions/features mismatch");
  const std::size_t n = pos.size();
  std::vector<double> f0;
  f0.reserve(n * kRadarFeatureDim);
  for (const auto& f : feats) f0.insert(f0.end(), f.begin(), f.end());
  Tensor f = Tensor::from({n, kRadarFeatureDim}, std::move(f0));
  for (std::size_t s = 0; s < cfg.backbone.size(); ++s) {
    const auto& st = cfg.backbone[s];
    const auto idx = ball_query(pos, st.radius, st.nsample);
    std::vector<double> rel(idx.size() * 3);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Vec3 d = (pos[static_cast<std::size_t>(idx[k])] - pos[k / st.nsample]) / st.radius;
      for (int a = 0; a < 3; ++a) rel[3 * k + a] = d[a];
    }
    Tensor g = tc::concat_cols({Tensor::from({idx.size(), 3}, std::move(rel)), tc::gather_rows(f, idx)});
    for (const auto& layer : p.stages[s]) g = tc::relu(layer.ln(layer.fc(g)));
    f = tc::max_pool_groups(g, st.nsample);
  }
  return p.out(f);
}

// ---------------------------------------------------------------------------
// Image-to-radar encoder

inline I2RParams make_i2r(tc::ParameterStore& store, const FusionConfig& cfg) {
  I2RParams p;
  const std::size_t C = cfg.channels;
  p.patch_proj = Linear::make(store, "i2r.patch_proj", cfg.image_channels, C);
  for (std::size_t l = 0; l < cfg.i2r_layers; ++l) {
    const std::string n = "i2r.layer" + std::to_string(l);
    p.layers.push_back({Norm::make(store, n + ".ln1", C),
                        tc::DeformParams::create(store, n + ".deform", C, C, cfg.heads, cfg.n_points, cfg.deform_ring),
                        Norm::make(store, n + ".ln2", C), Linear::make(store, n + ".fc1", C, cfg.mlp_hidden),
                        Linear::make(store, n + ".fc2", cfg.mlp_hidden, C)});
  }
  p.head_ln = Norm::make(store, "i2r.point_head.ln", C);
  p.head1 = Linear::make(store, "i2r.point_head.fc1", C, cfg.mlp_hidden);
  p.head2 = Linear::make(store, "i2r.point_head.fc2", cfg.mlp_hidden, 1);
  return p;
}

struct I2ROutput {
  Tensor features;      // [U, C]
  Tensor inbox_logits;  // [U]
};

/// radar_feats [U, C], patches [U, w, w, C_img]. Each point attends only to
/// its own patch, with the reference at the patch centre.
inline I2ROutput i2r_encode(const I2RParams& p, const FusionConfig& cfg, const Tensor& radar_feats,
                            const Tensor& patches, tc::AttentionProbe* probe = nullptr) {
  const std::size_t U = radar_feats.rows();
  const std::size_t w = cfg.patch.out_size;
  if (patches.rank() != 4 || patches.dim(0) != U || patches.dim(1) != w || patches.dim(2) != w)
    throw ShapeError("i2r_encode: patches must be [U, w, w, C_img]");
  const Tensor proj = tc::reshape(tc::relu(p.patch_proj(tc::reshape(patches, {U * w * w, patches.dim(3)}))),
                                  {U, w, w, cfg.channels});
  const double centre = static_cast<double>(w - 1) / 2.0;
  const std::vector<double> refs(2 * U, centre);
  std::vector<int> own(U);
  for (std::size_t i = 0; i < U; ++i) own[i] = static_cast<int>(i);
  Tensor x = radar_feats;
  for (const auto& layer : p.layers) {
    x = tc::add(x, tc::deformable_cross_attention(layer.ln1(x), refs, proj, own, layer.deform, cfg.heads,
                                                  cfg.n_points, probe));
    x = tc::add(x, layer.fc2(tc::relu(layer.fc1(layer.ln2(x)))));
  }
  Tensor logits = tc::reshape(p.head2(tc::relu(p.head1(p.head_ln(x)))), {U});
  return {x, logits};
}

// ---------------------------------------------------------------------------
// Radar-to-image encoder

inline R2IParams make_r2i(tc::ParameterStore& store, const FusionConfig& cfg) {
  R2IParams p;
  const std::size_t C = cfg.channels;
  p.pos1 = Linear::make(store, "r2i.pos.fc1", 2, C);
  p.pos2 = Linear::make(store, "r2i.pos.fc2", C, C);
  for (std::size_t l = 0; l < cfg.r2i_layers; ++l) {
    const std::string n = "r2i.layer" + std::to_string(l);
    p.layers.push_back({Norm::make(store, n + ".lnq", C), Norm::make(store, n + ".lnkv", C),
                        tc::MhaParams::create(store, n + ".mha", C), Norm::make(store, n + ".ln2", C),
                        Linear::make(store, n + ".fc1", C, cfg.mlp_hidden),
                        Linear::make(store, n + ".fc2", cfg.mlp_hidden, C)});
  }
  return p;
}

/// Scaled position of a point relative to a proposal centre: (dr, dphi) in
/// polar mode, (dx, dy) in Cartesian mode. Height is ignored.
inline std::array<double, 2> relative_coords(const Vec3& point, const Vec3& centre, const FusionConfig& cfg) {
  if (cfg.coord_mode == CoordMode::polar) {
    const PolarPoint a = cart_to_polar(point), c = cart_to_polar(centre);
    return {(a.r - c.r) / cfg.pos_scale_r, angle_diff(a.phi, c.phi) / cfg.pos_scale_phi};
  }
  return {(point.x() - centre.x()) / cfg.pos_scale_xy, (point.y() - centre.y()) / cfg.pos_scale_xy};
}

/// proposal_feats [M, C]; radar_feats [P, C] grouped by proposal through
/// `segments`; rel [P, 2] from relative_coords. Attention keys carry a zero
/// sink, so a proposal without points only passes its own residual/MLP path.
inline Tensor r2i_encode(const R2IParams& p, const FusionConfig& cfg, const Tensor& proposal_feats,
                         const Tensor& radar_feats, const Tensor& rel, const std::vector<tc::Segment>& segments,
                         tc::AttentionProbe* probe = nullptr) {
  const std::size_t M = proposal_feats.rows();
  const Tensor pe_k = p.pos2(tc::relu(p.pos1(rel)));
  const Tensor pe_q = p.pos2(tc::relu(p.pos1(Tensor::zeros({M, 2}))));
  Tensor x = proposal_feats;
  for (const auto& layer : p.layers) {
    const Tensor q = tc::add(layer.lnq(x), pe_q);
    const Tensor kv = tc::add(layer.lnkv(radar_feats), pe_k);
    x = tc::add(x, tc::mh_cross_attention(q, kv, kv, layer.mha, cfg.heads, true, segments, probe));
    x = tc::add(x, layer.fc2(tc::relu(layer.fc1(layer.ln2(x)))));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Heads, decoding

inline HeadParams make_heads(tc::ParameterStore& store, const FusionConfig& cfg) {
  const std::size_t C = cfg.channels;
  return {Norm::make(store, "heads.ln", C), Linear::make(store, "heads.fc1", C, cfg.mlp_hidden),
          Linear::make(store, "heads.fc2", cfg.mlp_hidden, C),
          Linear::make(store, "heads.out", C, kHeadOutputs * cfg.num_classes, true)};
}

/// Raw head outputs [M, 5] (logits for score and centerness).
inline Tensor detection_heads_forward(const HeadParams& p, const FusionConfig& cfg, const Tensor& refined,
                                      const std::vector<int>& class_ids) {
  if (class_ids.size() != refined.rows()) throw ShapeError("detection_heads_forward: one class id per row");
  for (int c : class_ids)
    if (c < 0 || static_cast<std::size_t>(c) >= cfg.num_classes)
      throw ConfigError("detection_heads_forward: unknown class " + std::to_string(c));
  const Tensor h = tc::relu(p.fc2(tc::relu(p.fc1(p.ln(refined)))));
  return tc::select_blocks(p.out(h), class_ids, kHeadOutputs);
}

struct FusionOutput {
  double fusion_score = 0.0;
  std::array<double, 2> offset{0.0, 0.0};  // (dr m, dphi rad) or (dx m, dy m)
  double centerness = 0.0;
  double speed = 0.0;
  CoordMode mode = CoordMode::polar;
};

inline FusionOutput to_fusion_output(const double* raw, CoordMode mode) {
  return {tc::sigmoid_value(raw[0]), {raw[1], raw[2]}, tc::sigmoid_value(raw[3]), raw[4], mode};
}

/// Refined box and fused score, or the untouched proposal scored by its 3D
/// confidence when the fusion score is below threshold.
inline Detection decode_and_score(const ImageProposal& p, const FusionOutput& out, double threshold) {
  Detection d{p.box, proposal_score(p), p.class_id, DetectionSource::camera_only};
  if (!(out.fusion_score >= threshold)) return d;
  Vec3 c = p.box.center;
  if (out.mode == CoordMode::polar) {
    const PolarPoint pc = cart_to_polar(c);
    const double r = std::max(pc.r + out.offset[0], 0.0);
    const double phi = wrap_angle(pc.phi + out.offset[1]);
    c = polar_to_cart({r, phi, pc.z});
  } else {
    c.x() += out.offset[0];
    c.y() += out.offset[1];
  }
  d.box.center = c;
  d.box.velocity = out.speed * heading(p.box.yaw);
  d.score = std::cbrt(proposal_score(p) * out.fusion_score * out.centerness);
  d.source = DetectionSource::fused;
  return d;
}

// ---------------------------------------------------------------------------
// Targets and losses

struct TrainingTargets {
  std::vector<double> has_valid_radar;  // per proposal
  std::vector<double> in_box;           // per associated pair
  std::vector<std::array<double, 2>> offset;
  std::vector<double> centerness;
  std::vector<double> speed;
};

/// Ratio-based centre quality of `p` inside `gt`; 0 outside the box.
inline double centerness_target(const BBox3D& gt, const Vec3& p) {
  const Vec2 local = to_box_frame(gt, p.head<2>());
  const double dz = p.z() - gt.center.z();
  const double l = gt.length() / 2, w = gt.width() / 2, h = gt.height() / 2;
  const double f = l - local.x(), b = l + local.x(), le = w - local.y(), ri = w + local.y(), t = h - dz, bo = h + dz;
  if (f < 0 || b < 0 || le < 0 || ri < 0 || t < 0 || bo < 0) return 0.0;
  auto ratio = [](double a, double c) { return std::max(a, c) > 0 ? std::min(a, c) / std::max(a, c) : 1.0; };
  return std::clamp(std::cbrt(ratio(f, b) * ratio(le, ri) * ratio(t, bo)), 0.0, 1.0);
}

/// Offsets that move `from` onto `to` in the configured coordinate system.
inline std::array<double, 2> offset_between(const Vec3& from, const Vec3& to, CoordMode mode) {
  if (mode == CoordMode::polar) {
    const PolarPoint a = cart_to_polar(from), b = cart_to_polar(to);
    return {b.r - a.r, angle_diff(b.phi, a.phi)};
  }
  return {to.x() - from.x(), to.y() - from.y()};
}

/// proposal_gt[m] is the gt index of proposal m or -1. pairs lists the
/// associated (proposal, point) pairs in forward order.
inline TrainingTargets build_targets(const std::vector<ImageProposal>& proposals, const std::vector<int>& proposal_gt,
                                     const std::vector<BBox3D>& gts, const std::vector<RadarPoint>& points,
                                     const std::vector<std::pair<int, int>>& pairs, CoordMode mode, double margin) {
  const std::size_t M = proposals.size();
  if (proposal_gt.size() != M) throw ShapeError("build_targets: one gt index per proposal");
  TrainingTargets t;
  t.has_valid_radar.assign(M, 0.0);
  t.offset.assign(M, {0.0, 0.0});
  t.centerness.assign(M, 0.0);
  t.speed.assign(M, 0.0);
  for (const auto& [m, k] : pairs) {
    const int g = proposal_gt[static_cast<std::size_t>(m)];
    const bool in = g >= 0 && inside_bev(gts[static_cast<std::size_t>(g)],
                                         points[static_cast<std::size_t>(k)].position.head<2>(), margin);
    t.in_box.push_back(in ? 1.0 : 0.0);
    if (in) t.has_valid_radar[static_cast<std::size_t>(m)] = 1.0;
  }
  for (std::size_t m = 0; m < M; ++m) {
    const int g = proposal_gt[m];
    if (g < 0) continue;
    const BBox3D& gt = gts[static_cast<std::size_t>(g)];
    t.offset[m] = offset_between(proposals[m].box.center, gt.center, mode);
    t.centerness[m] = centerness_target(gt, proposals[m].box.center);
    t.speed[m] = gt.velocity.dot(heading(proposals[m].box.yaw));
  }
  return t;
}

struct LossBreakdown {
  Tensor total;
  double point = 0.0, score = 0.0, centerness = 0.0, offset = 0.0, speed = 0.0;
};

/// Point BCE averaged over pairs plus the per-proposal terms averaged over M;
/// regression and centerness terms gated by has_valid_radar.
inline LossBreakdown compute_losses(const Tensor& head_raw, const Tensor& point_logits, const TrainingTargets& t) {
  const std::size_t M = head_raw.rows();
  const std::size_t P = point_logits.size();
  if (t.has_valid_radar.size() != M || t.in_box.size() != P) throw ShapeError("compute_losses: targets misaligned");
  LossBreakdown out;
  std::vector<Tensor> terms;
  if (P > 0) {
    const Tensor pt = tc::scale(tc::bce_with_logits_sum(point_logits, t.in_box, std::vector<double>(P, 1.0)),
                                1.0 / static_cast<double>(P));
    out.point = pt.item();
    terms.push_back(pt);
  }
  if (M > 0) {
    const double inv_m = 1.0 / static_cast<double>(M);
    const std::vector<double> ones(M, 1.0);
    std::vector<double> o0(M), o1(M);
    for (std::size_t m = 0; m < M; ++m) o0[m] = t.offset[m][0], o1[m] = t.offset[m][1];
    const Tensor sc = tc::scale(tc::bce_with_logits_sum(tc::column(head_raw, 0), t.has_valid_radar, ones), inv_m);
    const Tensor cn =
        tc::scale(tc::bce_with_logits_sum(tc::column(head_raw, 3), t.centerness, t.has_valid_radar), inv_m);
    const Tensor off = tc::scale(tc::add(tc::l1_sum(tc::column(head_raw, 1), o0, t.has_valid_radar),
                                         tc::l1_sum(tc::column(head_raw, 2), o1, t.has_valid_radar)),
                                 inv_m);
    const Tensor sp = tc::scale(tc::l1_sum(tc::column(head_raw, 4), t.speed, t.has_valid_radar), inv_m);
    out.score = sc.item();
    out.centerness = cn.item();
    out.offset = off.item();
    out.speed = sp.item();
    terms.insert(terms.end(), {sc, cn, off, sp});
  }
  if (terms.empty()) {
    out.total = Tensor::scalar(0.0);
    return out;
  }
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tc::add(total, terms[i]);
  out.total = total;
  return out;
}

// ---------------------------------------------------------------------------
// Model

class FusionModel {
 public:
  FusionModel(const FusionConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    backbone = make_backbone(store_, cfg_);
    i2r = make_i2r(store_, cfg_);
    r2i = make_r2i(store_, cfg_);
    heads = make_heads(store_, cfg_);
  }
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  const FusionConfig& config() const { return cfg_; }
  tc::ParameterStore& store() { return store_; }
  const tc::ParameterStore& store() const { return store_; }

  /// Parameters plus the radar feature statistics in one container.
  void save(const std::string& path) const {
    std::vector<tc::NamedTensor> recs;
    for (const auto& p : store_.all())
      recs.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
    recs.push_back({"meta.feature_mean", {kRadarFeatureDim}, {feature_stats.mean.begin(), feature_stats.mean.end()}});
    recs.push_back({"meta.feature_std", {kRadarFeatureDim}, {feature_stats.std.begin(), feature_stats.std.end()}});
    tc::write_container(path, recs);
  }

  void load(const std::string& path) {
    const auto recs = tc::read_container(path);
    std::map<std::string, const tc::NamedTensor*> by_name;
    for (const auto& r : recs) by_name[r.name] = &r;
    auto take = [&](const std::string& name, const tc::Shape& shape) -> const std::vector<double>& {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw LoadError("checkpoint lacks " + name);
      if (it->second->shape != shape)
        throw LoadError("checkpoint shape mismatch for " + name + ": " + tc::shape_str(it->second->shape) + " vs " +
                        tc::shape_str(shape));
      return it->second->values;
    };
    for (auto& p : store_.all()) {
      const auto& v = take(p.name, p.tensor.shape());
      std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
    }
    const auto& mean = take("meta.feature_mean", {kRadarFeatureDim});
    const auto& sd = take("meta.feature_std", {kRadarFeatureDim});
    std::copy(mean.begin(), mean.end(), feature_stats.mean.begin());
    std::copy(sd.begin(), sd.end(), feature_stats.std.begin());
    if (recs.size() != store_.all().size() + 2) throw LoadError("checkpoint has records the model does not know");
  }

  BackboneParams backbone;
  I2RParams i2r;
  R2IParams r2i;
  HeadParams heads;
  FeatureStats feature_stats;

 private:
  FusionConfig cfg_;
  tc::ParameterStore store_;
};

// ---------------------------------------------------------------------------
// Frame-level forward

/// Rigid BEV transform (optional flip across the x axis, then rotation about
/// z, then shift) used for joint proposal/point augmentation.
struct BevTransform {
  double yaw = 0.0;
  bool flip = false;
  Vec2 shift = Vec2::Zero();

  Vec2 apply_direction(const Vec2& d) const {
    const Vec2 f(d.x(), flip ? -d.y() : d.y());
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * f.x() - s * f.y(), s * f.x() + c * f.y()};
  }
  Vec3 apply(const Vec3& p) const {
    const Vec2 q = apply_direction(p.head<2>()) + shift;
    return {q.x(), q.y(), p.z()};
  }
  BBox3D apply(const BBox3D& b) const {
    BBox3D o = b;
    o.center = apply(b.center);
    o.yaw = wrap_angle((flip ? -b.yaw : b.yaw) + yaw);
    o.velocity = apply_direction(b.velocity);
    return o;
  }
  bool identity() const { return yaw == 0.0 && !flip && shift.isZero(); }
};

struct FrameInput {
  const std::vector<ImageProposal>* proposals = nullptr;
  const std::vector<CameraRig>* cameras = nullptr;
  const std::vector<FeatureMap>* maps = nullptr;
  std::vector<RadarPoint> points;  // distinct radar points, vehicle frame
  std::vector<RadarFeatures> features;
  AssociationSet assoc;  // indices into points
  BevTransform augment;  // applied to positional inputs only
};

struct FrameForward {
  Tensor head_raw;      // [M, 5]
  Tensor point_logits;  // [P]
  std::vector<std::pair<int, int>> pairs;
  std::vector<FusionOutput> outputs;
};

/// Pixel-space patch for a radar point seen from one camera; all zero when
/// the point is behind it.
inline std::vector<double> radar_patch(const FusionConfig& cfg, const CameraRig& cam, const FeatureMap& map,
                                       const Vec3& point) {
  const auto px = cam.pixel_of(point);
  const std::size_t w = cfg.patch.out_size;
  if (!px) return std::vector<double>(w * w * map.C, 0.0);
  const int tau = adaptive_patch_size(std::hypot(point.x(), point.y()), cfg.patch);
  return extract_patch(map, map.to_cells(*px), tau * cfg.window_scale, w);
}

inline FrameForward forward_frame(const FusionModel& model, const FrameInput& in) {
  const FusionConfig& cfg = model.config();
  const auto& props = *in.proposals;
  const std::size_t M = props.size();
  const std::size_t C = cfg.channels;
  if (in.assoc.entries.size() != M) throw ShapeError("forward_frame: one association list per proposal");
  FrameForward out;
  if (M == 0) {
    out.head_raw = Tensor::zeros({0, kHeadOutputs});
    out.point_logits = Tensor::zeros({0});
    return out;
  }

  for (std::size_t m = 0; m < M; ++m)
    for (int k : in.assoc.entries[m]) out.pairs.emplace_back(static_cast<int>(m), k);
  const std::size_t P = out.pairs.size();

  // I2R runs once per distinct (point, camera): the patch does not depend on
  // the proposal.
  std::map<std::pair<int, int>, int> key_index;
  std::vector<std::pair<int, int>> keys;
  std::vector<int> key_of_pair(P);
  for (std::size_t i = 0; i < P; ++i) {
    const auto key = std::make_pair(out.pairs[i].second, props[static_cast<std::size_t>(out.pairs[i].first)].camera_id);
    auto [it, fresh] = key_index.emplace(key, static_cast<int>(keys.size()));
    if (fresh) keys.push_back(key);
    key_of_pair[i] = it->second;
  }

  Tensor keys_feat = Tensor::zeros({0, C});
  if (P > 0) {
    std::vector<Vec3> pos;
    for (const auto& p : in.points) pos.push_back(p.position);
    const Tensor feats = radar_backbone_encode(model.backbone, cfg, pos, in.features);
    const std::size_t U = keys.size(), w = cfg.patch.out_size, Ci = cfg.image_channels;
    std::vector<double> patches;
    patches.reserve(U * w * w * Ci);
    std::vector<int> point_of_key(U);
    for (std::size_t u = 0; u < U; ++u) {
      point_of_key[u] = keys[u].first;
      const auto cam = static_cast<std::size_t>(keys[u].second);
      if (cam >= in.cameras->size() || cam >= in.maps->size()) throw ShapeError("forward_frame: bad camera id");
      const auto patch = radar_patch(cfg, (*in.cameras)[cam], (*in.maps)[cam],
                                     in.points[static_cast<std::size_t>(keys[u].first)].position);
      patches.insert(patches.end(), patch.begin(), patch.end());
    }
    const I2ROutput enc = i2r_encode(model.i2r, cfg, tc::gather_rows(feats, point_of_key),
                                     Tensor::from({U, w, w, Ci}, std::move(patches)));
    keys_feat = tc::gather_rows(enc.features, key_of_pair);
    out.point_logits = tc::reshape(tc::gather_rows(tc::reshape(enc.inbox_logits, {U, 1}), key_of_pair), {P});
  } else {
    out.point_logits = Tensor::zeros({0});
  }

  std::vector<double> rel(2 * P);
  std::vector<tc::Segment> segments(M);
  std::size_t cursor = 0;
  for (std::size_t m = 0; m < M; ++m) {
    segments[m] = {cursor, cursor + in.assoc.entries[m].size()};
    const Vec3 centre = in.augment.apply(props[m].box.center);
    for (int k : in.assoc.entries[m]) {
      const auto r = relative_coords(in.augment.apply(in.points[static_cast<std::size_t>(k)].position), centre, cfg);
      rel[2 * cursor] = r[0];
      rel[2 * cursor + 1] = r[1];
      ++cursor;
    }
  }

  std::vector<double> qf;
  qf.reserve(M * C);
  std::vector<int> classes(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (props[m].feature.size() != C) throw ShapeError("forward_frame: proposal feature length != channels");
    qf.insert(qf.end(), props[m].feature.begin(), props[m].feature.end());
    classes[m] = props[m].class_id;
  }
  const Tensor refined =
      r2i_encode(model.r2i, cfg, Tensor::from({M, C}, std::move(qf)), keys_feat, Tensor::from({P, 2}, rel), segments);
  out.head_raw = detection_heads_forward(model.heads, cfg, refined, classes);
  for (std::size_t m = 0; m < M; ++m)
    out.outputs.push_back(to_fusion_output(&out.head_raw.values()[m * kHeadOutputs], cfg.coord_mode));
  return out;
}

}  // namespace craft
