#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "craft/radar.hpp"

using namespace craft;

namespace {

RadarPoint point_at(double x, double y, double z = 0.0) {
  RadarPoint p;
  p.position = Vec3(x, y, z);
  return p;
}

RadarSweep sweep_of(std::vector<RadarPoint> pts, double t, Pose pose = Pose()) {
  RadarSweep s;
  s.points = std::move(pts);
  s.timestamp = t;
  s.ego_pose = pose;
  return s;
}

}  // namespace

TEST(Accumulate, StaticPointIsUnchanged) {
  RadarPoint p = point_at(3, -2, 0.5);
  std::vector<RadarSweep> sweeps{sweep_of({}, 1.0), sweep_of({p}, 0.5)};
  const auto out = accumulate_sweeps(sweeps, Pose(), 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].position, p.position);
  EXPECT_DOUBLE_EQ(out[0].sweep_age, 0.5);
}

TEST(Accumulate, DopplerShift) {
  RadarPoint p = point_at(10, 0);
  p.doppler = Vec2(2, 0);
  std::vector<RadarSweep> sweeps{sweep_of({}, 1.0), sweep_of({p}, 0.5)};
  const auto out = accumulate_sweeps(sweeps, Pose(), 2);
  EXPECT_NEAR(out[0].position.x(), 11.0, 1e-12);
  EXPECT_NEAR(out[0].position.y(), 0.0, 1e-12);
}

TEST(Accumulate, EgoTranslation) {
  RadarPoint p = point_at(10, 0, 0.3);
  std::vector<RadarSweep> sweeps{sweep_of({}, 1.0), sweep_of({p}, 0.5, Pose(Mat3::Identity(), Vec3(1, 0, 0)))};
  const auto out = accumulate_sweeps(sweeps, Pose(), 2);
  EXPECT_NEAR(out[0].position.x(), 11.0, 1e-12);
  EXPECT_NEAR(out[0].position.z(), 0.3, 1e-12);
}

TEST(Accumulate, ZShiftedOnlyByEgo) {
  RadarPoint p = point_at(10, 0, 1.0);
  p.doppler = Vec2(3, 4);
  std::vector<RadarSweep> sweeps{sweep_of({p}, 2.0), sweep_of({p}, 1.0, Pose(Mat3::Identity(), Vec3(0, 0, 0.5)))};
  const auto out = accumulate_sweeps(sweeps, Pose(), 2);
  EXPECT_DOUBLE_EQ(out[1].position.z(), 1.5);
  EXPECT_NEAR(out[1].position.x(), 13.0, 1e-12);
  EXPECT_NEAR(out[1].position.y(), 4.0, 1e-12);
}

TEST(Accumulate, Errors) {
  RadarSweep no_pose;
  no_pose.timestamp = 0.0;
  std::vector<RadarSweep> sweeps{no_pose};
  EXPECT_THROW(accumulate_sweeps(sweeps, Pose(), 1), ConfigError);
  sweeps[0].ego_pose = Pose();
  EXPECT_THROW(accumulate_sweeps(sweeps, Pose(), 0), ConfigError);
  EXPECT_THROW(accumulate_sweeps(sweeps, Pose(), 2), ConfigError);
}

TEST(AccumulateProperties, AdditiveInTime) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::uniform_real_distribution<double> t(0.01, 0.4);
  for (int trial = 0; trial < 200; ++trial) {
    RadarPoint p = point_at(u(rng), u(rng), u(rng) / 10);
    p.doppler = Vec2(u(rng) / 4, u(rng) / 4);
    const double t1 = t(rng), t2 = t(rng);
    std::vector<RadarSweep> direct{sweep_of({}, t1 + t2), sweep_of({p}, 0.0)};
    const auto once = accumulate_sweeps(direct, Pose(), 2);
    std::vector<RadarSweep> first{sweep_of({}, t1), sweep_of({p}, 0.0)};
    const auto mid = accumulate_sweeps(first, Pose(), 2);
    std::vector<RadarSweep> second{sweep_of({}, t1 + t2), sweep_of(mid, t1)};
    const auto twice = accumulate_sweeps(second, Pose(), 2);
    EXPECT_LT((once[0].position - twice[0].position).norm(), 1e-9);
    EXPECT_NEAR(once[0].sweep_age, twice[0].sweep_age, 1e-12);
  }
}

TEST(Prepare, SubsamplesDistinctDeterministically) {
  std::vector<RadarPoint> pts;
  for (int i = 0; i < 3000; ++i) pts.push_back(point_at(i * 0.01, 1.0));
  const auto a = prepare_radar_input(pts, 55.0, 2048, FeatureStats{}, 42);
  const auto b = prepare_radar_input(pts, 55.0, 2048, FeatureStats{}, 42);
  ASSERT_EQ(a.size(), 2048u);
  EXPECT_EQ(a.source_index, b.source_index);
  std::set<int> distinct(a.source_index.begin(), a.source_index.end());
  EXPECT_EQ(distinct.size(), 2048u);
}

TEST(Prepare, DuplicatesToFill) {
  std::vector<RadarPoint> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(point_at(i, 0.0));
  const auto out = prepare_radar_input(pts, 55.0, 2048, FeatureStats{}, 1);
  ASSERT_EQ(out.size(), 2048u);
  std::set<int> distinct(out.source_index.begin(), out.source_index.end());
  EXPECT_EQ(distinct.size(), 10u);
  EXPECT_TRUE(std::all_of(out.valid.begin(), out.valid.end(), [](bool v) { return v; }));
}

TEST(Prepare, RangeFilter) {
  std::vector<RadarPoint> pts{point_at(60, 0), point_at(33, 44.1), point_at(54.9, 0)};
  const auto out = prepare_radar_input(pts, 55.0, 4, FeatureStats{}, 1);
  for (int idx : out.source_index) EXPECT_EQ(idx, 2);
  for (const auto& p : out.points) EXPECT_LE(std::hypot(p.position.x(), p.position.y()), 55.0);
}

TEST(Prepare, EmptyInputGivesSentinels) {
  std::vector<RadarPoint> pts{point_at(80, 0)};
  const auto out = prepare_radar_input(pts, 55.0, 8, FeatureStats{}, 1);
  ASSERT_EQ(out.size(), 8u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_FALSE(out.valid[i]);
    EXPECT_EQ(out.source_index[i], -1);
    EXPECT_EQ(out.points[i].position, Vec3::Zero());
    for (double f : out.features[i]) EXPECT_EQ(f, 0.0);
  }
}

TEST(Prepare, RejectsBadConfig) {
  std::vector<RadarPoint> pts{point_at(1, 0)};
  EXPECT_THROW(prepare_radar_input(pts, 55.0, 0, FeatureStats{}, 1), ConfigError);
  FeatureStats s;
  s.std[1] = 0.0;
  EXPECT_THROW(prepare_radar_input(pts, 55.0, 4, s, 1), ConfigError);
}

TEST(PrepareProperties, ContentStableAcrossSeedsWhenNoSampling) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::vector<RadarPoint> pts;
  for (int i = 0; i < 64; ++i) pts.push_back(point_at(u(rng), u(rng)));
  std::multiset<int> first;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = prepare_radar_input(pts, 55.0, 64, FeatureStats{}, seed);
    std::multiset<int> content(out.source_index.begin(), out.source_index.end());
    if (seed == 0) first = content;
    EXPECT_EQ(content, first);
  }
}

TEST(PrepareProperties, NormalizationWithBatchStats) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(3.0, 5.0);
  std::vector<RadarPoint> pts;
  for (int i = 0; i < 500; ++i) {
    RadarPoint p = point_at(n(rng), n(rng));
    p.rcs = n(rng);
    p.doppler = Vec2(n(rng), n(rng) * 0.1);
    p.sweep_age = 0.1 * (i % 6);
    pts.push_back(p);
  }
  const FeatureStats stats = compute_feature_stats(pts);
  RadarFeatures mean{}, sq{};
  for (const auto& p : pts) {
    const auto f = normalize_features(p, stats);
    for (std::size_t j = 0; j < kRadarFeatureDim; ++j) {
      mean[j] += f[j] / 500.0;
      sq[j] += f[j] * f[j] / 500.0;
    }
  }
  for (std::size_t j = 0; j < kRadarFeatureDim; ++j) {
    EXPECT_NEAR(mean[j], 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq[j] - mean[j] * mean[j]), 1.0, 1e-6);
  }
}
