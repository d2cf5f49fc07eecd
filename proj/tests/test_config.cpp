#include <gtest/gtest.h>

#include "craft/config.hpp"

using namespace craft;
using nlohmann::json;

TEST(Config, ShippedDefaultMatchesBuiltIn) {
  const RunConfig file = load_config(CRAFT_SOURCE_DIR "/configs/default.json");
  const RunConfig def;
  EXPECT_EQ(file.frames, def.frames);
  EXPECT_EQ(file.corpus.mean_counts, def.corpus.mean_counts);
  EXPECT_EQ(file.corpus.sensor.class_miss_prob, def.corpus.sensor.class_miss_prob);
  EXPECT_EQ(file.corpus.sensor.clutter_rate, def.corpus.sensor.clutter_rate);
  EXPECT_EQ(file.fusion.channels, def.fusion.channels);
  EXPECT_EQ(file.fusion.backbone.size(), def.fusion.backbone.size());
  EXPECT_EQ(file.fusion.backbone[2].mlp, def.fusion.backbone[2].mlp);
  EXPECT_EQ(file.train.lr, def.train.lr);
  EXPECT_EQ(file.train.epochs, def.train.epochs);
  EXPECT_EQ(file.train.augment.max_rotation, def.train.augment.max_rotation);
  EXPECT_EQ(file.eval.point_bins, def.eval.point_bins);
}

TEST(Config, SmokeConfigParses) {
  const RunConfig c = load_config(CRAFT_SOURCE_DIR "/configs/smoke.json");
  EXPECT_EQ(c.fusion.channels, 16u);
  EXPECT_EQ(c.corpus.feature_map.C, 16u);
  EXPECT_EQ(c.train.epochs, 2u);
}

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.association.associator, Associator::spa);
  EXPECT_EQ(c.fusion.coord_mode, CoordMode::polar);
}

TEST(Config, ModesParse) {
  const RunConfig c =
      parse_config(json::parse(R"({"association":{"associator":"roipool"},"fusion":{"coord_mode":"cartesian"}})"));
  EXPECT_EQ(c.association.associator, Associator::roipool);
  EXPECT_EQ(c.fusion.coord_mode, CoordMode::cartesian);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(json::parse(R"({"radar":{"max_rang":50}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"extra":{}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"association":{"associator":"knn"}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"fusion":{"coord_mode":"spherical"}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"radar":{"k_max":"many"}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"fusion":{"channels":30,"image_channels":30}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"eval":{"distance_bins":[0,30,20]}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"radar":{"n_sweeps":9}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/craft.json"), ConfigError);
}
