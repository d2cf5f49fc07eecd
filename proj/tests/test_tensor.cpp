#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "craft/attention.hpp"
#include "craft/gradcheck.hpp"
#include "craft/ops.hpp"
#include "craft/optim.hpp"
#include "craft/params.hpp"

using namespace craft;
using namespace craft::tc;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0, bool rg = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), rg);
}

/// Fixed random projection to a scalar so every output element matters.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(y.size());
  for (auto& x : w) x = u(rng);
  return sum(mul(y, Tensor::from(y.shape(), w)));
}

constexpr double kTol = 1e-5;

}  // namespace

TEST(Linear, Examples) {
  auto x = Tensor::from({1, 2}, {1, 2});
  auto W = Tensor::from({2, 1}, {1, 1});
  auto b = Tensor::from({1}, {0});
  EXPECT_EQ(linear(x, W, b)[0], 3.0);
  auto I = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto y = linear(x, I, Tensor::from({2}, {0, 0}));
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 2.0);
  auto z = linear(Tensor::zeros({3, 2}), I, Tensor::from({2}, {4, 5}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(z[2 * r], 4.0);
    EXPECT_EQ(z[2 * r + 1], 5.0);
  }
  EXPECT_THROW(linear(Tensor::zeros({1, 3}), I), ShapeError);
}

TEST(LayerNorm, Examples) {
  auto g = Tensor::from({3}, {1, 1, 1});
  auto b = Tensor::from({3}, {0, 0, 0});
  auto y = layer_norm(Tensor::from({1, 3}, {2, 2, 2}), g, b);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
  auto g2 = Tensor::from({2}, {1, 1});
  auto b2 = Tensor::from({2}, {0, 0});
  y = layer_norm(Tensor::from({1, 2}, {-1, 1}), g2, b2, 1e-12);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
  y = layer_norm(Tensor::from({1, 3}, {0.3, -7, 2}), Tensor::from({3}, {0, 0, 0}), Tensor::from({3}, {0.5, 0.5, 0.5}));
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
}

TEST(Softmax, Examples) {
  auto y = softmax(Tensor::from({1, 2}, {0, 0}));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  y = softmax(Tensor::from({1, 2}, {1000, 0}));
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(y[1]));
  y = softmax(Tensor::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(y[0], 1.0 / 6, 1e-15);
  EXPECT_NEAR(y[1], 2.0 / 6, 1e-15);
  EXPECT_NEAR(y[2], 3.0 / 6, 1e-15);
}

TEST(Bilinear, Examples) {
  // 2x2 map with 2 channels
  auto map = Tensor::from({2, 2, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  auto at = [&](double x, double y) { return bilinear_sample(map, Tensor::from({1, 2}, {x, y})); };
  auto s = at(1, 0);
  EXPECT_EQ(s[0], 2.0);
  EXPECT_EQ(s[1], 20.0);
  s = at(0.5, 0.5);
  EXPECT_DOUBLE_EQ(s[0], 2.5);
  EXPECT_DOUBLE_EQ(s[1], 25.0);
  s = at(-5, 7);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.0);
  // half outside: the missing neighbours count as zero
  s = at(1.5, 0);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
}

TEST(Backward, LinearSumGradIsInputStructure) {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  ParameterStore store(1);
  auto W = store.xavier("w", 3, 2);
  auto unused = store.xavier("unused", 2, 2);
  backward(sum(linear(x, W)));
  // d/dW[i][o] sum_n sum_o x[n,i] W[i,o] = sum_n x[n,i]
  const double col[3] = {5, 7, 9};
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o) EXPECT_DOUBLE_EQ(W.grad()[i * 2 + o], col[i]);
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_THROW(backward(linear(x, W)), UsageError);
}

TEST(GradCheck, ElementwiseAndReductions) {
  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {4, 5});
  auto r = random_tensor(rng, {5});
  EXPECT_LT(gradcheck([&] { return weighted_sum(sigmoid(x)); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(softmax(x)); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(add_row(x, r)); }, {x, r}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(scale(mul(x, x), 0.3)); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(max_pool_groups(x, 2)); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(gather_rows(x, {3, 0, 3, 1})); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(select_blocks(reshape(x, {4, 5}), {0, 4, 2, 1}, 1)); }, {x})
                .max_rel_error,
            kTol);
  auto y = random_tensor(rng, {4, 2});
  EXPECT_LT(gradcheck([&] { return weighted_sum(concat_cols({x, y})); }, {x, y}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(concat_rows({x, x})); }, {x}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(column(x, 2)); }, {x}).max_rel_error, kTol);
}

TEST(GradCheck, ReluAwayFromKink) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(rng, {6, 6});
  for (auto& v : x.mutable_values())
    if (std::abs(v) < 1e-3) v = 0.5;
  EXPECT_LT(gradcheck([&] { return weighted_sum(relu(x)); }, {x}).max_rel_error, kTol);
}

TEST(GradCheck, LinearAndLayerNorm) {
  std::mt19937_64 rng(3);
  auto x = random_tensor(rng, {3, 4});
  auto W = random_tensor(rng, {4, 6});
  auto b = random_tensor(rng, {6});
  auto g = random_tensor(rng, {6});
  auto beta = random_tensor(rng, {6});
  EXPECT_LT(gradcheck([&] { return weighted_sum(linear(x, W, b)); }, {x, W, b}).max_rel_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(layer_norm(linear(x, W, b), g, beta)); }, {x, W, b, g, beta})
                .max_rel_error,
            kTol);
}

TEST(GradCheck, ComposedLinearLayerNormSoftmax) {
  std::mt19937_64 rng(4);
  auto x = random_tensor(rng, {5, 3});
  auto W = random_tensor(rng, {3, 7});
  auto b = random_tensor(rng, {7});
  auto g = random_tensor(rng, {7});
  auto beta = random_tensor(rng, {7});
  auto f = [&] { return weighted_sum(softmax(layer_norm(linear(x, W, b), g, beta))); };
  EXPECT_LT(gradcheck(f, {x, W, b, g, beta}, 1e-5).max_rel_error, kTol);
}

TEST(GradCheck, Losses) {
  std::mt19937_64 rng(5);
  auto z = random_tensor(rng, {6}, 2.0);
  const std::vector<double> t{1, 0, 1, 0.3, 0, 1}, w{1, 1, 0, 2, 1, 0.5};
  EXPECT_LT(gradcheck([&] { return bce_with_logits_sum(z, t, w); }, {z}).max_rel_error, kTol);
  const std::vector<double> target{5, -5, 5, -5, 5, -5};
  EXPECT_LT(gradcheck([&] { return l1_sum(z, target, w); }, {z}).max_rel_error, kTol);
}

TEST(Losses, Values) {
  auto z = Tensor::from({1}, {0.0});
  EXPECT_NEAR(bce_with_logits_sum(z, {1.0}, {1.0}).item(), std::log(2.0), 1e-15);
  auto big = Tensor::from({2}, {40.0, -40.0});
  EXPECT_LT(bce_with_logits_sum(big, {1.0, 0.0}, {1.0, 1.0}).item(), 1e-15);
  EXPECT_EQ(l1_sum(Tensor::from({2}, {1.5, -2}), {1.0, 0.0}, {1.0, 0.5}).item(), 1.5);
}

TEST(GradCheck, BilinearSampleMapAndLocations) {
  std::mt19937_64 rng(6);
  auto map = random_tensor(rng, {2, 4, 5, 3});
  // keep locations off the integer grid and partly outside the map
  auto locs = Tensor::from({5, 2}, {0.3, 0.6, 2.7, 1.2, 4.4, 3.5, -0.6, 1.3, 3.25, -0.4}, true);
  const std::vector<int> which{0, 1, 1, 0, 1};
  EXPECT_LT(gradcheck([&] { return weighted_sum(bilinear_sample(map, locs, which)); }, {map, locs}).max_rel_error,
            kTol);
}

TEST(GradCheck, AttentionWithAndWithoutSink) {
  std::mt19937_64 rng(7);
  ParameterStore store(7);
  const auto p = MhaParams::create(store, "mha", 8);
  auto q = random_tensor(rng, {3, 8});
  auto kv = random_tensor(rng, {5, 8});
  std::vector<Tensor> all{q, kv};
  for (auto& prm : store.all()) all.push_back(prm.tensor);
  for (auto& prm : store.all())
    for (auto& v : prm.tensor.mutable_values()) v += 0.1 * std::normal_distribution<double>()(rng);
  for (bool sink : {false, true}) {
    auto f = [&] { return weighted_sum(mh_cross_attention(q, kv, p, 2, sink)); };
    EXPECT_LT(gradcheck(f, all).max_rel_error, kTol) << "sink=" << sink;
  }
  const std::vector<Segment> seg{{0, 2}, {2, 2}, {1, 5}};
  auto f = [&] { return weighted_sum(mh_cross_attention(q, kv, kv, p, 4, true, seg)); };
  EXPECT_LT(gradcheck(f, all).max_rel_error, kTol);
}

TEST(GradCheck, DeformableAttention) {
  std::mt19937_64 rng(8);
  ParameterStore store(8);
  auto p = DeformParams::create(store, "def", 8, 6, 2, 3);
  for (auto& prm : store.all())
    for (auto& v : prm.tensor.mutable_values()) v += 0.2 * std::normal_distribution<double>()(rng);
  auto q = random_tensor(rng, {4, 8});
  auto maps = random_tensor(rng, {4, 7, 7, 6});
  const std::vector<double> refs{3.1, 3.2, 2.6, 3.7, 3.3, 2.9, 0.2, 6.4};
  const std::vector<int> idx{0, 1, 2, 3};
  std::vector<Tensor> all{q, maps};
  for (auto& prm : store.all()) all.push_back(prm.tensor);
  auto f = [&] { return weighted_sum(deformable_cross_attention(q, refs, maps, idx, p, 2, 3)); };
  EXPECT_LT(gradcheck(f, all).max_rel_error, kTol);
}

TEST(Attention, EmptyKeysDrainToSink) {
  ParameterStore store(1);
  auto p = MhaParams::create(store, "a", 4);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  std::copy(eye.begin(), eye.end(), p.wo.mutable_values().begin());
  AttentionProbe probe;
  auto y = mh_cross_attention(Tensor::from({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}), Tensor::zeros({0, 4}), p, 2, true, &probe);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
  for (const auto& row : probe.rows) {
    ASSERT_EQ(row.size(), 1u);
    EXPECT_EQ(row[0], 1.0);
  }
}

TEST(Attention, SingletonKeyReturnsItsValue) {
  std::mt19937_64 rng(2);
  ParameterStore store(2);
  auto p = MhaParams::create(store, "a", 4);
  auto x = random_tensor(rng, {1, 4}, 1.0, false);
  auto y = mh_cross_attention(x, x, p, 2, false);
  auto expect = linear(linear(x, p.wv, p.bv), p.wo, p.bo);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], expect[i], 1e-14);
  EXPECT_THROW(mh_cross_attention(x, x, p, 3, false), ConfigError);
}

TEST(AttentionProperties, WeightsNormalizedAndPermutationInvariant) {
  std::mt19937_64 rng(3);
  ParameterStore store(3);
  auto p = MhaParams::create(store, "a", 8);
  for (int trial = 0; trial < 50; ++trial) {
    auto q = random_tensor(rng, {3, 8}, 1.0, false);
    auto kv = random_tensor(rng, {6, 8}, 1.0, false);
    for (bool sink : {false, true}) {
      AttentionProbe probe;
      auto y = mh_cross_attention(q, kv, p, 4, sink, &probe);
      for (const auto& row : probe.rows) {
        double s = 0.0;
        for (double w : row) s += w;
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
      std::vector<int> perm{3, 1, 5, 0, 2, 4};
      auto y2 = mh_cross_attention(q, gather_rows(kv, perm), p, 4, sink);
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], y2[i], 1e-9);
    }
  }
}

TEST(Deformable, ConstantMapAndOutOfBounds) {
  ParameterStore store(4);
  const std::size_t C = 4;
  auto p = DeformParams::create(store, "d", C, C, 2, 4, 0.0);
  std::vector<double> eye(C * C, 0.0);
  for (std::size_t i = 0; i < C; ++i) eye[i * C + i] = 1.0;
  std::copy(eye.begin(), eye.end(), p.w_value.mutable_values().begin());
  std::copy(eye.begin(), eye.end(), p.wo.mutable_values().begin());
  std::vector<double> mapv(7 * 7 * C);
  for (std::size_t i = 0; i < mapv.size(); ++i) mapv[i] = 1.0 + static_cast<double>(i % C);
  auto map = Tensor::from({7, 7, C}, mapv);
  std::mt19937_64 rng(1);
  auto q = random_tensor(rng, {3, C}, 1.0, false);
  AttentionProbe probe;
  auto y = deformable_cross_attention(q, {3, 3, 2, 5, 4, 1}, map, {}, p, 2, 4, &probe);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < C; ++c) EXPECT_NEAR(y[r * C + c], 1.0 + static_cast<double>(c), 1e-12);
  for (const auto& row : probe.rows) {
    double s = 0.0;
    for (double w : row) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (auto& v : p.bo.mutable_values()) v = 0.25;
  y = deformable_cross_attention(q, {-20, -20, 40, 3, 3, 90}, map, {}, p, 2, 4);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Optimizer, ZeroGradLeavesParams) {
  ParameterStore store(1);
  auto w = store.xavier("w", 3, 3);
  const std::vector<double> before(w.values().begin(), w.values().end());
  AdamW opt(AdamW::Options{.weight_decay = 0.0});
  w.mutable_grad();
  opt.step(store, 1e-3);
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()), before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, FirstStepIsMinusLr) {
  ParameterStore store(1);
  auto w = store.constant("w", {1}, 2.0);
  w.mutable_grad()[0] = 1.0;
  AdamW opt(AdamW::Options{.weight_decay = 0.0});
  opt.step(store, 0.01);
  // m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
  EXPECT_NEAR(w[0], 2.0 - 0.01, 1e-9);
}

TEST(Optimizer, CosineScheduleEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0, 100), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 50, 100), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 99, 100), 0.0, 1e-4);
  EXPECT_EQ(cosine_lr(0.1, 100, 100), 0.0);
}

TEST(Optimizer, DeterministicTrajectory) {
  auto run = [] {
    ParameterStore store(42);
    auto W = store.xavier("w", 4, 2);
    auto b = store.constant("b", {2}, 0.0);
    AdamW opt;
    std::mt19937_64 rng(1);
    for (int step = 0; step < 20; ++step) {
      store.zero_grad();
      auto x = random_tensor(rng, {8, 4}, 1.0, false);
      backward(mean(mul(linear(x, W, b), linear(x, W, b))));
      opt.step(store, cosine_lr(1e-2, static_cast<std::size_t>(step), 20));
    }
    return std::vector<double>(W.values().begin(), W.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripAndMismatch) {
  ParameterStore a(3);
  a.xavier("layer.w", 3, 4);
  a.constant("layer.b", {4}, 0.5);
  const std::string path = ::testing::TempDir() + "ckpt_roundtrip.bin";
  save_parameters(a, path);
  ParameterStore b(99);
  b.xavier("layer.w", 3, 4);
  b.constant("layer.b", {4}, 0.0);
  load_parameters(b, path);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < a.all()[k].tensor.size(); ++i)
      EXPECT_EQ(a.all()[k].tensor[i], b.all()[k].tensor[i]);
  ParameterStore c(1);
  c.xavier("layer.w", 4, 3);
  c.constant("layer.b", {4}, 0.0);
  EXPECT_THROW(load_parameters(c, path), LoadError);
  EXPECT_THROW(read_container(path + ".missing"), LoadError);
}
