#include <gtest/gtest.h>

#include <random>

#include "metalab/errors.hpp"
#include "metalab/gradcheck.hpp"
#include "metalab/labnet.hpp"
#include "metalab/ops.hpp"
#include "support/scalar_nn.hpp"

using namespace metalab;

namespace {

template <typename T>
Tensor<T> random_input(std::size_t n, std::size_t size, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n * 4 * size * size);
  for (auto& x : v) x = static_cast<T>(u(rng));
  // Channel 1 clones channel 0, as in a real LLAB tensor.
  const std::size_t plane = size * size;
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(v.begin() + (i * 4) * plane, plane, v.begin() + (i * 4 + 1) * plane);
  return Tensor<T>({n, 4, size, size}, std::move(v), grad);
}

template <typename T>
std::vector<double> vec(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// Adds `delta` to channels [c0, c1) of every image.
template <typename T>
Tensor<T> perturb_channels(const Tensor<T>& x, std::size_t c0, std::size_t c1, double delta) {
  Tensor<T> y(x.shape(), std::vector<T>(x.data().begin(), x.data().end()));
  const std::size_t plane = x.dim(2) * x.dim(3);
  auto d = y.mutable_data();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, delta);
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t c = c0; c < c1; ++c)
      for (std::size_t p = 0; p < plane; ++p) d[(i * 4 + c) * plane + p] += static_cast<T>(u(rng));
  return y;
}

}  // namespace

TEST(LabNetConfig, ChannelPlan) {
  LabNetConfig cfg;
  EXPECT_EQ(cfg.hidden_h, 96u);
  EXPECT_EQ(cfg.embed_dim, 128u);
  EXPECT_EQ(cfg.group_channels(1), 96u);
  EXPECT_EQ(cfg.group_channels(2), 192u);
  EXPECT_EQ(cfg.group_channels(3), 384u);
  EXPECT_EQ(cfg.group_channels(4), 384u);
  EXPECT_EQ(cfg.in_channels(1), 4u);
  EXPECT_EQ(cfg.in_channels(2), 192u);
  EXPECT_EQ(cfg.out_channels(4), 768u);
  cfg.image_size = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(LabNet, ParameterNames) {
  ParamStore<float> store;
  std::mt19937_64 rng(0);
  LabNet<float> net(LabNetConfig{4, 8, 16}, store, rng);
  for (int i = 1; i <= 4; ++i) {
    const std::string p = "labnet.lb" + std::to_string(i);
    for (const char* s : {".conv.w", ".conv.b", ".bn.gamma", ".bn.beta"}) EXPECT_TRUE(store.contains(p + s)) << p + s;
  }
  for (const char* tier : {"pe", "ls"})
    for (const char* g : {"light", "color"})
      for (const char* s : {".w", ".b"}) {
        const std::string name = std::string("labnet.fc_") + tier + "_" + g + s;
        EXPECT_TRUE(store.contains(name)) << name;
      }
  EXPECT_EQ(store.get("labnet.lb1.conv.w").shape(), (Shape{8, 2, 3, 3}));
  EXPECT_EQ(store.get("labnet.fc_ls_light.w").shape(), (Shape{8, 16}));
}

TEST(LabNet, FirstBlockShapeAtDefaultWidth) {
  ParamStore<float> store;
  std::mt19937_64 rng(1);
  LabNet<float> net(LabNetConfig{}, store, rng);
  NoGradGuard guard;
  const Tensor<float> y = net.block(random_input<float>(2, 84, 1), 1);
  EXPECT_EQ(y.shape(), (Shape{2, 192, 42, 42}));
}

TEST(LabNet, ZeroInputZeroShiftGivesZero) {
  ParamStore<float> store;
  std::mt19937_64 rng(2);
  LabNet<float> net(LabNetConfig{3, 4, 16}, store, rng);
  const Tensor<float> y = net.block(Tensor<float>::zeros({2, 4, 16, 16}), 1);
  for (float v : y.data()) ASSERT_EQ(v, 0.0f);
}

TEST(LabNet, WrongChannelCountThrows) {
  ParamStore<float> store;
  std::mt19937_64 rng(3);
  LabNet<float> net(LabNetConfig{3, 4, 16}, store, rng);
  EXPECT_THROW(net.block(Tensor<float>::zeros({2, 5, 16, 16}), 1), ShapeError);
  EXPECT_THROW(net.block(Tensor<float>::zeros({2, 4, 16, 16}), 2), ShapeError);
}

TEST(LabNet, EmbeddingShapes) {
  ParamStore<float> store;
  std::mt19937_64 rng(4);
  LabNet<float> net(LabNetConfig{4, 16, 84}, store, rng);
  NoGradGuard guard;
  const auto emb = net.forward(random_input<float>(20, 84, 2), 2, 10);
  for (const auto* t : {&emb.pe_light, &emb.pe_color, &emb.ls_light, &emb.ls_color}) {
    EXPECT_EQ(t->shape(), (Shape{2, 10, 16}));
  }
  const auto [pl, pc] = net.embed_penultimate(random_input<float>(20, 84, 2), 2, 10);
  EXPECT_EQ(vec(pl), vec(emb.pe_light));
  EXPECT_EQ(vec(pc), vec(emb.pe_color));
  const auto [ll, lc] = net.embed_last(random_input<float>(20, 84, 2), 2, 10);
  EXPECT_EQ(vec(ll), vec(emb.ls_light));
  EXPECT_EQ(vec(lc), vec(emb.ls_color));
}

TEST(LabNet, DuplicateImagesGiveIdenticalRows) {
  ParamStore<double> store;
  std::mt19937_64 rng(5);
  LabNet<double> net(LabNetConfig{2, 6, 16}, store, rng);
  Tensor<double> x = random_input<double>(4, 16, 3);
  auto d = x.mutable_data();
  const std::size_t img = 4 * 16 * 16;
  std::copy_n(d.begin() + 1 * img, img, d.begin() + 3 * img);  // image 3 := image 1
  const auto emb = net.forward(x, 1, 4);
  for (const auto* t : {&emb.pe_light, &emb.pe_color, &emb.ls_light, &emb.ls_color})
    for (std::size_t k = 0; k < 6; ++k) ASSERT_EQ(t->at(1 * 6 + k), t->at(3 * 6 + k));

  Tensor<double> same = random_input<double>(1, 16, 4);
  const auto one = vec(same);
  std::vector<double> all;
  for (int i = 0; i < 3; ++i) all.insert(all.end(), one.begin(), one.end());
  const auto e = net.forward(Tensor<double>({3, 4, 16, 16}, all), 1, 3);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t k = 0; k < 6; ++k) ASSERT_EQ(e.ls_color.at(i * 6 + k), e.ls_color.at(k));
}

TEST(LabNet, GroupIsolationByPerturbation) {
  ParamStore<double> store;
  std::mt19937_64 rng(6);
  LabNet<double> net(LabNetConfig{3, 5, 32}, store, rng);
  const Tensor<double> x = random_input<double>(4, 32, 5);
  const auto base = net.forward(x, 2, 2);

  const auto color_moved = net.forward(perturb_channels(x, 2, 4, 0.5), 2, 2);
  EXPECT_EQ(vec(color_moved.pe_light), vec(base.pe_light));
  EXPECT_EQ(vec(color_moved.ls_light), vec(base.ls_light));
  EXPECT_NE(vec(color_moved.ls_color), vec(base.ls_color));

  const auto light_moved = net.forward(perturb_channels(x, 0, 2, 0.5), 2, 2);
  EXPECT_EQ(vec(light_moved.pe_color), vec(base.pe_color));
  EXPECT_EQ(vec(light_moved.ls_color), vec(base.ls_color));
  EXPECT_NE(vec(light_moved.ls_light), vec(base.ls_light));

  // Every block keeps the light half of its output fixed.
  Tensor<double> h0 = x, h1 = perturb_channels(x, 2, 4, 0.5);
  for (std::size_t b = 1; b <= kLabBlocks; ++b) {
    h0 = net.block(h0, b);
    h1 = net.block(h1, b);
    const std::size_t half = h0.dim(1) / 2;
    EXPECT_EQ(vec(narrow(h0, 1, 0, half)), vec(narrow(h1, 1, 0, half))) << "block " << b;
  }
}

TEST(LabNet, GroupIsolationByAutodiff) {
  ParamStore<double> store;
  std::mt19937_64 rng(7);
  LabNet<double> net(LabNetConfig{2, 4, 16}, store, rng);
  const Tensor<double> x = random_input<double>(4, 16, 6, true);
  const auto emb = net.forward(x, 1, 4);
  sum(add(emb.pe_light, emb.ls_light)).backward();
  const std::size_t plane = 16 * 16;
  double ab = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t p = 0; p < plane; ++p) {
      ab += std::abs(x.grad()[(i * 4 + 2) * plane + p]) + std::abs(x.grad()[(i * 4 + 3) * plane + p]);
      ll += std::abs(x.grad()[(i * 4 + 0) * plane + p]);
    }
  EXPECT_EQ(ab, 0.0);
  EXPECT_GT(ll, 0.0);
}

TEST(LabNet, MatchesScalarPipelineOracle) {
  // Smallest admissible input: 16 px survives four 2x pools.
  const LabNetConfig cfg{2, 5, 16};
  ParamStore<double> store;
  std::mt19937_64 rng(8);
  LabNet<double> net(cfg, store, rng);
  const Tensor<double> x = random_input<double>(3, 16, 7);
  const auto emb = net.forward(x, 1, 3);

  auto p = [&](const std::string& name) { return vec(store.get(name)); };
  oracle::Array4 h(3, 4, 16, 16);
  h.v = vec(x);
  std::vector<double> pe, ls;
  for (std::size_t b = 1; b <= 4; ++b) {
    const std::string pre = "labnet.lb" + std::to_string(b);
    h = oracle::conv2d(h, p(pre + ".conv.w"), p(pre + ".conv.b"), cfg.out_channels(b), 2, 3, 1, 1);
    h = oracle::max_pool(oracle::relu(oracle::batch_norm(h, p(pre + ".bn.gamma"), p(pre + ".bn.beta"))), 2, 2);
    if (b == 3) pe = oracle::global_max(h);
    if (b == 4) ls = oracle::global_max(h);
  }
  const std::size_t g = cfg.group_channels(4);
  auto head = [&](const std::vector<double>& pooled, std::size_t group, const std::string& fc) {
    std::vector<double> part;
    for (std::size_t i = 0; i < 3; ++i)
      part.insert(part.end(), pooled.begin() + i * 2 * g + group * g,
                  pooled.begin() + i * 2 * g + (group + 1) * g);
    return oracle::linear(part, 3, g, p(fc + ".w"), p(fc + ".b"), cfg.embed_dim);
  };
  const std::pair<const Tensor<double>*, std::vector<double>> cases[] = {
      {&emb.pe_light, head(pe, 0, "labnet.fc_pe_light")},
      {&emb.pe_color, head(pe, 1, "labnet.fc_pe_color")},
      {&emb.ls_light, head(ls, 0, "labnet.fc_ls_light")},
      {&emb.ls_color, head(ls, 1, "labnet.fc_ls_color")},
  };
  for (const auto& [got, want] : cases) {
    ASSERT_EQ(got->numel(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(got->at(i), want[i], 1e-9);
  }
}

TEST(LabNet, EncoderGradientCheck) {
  const LabNetConfig cfg{2, 4, 16};
  ParamStore<double> store;
  std::mt19937_64 rng(9);
  LabNet<double> net(cfg, store, rng);
  const Tensor<double> x = random_input<double>(4, 16, 8);
  std::mt19937_64 wr(10);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> w(4 * 4);
  for (auto& v : w) v = n(wr);
  const Tensor<double> proj({1, 4, 4}, w);
  std::vector<Tensor<double>> params;
  for (const auto& name : store.names()) params.push_back(store.get(name));
  GradCheckOptions opt;
  opt.max_coords_per_input = 10;
  opt.seed = 1;
  const auto r = check_gradients(
      [&](const std::vector<Tensor<double>>&) {
        const auto e = net.forward(x, 1, 4);
        return sum(mul(add(add(e.pe_light, e.pe_color), add(e.ls_light, e.ls_color)), proj));
      },
      params, opt);
  EXPECT_GT(r.checked, 50u);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}
