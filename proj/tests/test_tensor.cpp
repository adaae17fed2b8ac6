#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "dro/adam.hpp"
#include "dro/checkpoint.hpp"
#include "dro/conv.hpp"
#include "dro/ops.hpp"
#include "dro/sampling.hpp"
#include "support/gradcheck.hpp"

using namespace dro;
using dro::test::random_tensor;
using dro::test::TensorD;

namespace {

// Direct 7-loop convolution with zero padding.
std::vector<double> conv_oracle(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int ph, int pw) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int HO = (H + 2 * ph - KH) / stride + 1, WO = (W + 2 * pw - KW) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(O) * HO * WO);
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < HO; ++i)
      for (int j = 0; j < WO; ++j) {
        double s = b[o];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < KH; ++u)
            for (int v = 0; v < KW; ++v) {
              const int y = i * stride - ph + u, xx = j * stride - pw + v;
              if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
              s += w[((o * C + c) * KH + u) * KW + v] * x[(c * H + y) * W + xx];
            }
        out[(o * HO + i) * WO + j] = s;
      }
  return out;
}

}  // namespace

TEST(Conv, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + 2 * static_cast<int>(rng() % 3), stride = 1 + static_cast<int>(rng() % 2);
    auto x = random_tensor({2, 7, 9}, rng, -1, 1, false);
    auto w = random_tensor({3, 2, k, k}, rng, -1, 1, false);
    auto b = random_tensor({3}, rng, -1, 1, false);
    const auto opt = ConvOptions::same(k, k, stride);
    const auto y = conv2d(x, w, b, opt);
    const auto ref = conv_oracle(x, w, b, stride, opt.pad_h, opt.pad_w);
    ASSERT_EQ(y.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv, PatchStrideMatchesOracle) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({3, 16, 24}, rng, -1, 1, false);
  auto w = random_tensor({5, 3, 8, 8}, rng, -1, 1, false);
  auto b = random_tensor({5}, rng, -1, 1, false);
  const auto y = conv2d(x, w, b, ConvOptions{8, 0, 0});
  EXPECT_EQ(y.shape(), (Shape{5, 2, 3}));
  const auto ref = conv_oracle(x, w, b, 8, 0, 0);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv, SeparableEqualsTwoPasses) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 6, 7}, rng, -1, 1, false);
  auto wh = random_tensor({3, 2, 1, 5}, rng, -1, 1, false);
  auto wv = random_tensor({3, 3, 5, 1}, rng, -1, 1, false);
  auto b = random_tensor({3}, rng, -1, 1, false);
  const auto y = conv2d_separable5x5(x, wh, wv, b);
  const auto mid = conv_oracle(x, wh, TensorD::zeros({3}), 1, 0, 2);
  const auto ref = conv_oracle(TensorD::from({3, 6, 7}, mid), wv, b, 1, 2, 0);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv, ShapeMismatchThrows) {
  auto x = TensorD::zeros({2, 4, 4});
  auto w = TensorD::zeros({3, 1, 3, 3});
  EXPECT_THROW(conv2d(x, w, TensorD::zeros({3}), ConvOptions::same(3, 3)), DimensionError);
}

TEST(Bilinear, FourNeighbourOracle) {
  std::mt19937_64 rng(6);
  auto map = random_tensor({2, 5, 6}, rng, -1, 1, false);
  auto coords = random_tensor({2, 4, 4}, rng, -1.5, 6.5, false);
  const auto [out, valid] = bilinear_sample(map, coords);
  const int H = 5, W = 6, P = 16;
  for (int p = 0; p < P; ++p) {
    const double x = coords[p], y = coords[P + p];
    const double cx = std::clamp(x, 0.0, W - 1.0), cy = std::clamp(y, 0.0, H - 1.0);
    const int x0 = std::min(static_cast<int>(std::floor(cx)), W - 2), y0 = std::min(static_cast<int>(std::floor(cy)), H - 2);
    const double fx = cx - x0, fy = cy - y0;
    for (int c = 0; c < 2; ++c) {
      auto at = [&](int yy, int xx) { return map[(c * H + yy) * W + xx]; };
      const double ref = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      EXPECT_NEAR(out[c * P + p], ref, 1e-12);
    }
    const bool in = x >= 0 && x <= W - 1 && y >= 0 && y <= H - 1;
    EXPECT_EQ(valid[p], in ? 1.0 : 0.0);
  }
}

TEST(Bilinear, IntegerCoordinatesReturnPixels) {
  std::mt19937_64 rng(7);
  auto map = random_tensor({1, 3, 4}, rng, -1, 1, false);
  std::vector<double> c;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) c.push_back(x);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) c.push_back(y);
  const auto out = bilinear_sample(map, TensorD::from({2, 3, 4}, c)).first;
  for (std::size_t k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(out[k], map[k]);
}

TEST(Bilinear, NonFiniteCoordinateThrows) {
  auto map = TensorD::zeros({1, 3, 3});
  auto coords = TensorD::from({2, 1, 1}, {std::numeric_limits<double>::quiet_NaN(), 0.0});
  EXPECT_THROW(bilinear_sample(map, coords), NumericsError);
}

TEST(Resize, ConstantStaysConstantAndPixelCentresAlign) {
  auto x = TensorD::full({1, 2, 2}, 3.5);
  const auto y = resize_bilinear(x, 16, 16);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 3.5);
  // A ramp along x sampled at half-pixel centres stays a ramp.
  auto ramp = TensorD::from({1, 1, 2}, {0.0, 1.0});
  const auto r = resize_bilinear(ramp, 1, 8);
  // output pixel j maps to source (j + 0.5) / 4 - 0.5, clamped to [0, 1].
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(r[j], std::clamp((j + 0.5) / 4 - 0.5, 0.0, 1.0), 1e-12);
}

TEST(Ops, BroadcastAndReduce) {
  auto a = TensorD::from({2, 1, 3}, {1, 2, 3, 4, 5, 6});
  auto b = TensorD::from({1, 2, 1}, {10, 20});
  const auto c = a + b;
  EXPECT_EQ(c.shape(), (Shape{2, 2, 3}));
  EXPECT_DOUBLE_EQ(c[0], 11);
  EXPECT_DOUBLE_EQ(c[3], 21);
  EXPECT_DOUBLE_EQ(sum(c).item(), 2 * 21 + 6 * 30);
  const auto m = reduce(c, ReduceOp::mean, {2});
  EXPECT_EQ(m.shape(), (Shape{2, 2, 1}));
  EXPECT_DOUBLE_EQ(m[0], 12);
  EXPECT_THROW(a + TensorD::zeros({3, 2}), DimensionError);
}

TEST(Ops, NumericErrorsAreReported) {
  auto z = TensorD::from({2}, {1.0, 0.0});
  EXPECT_THROW(log(z), NumericsError);
  EXPECT_THROW(TensorD::from({1}, {1.0}) / TensorD::from({1}, {0.0}), NumericsError);
  EXPECT_THROW(exp(TensorD::from({1}, {1e6})), NumericsError);
}

TEST(Autodiff, NoGradGuardBuildsNoGraph) {
  auto x = TensorD::from({3}, {1, 2, 3}, true);
  {
    NoGradGuard ng;
    const auto y = sum(square(x));
    EXPECT_FALSE(y.requires_grad());
  }
  const auto y = sum(square(x));
  EXPECT_TRUE(y.requires_grad());
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Autodiff, GradientsAccumulateOverReusedNodes) {
  auto x = TensorD::from({1}, {3.0}, true);
  const auto y = x * x + x;
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(MemoryStats, TracksLiveStorage) {
  const auto before = MemoryStats::current().load();
  {
    auto t = TensorD::zeros({1000});
    EXPECT_GE(MemoryStats::current().load() - before, 8000);
  }
  EXPECT_EQ(MemoryStats::current().load(), before);
}

// Adam against the recurrence written out for a single scalar.
TEST(Adam, MatchesScalarRecurrence) {
  ParameterSet<double> ps;
  auto w = ps.add("w", TensorD::from({1}, {0.5}, true));
  AdamState<double> st;
  st.init(ps);
  const AdamOptions opt{0.01, 0.9, 0.999, 1e-8};
  double ref = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 50; ++t) {
    ps.zero_grad();
    backward(sum(square(w - TensorD::scalar(2.0))));
    const double g = 2 * (ref - 2.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(ps, st, opt);
    EXPECT_NEAR(w[0], ref, 1e-12);
  }
  EXPECT_EQ(st.step, 50u);
}

TEST(Parameters, ClipGradNorm) {
  ParameterSet<double> ps;
  auto a = ps.add("a", TensorD::from({2}, {0, 0}, true));
  auto b = ps.add("b", TensorD::from({1}, {0}, true));
  a.mutable_grad()[0] = 3;
  b.mutable_grad()[0] = 4;
  EXPECT_DOUBLE_EQ(ps.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
}

TEST(Checkpoint, RoundTripWithAdamState) {
  std::mt19937_64 rng(8);
  ParameterSet<float> ps;
  ps.add("a.weight", Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true));
  ps.add("a.bias", Tensor<float>::from({2}, {-1, 1}, true));
  AdamState<float> st;
  st.init(ps);
  st.step = 17;
  st.m[0][4] = 0.25f;
  st.v[1][1] = 0.125f;
  const auto path = std::filesystem::temp_directory_path() / "dro_test_ckpt.bin";
  save_checkpoint(path.string(), ps, &st);

  ParameterSet<float> qs;
  qs.add("a.weight", {2, 3});
  qs.add("a.bias", {2});
  AdamState<float> st2;
  EXPECT_TRUE(load_checkpoint(path.string(), qs, &st2));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < ps[i].tensor.numel(); ++k) EXPECT_EQ(qs[i].tensor[k], ps[i].tensor[k]);
  EXPECT_EQ(st2.step, 17u);
  EXPECT_EQ(st2.m[0][4], 0.25f);
  EXPECT_EQ(st2.v[1][1], 0.125f);

  ParameterSet<float> wrong;
  wrong.add("a.weight", {3, 2});
  wrong.add("a.bias", {2});
  EXPECT_THROW(load_checkpoint(path.string(), wrong, static_cast<AdamState<float>*>(nullptr)), Error);
  std::filesystem::remove(path);
}
