// Copyright 2026 The STP Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "stp/metrics.hpp"

using namespace stp;

namespace {

std::vector<double> vec(const Tensor<double>& t) { return {t.data(), t.data() + t.size()}; }

Tensor<double> random_frame(std::size_t h, std::size_t w, Rng& rng) {
  Tensor<double> f({h, w});
  for (double& v : f.values()) v = rng.uniform(0, 1);
  return f;
}

Tensor<double> random_sequences(Shape dims, Rng& rng) {
  Tensor<double> t(std::move(dims));
  for (double& v : t.values()) v = rng.uniform(0, 1);
  return t;
}

}  // namespace

TEST(Mse, Examples) {
  Rng rng(1);
  const auto a = random_sequences({2, 3, 1, 4, 4}, rng);
  for (double v : mse_per_frame(a, a)) EXPECT_EQ(v, 0.0);
  Tensor<double> z({1, 1, 1, 4, 4}), half({1, 1, 1, 4, 4}, 0.5);
  EXPECT_EQ(mse_per_frame(half, z)[0], 4.0);
  EXPECT_EQ(mse_per_frame(half, z, MseConvention::pixel_mean)[0], 0.25);
  EXPECT_THROW(mse_per_frame(z, Tensor<double>({1, 2, 1, 4, 4})), ShapeError);
}

TEST(Mse, MatchesScalarOracle) {
  Rng rng(2);
  const auto a = random_sequences({3, 4, 2, 5, 6}, rng), b = random_sequences({3, 4, 2, 5, 6}, rng);
  const auto got = mse_per_frame(a, b);
  const std::size_t frame = 2 * 5 * 6;
  for (std::size_t t = 0; t < 4; ++t) {
    double s = 0;
    for (std::size_t n = 0; n < 3; ++n) {
      const std::size_t off = (n * 4 + t) * frame;
      s += oracle::frame_sse({a.data() + off, a.data() + off + frame}, {b.data() + off, b.data() + off + frame});
    }
    EXPECT_NEAR(got[t], s / 3.0, 1e-12);
  }
}

TEST(Ssim, IdenticalFramesGiveOne) {
  Rng rng(3);
  for (auto [h, w] : {std::pair{32, 32}, {11, 11}, {5, 7}, {40, 13}}) {
    const auto f = random_frame(h, w, rng);
    EXPECT_EQ(ssim(f, f), 1.0);
  }
}

TEST(Ssim, ConstantFramesClosedForm) {
  for (auto [a, b] : {std::pair{0.2, 0.7}, {0.0, 1.0}, {0.5, 0.5}, {0.9, 0.1}}) {
    for (std::size_t extent : {16u, 4u}) {
      const Tensor<double> fa({extent, extent}, a), fb({extent, extent}, b);
      const double c1 = 1e-4;
      EXPECT_NEAR(ssim(fa, fb), (2 * a * b + c1) / (a * a + b * b + c1), 1e-12) << extent;
    }
  }
}

TEST(Ssim, MatchesScalarOracle) {
  Rng rng(4);
  for (auto [h, w] : {std::pair{32, 32}, {16, 20}, {11, 11}, {8, 9}}) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto a = random_frame(h, w, rng), b = random_frame(h, w, rng);
      EXPECT_NEAR(ssim(a, b), oracle::ssim(vec(a), vec(b), h, w), 1e-9);
      // A correlated pair lands well away from zero.
      auto c = a;
      for (double& v : c.values()) v = std::clamp(v + rng.uniform(-0.1, 0.1), 0.0, 1.0);
      EXPECT_NEAR(ssim(a, c), oracle::ssim(vec(a), vec(c), h, w), 1e-9);
    }
  }
}

TEST(Ssim, SymmetricAndBounded) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_frame(24, 24, rng), b = random_frame(24, 24, rng);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LE(std::fabs(ssim(a, b)), 1.0);
    Tensor<double> inv = a;
    for (double& v : inv.values()) v = 1.0 - v;
    EXPECT_GE(ssim(a, inv), -1.0);
  }
}

TEST(Psnr, Examples) {
  Rng rng(6);
  const auto a = random_frame(8, 8, rng);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
  Tensor<double> z({10, 10}), p({10, 10}, 0.1);
  EXPECT_NEAR(psnr(p, z), 20.0, 1e-12);
  const auto b = random_frame(8, 8, rng);
  EXPECT_NEAR(psnr(a, b), oracle::psnr(vec(a), vec(b)), 1e-12);
  double last = INFINITY;
  for (double m : {1e-6, 1e-4, 1e-2, 0.5, 1.0}) {
    EXPECT_LT(psnr_from_mse(m), last);
    last = psnr_from_mse(m);
  }
}

TEST(Evaluate, InvariantToBatchOrder) {
  Rng rng(7);
  const auto a = random_sequences({4, 3, 1, 12, 12}, rng), b = random_sequences({4, 3, 1, 12, 12}, rng);
  const std::size_t seq = 3 * 144;
  Tensor<double> ra(a.dims()), rb(b.dims());
  const std::size_t perm[] = {2, 0, 3, 1};
  for (std::size_t n = 0; n < 4; ++n) {
    std::copy_n(a.data() + perm[n] * seq, seq, ra.data() + n * seq);
    std::copy_n(b.data() + perm[n] * seq, seq, rb.data() + n * seq);
  }
  const auto m = evaluate_frames(a, b), r = evaluate_frames(ra, rb);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(m.mse[t], r.mse[t], 1e-12);
    EXPECT_NEAR(m.ssim[t], r.ssim[t], 1e-12);
    EXPECT_NEAR(m.psnr[t], r.psnr[t], 1e-12);
  }
}

TEST(Evaluate, GroundTruthAgainstItself) {
  Rng rng(8);
  const auto a = random_sequences({2, 5, 1, 16, 16}, rng);
  const auto m = evaluate_frames(a, a);
  ASSERT_EQ(m.horizon(), 5u);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(m.mse[t], 0.0);
    EXPECT_EQ(m.ssim[t], 1.0);
    EXPECT_TRUE(std::isinf(m.psnr[t]));
  }
}

TEST(Evaluate, PerSequenceAveraging) {
  Rng rng(9);
  const auto a = random_sequences({3, 2, 1, 12, 12}, rng), b = random_sequences({3, 2, 1, 12, 12}, rng);
  const auto m = evaluate_frames(a, b);
  for (std::size_t t = 0; t < 2; ++t) {
    double s = 0, p = 0;
    for (std::size_t n = 0; n < 3; ++n) {
      const std::size_t off = (n * 2 + t) * 144;
      std::vector<double> fa(a.data() + off, a.data() + off + 144), fb(b.data() + off, b.data() + off + 144);
      s += oracle::ssim(fa, fb, 12, 12);
      p += oracle::psnr(fa, fb);
    }
    EXPECT_NEAR(m.ssim[t], s / 3, 1e-9);
    EXPECT_NEAR(m.psnr[t], p / 3, 1e-9);
  }
}

TEST(Report, RowsAndSummary) {
  FrameMetrics m;
  m.mse = {1.5, 2.5};
  m.ssim = {0.75, 0.5};
  m.psnr = {30, 20};
  m.mean_mse = 2;
  m.mean_ssim = 0.625;
  m.mean_psnr = 25;
  std::ostringstream os;
  write_report(os, m);
  EXPECT_EQ(os.str(), "t,mse,ssim,psnr\n1,1.5,0.75,30\n2,2.5,0.5,20\nmean,2,0.625,25\n");
}

TEST(Baselines, CopyLastAndTargets) {
  Tensor<double> seq({1, 4, 1, 1, 2}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  const auto c = copy_last_baseline(seq, 2, 2);
  EXPECT_EQ(c, Tensor<double>({1, 2, 1, 1, 2}, std::vector<double>{2, 3, 2, 3}));
  const auto t = target_frames(seq, 2, 2);
  EXPECT_EQ(t, Tensor<double>({1, 2, 1, 1, 2}, std::vector<double>{4, 5, 6, 7}));
  EXPECT_THROW(target_frames(seq, 3, 2), ShapeError);
}
