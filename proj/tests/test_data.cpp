// Copyright 2026 The STP Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "stp/data.hpp"
#include "stp/parallel.hpp"

using namespace stp;

namespace {

DatasetSpec small_spec(std::size_t n, std::size_t digits = 2, std::uint64_t seed = 1) {
  DatasetSpec s;
  s.n_sequences = n;
  s.frames = 6;
  s.digits = digits;
  s.extent = 32;
  s.seed = seed;
  return s;
}

Trajectory fixed(std::int64_t x, std::int64_t y, std::size_t w, std::size_t h, std::size_t frames) {
  Trajectory t;
  t.w = w;
  t.h = h;
  t.x.assign(frames, x);
  t.y.assign(frames, y);
  return t;
}

bool boxes_intersect(const Trajectory& a, const Trajectory& b, std::size_t t) {
  // Count overlapping pixels directly.
  for (std::int64_t y = a.y[t]; y < a.y[t] + std::int64_t(a.h); ++y)
    for (std::int64_t x = a.x[t]; x < a.x[t] + std::int64_t(a.w); ++x)
      if (x >= b.x[t] && x < b.x[t] + std::int64_t(b.w) && y >= b.y[t] && y < b.y[t] + std::int64_t(b.h)) return true;
  return false;
}

}  // namespace

TEST(Motion, ZeroVelocityIsStatic) {
  const auto tr = simulate(5, 7, 0, 0, 4, 4, 16, 10);
  for (std::size_t t = 0; t < 10; ++t) {
    EXPECT_EQ(tr.x[t], 5);
    EXPECT_EQ(tr.y[t], 7);
  }
  const Sprite s = builtin_sprite(3, 8);
  const auto seq = render_sequence({&s}, {tr}, 16, 10);
  for (std::size_t t = 1; t < 10; ++t)
    for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(seq[t * 256 + i], seq[i]);
}

TEST(Motion, OneDimensionalBounce) {
  // Track length 10, width 4: the corner lives on [0, 6].
  const auto tr = simulate(0, 0, 3, 0, 4, 1, 10, 9);
  const std::vector<std::int64_t> expect{0, 3, 6, 3, 0, 3, 6, 3, 0};
  EXPECT_EQ(tr.x, expect);
}

TEST(Motion, ReflectionPreservesSpeed) {
  double p = 5, v = 4;
  for (int i = 0; i < 50; ++i) {
    bounce(p, v, 9.5);
    EXPECT_EQ(std::fabs(v), 4.0);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 9.5);
  }
}

TEST(Render, DisjointBoxesKeepEachSprite) {
  const Sprite a = builtin_sprite(1, 8), b = builtin_sprite(7, 8);
  const auto ta = fixed(0, 0, 8, 8, 1), tb = fixed(10, 12, 8, 8, 1);
  const auto frame = render_sequence({&a, &b}, {ta, tb}, 24, 1);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(frame[r * 24 + c], a.glyph.at(r, c));
      EXPECT_EQ(frame[(12 + r) * 24 + 10 + c], b.glyph.at(r, c));
    }
}

TEST(Render, OverlapTakesMaximum) {
  Sprite a{Tensor<float>({2, 2}, 0.25f), 0}, b{Tensor<float>({2, 2}, 0.75f), 1};
  const auto frame = render_sequence({&a, &b}, {fixed(0, 0, 2, 2, 1), fixed(1, 1, 2, 2, 1)}, 4, 1);
  EXPECT_EQ(frame[0], 0.25f);
  EXPECT_EQ(frame[1 * 4 + 1], 0.75f);
  EXPECT_EQ(frame[3 * 4 + 3], 0.0f);
}

TEST(Occlusion, Examples) {
  std::vector<std::vector<Trajectory>> apart(5, {fixed(0, 0, 4, 4, 3), fixed(4, 0, 4, 4, 3)});
  for (double f : occlusion_frequency(apart)) EXPECT_EQ(f, 0.0);
  std::vector<std::vector<Trajectory>> same(5, {fixed(2, 2, 4, 4, 3), fixed(2, 2, 4, 4, 3)});
  for (double f : occlusion_frequency(same)) EXPECT_EQ(f, 1.0);
  std::vector<std::vector<Trajectory>> single(2, {fixed(0, 0, 4, 4, 3)});
  EXPECT_THROW(occlusion_frequency(single), ContractError);
  EXPECT_THROW(occlusion_frequency({}), ContractError);
}

TEST(Occlusion, MatchesPixelIntersectionOracle) {
  const auto ds = generate_dataset(small_spec(100, 3, 11));
  const auto freq = occlusion_frequency(ds.trajectories);
  for (std::size_t t = 0; t < 6; ++t) {
    double hits = 0;
    for (const auto& seq : ds.trajectories) {
      bool any = false;
      for (std::size_t a = 0; a < seq.size(); ++a)
        for (std::size_t b = a + 1; b < seq.size(); ++b) any |= boxes_intersect(seq[a], seq[b], t);
      hits += any;
    }
    EXPECT_EQ(freq[t], hits / 100.0);
  }
}

TEST(Occlusion, NonzeroForTypicalData) {
  auto spec = small_spec(1000, 2, 12);
  spec.extent = 64;
  spec.frames = 10;
  const auto freq = occlusion_frequency(generate_dataset(spec).trajectories);
  EXPECT_GT(*std::max_element(freq.begin(), freq.end()), 0.0);
}

TEST(Dataset, PixelsInRangeAndBoxesInsideFrame) {
  const auto ds = generate_dataset(small_spec(50, 3, 13));
  EXPECT_EQ(ds.pixels.dims, (Shape{50, 6, 1, 32, 32}));
  std::size_t lit = 0;
  for (auto b : ds.pixels.data) lit += b > 0;
  EXPECT_GT(lit, 0u);
  for (const auto& seq : ds.trajectories) {
    ASSERT_EQ(seq.size(), 3u);
    for (const auto& tr : seq) {
      const double speed = std::hypot(tr.vx, tr.vy);
      EXPECT_NEAR(speed, 1.5, 1e-12);
      for (std::size_t t = 0; t < 6; ++t) {
        EXPECT_GE(tr.x[t], 0);
        EXPECT_GE(tr.y[t], 0);
        EXPECT_LE(tr.x[t] + std::int64_t(tr.w), 32);
        EXPECT_LE(tr.y[t] + std::int64_t(tr.h), 32);
      }
    }
  }
}

TEST(Dataset, SameSeedIsBitIdenticalAcrossThreadCounts) {
  const int saved = num_threads();
  set_num_threads(1);
  const auto a = generate_dataset(small_spec(20, 2, 14));
  set_num_threads(3);
  const auto b = generate_dataset(small_spec(20, 2, 14));
  set_num_threads(saved);
  EXPECT_EQ(a.pixels.data, b.pixels.data);
  EXPECT_NE(generate_dataset(small_spec(20, 2, 15)).pixels.data, a.pixels.data);
}

TEST(Dataset, SplitsUseDisjointSprites) {
  std::set<std::size_t> seen[3];
  const char* splits[] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    auto spec = small_spec(200, 2, 16);
    spec.split = splits[i];
    for (const auto& seq : generate_dataset(spec).trajectories)
      for (const auto& tr : seq) seen[i].insert(tr.sprite);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      for (auto id : seen[i]) EXPECT_EQ(seen[j].count(id), 0u) << splits[i] << " vs " << splits[j];
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "stp_test_dataset";
  std::filesystem::remove_all(dir);
  auto spec = small_spec(4, 2, 17);
  const auto ds = generate_dataset(spec);
  write_dataset(dir, ds);
  for (const char* f : {"data.stpt", "spec.json", "trajectories.csv"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
  const auto back = read_dataset(dir);
  EXPECT_EQ(to_json(back.spec), to_json(ds.spec));
  EXPECT_EQ(back.pixels.dims, ds.pixels.dims);
  EXPECT_EQ(back.pixels.data, ds.pixels.data);
  ASSERT_EQ(back.trajectories.size(), 4u);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t d = 0; d < 2; ++d) {
      EXPECT_EQ(back.trajectories[s][d].x, ds.trajectories[s][d].x);
      EXPECT_EQ(back.trajectories[s][d].y, ds.trajectories[s][d].y);
      EXPECT_EQ(back.trajectories[s][d].w, ds.trajectories[s][d].w);
    }
  EXPECT_THROW(read_dataset(dir / "missing"), IoError);
  std::ofstream(dir / "data.stpt", std::ios::trunc) << "garbage";
  EXPECT_THROW(read_dataset(dir), FormatError);
}

TEST(Dataset, QuantizationBound) {
  Rng rng(18);
  for (int i = 0; i < 10000; ++i) {
    const float v = float(rng.uniform(0, 1));
    EXPECT_LE(std::fabs(double(quantize(v)) / 255.0 - v), 1.0 / 510.0 + 1e-7);
  }
  EXPECT_EQ(quantize(1.0f), 255);
  EXPECT_EQ(quantize(0.0f), 0);
  Dataset ds{small_spec(1), {{1, 1, 1, 1, 2}, {255, 0}}, {}};
  const std::size_t idx[] = {0};
  const auto t = gather_sequences<double>(ds, idx, 1);
  EXPECT_EQ(t[0], 1.0);
  EXPECT_EQ(t[1], 0.0);
}

TEST(Dataset, SpecValidationAndJson) {
  auto spec = small_spec(3);
  spec.sprite_size = 40;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = small_spec(3);
  spec.split = "holdout";
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = small_spec(3, 5);
  EXPECT_THROW(validate(spec), ConfigError);
  spec = small_spec(7, 3, 99);
  spec.speed = 2.5;
  const auto back = dataset_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
}

TEST(Sprites, UserFileIsPartitionedAndChecked) {
  const auto dir = std::filesystem::temp_directory_path() / "stp_test_sprites";
  std::filesystem::create_directories(dir);
  Tensor<float> sprites({10, 5, 5});
  for (std::size_t n = 0; n < 10; ++n) sprites[n * 25 + 12] = float(n + 1) / 10.0f;
  stpt::write(dir / "s.stpt", sprites);
  auto spec = small_spec(3);
  spec.extent = 8;
  spec.sprites = (dir / "s.stpt").string();
  const auto train = load_sprites(spec);
  EXPECT_EQ(train.size(), 7u);
  spec.split = "test";
  const auto test = load_sprites(spec);
  ASSERT_EQ(test.size(), 2u);
  EXPECT_EQ(test[0].id, 8u);
  spec.extent = 4;
  EXPECT_THROW(load_sprites(spec), ConfigError);
}
