#include "fc2mfn/datagen.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace fc2mfn;

namespace {

// Brute-force per-pixel classifier: derive each pixel's class from scratch
// by scanning every building, independent of the painting order in
// render_labels.
int oracle_class(const SceneSpec& scene, int r, int c) {
  for (const Building& b : scene.buildings) {
    if (r < b.row0 || r >= b.row1) continue;
    const int lw = layover_width(b.height, scene.incidence);
    if (c >= b.col0 - lw && c < b.col0) return kClassLayover;
  }
  for (const Building& b : scene.buildings) {
    if (r < b.row0 || r >= b.row1) continue;
    const int sw = shadow_width(b.height, scene.incidence);
    if (c >= b.col1 && c < b.col1 + sw) return kClassShadow;
  }
  return kClassGround;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Labels, NoBuildingsIsAllGround) {
  SceneSpec scene;
  const LabelMap m = render_labels(scene);
  for (int v : m.v) EXPECT_EQ(v, kClassGround);
}

TEST(Labels, SingleBuildingStripWidths) {
  // incidence pi/4 and height 3.5: both strips come out exactly 4 wide
  SceneSpec scene;
  scene.h = scene.w = 32;
  scene.buildings = {{10, 20, 12, 18, 3.5}};
  ASSERT_EQ(layover_width(3.5, scene.incidence), 4);
  ASSERT_EQ(shadow_width(3.5, scene.incidence), 4);
  const LabelMap m = render_labels(scene);
  for (int r = 10; r < 20; ++r) {
    for (int c = 8; c < 12; ++c) EXPECT_EQ(m.at(r, c), kClassLayover) << r << "," << c;
    for (int c = 12; c < 18; ++c) EXPECT_EQ(m.at(r, c), kClassGround) << r << "," << c;
    for (int c = 18; c < 22; ++c) EXPECT_EQ(m.at(r, c), kClassShadow) << r << "," << c;
    EXPECT_EQ(m.at(r, 7), kClassGround);
    EXPECT_EQ(m.at(r, 22), kClassGround);
  }
  EXPECT_EQ(m.at(9, 13), kClassGround);
  EXPECT_EQ(m.at(20, 13), kClassGround);
}

TEST(Labels, LayoverWinsOverShadow) {
  // the first building's shadow lands where the second building's layover is
  SceneSpec scene;
  scene.h = scene.w = 32;
  scene.buildings = {{5, 15, 4, 8, 3.5}, {5, 15, 14, 18, 3.5}};
  const LabelMap m = render_labels(scene);
  // building 0 shadow span: cols [8,12); building 1 layover: cols [10,14)
  for (int r = 5; r < 15; ++r) {
    EXPECT_EQ(m.at(r, 9), kClassShadow);
    EXPECT_EQ(m.at(r, 10), kClassLayover);
    EXPECT_EQ(m.at(r, 11), kClassLayover);
  }
}

TEST(Labels, MatchesBruteForceOracle) {
  SplitMix64 g(91);
  GenParams params;
  params.image_h = params.image_w = 48;
  for (int trial = 0; trial < 20; ++trial) {
    SplitMix64 scene_rng(g.next());
    const SceneSpec scene = sample_scene(params, scene_rng);
    const LabelMap m = render_labels(scene);
    for (int r = 0; r < scene.h; ++r)
      for (int c = 0; c < scene.w; ++c)
        ASSERT_EQ(m.at(r, c), oracle_class(scene, r, c)) << "pixel " << r << "," << c;
  }
}

TEST(SarPair, ZeroNoiseZeroElevationGivesZeroPhase) {
  SceneSpec scene;
  scene.h = scene.w = 16;  // no buildings: elevation 0 everywhere
  GenParams params;
  params.phase_noise = 0.0;
  const SarPair p = render_sar_pair(scene, params, 42);
  for (double v : p.phase.data) EXPECT_EQ(v, 0.0);
}

TEST(SarPair, PhaseEqualsWrappedElevationWithoutNoise) {
  SceneSpec scene;
  scene.h = scene.w = 24;
  scene.buildings = {{4, 12, 8, 14, 6.0}};
  GenParams params;
  params.phase_noise = 0.0;
  params.kz = 0.6;
  const SarPair p = render_sar_pair(scene, params, 43);
  const RTensor elev = elevation_map(scene);
  for (std::size_t i = 0; i < p.phase.data.size(); ++i)
    EXPECT_EQ(p.phase.data[i], wrap_angle(params.kz * elev.data[i])) << "pixel " << i;
}

TEST(SarPair, PhaseChannelMatchesInterferogramAngle) {
  SceneSpec scene;
  scene.h = scene.w = 24;
  scene.buildings = {{4, 12, 8, 14, 6.0}};
  GenParams params;
  const SarPair p = render_sar_pair(scene, params, 44);
  for (std::size_t i = 0; i < p.phase.data.size(); ++i) {
    const double pr = p.master.re[i] * p.slave.re[i] + p.master.im[i] * p.slave.im[i];
    const double pi = p.master.im[i] * p.slave.re[i] - p.master.re[i] * p.slave.im[i];
    EXPECT_NEAR(p.phase.data[i], std::atan2(pi, pr), 1e-9);
    EXPECT_GT(p.phase.data[i], -M_PI);
    EXPECT_LE(p.phase.data[i], M_PI);
  }
}

TEST(SarPair, SameSeedBitIdentical) {
  SceneSpec scene;
  scene.h = scene.w = 16;
  scene.buildings = {{2, 8, 6, 10, 4.0}};
  GenParams params;
  const SarPair a = render_sar_pair(scene, params, 7);
  const SarPair b = render_sar_pair(scene, params, 7);
  EXPECT_EQ(a.master.re, b.master.re);
  EXPECT_EQ(a.master.im, b.master.im);
  EXPECT_EQ(a.slave.re, b.slave.re);
  EXPECT_EQ(a.phase.data, b.phase.data);
  const SarPair c = render_sar_pair(scene, params, 8);
  EXPECT_NE(a.master.re, c.master.re);
}

TEST(SarPair, AmplitudeOrderingFollowsReflectivity) {
  SceneSpec scene;
  scene.h = scene.w = 48;
  scene.buildings = {{8, 40, 20, 32, 5.0}};
  GenParams params;
  const SarPair p = render_sar_pair(scene, params, 9);
  const LabelMap labels = render_labels(scene);
  double mean[3] = {0, 0, 0};
  int count[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.v.size(); ++i) {
    const double a =
        std::sqrt(p.master.re[i] * p.master.re[i] + p.master.im[i] * p.master.im[i]);
    mean[labels.v[i]] += a;
    ++count[labels.v[i]];
  }
  for (int c = 0; c < 3; ++c) {
    ASSERT_GT(count[c], 0);
    mean[c] /= count[c];
  }
  EXPECT_LT(mean[kClassShadow], mean[kClassGround]);
  EXPECT_LT(mean[kClassGround], mean[kClassLayover]);
}

TEST(Dataset, SplitRatio) {
  EXPECT_EQ(train_split_count(40, -1), 28);  // 40 * 216/312 = 27.7 -> 28
  EXPECT_EQ(train_split_count(312, -1), 216);
  EXPECT_EQ(train_split_count(44, 32), 32);
}

TEST(Dataset, GenerateIsDeterministicAndWellFormed) {
  GenParams params;
  params.num_scenes = 6;
  params.image_h = params.image_w = 32;
  params.seed = 77;
  const std::string dir1 = "datagen_test_tmp/a", dir2 = "datagen_test_tmp/b";
  std::filesystem::remove_all("datagen_test_tmp");
  const Manifest m1 = generate_dataset(params, dir1);
  const Manifest m2 = generate_dataset(params, dir2);
  ASSERT_EQ(m1.entries.size(), 6u);
  for (std::size_t i = 0; i < m1.entries.size(); ++i) {
    const std::string f = m1.entries[i].file;
    EXPECT_EQ(read_bytes(dir1 + "/" + f), read_bytes(dir2 + "/" + f)) << f;
  }
  EXPECT_EQ(read_bytes(dir1 + "/manifest.txt"), read_bytes(dir2 + "/manifest.txt"));

  const DataSplit split = load_dataset(dir1);
  EXPECT_EQ(split.train.size() + split.test.size(), 6u);
  EXPECT_EQ(split.train.size(), static_cast<std::size_t>(train_split_count(6, -1)));
  for (const auto* set : {&split.train, &split.test})
    for (const Sample& s : *set) {
      bool seen[3] = {false, false, false};
      for (int v : s.labels.v) {
        ASSERT_GE(v, 0);
        ASSERT_LE(v, 2);
        seen[v] = true;
      }
      // class-balance regeneration guarantees all three classes
      EXPECT_TRUE(seen[0] && seen[1] && seen[2]);
      for (double ph : s.phase.data) {
        EXPECT_GT(ph, -M_PI);
        EXPECT_LE(ph, M_PI);
      }
    }
}

TEST(Dataset, LoadRoundTripPreservesPayload) {
  GenParams params;
  params.num_scenes = 2;
  params.image_h = params.image_w = 16;
  params.seed = 5;
  const std::string dir = "datagen_test_tmp/c";
  generate_dataset(params, dir);
  const Sample s = load_sample(dir + "/sample_0.cxt");
  const Sample again = load_sample(dir + "/sample_0.cxt");
  EXPECT_EQ(s.master.re, again.master.re);
  EXPECT_EQ(s.labels.v, again.labels.v);
  EXPECT_EQ(s.master.shape, (Shape{1, 16, 16}));
  EXPECT_EQ(s.phase.shape, (Shape{16, 16}));
}
