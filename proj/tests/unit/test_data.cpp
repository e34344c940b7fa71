#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "setpose/data.hpp"
#include "setpose/error.hpp"
#include "test_util.hpp"

namespace setpose {
namespace {

const SkeletonTopology kTopo = SkeletonTopology::standard();

GenConfig small_config(std::size_t n = 20) {
  GenConfig cfg;
  cfg.seed = 12;
  cfg.n_samples = n;
  return cfg;
}

struct ScaleSummary {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

ScaleSummary summarize_scales(const Dataset& ds) {
  std::vector<double> s;
  for (const auto& sample : ds.samples) {
    for (const auto& hand : sample.hands) s.push_back(hand_scale(*hand.xyz, kTopo));
  }
  ScaleSummary out;
  out.n = s.size();
  for (double v : s) out.mean += v / static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - out.mean) * (v - out.mean) / static_cast<double>(s.size() - 1);
  out.standard_error = std::sqrt(var / static_cast<double>(s.size()));
  return out;
}

TEST(Template, ScaleIsTheMeanListedBoneLength) {
  double total = 0.0;
  for (const auto& finger : kTemplateBoneLengths) {
    for (double len : finger) total += len;
  }
  EXPECT_NEAR(hand_scale(template_hand(kTopo), kTopo), total / 20.0, 1e-12);
  EXPECT_NEAR(total / 20.0, 40.5, 1e-12);
}

TEST(Template, LeftIsTheMirroredRight) {
  const JointSet3D r = template_hand(kTopo);
  const JointSet3D l = template_left_hand(kTopo);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    EXPECT_EQ(l.joints[j].x, -r.joints[j].x);
    EXPECT_EQ(l.joints[j].y, r.joints[j].y);
    EXPECT_EQ(l.joints[j].z, r.joints[j].z);
  }
  EXPECT_EQ(hand_scale(l, kTopo), hand_scale(r, kTopo));
  EXPECT_EQ(template_hand(kTopo), template_hand(kTopo));
}

TEST(Generate, IsDeterministic) {
  EXPECT_EQ(generate_dataset(small_config(), kTopo), generate_dataset(small_config(), kTopo));
  GenConfig other = small_config();
  other.seed = 13;
  EXPECT_NE(generate_dataset(other, kTopo), generate_dataset(small_config(), kTopo));
  // Sample i does not depend on how many samples are generated.
  EXPECT_EQ(generate_dataset(small_config(5), kTopo).samples[3],
            generate_dataset(small_config(20), kTopo).samples[3]);
}

TEST(Generate, AnnotationsAreConsistentAndInRange) {
  const GenConfig cfg = small_config(200);
  const Dataset ds = generate_dataset(cfg, kTopo);
  const CameraIntrinsics cam = cfg.camera();
  std::size_t hands = 0;
  for (const auto& sample : ds.samples) {
    EXPECT_EQ(sample.camera, cam);
    EXPECT_EQ(sample.image.height, 32u);
    EXPECT_LE(sample.hands.size(), 2u);
    if (sample.hands.size() == 2) {
      EXPECT_NE(sample.hands[0].side, sample.hands[1].side);
    }
    for (const auto& hand : sample.hands) {
      ++hands;
      ASSERT_TRUE(hand.xyz.has_value());
      EXPECT_FALSE(hand.mirrored);
      const JointSet3D back = uvd_to_xyz(hand.uvd, cam);
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        EXPECT_LT(norm(back.joints[j] - hand.xyz->joints[j]) / norm(hand.xyz->joints[j]), 1e-9);
        EXPECT_GE(hand.xyz->joints[j].z, cfg.depth_min);
        EXPECT_LE(hand.xyz->joints[j].z, cfg.depth_max);
      }
      const Vec3 wrist = hand.uvd.joints[0];
      EXPECT_GE(wrist.x, 0.0);
      EXPECT_LT(wrist.x, cam.width);
      EXPECT_GE(wrist.y, 0.0);
      EXPECT_LT(wrist.y, cam.height);
    }
  }
  // Presence 0.9 per side.
  EXPECT_GT(hands, 340u);
  EXPECT_LT(hands, 380u);
}

TEST(Generate, RendersEachSideIntoItsChannel) {
  GenConfig cfg = small_config(30);
  const Dataset ds = generate_dataset(cfg, kTopo);
  for (const auto& sample : ds.samples) {
    for (HandSide side : kHandSides) {
      float energy = 0.0f;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) energy += sample.image.at(y, x, index_of(side));
      EXPECT_EQ(energy > 0.0f, sample.hand(side) != nullptr);
    }
    for (float v : sample.image.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Generate, MeanScaleIsTemplateTimesMeanJitter) {
  GenConfig cfg = small_config(1000);
  const ScaleSummary s = summarize_scales(generate_dataset(cfg, kTopo));
  const double mean_jitter = 0.5 * (cfg.scale_jitter_min + cfg.scale_jitter_max);
  EXPECT_GT(s.n, 1500u);
  EXPECT_LT(std::fabs(s.mean - 40.5 * mean_jitter), 3.0 * s.standard_error)
      << "mean " << s.mean << " se " << s.standard_error;
}

TEST(Generate, ShiftedSubjectsAreProportionallyLarger) {
  GenConfig cfg = small_config(1000);
  const ScaleSummary base = summarize_scales(generate_dataset(cfg, kTopo));
  cfg.subject_scale_factor = 1.3;
  cfg.seed = 99;
  const ScaleSummary shifted = summarize_scales(generate_dataset(cfg, kTopo));
  const double se = std::hypot(shifted.standard_error, 1.3 * base.standard_error);
  EXPECT_LT(std::fabs(shifted.mean - 1.3 * base.mean), 3.0 * se);
}

TEST(Generate, ConfigValidation) {
  GenConfig cfg = small_config();
  cfg.depth_min = 800.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.hand_presence = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.depth_min = 400.0;
  cfg.depth_max = 410.0;  // narrower than a hand
  EXPECT_THROW(generate_dataset(cfg, kTopo), ConfigError);
}

TEST(Flip, TwiceRestoresTheSample) {
  const Dataset ds = generate_dataset(small_config(), kTopo);
  for (const auto& sample : ds.samples) {
    const SceneSample twice = flip_sample(flip_sample(sample));
    EXPECT_EQ(twice.image, sample.image);
    ASSERT_EQ(twice.hands.size(), sample.hands.size());
    for (std::size_t h = 0; h < sample.hands.size(); ++h) {
      EXPECT_EQ(twice.hands[h].side, sample.hands[h].side);
      EXPECT_FALSE(twice.hands[h].mirrored);
      EXPECT_EQ(twice.hands[h].xyz, sample.hands[h].xyz);
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        EXPECT_NEAR(twice.hands[h].uvd.joints[j].x, sample.hands[h].uvd.joints[j].x, 1e-12);
        EXPECT_EQ(twice.hands[h].uvd.joints[j].y, sample.hands[h].uvd.joints[j].y);
        EXPECT_EQ(twice.hands[h].uvd.joints[j].z, sample.hands[h].uvd.joints[j].z);
      }
    }
  }
}

TEST(Flip, SwapsSidesAndMirrorsColumns) {
  const Dataset ds = generate_dataset(small_config(), kTopo);
  for (const auto& sample : ds.samples) {
    const SceneSample f = flip_sample(sample);
    for (std::size_t h = 0; h < sample.hands.size(); ++h) {
      EXPECT_EQ(f.hands[h].side, opposite(sample.hands[h].side));
      EXPECT_TRUE(f.hands[h].mirrored);
      EXPECT_EQ(f.hands[h].valid_xyz(), nullptr);
      EXPECT_EQ(f.hands[h].uvd.joints[4].x, 32.0 - sample.hands[h].uvd.joints[4].x);
    }
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        EXPECT_EQ(f.image.at(y, x, 0), sample.image.at(y, 31 - x, 1));
        EXPECT_EQ(f.image.at(y, x, 1), sample.image.at(y, 31 - x, 0));
        EXPECT_EQ(f.image.at(y, x, 2), sample.image.at(y, 31 - x, 2));
      }
    }
  }
}

TEST(Flip, AugmentFlipsAboutHalfTheTime) {
  const Dataset ds = generate_dataset(small_config(1), kTopo);
  Rng rng(3);
  int flipped = 0;
  for (int i = 0; i < 1000; ++i) {
    const SceneSample s = augment(ds.samples[0], rng);
    if (!s.hands.empty() && s.hands[0].mirrored) ++flipped;
  }
  EXPECT_GT(flipped, 430);
  EXPECT_LT(flipped, 570);
}

class DatasetIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() /
          ("setpose_ds_" +
           std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

TEST_F(DatasetIo, RoundTripIsBitwise) {
  GenConfig cfg = small_config(10);
  cfg.distractor = true;
  const Dataset ds = generate_dataset(cfg, kTopo, "val");
  write_dataset(dir, ds);
  EXPECT_EQ(read_dataset(dir), ds);
}

TEST_F(DatasetIo, TruncatedImageNamesTheFile) {
  write_dataset(dir, generate_dataset(small_config(3), kTopo));
  const auto img = dir / "images" / "000001.imgf";
  ASSERT_TRUE(std::filesystem::exists(img));
  std::filesystem::resize_file(img, std::filesystem::file_size(img) - 5);
  try {
    read_dataset(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("000001.imgf"), std::string::npos) << e.what();
  }
}

TEST_F(DatasetIo, UnknownVersionIsRejected) {
  write_dataset(dir, generate_dataset(small_config(3), kTopo));
  nlohmann::json meta;
  {
    std::ifstream in(dir / "meta.json");
    in >> meta;
  }
  meta["format_version"] = 99;
  {
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2);
  }
  EXPECT_THROW(read_dataset(dir), FormatError);
}

TEST_F(DatasetIo, MissingDirectoryIsAnIoError) {
  EXPECT_THROW(read_dataset(dir / "absent"), IoError);
}

TEST(Imgf, EncodeDecodeAndCorruption) {
  Image img(2, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = 0.05f * static_cast<float>(i);
  const std::string bytes = encode_imgf(img);
  EXPECT_EQ(bytes.substr(0, 4), "IMGF");
  EXPECT_EQ(decode_imgf(bytes, "x.imgf"), img);
  std::string bad = bytes;
  bad[0] = 'J';
  EXPECT_THROW(decode_imgf(bad, "x.imgf"), FormatError);
  EXPECT_THROW(decode_imgf(bytes + "z", "x.imgf"), FormatError);
}

}  // namespace
}  // namespace setpose
