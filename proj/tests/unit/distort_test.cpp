#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <unistd.h>

#include "scopeqa/distort/distort.hpp"
#include "scopeqa/distort/noise.hpp"
#include "scopeqa/distort/scene.hpp"

namespace scopeqa::distort {
namespace {

namespace fs = std::filesystem;

Frame constant_frame(std::size_t w, std::size_t h, float v) { return Frame(w, h, v); }

Frame textured_frame(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Frame f(w, h);
  for (float& v : f.values()) v = u(rng);
  return f;
}

double mean(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s / double(v.size());
}

double stddev(std::span<const float> v) {
  const double m = mean(v);
  double s = 0.0;
  for (float x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

double mse(const Frame& a, const Frame& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.values()[i]) - double(b.values()[i]);
    s += d * d;
  }
  return s / double(a.size());
}

// Mean absolute 4-neighbour Laplacian over interior pixels.
double laplacian_energy(const Frame& f) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 1; y + 1 < f.height(); ++y)
      for (std::size_t x = 1; x + 1 < f.width(); ++x) {
        s += std::abs(4.0 * f.at(c, y, x) - f.at(c, y - 1, x) - f.at(c, y + 1, x) -
                      f.at(c, y, x - 1) - f.at(c, y, x + 1));
        ++n;
      }
  return s / double(n);
}

bool in_unit_range(const Frame& f) {
  for (float v : f.values())
    if (!(v >= 0.0f && v <= 1.0f)) return false;
  return true;
}

media::VideoClip small_clip(std::size_t frames = 4) {
  return generate_reference_clip(11, SceneSpec{48, 32, frames, 25.0}, "clip");
}

TEST(WhiteNoise, ZeroSigmaIsIdentity) {
  const Frame f = textured_frame(16, 8, 1);
  Rng rng(3);
  EXPECT_EQ(apply_white_noise(f, 0.0, rng), f);
}

TEST(WhiteNoise, SampleStdMatchesSigma) {
  const Frame f = constant_frame(400, 300, 0.5f);  // 360k samples
  Rng rng(5);
  const Frame out = apply_white_noise(f, 0.1, rng);
  const double s = stddev(out.values());
  EXPECT_GE(s, 0.095);
  EXPECT_LE(s, 0.105);
  EXPECT_NEAR(mean(out.values()), 0.5, 1e-3);
}

TEST(WhiteNoise, ClampingBiasesSaturatedFrames) {
  const Frame f = constant_frame(200, 200, 1.0f);
  Rng rng(9);
  const Frame out = apply_white_noise(f, 0.1, rng);
  EXPECT_LT(mean(out.values()), 1.0);
  EXPECT_TRUE(in_unit_range(out));
  // Half the samples clip to 1; the rest average 1 - sigma*sqrt(2/pi).
  EXPECT_NEAR(mean(out.values()), 1.0 - 0.5 * 0.1 * std::sqrt(2.0 / std::numbers::pi), 2e-3);
}

TEST(WhiteNoise, NegativeSigmaRejected) {
  Rng rng(1);
  EXPECT_THROW(apply_white_noise(constant_frame(2, 2, 0.5f), -0.1, rng), Error);
}

TEST(DefocusBlur, IdentityAndConstantInvariance) {
  const Frame f = textured_frame(20, 12, 2);
  EXPECT_EQ(apply_defocus_blur(f, 0.0), f);
  const Frame c = constant_frame(20, 12, 0.3f);
  for (double s : {0.5, 1.0, 3.5, 5.5}) EXPECT_EQ(apply_defocus_blur(c, s), c);
}

TEST(DefocusBlur, KernelRadiusAndNormalization) {
  for (double s : {0.3, 1.0, 2.0, 3.5, 5.5}) {
    const auto k = gaussian_kernel(s);
    EXPECT_EQ(k.size(), std::size_t(2 * std::ceil(3.0 * s) + 1));
    double sum = 0.0;
    for (double v : k) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    double sum2 = 0.0;
    for (double a : k)
      for (double b : k) sum2 += a * b;
    EXPECT_NEAR(sum2, 1.0, 1e-9);
  }
}

TEST(DefocusBlur, ImpulseResponseMatchesAnalyticPeak) {
  for (double s : {1.0, 2.0}) {
    Frame f(61, 61);
    f.at(0, 30, 30) = 1.0f;
    const Frame out = apply_defocus_blur(f, s);
    const long r = long(std::ceil(3.0 * s));
    double z = 0.0;
    for (long i = -r; i <= r; ++i) z += std::exp(-double(i * i) / (2 * s * s));
    const double peak = 1.0 / (z * z);
    EXPECT_NEAR(out.at(0, 30, 30), peak, 1e-6);
    EXPECT_NEAR(out.at(0, 30, 31), peak * std::exp(-1.0 / (2 * s * s)), 1e-6);
    double total = 0.0;
    for (float v : out.plane(0)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-5);
    EXPECT_EQ(out.at(1, 30, 30), 0.0f);
  }
}

TEST(MotionBlur, ZeroAndUnitLengthAreIdentity) {
  const Frame f = textured_frame(20, 12, 4);
  EXPECT_EQ(apply_motion_blur(f, 1.0, 0.7), f);
  EXPECT_EQ(apply_motion_blur(f, 0.0, 0.7), f);
  EXPECT_THROW(motion_kernel(-1.0, 0.0), Error);
  const Frame c = constant_frame(20, 12, 0.6f);
  for (double a : {0.0, 0.4, 1.2, 2.9}) {
    const Frame out = apply_motion_blur(c, 9.0, a);
    for (float v : out.values()) EXPECT_NEAR(v, 0.6f, 1e-6);
  }
}

TEST(MotionBlur, KernelsSumToOne) {
  for (double len : {2.0, 5.0, 9.0, 15.0, 25.0, 7.3})
    for (double a : {0.0, 0.3, 0.785398, 1.5707963, 2.5}) {
      double sum = 0.0;
      for (const auto& t : motion_kernel(len, a)) sum += t.weight;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(MotionBlur, HorizontalKernelIsBoxFilter) {
  const auto taps = motion_kernel(5.0, 0.0);
  ASSERT_EQ(taps.size(), 5u);
  for (const auto& t : taps) {
    EXPECT_EQ(t.dy, 0);
    EXPECT_NEAR(t.weight, 0.2, 1e-12);
  }
}

TEST(MotionBlur, VerticalEdgeSpreadsOverFiveColumns) {
  Frame f(40, 6);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 20; x < 40; ++x) f.at(c, y, x) = 1.0f;
  const Frame out = apply_motion_blur(f, 5.0, 0.0);
  // Oracle: 1-D box of width 5 applied to the step.
  for (std::size_t x = 0; x < 40; ++x) {
    const double expected = std::clamp((double(x) + 2.0 - 20.0 + 1.0) / 5.0, 0.0, 1.0);
    EXPECT_NEAR(out.at(0, 3, x), expected, 1e-6) << x;
  }
  for (std::size_t y = 0; y < 6; ++y) {
    double a = 0.0, b = 0.0;
    for (std::size_t x = 0; x < 40; ++x) {
      a += f.at(2, y, x);
      b += out.at(2, y, x);
    }
    EXPECT_NEAR(a, b, 1e-6);
  }
}

TEST(Smoke, BlendArithmetic) {
  const Frame f = constant_frame(8, 6, 0.2f);
  SmokeField ones{8, 6, std::vector<float>(48, 1.0f)};
  EXPECT_EQ(apply_smoke(f, 0.0, ones), f);
  const Frame veiled = apply_smoke(f, 1.0, ones);
  for (float v : veiled.values()) EXPECT_NEAR(v, 0.8f, 1e-7);
  const Frame half = apply_smoke(f, 0.5, ones);
  for (float v : half.values()) EXPECT_NEAR(v, 0.5f, 1e-7);
}

TEST(Smoke, FieldValidation) {
  const Frame f = constant_frame(8, 6, 0.2f);
  SmokeField wrong{6, 8, std::vector<float>(48, 1.0f)};
  try {
    apply_smoke(f, 0.5, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
  }
  SmokeField ones{8, 6, std::vector<float>(48, 1.0f)};
  EXPECT_THROW(apply_smoke(f, 1.5, ones), Error);
}

TEST(Smoke, FieldIsLowFrequencyAndDrifts) {
  const auto a = make_smoke_field(64, 48, 17, 0, 0.0);
  const auto b = make_smoke_field(64, 48, 17, 2, 0.0);  // shifted by 3 px
  float lo = 1.0f, hi = 0.0f;
  for (float v : a.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, 0.0f);
  EXPECT_LE(hi, 1.0f);
  EXPECT_GT(hi - lo, 0.3f);
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x + 3 < 64; ++x)
      EXPECT_NEAR(b.values[y * 64 + x], a.values[y * 64 + x + 3], 1e-6);
  double step = 0.0;
  for (std::size_t i = 0; i + 1 < a.values.size(); ++i)
    step = std::max(step, double(std::abs(a.values[i + 1] - a.values[i])) * ((i + 1) % 64 != 0));
  EXPECT_LT(step, 0.25);
}

TEST(Illumination, ClosedFormGains) {
  const Frame f = constant_frame(9, 7, 0.4f);
  EXPECT_EQ(apply_uneven_illumination(f, 0.0), f);
  const Frame out = apply_uneven_illumination(f, 1.0, 0.5, 0.5);
  EXPECT_NEAR(out.at(0, 3, 4), 0.4 * 1.5, 1e-6);
  EXPECT_NEAR(out.at(1, 0, 0), 0.2, 1e-6);
  EXPECT_NEAR(out.at(2, 6, 8), 0.2, 1e-6);
  const Frame bright = apply_uneven_illumination(constant_frame(9, 7, 0.9f), 1.0);
  EXPECT_EQ(bright.at(0, 3, 4), 1.0f);
  EXPECT_THROW(apply_uneven_illumination(f, -1.0), Error);
  EXPECT_THROW(apply_uneven_illumination(f, 1.0, 1.2, 0.5), Error);
}

TEST(Params, TablesStrictlyIncrease) {
  DistortionParams p;
  EXPECT_NO_THROW(p.validate());
  for (DistortionType t : kAllDistortions)
    for (std::size_t i = 1; i < 4; ++i)
      EXPECT_GT(p.magnitude(t, kAllLevels[i]), p.magnitude(t, kAllLevels[i - 1]));
  EXPECT_DOUBLE_EQ(p.magnitude(DistortionType::kMB, SeverityLevel::kEA), 25.0);
  p.smoke_alpha[2] = 0.1;
  EXPECT_THROW(p.validate(), Error);
}

TEST(DistortClip, DeterministicAndShapePreserving) {
  const auto clip = small_clip();
  for (DistortionType t : kAllDistortions)
    for (SeverityLevel l : kAllLevels) {
      const auto a = distort_clip(clip, t, l, 99);
      const auto b = distort_clip(clip, t, l, 99);
      EXPECT_EQ(a.frames, b.frames);
      ASSERT_EQ(a.frame_count(), clip.frame_count());
      EXPECT_EQ(a.width(), clip.width());
      EXPECT_EQ(a.height(), clip.height());
      for (const auto& f : a.frames) EXPECT_TRUE(in_unit_range(f));
    }
}

TEST(DistortClip, WhiteNoiseFreshPerFrame) {
  media::VideoClip clip;
  for (int i = 0; i < 3; ++i) clip.frames.push_back(constant_frame(16, 16, 0.5f));
  const auto out = distort_clip(clip, DistortionType::kWN, SeverityLevel::kVA, 1);
  EXPECT_NE(out.frames[0], out.frames[1]);
  EXPECT_NE(distort_clip(clip, DistortionType::kWN, SeverityLevel::kVA, 2).frames[0],
            out.frames[0]);
}

TEST(DistortClip, WhiteNoiseVarianceGrowsWithLevel) {
  media::VideoClip clip;
  clip.frames.push_back(constant_frame(128, 96, 0.5f));
  const auto hv = distort_clip(clip, DistortionType::kWN, SeverityLevel::kHV, 3);
  const auto ea = distort_clip(clip, DistortionType::kWN, SeverityLevel::kEA, 3);
  EXPECT_GT(stddev(ea.frames[0].values()), stddev(hv.frames[0].values()));
}

TEST(DistortClip, MonotoneSeverity) {
  const auto clip = generate_reference_clip(5, SceneSpec{128, 96, 2, 25.0}, "ref");
  const Frame& ref = clip.frames[0];
  double prev_mse = 0.0;
  for (SeverityLevel l : kAllLevels) {
    const double m = mse(distort_clip(clip, DistortionType::kWN, l, 8).frames[0], ref);
    EXPECT_GT(m, prev_mse);
    prev_mse = m;
  }
  for (DistortionType t : {DistortionType::kDB, DistortionType::kMB}) {
    double prev = laplacian_energy(ref);
    for (SeverityLevel l : kAllLevels) {
      const double e = laplacian_energy(distort_clip(clip, t, l, 8).frames[0]);
      EXPECT_LT(e, prev) << to_string(t) << " " << to_string(l);
      prev = e;
    }
  }
}

TEST(DistortClip, SmokeAndMotionCoherentWithinClip) {
  media::VideoClip clip;
  for (int i = 0; i < 3; ++i) clip.frames.push_back(constant_frame(32, 24, 0.2f));
  const auto sm = distort_clip(clip, DistortionType::kSM, SeverityLevel::kEA, 4);
  EXPECT_NE(sm.frames[0], sm.frames[1]);  // field drifts
  const auto sm2 = distort_clip(clip, DistortionType::kSM, SeverityLevel::kEA, 4);
  EXPECT_EQ(sm.frames, sm2.frames);
  // Constant input: the fixed per-clip motion kernel leaves every frame equal.
  const auto mb = distort_clip(clip, DistortionType::kMB, SeverityLevel::kEA, 4);
  EXPECT_EQ(mb.frames[0], mb.frames[2]);
}

class SynthDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("scopeqa_synth_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(SynthDir, EmitsTwentyClipsPerReference) {
  std::vector<media::VideoClip> refs;
  for (int r = 0; r < 3; ++r)
    refs.push_back(generate_reference_clip(r, SceneSpec{16, 12, 2, 25.0}, "r" + std::to_string(r)));
  SynthesisOptions opt;
  opt.threads = 2;
  const auto m = synthesize_dataset(refs, dir_, DistortionParams{}, opt);
  EXPECT_EQ(m.clip_count(), 60u);
  std::set<std::string> labels, paths;
  for (const auto& e : m.entries) {
    labels.insert(label_name(e.label()));
    paths.insert(e.clip_path);
    EXPECT_EQ(e.frame_count, 2u);
    EXPECT_TRUE(fs::exists(m.resolve(e) / "001.ppm"));
  }
  EXPECT_EQ(labels.size(), 20u);
  EXPECT_EQ(paths.size(), 60u);
  EXPECT_TRUE(fs::exists(dir_ / "refs" / "r1" / "000.ppm"));
  const auto loaded = media::load_manifest(dir_ / "manifest.json");
  EXPECT_EQ(loaded.clip_count(), 60u);
  const auto again = media::load_clip(loaded.resolve(loaded.entries[7]));
  EXPECT_EQ(again.frame_count(), 2u);
}

TEST_F(SynthDir, SingleReferenceCoversAllLabels) {
  const auto refs = std::vector{generate_reference_clip(1, SceneSpec{16, 12, 1, 25.0}, "solo")};
  const auto m = synthesize_dataset(refs, dir_);
  std::set<std::string> labels;
  for (const auto& e : m.entries) labels.insert(label_name(e.label()));
  EXPECT_EQ(labels.size(), 20u);
  EXPECT_EQ(m.clip_count(), 20u);
}

TEST_F(SynthDir, Errors) {
  EXPECT_THROW(synthesize_dataset({}, dir_), Error);
  fs::create_directories(dir_);
  std::ofstream(dir_ / "file") << "x";
  const auto refs = std::vector{generate_reference_clip(1, SceneSpec{16, 12, 1, 25.0}, "solo")};
  try {
    synthesize_dataset(refs, dir_ / "file" / "sub");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Scene, DeterministicAndAnimated) {
  const auto a = generate_reference_clip(4, SceneSpec{64, 36, 3, 25.0}, "a");
  const auto b = generate_reference_clip(4, SceneSpec{64, 36, 3, 25.0}, "a");
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_NE(a.frames[0], a.frames[2]);
  EXPECT_NE(generate_reference_clip(5, SceneSpec{64, 36, 1, 25.0}, "c").frames[0], a.frames[0]);
  EXPECT_NO_THROW(a.validate());
}

TEST(ValueNoise, RangeAndContinuity) {
  const ValueNoise n(8);
  for (int i = 0; i < 1000; ++i) {
    const double x = i * 0.173, y = i * 0.071;
    const double v = n.fractal(x, y, 10.0, 3);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(n.sample(3.0, 4.0), n.lattice(3, 4, 0));
  EXPECT_NEAR(n.sample(3.0 + 1e-9, 4.0), n.sample(3.0, 4.0), 1e-6);
}

}  // namespace
}  // namespace scopeqa::distort
