#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <functional>
#include <set>
#include <unistd.h>

#include "scopeqa/media/clip.hpp"
#include "scopeqa/media/frame.hpp"
#include "scopeqa/media/manifest.hpp"

namespace scopeqa::media {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("scopeqa_media_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_raw_ppm(const fs::path& p, std::size_t w, std::size_t h, std::uint8_t value) {
  std::ofstream out(p, std::ios::binary);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < w * h * 3; ++i) out.put(char(value));
}

std::vector<std::uint8_t> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

TEST(LoadFrame, BlackWhiteAndMidGray) {
  TempDir dir;
  write_raw_ppm(dir.path() / "black.ppm", 2, 2, 0);
  write_raw_ppm(dir.path() / "white.ppm", 2, 2, 255);
  write_raw_ppm(dir.path() / "gray.ppm", 2, 2, 128);
  const Frame black = load_frame(dir.path() / "black.ppm");
  const Frame white = load_frame(dir.path() / "white.ppm");
  const Frame gray = load_frame(dir.path() / "gray.ppm");
  ASSERT_EQ(black.size(), 12u);
  for (float v : black.values()) EXPECT_EQ(v, 0.0f);
  for (float v : white.values()) EXPECT_EQ(v, 1.0f);
  for (float v : gray.values()) EXPECT_NEAR(v, 128.0 / 255.0, 1e-7);
}

TEST(LoadFrame, PlanarLayout) {
  TempDir dir;
  std::ofstream out(dir.path() / "px.ppm", std::ios::binary);
  out << "P6\n2 1\n255\n";
  const std::uint8_t px[6] = {10, 20, 30, 40, 50, 60};
  out.write(reinterpret_cast<const char*>(px), 6);
  out.close();
  const Frame f = load_frame(dir.path() / "px.ppm");
  EXPECT_FLOAT_EQ(f.at(0, 0, 0), 10 / 255.0f);
  EXPECT_FLOAT_EQ(f.at(1, 0, 0), 20 / 255.0f);
  EXPECT_FLOAT_EQ(f.at(2, 0, 1), 60 / 255.0f);
}

TEST(LoadFrame, Errors) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { load_frame(dir.path() / "missing.ppm"); }), ErrorCode::kIo);
  std::ofstream(dir.path() / "junk.ppm") << "hello";
  EXPECT_EQ(code_of([&] { load_frame(dir.path() / "junk.ppm"); }), ErrorCode::kIo);
  std::ofstream(dir.path() / "gray.pgm") << "P5\n1 1\n255\n\x7f";
  EXPECT_EQ(code_of([&] { load_frame(dir.path() / "gray.pgm"); }), ErrorCode::kShape);
  std::ofstream(dir.path() / "short.ppm") << "P6\n4 4\n255\nabc";
  EXPECT_EQ(code_of([&] { load_frame(dir.path() / "short.ppm"); }), ErrorCode::kIo);
}

TEST(Frame, RejectsOutOfRangeValues) {
  EXPECT_THROW(Frame(1, 1, std::vector<float>{0.0f, 1.5f, 0.0f}), Error);
  EXPECT_THROW(Frame(2, 1, std::vector<float>{0.0f, 0.5f, 0.0f}), Error);
}

TEST(Frame, PpmRoundTripIsBitIdentical) {
  TempDir dir;
  std::mt19937 rng(7);
  std::ofstream out(dir.path() / "a.ppm", std::ios::binary);
  out << "P6\n17 9\n255\n";
  for (int i = 0; i < 17 * 9 * 3; ++i) out.put(char(rng() & 0xff));
  out.close();
  write_frame(load_frame(dir.path() / "a.ppm"), dir.path() / "b.ppm");
  EXPECT_EQ(read_all(dir.path() / "a.ppm"), read_all(dir.path() / "b.ppm"));
}

TEST(Frame, PngRoundTripPreservesPixels) {
  TempDir dir;
  Frame f(5, 3);
  for (std::size_t i = 0; i < f.size(); ++i) f.values()[i] = from_u8(std::uint8_t(i * 13));
  write_frame(f, dir.path() / "f.png");
  EXPECT_EQ(load_frame(dir.path() / "f.png"), f);
}

TEST(Frame, EightBitBoundary) {
  for (int q = 0; q < 256; ++q) EXPECT_EQ(to_u8(from_u8(std::uint8_t(q))), q);
  EXPECT_EQ(to_u8(0.5f / 255.0f), 1);  // round half up
  EXPECT_EQ(to_u8(-1.0f), 0);
  EXPECT_EQ(to_u8(2.0f), 255);
}

TEST(Frame, CropAndFlip) {
  Frame f(4, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x) f.at(1, y, x) = float(y * 4 + x) / 16.0f;
  const Frame c = center_crop(f, 2, 1);
  EXPECT_EQ(c.width(), 2u);
  EXPECT_FLOAT_EQ(c.at(1, 0, 0), 5.0f / 16.0f);
  const Frame m = flip_horizontal(f);
  EXPECT_FLOAT_EQ(m.at(1, 2, 0), 11.0f / 16.0f);
  EXPECT_EQ(flip_horizontal(m), f);
  EXPECT_THROW(crop(f, 3, 0, 2, 1), Error);
}

TEST(LoadClip, LexicographicOrder) {
  TempDir dir;
  for (int i = 9; i >= 0; --i) {
    char name[16];
    std::snprintf(name, sizeof(name), "%03d.ppm", i);
    write_raw_ppm(dir.path() / name, 3, 2, std::uint8_t(i * 20));
  }
  const VideoClip clip = load_clip(dir.path());
  ASSERT_EQ(clip.frame_count(), 10u);
  EXPECT_EQ(clip.fps, 25.0);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(to_u8(clip.frames[i].at(0, 0, 0)), i * 20);
}

TEST(LoadClip, PngFramesInOrder) {
  TempDir dir;
  VideoClip src;
  for (int i = 0; i < 10; ++i) src.frames.emplace_back(4, 4, from_u8(std::uint8_t(i)));
  write_clip(src, dir.path(), ".png");
  EXPECT_TRUE(fs::exists(dir.path() / "000.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "009.png"));
  const VideoClip clip = load_clip(dir.path(), 25.0, 3);
  EXPECT_EQ(clip.frames, src.frames);
}

TEST(LoadClip, FullResolutionFrame) {
  TempDir dir;
  write_raw_ppm(dir.path() / "000.ppm", 512, 288, 90);
  const VideoClip clip = load_clip(dir.path());
  EXPECT_EQ(clip.width(), 512u);
  EXPECT_EQ(clip.height(), 288u);
}

TEST(LoadClip, MixedDimensionsAndEmpty) {
  TempDir dir;
  fs::create_directories(dir.path() / "mixed");
  write_frame(Frame(64, 64), dir.path() / "mixed" / "000.png");
  write_frame(Frame(32, 32), dir.path() / "mixed" / "001.png");
  EXPECT_EQ(code_of([&] { load_clip(dir.path() / "mixed"); }), ErrorCode::kShape);
  fs::create_directories(dir.path() / "empty");
  EXPECT_EQ(code_of([&] { load_clip(dir.path() / "empty"); }), ErrorCode::kIo);
}

TEST(SampleFrames, UniformStride) {
  const auto idx = sample_indices(250, 25);
  ASSERT_EQ(idx.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(idx[i], i * 10);
  for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_LT(idx[i - 1], idx[i]);
}

TEST(SampleFrames, PaddingAndIdentity) {
  VideoClip one;
  one.frames.emplace_back(2, 2, 0.25f);
  const auto padded = sample_frames(one, 4);
  ASSERT_EQ(padded.size(), 4u);
  for (const Frame& f : padded) EXPECT_EQ(f, one.frames[0]);

  VideoClip ten;
  for (int i = 0; i < 10; ++i) ten.frames.emplace_back(2, 2, float(i) / 10.0f);
  EXPECT_EQ(sample_frames(ten, 10), ten.frames);
  EXPECT_THROW(sample_indices(10, 0), Error);
}

TEST(SampleFrames, IndicesMonotoneAndInBounds) {
  for (std::size_t n = 1; n < 60; n += 3) {
    for (std::size_t nf = 1; nf < 40; nf += 4) {
      const auto idx = sample_indices(n, nf);
      ASSERT_EQ(idx.size(), nf);
      for (std::size_t i = 0; i < nf; ++i) {
        EXPECT_LT(idx[i], n);
        if (i) {
          EXPECT_LE(idx[i - 1], idx[i]);
        }
      }
    }
  }
}

TEST(LoadClipSampled, MatchesFullLoadThenSample) {
  TempDir dir;
  VideoClip src;
  for (int i = 0; i < 7; ++i) src.frames.emplace_back(3, 3, from_u8(std::uint8_t(i * 30)));
  write_clip(src, dir.path());
  EXPECT_EQ(load_clip_sampled(dir.path(), 4).frames, sample_frames(load_clip(dir.path()), 4));
  EXPECT_EQ(load_clip_sampled(dir.path(), 12).frames, sample_frames(load_clip(dir.path()), 12));
}

DatasetManifest toy_manifest(std::size_t refs) {
  DatasetManifest m;
  for (std::size_t r = 0; r < refs; ++r)
    for (DistortionType t : kAllDistortions)
      for (SeverityLevel l : kAllLevels) {
        ManifestEntry e;
        e.reference_id = "ref" + std::to_string(r);
        e.distortion_type = t;
        e.severity_level = l;
        e.clip_path = e.reference_id + "/" + label_name({t, l});
        e.frame_count = 25;
        m.entries.push_back(e);
      }
  return m;
}

std::size_t count(const DatasetManifest& m, Split s) {
  return std::size_t(std::count_if(m.entries.begin(), m.entries.end(),
                                   [&](const ManifestEntry& e) { return e.split == s; }));
}

TEST(MakeSplit, PerClipEightyTwenty) {
  const auto m = make_split(toy_manifest(10), SplitSpec{});
  EXPECT_EQ(count(m, Split::kTrain), 160u);
  EXPECT_EQ(count(m, Split::kTest), 40u);
  // Stratification keeps every label represented on the training side.
  std::set<std::string> train_labels;
  for (const auto& e : m.entries)
    if (e.split == Split::kTrain) train_labels.insert(label_name(e.label()));
  EXPECT_EQ(train_labels.size(), 20u);
}

TEST(MakeSplit, PerClipOddSizes) {
  const auto m = make_split(toy_manifest(3), SplitSpec{});
  EXPECT_EQ(count(m, Split::kTrain), 48u);
  EXPECT_EQ(count(m, Split::kTest), 12u);
}

TEST(MakeSplit, ContentDisjoint) {
  SplitSpec spec;
  spec.granularity = SplitGranularity::kContentDisjoint;
  const auto m = make_split(toy_manifest(10), spec);
  std::set<std::string> train_refs, test_refs;
  for (const auto& e : m.entries) {
    (e.split == Split::kTrain ? train_refs : test_refs).insert(e.reference_id);
  }
  EXPECT_EQ(train_refs.size(), 8u);
  EXPECT_EQ(test_refs.size(), 2u);
  for (const auto& r : train_refs) EXPECT_EQ(test_refs.count(r), 0u);
}

TEST(MakeSplit, DeterministicPartition) {
  for (auto g : {SplitGranularity::kPerClip, SplitGranularity::kContentDisjoint}) {
    SplitSpec spec;
    spec.granularity = g;
    spec.seed = 1234;
    const auto a = make_split(toy_manifest(4), spec);
    const auto b = make_split(toy_manifest(4), spec);
    ASSERT_EQ(a.entries.size(), 80u);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      EXPECT_EQ(a.entries[i].split, b.entries[i].split);
      EXPECT_TRUE(a.entries[i].split.has_value());
    }
    EXPECT_EQ(a.subset(Split::kTrain).clip_count() + a.subset(Split::kTest).clip_count(), 80u);
  }
}

TEST(MakeSplit, Errors) {
  SplitSpec spec;
  spec.granularity = SplitGranularity::kContentDisjoint;
  EXPECT_EQ(code_of([&] { make_split(toy_manifest(1), spec); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([&] { make_split(DatasetManifest{}, SplitSpec{}); }), ErrorCode::kPrecondition);
  spec = SplitSpec{};
  spec.train_fraction = 1.0;
  EXPECT_EQ(code_of([&] { make_split(toy_manifest(1), spec); }), ErrorCode::kPrecondition);
}

TEST(Manifest, JsonRoundTrip) {
  TempDir dir;
  auto m = make_split(toy_manifest(2), SplitSpec{});
  m.entries[3].mos = 72.5;
  save_manifest(m, dir.path() / "manifest.json");
  const auto back = load_manifest(dir.path() / "manifest.json");
  ASSERT_EQ(back.entries.size(), m.entries.size());
  EXPECT_EQ(back.base_dir, dir.path());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].clip_path, m.entries[i].clip_path);
    EXPECT_EQ(back.entries[i].label(), m.entries[i].label());
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
    EXPECT_EQ(back.entries[i].mos, m.entries[i].mos);
    EXPECT_EQ(back.entries[i].frame_count, 25u);
  }
  EXPECT_EQ(back.resolve(back.entries[0]), dir.path() / back.entries[0].clip_path);
  EXPECT_FALSE(back.all_have_mos());
}

TEST(Manifest, RejectsBadInput) {
  EXPECT_EQ(code_of([] { manifest_from_json("{", "."); }), ErrorCode::kIo);
  EXPECT_EQ(code_of([] { manifest_from_json("{}", "."); }), ErrorCode::kIo);
  EXPECT_EQ(code_of([] {
              manifest_from_json(
                  R"([{"clip_path":"a","reference_id":"r","distortion_type":"XX","severity_level":1}])",
                  ".");
            }),
            ErrorCode::kIo);
  EXPECT_EQ(code_of([] {
              manifest_from_json(
                  R"([{"clip_path":"a","reference_id":"r","distortion_type":"WN","severity_level":1},)"
                  R"({"clip_path":"a","reference_id":"r","distortion_type":"DB","severity_level":2}])",
                  ".");
            }),
            ErrorCode::kPrecondition);
}

}  // namespace
}  // namespace scopeqa::media
