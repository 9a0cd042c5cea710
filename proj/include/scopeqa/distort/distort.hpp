#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scopeqa/distort/types.hpp"
#include "scopeqa/media/clip.hpp"
#include "scopeqa/media/manifest.hpp"
#include "scopeqa/rng.hpp"

namespace scopeqa::distort {

using media::Frame;
using media::VideoClip;

struct DistortionParams {
  std::array<double, 4> white_noise_sigma = {0.02, 0.05, 0.10, 0.20};
  std::array<double, 4> defocus_sigma = {1.0, 2.0, 3.5, 5.5};
  std::array<double, 4> motion_length = {5, 9, 15, 25};
  std::array<double, 4> smoke_alpha = {0.15, 0.30, 0.55, 0.80};
  std::array<double, 4> illumination_strength = {0.3, 0.6, 1.0, 1.5};
  std::uint64_t seed = kDefaultSeed;

  double magnitude(DistortionType type, SeverityLevel level) const;
  // Throws unless every table is strictly increasing and in its valid range.
  void validate() const;
};

inline constexpr float kSmokeVeil = 0.8f;
inline constexpr double kSmokeDriftPerFrame = 1.5;
inline constexpr int kSmokeOctaves = 3;

Frame apply_white_noise(const Frame& frame, double sigma, Rng& rng);

// Normalized 1-D Gaussian taps, radius ceil(3 sigma). sigma 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);
Frame apply_defocus_blur(const Frame& frame, double sigma_blur);

struct KernelTap {
  int dy;
  int dx;
  double weight;
};

// Line of `length` pixels through the origin at `angle` radians (x right,
// y down), sampled at unit spacing and splatted bilinearly. Weights sum to 1;
// lengths below 1.5 give the single identity tap.
std::vector<KernelTap> motion_kernel(double length, double angle);
Frame apply_motion_blur(const Frame& frame, double length, double angle);

// Correlates each channel with sparse taps using replicate padding.
Frame convolve_sparse(const Frame& frame, std::span<const KernelTap> taps);

// Low-frequency map in [0, 1], row-major height x width.
struct SmokeField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;
};

// Fractal value noise sampled at an offset that moves by `drift` pixels per
// frame along `direction` radians.
SmokeField make_smoke_field(std::size_t width, std::size_t height, std::uint64_t seed,
                            std::size_t frame_index, double direction,
                            double drift = kSmokeDriftPerFrame);
Frame apply_smoke(const Frame& frame, double alpha, const SmokeField& field);

// Gain 1 + strength (0.5 - r), r the distance to the center (normalized
// coordinates of the frame) divided by the distance from the center to the
// farthest corner.
Frame apply_uneven_illumination(const Frame& frame, double strength, double cx = 0.5,
                                double cy = 0.5);

// Distorts every frame with the table value for (type, level). Per-clip
// randomness (motion angle, smoke drift, illumination center) is drawn once
// from `seed`; white noise is drawn fresh for every frame.
VideoClip distort_clip(const VideoClip& clip, DistortionType type, SeverityLevel level,
                       std::uint64_t seed, const DistortionParams& params = {});

struct SynthesisOptions {
  int threads = 1;
  std::string extension = ".ppm";
  bool write_references = true;  // also writes references under refs/<id>
};

// Emits |references| x 5 x 4 clips under out_dir/<ref>/<TYPE>-<LEVEL>/ and
// out_dir/manifest.json. Clip seeds derive from params.seed and the label.
media::DatasetManifest synthesize_dataset(const std::vector<VideoClip>& references,
                                          const std::filesystem::path& out_dir,
                                          const DistortionParams& params = {},
                                          const SynthesisOptions& options = {});

}  // namespace scopeqa::distort
