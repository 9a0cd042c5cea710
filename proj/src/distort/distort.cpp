#include "scopeqa/distort/distort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "scopeqa/distort/noise.hpp"
#include "scopeqa/error.hpp"
#include "scopeqa/parallel.hpp"

namespace scopeqa::distort {

namespace fs = std::filesystem;

double DistortionParams::magnitude(DistortionType type, SeverityLevel level) const {
  const auto i = std::size_t(level_number(level) - 1);
  switch (type) {
    case DistortionType::kDB: return defocus_sigma[i];
    case DistortionType::kMB: return motion_length[i];
    case DistortionType::kWN: return white_noise_sigma[i];
    case DistortionType::kSM: return smoke_alpha[i];
    case DistortionType::kUI: return illumination_strength[i];
  }
  fail(ErrorCode::kPrecondition, "unknown distortion type");
}

void DistortionParams::validate() const {
  for (DistortionType t : kAllDistortions) {
    for (std::size_t i = 0; i < 4; ++i) {
      const double v = magnitude(t, kAllLevels[i]);
      require(std::isfinite(v) && v >= 0.0, ErrorCode::kPrecondition,
              std::string("negative or non-finite ") + std::string(to_string(t)) + " parameter");
      if (i > 0) {
        require(v > magnitude(t, kAllLevels[i - 1]), ErrorCode::kPrecondition,
                std::string(to_string(t)) + " severity table must strictly increase");
      }
    }
  }
  require(motion_length[0] >= 1.0, ErrorCode::kPrecondition, "motion length must be >= 1");
  require(smoke_alpha[3] <= 1.0, ErrorCode::kPrecondition, "smoke alpha must be <= 1");
}

namespace {

float clamp_unit(double v) { return float(std::clamp(v, 0.0, 1.0)); }

std::size_t clamp_index(long i, std::size_t n) {
  return std::size_t(std::clamp<long>(i, 0, long(n) - 1));
}

}  // namespace

Frame apply_white_noise(const Frame& frame, double sigma, Rng& rng) {
  require(sigma >= 0.0, ErrorCode::kPrecondition, "white-noise sigma must be >= 0");
  if (sigma == 0.0) return frame;
  std::normal_distribution<double> normal(0.0, sigma);
  Frame out = frame;
  for (float& v : out.values()) v = clamp_unit(double(v) + normal(rng));
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  require(sigma >= 0.0, ErrorCode::kPrecondition, "blur sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const auto radius = long(std::ceil(3.0 * sigma));
  std::vector<double> k(std::size_t(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    k[std::size_t(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Frame apply_defocus_blur(const Frame& frame, double sigma_blur) {
  const auto k = gaussian_kernel(sigma_blur);
  if (k.size() == 1) return frame;
  const long radius = long(k.size() / 2);
  const std::size_t w = frame.width(), h = frame.height();
  Frame out(w, h);
  std::vector<double> tmp(w * h);
  for (std::size_t c = 0; c < Frame::kChannels; ++c) {
    const auto src = frame.plane(c);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i)
          acc += k[std::size_t(i + radius)] * src[y * w + clamp_index(long(x) + i, w)];
        tmp[y * w + x] = acc;
      }
    auto dst = out.plane(c);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i)
          acc += k[std::size_t(i + radius)] * tmp[clamp_index(long(y) + i, h) * w + x];
        dst[y * w + x] = clamp_unit(acc);
      }
  }
  return out;
}

std::vector<KernelTap> motion_kernel(double length, double angle) {
  require(std::isfinite(length) && length >= 0.0, ErrorCode::kPrecondition, "motion length must be >= 0");
  const long n = std::max(1L, std::lround(length));
  if (n == 1) return {{0, 0, 1.0}};
  const double step = (length - 1.0) / double(n - 1);
  const double ca = std::cos(angle), sa = std::sin(angle);
  std::map<std::pair<int, int>, double> acc;
  for (long s = 0; s < n; ++s) {
    const double t = -(length - 1.0) / 2.0 + double(s) * step;
    const double px = t * ca, py = t * sa;
    const double x0 = std::floor(px), y0 = std::floor(py);
    const double fx = px - x0, fy = py - y0;
    const int ix = int(x0), iy = int(y0);
    acc[{iy, ix}] += (1.0 - fx) * (1.0 - fy);
    acc[{iy, ix + 1}] += fx * (1.0 - fy);
    acc[{iy + 1, ix}] += (1.0 - fx) * fy;
    acc[{iy + 1, ix + 1}] += fx * fy;
  }
  std::vector<KernelTap> taps;
  double sum = 0.0;
  for (const auto& [pos, wt] : acc) {
    if (wt > 1e-12) {
      taps.push_back({pos.first, pos.second, wt});
      sum += wt;
    }
  }
  for (auto& t : taps) t.weight /= sum;
  return taps;
}

Frame convolve_sparse(const Frame& frame, std::span<const KernelTap> taps) {
  const std::size_t w = frame.width(), h = frame.height();
  Frame out(w, h);
  for (std::size_t c = 0; c < Frame::kChannels; ++c) {
    const auto src = frame.plane(c);
    auto dst = out.plane(c);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const KernelTap& t : taps) {
          acc += t.weight *
                 src[clamp_index(long(y) + t.dy, h) * w + clamp_index(long(x) + t.dx, w)];
        }
        dst[y * w + x] = clamp_unit(acc);
      }
  }
  return out;
}

Frame apply_motion_blur(const Frame& frame, double length, double angle) {
  const auto taps = motion_kernel(length, angle);
  if (taps.size() == 1) return frame;
  return convolve_sparse(frame, taps);
}

SmokeField make_smoke_field(std::size_t width, std::size_t height, std::uint64_t seed,
                            std::size_t frame_index, double direction, double drift) {
  const ValueNoise noise(seed);
  const double ox = std::cos(direction) * drift * double(frame_index);
  const double oy = std::sin(direction) * drift * double(frame_index);
  const double cell = double(std::max(width, height)) / 2.0;
  SmokeField f{width, height, std::vector<float>(width * height)};
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double v = noise.fractal(double(x) + ox, double(y) + oy, cell, kSmokeOctaves);
      // Octave sums cluster around 0.5; stretch so the map spans [0, 1].
      f.values[y * width + x] = clamp_unit((v - 0.5) * 2.5 + 0.5);
    }
  return f;
}

Frame apply_smoke(const Frame& frame, double alpha, const SmokeField& field) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kPrecondition, "smoke alpha must be in [0, 1]");
  require(field.width == frame.width() && field.height == frame.height() &&
              field.values.size() == frame.plane_size(),
          ErrorCode::kShape, "smoke field dimensions differ from the frame");
  if (alpha == 0.0) return frame;
  Frame out = frame;
  for (std::size_t c = 0; c < Frame::kChannels; ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double f = field.values[i];
      require(f >= 0.0 && f <= 1.0, ErrorCode::kPrecondition, "smoke field outside [0, 1]");
      const double a = alpha * f;
      p[i] = clamp_unit((1.0 - a) * p[i] + a * kSmokeVeil);
    }
  }
  return out;
}

Frame apply_uneven_illumination(const Frame& frame, double strength, double cx, double cy) {
  require(strength >= 0.0, ErrorCode::kPrecondition, "illumination strength must be >= 0");
  require(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0, ErrorCode::kPrecondition,
          "illumination center must lie in [0, 1]^2");
  if (strength == 0.0) return frame;
  const std::size_t w = frame.width(), h = frame.height();
  const double px = cx * double(w - 1), py = cy * double(h - 1);
  const double fx = std::max(px, double(w - 1) - px), fy = std::max(py, double(h - 1) - py);
  const double rmax = std::hypot(fx, fy);
  Frame out = frame;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r = rmax > 0.0 ? std::hypot(double(x) - px, double(y) - py) / rmax : 0.0;
      const double g = 1.0 + strength * (0.5 - r);
      for (std::size_t c = 0; c < Frame::kChannels; ++c) {
        out.at(c, y, x) = clamp_unit(double(frame.at(c, y, x)) * g);
      }
    }
  return out;
}

VideoClip distort_clip(const VideoClip& clip, DistortionType type, SeverityLevel level,
                       std::uint64_t seed, const DistortionParams& params) {
  clip.validate();
  const double m = params.magnitude(type, level);
  Rng rng(seed);
  // Every per-clip draw happens regardless of type so streams stay aligned.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double motion_angle = unit(rng) * std::numbers::pi;
  const double smoke_direction = unit(rng) * 2.0 * std::numbers::pi;
  const std::uint64_t smoke_seed = rng();
  const double light_cx = 0.35 + 0.3 * unit(rng);
  const double light_cy = 0.35 + 0.3 * unit(rng);

  VideoClip out;
  out.id = clip.id + "_" + label_name({type, level});
  out.fps = clip.fps;
  out.source_ref = clip.id;
  out.frames.reserve(clip.frames.size());
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const Frame& f = clip.frames[i];
    switch (type) {
      case DistortionType::kWN: out.frames.push_back(apply_white_noise(f, m, rng)); break;
      case DistortionType::kDB: out.frames.push_back(apply_defocus_blur(f, m)); break;
      case DistortionType::kMB: out.frames.push_back(apply_motion_blur(f, m, motion_angle)); break;
      case DistortionType::kSM: {
        const auto field =
            make_smoke_field(f.width(), f.height(), smoke_seed, i, smoke_direction);
        out.frames.push_back(apply_smoke(f, m, field));
        break;
      }
      case DistortionType::kUI:
        out.frames.push_back(apply_uneven_illumination(f, m, light_cx, light_cy));
        break;
    }
  }
  return out;
}

media::DatasetManifest synthesize_dataset(const std::vector<VideoClip>& references,
                                          const fs::path& out_dir,
                                          const DistortionParams& params,
                                          const SynthesisOptions& options) {
  require(!references.empty(), ErrorCode::kPrecondition, "need at least one reference clip");
  params.validate();
  std::set<std::string> ids;
  for (const auto& r : references) {
    r.validate();
    require(!r.id.empty() && ids.insert(r.id).second, ErrorCode::kPrecondition,
            "reference ids must be unique and nonempty");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorCode::kIo,
          "cannot create output directory " + out_dir.string());

  constexpr std::size_t kLabels = 20;
  media::DatasetManifest manifest;
  manifest.base_dir = out_dir;
  manifest.entries.resize(references.size() * kLabels);
  parallel_for(manifest.entries.size(), options.threads, [&](std::size_t job) {
    const std::size_t r = job / kLabels;
    const DistortionType type = kAllDistortions[(job % kLabels) / 4];
    const SeverityLevel level = kAllLevels[job % 4];
    const std::uint64_t seed = derive_seed(
        params.seed, {r, std::uint64_t(type_index(type)), std::uint64_t(level_number(level))});
    const VideoClip clip = distort_clip(references[r], type, level, seed, params);
    const std::string rel = references[r].id + "/" + label_name({type, level});
    media::write_clip(clip, out_dir / rel, options.extension);
    media::ManifestEntry& e = manifest.entries[job];
    e.clip_path = rel;
    e.reference_id = references[r].id;
    e.distortion_type = type;
    e.severity_level = level;
    e.frame_count = clip.frame_count();
  });
  if (options.write_references) {
    parallel_for(references.size(), options.threads, [&](std::size_t r) {
      media::write_clip(references[r], out_dir / "refs" / references[r].id, options.extension);
    });
  }
  media::save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace scopeqa::distort
