#include "scopeqa/distort/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scopeqa/distort/noise.hpp"
#include "scopeqa/error.hpp"
#include "scopeqa/rng.hpp"

namespace scopeqa::distort {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Distance from p to segment ab.
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0.0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace

media::VideoClip generate_reference_clip(std::uint64_t seed, const SceneSpec& spec,
                                         const std::string& id) {
  require(spec.width >= 8 && spec.height >= 8, ErrorCode::kPrecondition,
          "scene must be at least 8x8");
  require(spec.frames >= 1 && spec.fps > 0.0, ErrorCode::kPrecondition,
          "scene needs >= 1 frame and fps > 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ValueNoise tissue(rng()), texture(rng()), vessels(rng()), glints(rng());

  const double scale = double(spec.height) / 72.0;
  const Rgb deep{0.50 + 0.10 * unit(rng), 0.10 + 0.06 * unit(rng), 0.10 + 0.05 * unit(rng)};
  const Rgb pink{0.82 + 0.10 * unit(rng), 0.42 + 0.12 * unit(rng), 0.38 + 0.10 * unit(rng)};
  const Rgb vessel{0.30, 0.04, 0.07};
  const double pan_dir = unit(rng) * 2.0 * std::numbers::pi;
  const double pan_speed = (2.5 + 2.0 * unit(rng)) * scale;
  const double origin_x = unit(rng) * 1000.0, origin_y = unit(rng) * 1000.0;

  // Instrument: enters from one border and its tip oscillates inside the view.
  const double entry_side = unit(rng);
  const double tool_phase = unit(rng) * 2.0 * std::numbers::pi;
  const double tool_width = (4.0 + 3.0 * unit(rng)) * scale;
  const double w = double(spec.width), h = double(spec.height);
  const double entry_x = entry_side < 0.5 ? 0.0 : w - 1.0;
  const double entry_y = h * (0.6 + 0.4 * unit(rng));

  media::VideoClip clip;
  clip.id = id;
  clip.fps = spec.fps;
  clip.source_ref = "procedural:" + std::to_string(seed);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double ox = origin_x + std::cos(pan_dir) * pan_speed * double(t);
    const double oy = origin_y + std::sin(pan_dir) * pan_speed * double(t);
    const double phase = tool_phase + 2.0 * std::numbers::pi * double(t) / 50.0;
    const double tip_x = w * (0.5 + 0.2 * std::sin(phase));
    const double tip_y = h * (0.45 + 0.15 * std::cos(1.3 * phase));

    media::Frame frame(spec.width, spec.height);
    for (std::size_t y = 0; y < spec.height; ++y)
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double u = (double(x) + ox) / scale, v = (double(y) + oy) / scale;
        const double base = smoothstep(0.25, 0.75, tissue.fractal(u, v, 40.0, 4));
        const double fine = texture.fractal(u, v, 8.0, 2);
        Rgb col = lerp(deep, pink, base);
        const double shade = 0.92 + 0.16 * fine;
        col = {col.r * shade, col.g * shade, col.b * shade};
        const double ridge = 1.0 - std::abs(2.0 * vessels.fractal(u, v, 28.0, 2) - 1.0);
        col = lerp(col, vessel, 0.85 * smoothstep(0.90, 0.97, ridge));
        const double glint = glints.fractal(u, v, 9.0, 1);
        const double spec_w = std::pow(smoothstep(0.78, 0.95, glint), 2.0);
        col = lerp(col, Rgb{1.0, 0.97, 0.95}, spec_w);

        const double d = segment_distance(double(x), double(y), entry_x, entry_y, tip_x, tip_y);
        if (d < tool_width) {
          const double across = d / tool_width;
          const double cyl = 0.45 + 0.45 * std::sqrt(1.0 - across * across);
          const double stripe = 0.25 * smoothstep(0.2, 0.0, std::abs(across - 0.35));
          const double edge = smoothstep(1.0, 0.8, across);
          const Rgb metal{0.55 * cyl + stripe, 0.57 * cyl + stripe, 0.60 * cyl + stripe};
          col = lerp(col, metal, edge);
        }

        const double rx = (double(x) - 0.5 * w) / (0.5 * w);
        const double ry = (double(y) - 0.5 * h) / (0.5 * h);
        const double vig = 1.0 - 0.35 * smoothstep(0.8, 1.4, std::hypot(rx, ry));
        frame.at(0, y, x) = float(std::clamp(col.r * vig, 0.0, 1.0));
        frame.at(1, y, x) = float(std::clamp(col.g * vig, 0.0, 1.0));
        frame.at(2, y, x) = float(std::clamp(col.b * vig, 0.0, 1.0));
      }
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

}  // namespace scopeqa::distort
