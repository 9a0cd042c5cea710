#include "scopeqa/distort/noise.hpp"

#include <cmath>

#include "scopeqa/rng.hpp"

namespace scopeqa::distort {

double ValueNoise::lattice(std::int64_t ix, std::int64_t iy, std::uint32_t octave) const {
  const std::uint64_t h =
      derive_seed(seed_, {std::uint64_t(ix), std::uint64_t(iy), std::uint64_t(octave)});
  return double(h >> 11) * 0x1.0p-53;
}

double ValueNoise::sample(double x, double y, std::uint32_t octave) const {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const auto ix = std::int64_t(fx0), iy = std::int64_t(fy0);
  double tx = x - fx0, ty = y - fy0;
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const double a = lattice(ix, iy, octave), b = lattice(ix + 1, iy, octave);
  const double c = lattice(ix, iy + 1, octave), d = lattice(ix + 1, iy + 1, octave);
  const double top = a + (b - a) * tx;
  const double bottom = c + (d - c) * tx;
  return top + (bottom - top) * ty;
}

double ValueNoise::fractal(double x, double y, double base_cell, int octaves,
                           double persistence) const {
  double sum = 0.0, total = 0.0, weight = 1.0, cell = base_cell;
  for (int o = 0; o < octaves; ++o) {
    sum += weight * sample(x / cell, y / cell, std::uint32_t(o));
    total += weight;
    weight *= persistence;
    cell *= 0.5;
  }
  return total > 0.0 ? sum / total : 0.0;
}

}  // namespace scopeqa::distort
