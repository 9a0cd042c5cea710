#pragma once

#include <cstdint>

namespace scopeqa::distort {

// Lattice value noise on the unbounded plane. Each integer lattice point
// carries a hashed uniform value in [0, 1]; values between lattice points are
// smoothstep-interpolated, so the result also lies in [0, 1].
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(seed) {}

  double lattice(std::int64_t ix, std::int64_t iy, std::uint32_t octave) const;
  double sample(double x, double y, std::uint32_t octave = 0) const;

  // Weighted octave sum normalized by the total weight. Octave o uses cell
  // size base_cell / 2^o and weight persistence^o.
  double fractal(double x, double y, double base_cell, int octaves,
                 double persistence = 0.5) const;

 private:
  std::uint64_t seed_;
};

}  // namespace scopeqa::distort
