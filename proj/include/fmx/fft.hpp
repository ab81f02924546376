#pragma once

// Iterative radix-2 complex FFT plus 3D wrappers for power-of-two cubic
// grids. Forward uses e^{-i k r}, inverse e^{+i k r} with the 1/N factor,
// so inverse(forward(x)) == x.

#include <complex>
#include <cstddef>
#include <vector>

#include "fmx/errors.hpp"

namespace fmx::fft {

using cplx = std::complex<double>;

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place radix-2 Cooley-Tukey on `data[0..n)`, sign = -1 forward, +1 inverse.
// The inverse does NOT divide by n; callers pick their normalization.
inline void transform_pow2(cplx* data, int n, int sign) {
  if (!is_power_of_two(n)) throw ParameterError("fft: length must be a power of two");
  // bit-reversal permutation
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / len;
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        cplx u = data[i + k];
        cplx v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

namespace detail {

// Applies the 1D transform along one axis of an n^3 cube stored z-fastest.
inline void transform_axis(std::vector<cplx>& a, int n, int axis, int sign) {
  std::vector<cplx> line(static_cast<size_t>(n));
  const size_t stride = axis == 2 ? 1 : (axis == 1 ? static_cast<size_t>(n)
                                                   : static_cast<size_t>(n) * n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      // base index of the line with the two non-transformed axes fixed
      size_t base;
      if (axis == 0)
        base = static_cast<size_t>(u) * n + v;
      else if (axis == 1)
        base = (static_cast<size_t>(u) * n) * n + v;
      else
        base = (static_cast<size_t>(u) * n + v) * n;
      for (int k = 0; k < n; ++k) line[k] = a[base + k * stride];
      transform_pow2(line.data(), n, sign);
      for (int k = 0; k < n; ++k) a[base + k * stride] = line[k];
    }
  }
}

}  // namespace detail

// Unnormalized forward 3D DFT of an n^3 cube (z-fastest layout), in place.
inline void forward3(std::vector<cplx>& a, int n) {
  for (int axis = 0; axis < 3; ++axis) detail::transform_axis(a, n, axis, -1);
}

// Inverse 3D DFT including the 1/n^3 factor, in place.
inline void inverse3(std::vector<cplx>& a, int n) {
  for (int axis = 0; axis < 3; ++axis) detail::transform_axis(a, n, axis, +1);
  const double scale = 1.0 / (static_cast<double>(n) * n * n);
  for (cplx& v : a) v *= scale;
}

}  // namespace fmx::fft
