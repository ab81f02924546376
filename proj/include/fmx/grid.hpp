#pragma once

// Periodic cubic grid and the scalar fields living on it, plus the
// volumetric text format used for all field files:
//   GRID n L ox oy oz
//   n^3 values, z fastest, 6 per line, scientific notation, 9 significant
//   digits (bit-stable at this precision).

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"

namespace fmx {

struct Grid3D {
  int n = 32;           // points per axis, power of two, >= 8
  double box_len = 16;  // L, length units
  Vec3 origin{0, 0, 0}; // box corner

  double spacing() const { return box_len / n; }
  double cell_volume() const { double d = spacing(); return d * d * d; }
  size_t point_count() const { return static_cast<size_t>(n) * n * n; }

  // Coordinates of grid point (i, j, k).
  Vec3 point(int i, int j, int k) const {
    double d = spacing();
    return {origin.x + i * d, origin.y + j * d, origin.z + k * d};
  }

  size_t index(int i, int j, int k) const {
    return (static_cast<size_t>(i) * n + j) * n + k;  // z fastest
  }

  bool operator==(const Grid3D& o) const {
    return n == o.n && box_len == o.box_len && origin.x == o.origin.x &&
           origin.y == o.origin.y && origin.z == o.origin.z;
  }
};

inline void validate(const Grid3D& g) {
  if (g.n < 8 || (g.n & (g.n - 1)) != 0)
    throw ParameterError("grid: n must be a power of two >= 8");
  if (!(g.box_len > 0.0)) throw ParameterError("grid: box length must be > 0");
}

struct ScalarField {
  Grid3D grid;
  std::vector<double> values;  // n^3, z fastest

  ScalarField() = default;
  explicit ScalarField(const Grid3D& g) : grid(g), values(g.point_count(), 0.0) {}

  double& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }
};

inline void validate(const ScalarField& f) {
  validate(f.grid);
  if (f.values.size() != f.grid.point_count())
    throw ParameterError("field: value count does not match grid");
  for (double v : f.values)
    if (!std::isfinite(v)) throw ParameterError("field: non-finite value");
}

inline std::string write_field(const ScalarField& f) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "GRID %d %.8e %.8e %.8e %.8e\n", f.grid.n,
                f.grid.box_len, f.grid.origin.x, f.grid.origin.y, f.grid.origin.z);
  out << buf;
  for (size_t i = 0; i < f.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.8e", f.values[i]);
    out << buf << ((i % 6 == 5 || i + 1 == f.values.size()) ? '\n' : ' ');
  }
  return out.str();
}

inline ScalarField read_field(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  if (!(in >> tag) || tag != "GRID") throw FormatError("expected GRID header", 1);
  Grid3D g;
  if (!(in >> g.n >> g.box_len >> g.origin.x >> g.origin.y >> g.origin.z))
    throw FormatError("unparsable GRID header", 1);
  validate(g);
  ScalarField f(g);
  for (size_t i = 0; i < f.values.size(); ++i)
    if (!(in >> f.values[i]))
      throw FormatError("field body ends after " + std::to_string(i) + " of " +
                        std::to_string(f.values.size()) + " values");
  double extra;
  if (in >> extra) throw FormatError("trailing values after field body");
  return f;
}

}  // namespace fmx
