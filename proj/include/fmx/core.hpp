#pragma once

// Molecular data model, input parsers, fragmentation, and the softened
// Coulomb kernel shared by all physics modules. Everything here is immutable
// after construction and all operations are pure functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fmx/errors.hpp"

namespace fmx {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm2() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm2()); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// One atom of the model: position plus the electronegativity (chi) and
// hardness (eta) parameters that drive the charge solves.
struct Atom {
  std::string element;
  Vec3 position;     // model units, 1 unit = 1 angstrom unless converted
  double chi = 0.0;  // energy/charge
  double eta = 0.0;  // energy/charge^2, must be > 0
};

struct MolecularSystem {
  std::vector<Atom> atoms;
  std::string name;

  int size() const { return static_cast<int>(atoms.size()); }
};

// Checks the MolecularSystem invariants: at least one atom, eta > 0,
// finite positions, no two atoms closer than 1e-8.
inline void validate(const MolecularSystem& sys) {
  if (sys.atoms.empty()) throw ParameterError("system has no atoms");
  for (int i = 0; i < sys.size(); ++i) {
    const Atom& a = sys.atoms[i];
    if (!(a.eta > 0.0))
      throw ParameterError("atom " + std::to_string(i + 1) + ": eta must be > 0");
    if (!std::isfinite(a.position.x) || !std::isfinite(a.position.y) ||
        !std::isfinite(a.position.z))
      throw ParameterError("atom " + std::to_string(i + 1) + ": non-finite position");
  }
  for (int i = 0; i < sys.size(); ++i)
    for (int j = i + 1; j < sys.size(); ++j)
      if (distance(sys.atoms[i].position, sys.atoms[j].position) <= 1e-8)
        throw ParameterError("atoms " + std::to_string(i + 1) + " and " +
                             std::to_string(j + 1) + " are at identical positions");
}

// A fragment holds a sorted, unique list of 0-based atom indices and its
// formal charge. Names come from fragment files; auto-generated otherwise.
struct Fragment {
  int id = 0;
  std::vector<int> atom_indices;
  double formal_charge = 0.0;
  std::string name;
};

struct FragmentationScheme {
  std::vector<Fragment> fragments;
  double near_pair_cutoff = 8.0;  // length units

  int count() const { return static_cast<int>(fragments.size()); }
};

// Verifies that the fragments exactly partition [0, natoms).
inline void validate(const FragmentationScheme& scheme, const MolecularSystem& sys) {
  if (!(scheme.near_pair_cutoff > 0.0)) throw ParameterError("cutoff must be > 0");
  std::vector<int> seen(sys.size(), 0);
  std::vector<int> duplicates;
  for (const Fragment& f : scheme.fragments) {
    if (f.atom_indices.empty())
      throw ParameterError("fragment " + std::to_string(f.id) + " is empty");
    for (int idx : f.atom_indices) {
      if (idx < 0 || idx >= sys.size())
        throw IndexError("fragment " + std::to_string(f.id) + ": atom index " +
                         std::to_string(idx + 1) + " out of range");
      if (seen[idx]++) duplicates.push_back(idx);
    }
  }
  if (!duplicates.empty()) {
    std::string msg = "atoms assigned to more than one fragment:";
    for (int i : duplicates) msg += " " + std::to_string(i + 1);
    throw PartitionError(PartitionError::Kind::Duplicate, duplicates, msg);
  }
  std::vector<int> uncovered;
  for (int i = 0; i < sys.size(); ++i)
    if (!seen[i]) uncovered.push_back(i);
  if (!uncovered.empty()) {
    std::string msg = "atoms not covered by any fragment:";
    for (int i : uncovered) msg += " " + std::to_string(i + 1);
    throw PartitionError(PartitionError::Kind::Uncovered, uncovered, msg);
  }
}

// Softening length of the regularized Coulomb kernel.
struct CoulombParams {
  double gamma = 1.0;  // length units, > 0
};

// J(r) = erf(r/gamma)/r, with the analytic limit 2/(gamma*sqrt(pi)) at r = 0.
// Continuous, positive, monotonically non-increasing in r.
inline double coulomb_kernel(double r, const CoulombParams& params) {
  if (!std::isfinite(r) || r < 0.0)
    throw ParameterError("coulomb_kernel: r must be finite and >= 0");
  if (!std::isfinite(params.gamma) || params.gamma <= 0.0)
    throw ParameterError("coulomb_kernel: gamma must be finite and > 0");
  if (r == 0.0) return 2.0 / (params.gamma * std::sqrt(M_PI));
  return std::erf(r / params.gamma) / r;
}

inline double coulomb_kernel(const Vec3& a, const Vec3& b, const CoulombParams& params) {
  return coulomb_kernel(distance(a, b), params);
}

// Minimum interatomic distance between two fragments; the near/far metric.
inline double min_fragment_distance(const MolecularSystem& sys, const Fragment& a,
                                    const Fragment& b) {
  double best = std::numeric_limits<double>::infinity();
  for (int i : a.atom_indices)
    for (int j : b.atom_indices)
      best = std::min(best, distance(sys.atoms[i].position, sys.atoms[j].position));
  return best;
}

// ---------------------------------------------------------------------------
// Element parameter table
// ---------------------------------------------------------------------------

// chi/eta per element symbol; a "*" row supplies wildcard defaults.
class ElementTable {
 public:
  void set(const std::string& symbol, double chi, double eta) {
    if (!(eta > 0.0)) throw ParameterError("element '" + symbol + "': eta must be > 0");
    if (symbol == "*")
      wildcard_ = std::array<double, 2>{chi, eta};
    else
      rows_[symbol] = {chi, eta};
  }

  // Returns {chi, eta}; falls back to the wildcard row, throws without one.
  std::array<double, 2> lookup(const std::string& symbol) const {
    auto it = rows_.find(symbol);
    if (it != rows_.end()) return it->second;
    if (wildcard_) return *wildcard_;
    throw UnknownElementError(symbol);
  }

  bool has_wildcard() const { return wildcard_.has_value(); }

 private:
  std::map<std::string, std::array<double, 2>> rows_;
  std::optional<std::array<double, 2>> wildcard_;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline bool parse_double(const std::string& tok, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(tok, &pos);
    return pos == tok.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_int(const std::string& tok, int& out) {
  try {
    size_t pos = 0;
    out = std::stoi(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace detail

// Parses "Element chi eta" lines; '#' starts a comment; "*" is the wildcard.
inline ElementTable parse_element_table(const std::string& text) {
  ElementTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = detail::split_ws(detail::strip_comment(line));
    if (toks.empty()) continue;
    if (toks.size() != 3)
      throw FormatError("expected 'Element chi eta'", line_no);
    double chi, eta;
    if (!detail::parse_double(toks[1], chi) || !detail::parse_double(toks[2], eta))
      throw FormatError("unparsable chi/eta value", line_no);
    table.set(toks[0], chi, eta);
  }
  return table;
}

// ---------------------------------------------------------------------------
// XYZ input
// ---------------------------------------------------------------------------

// XYZ layout: line 1 atom count, line 2 comment/name, then one
// "Element x y z" line per atom. chi/eta are filled from `table`.
inline MolecularSystem parse_xyz(const std::string& text, const ElementTable& table) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty XYZ input", 1);
  int declared = 0;
  {
    auto toks = detail::split_ws(line);
    if (toks.size() != 1 || !detail::parse_int(toks[0], declared) || declared < 1)
      throw FormatError("first line must be a positive atom count", 1);
  }
  MolecularSystem sys;
  if (!std::getline(in, line))
    throw FormatError("missing comment line", 2);
  sys.name = line;

  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;  // blank trailing lines are tolerated
    if (sys.size() == declared)
      throw FormatError("more atom lines than the declared count of " +
                            std::to_string(declared),
                        line_no);
    if (toks.size() < 4)
      throw FormatError("expected 'Element x y z'", line_no);
    Atom a;
    a.element = toks[0];
    double xyz[3];
    for (int k = 0; k < 3; ++k)
      if (!detail::parse_double(toks[1 + k], xyz[k]))
        throw FormatError("unparsable coordinate '" + toks[1 + k] + "'", line_no);
    a.position = {xyz[0], xyz[1], xyz[2]};
    auto ce = table.lookup(a.element);
    a.chi = ce[0];
    a.eta = ce[1];
    sys.atoms.push_back(std::move(a));
  }
  if (sys.size() != declared)
    throw FormatError("header declares " + std::to_string(declared) + " atoms, body has " +
                      std::to_string(sys.size()));
  validate(sys);
  return sys;
}

// ---------------------------------------------------------------------------
// Fragment files
// ---------------------------------------------------------------------------

// One fragment per non-comment line: "name charge i1 i2 ... iN" with 1-based
// atom indices. A "cutoff <value>" directive sets the near-pair cutoff.
inline FragmentationScheme parse_fragments(const std::string& text,
                                           const MolecularSystem& sys) {
  FragmentationScheme scheme;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = detail::split_ws(detail::strip_comment(line));
    if (toks.empty()) continue;
    if (toks[0] == "cutoff") {
      if (toks.size() != 2 || !detail::parse_double(toks[1], scheme.near_pair_cutoff))
        throw FormatError("expected 'cutoff <value>'", line_no);
      continue;
    }
    if (toks.size() < 3)
      throw FormatError("expected 'name charge i1 i2 ...'", line_no);
    Fragment f;
    f.id = scheme.count();
    f.name = toks[0];
    if (!detail::parse_double(toks[1], f.formal_charge))
      throw FormatError("unparsable fragment charge '" + toks[1] + "'", line_no);
    for (size_t k = 2; k < toks.size(); ++k) {
      int idx;
      if (!detail::parse_int(toks[k], idx))
        throw FormatError("unparsable atom index '" + toks[k] + "'", line_no);
      if (idx < 1 || idx > sys.size())
        throw IndexError("atom index " + std::to_string(idx) + " out of range 1.." +
                         std::to_string(sys.size()) + " (line " +
                         std::to_string(line_no) + ")");
      f.atom_indices.push_back(idx - 1);
    }
    std::sort(f.atom_indices.begin(), f.atom_indices.end());
    scheme.fragments.push_back(std::move(f));
  }
  validate(scheme, sys);
  return scheme;
}

inline std::string serialize_fragments(const FragmentationScheme& scheme) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "cutoff %.12g\n", scheme.near_pair_cutoff);
  out << buf;
  for (const Fragment& f : scheme.fragments) {
    out << (f.name.empty() ? "f" + std::to_string(f.id + 1) : f.name);
    std::snprintf(buf, sizeof(buf), " %.12g", f.formal_charge);
    out << buf;
    for (int idx : f.atom_indices) out << ' ' << (idx + 1);
    out << '\n';
  }
  return out.str();
}

// Contiguous index blocks of size max_atoms (last block possibly smaller),
// formal charges zero. Deterministic.
inline FragmentationScheme auto_fragment(const MolecularSystem& sys, int max_atoms) {
  if (max_atoms < 1) throw ParameterError("auto_fragment: max_atoms must be >= 1");
  FragmentationScheme scheme;
  for (int start = 0; start < sys.size(); start += max_atoms) {
    Fragment f;
    f.id = scheme.count();
    f.name = "f" + std::to_string(f.id + 1);
    int end = std::min(start + max_atoms, sys.size());
    for (int i = start; i < end; ++i) f.atom_indices.push_back(i);
    scheme.fragments.push_back(std::move(f));
  }
  return scheme;
}

}  // namespace fmx
