#pragma once

// Single-site solvent response solver on a periodic cubic grid:
// solute potential build, Ornstein-Zernike relation in spectral space,
// KH/HNC closure, Picard iteration with mixing, and solvent charge
// density extraction.
//
// Transform normalization: the forward transform carries the cell volume
// dV and the inverse carries 1/(n^3 dV), so the continuum convolution
// theorem holds on the grid and the OZ relation reads h^ = c^/(1 - rho c^).

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"
#include "fmx/fft.hpp"
#include "fmx/fmo.hpp"
#include "fmx/grid.hpp"

namespace fmx::rism {

enum class Closure { KH, HNC };

// Single solvent site with an implicit neutralizing background.
struct SolventModel {
  double rho = 0.0334;  // bulk site density, 1/length^3
  double q_s = -0.4;    // site partial charge
  double beta = 1.0;    // inverse temperature, 1/energy
  double a_rep = 1.0;   // Gaussian repulsion amplitude, energy
  double w_rep = 1.0;   // repulsion width, length
};

inline void validate(const SolventModel& m) {
  if (m.rho < 0.0) throw ParameterError("solvent: rho must be >= 0");
  if (!(m.beta > 0.0)) throw ParameterError("solvent: beta must be > 0");
  if (m.a_rep < 0.0) throw ParameterError("solvent: a_rep must be >= 0");
  if (!(m.w_rep > 0.0)) throw ParameterError("solvent: w_rep must be > 0");
}

struct RismConfig {
  Closure closure = Closure::KH;
  double mixing = 0.5;        // Picard mixing in (0, 1]
  double tol = 1e-7;          // on max |dc| between iterations
  int max_iter = 500;
  double denom_guard = 1e-10; // lower bound on |1 - rho c^|
};

struct RismSolution {
  ScalarField h;  // total correlation; g = 1 + h
  ScalarField c;  // direct correlation
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
};

// u(r) = sum_i [ q_i q_s J(|r - r_i|) + a_rep exp(-|r - r_i|^2 / w_rep^2) ]
// evaluated by direct (non-periodic) distances; every atom must sit at
// least 3 w_rep away from each box face.
inline ScalarField build_solute_potential(const MolecularSystem& sys,
                                          const fmo::ChargeState& charges,
                                          const Grid3D& grid, const SolventModel& solvent,
                                          const CoulombParams& params) {
  validate(grid);
  validate(solvent);
  if (static_cast<int>(charges.q.size()) != sys.size())
    throw ParameterError("charge vector length does not match atom count");

  const double margin = 3.0 * solvent.w_rep;
  for (int i = 0; i < sys.size(); ++i) {
    const Vec3 d = sys.atoms[i].position - grid.origin;
    if (d.x < margin || d.y < margin || d.z < margin || d.x > grid.box_len - margin ||
        d.y > grid.box_len - margin || d.z > grid.box_len - margin)
      throw SpillError("atom " + std::to_string(i + 1) + " (" + sys.atoms[i].element +
                       ") is closer than 3*w_rep to a box face");
  }

  ScalarField u(grid);
  const double inv_w2 = 1.0 / (solvent.w_rep * solvent.w_rep);
  for (int i = 0; i < grid.n; ++i)
    for (int j = 0; j < grid.n; ++j)
      for (int k = 0; k < grid.n; ++k) {
        const Vec3 r = grid.point(i, j, k);
        double acc = 0.0;
        for (int a = 0; a < sys.size(); ++a) {
          const double d2 = (r - sys.atoms[a].position).norm2();
          acc += charges.q[a] * solvent.q_s *
                 coulomb_kernel(std::sqrt(d2), params);
          if (solvent.a_rep != 0.0) acc += solvent.a_rep * std::exp(-d2 * inv_w2);
        }
        u.at(i, j, k) = acc;
      }
  return u;
}

namespace detail {

inline double closure_apply(double d, Closure closure) {
  if (closure == Closure::KH && d > 0.0) return d;
  return std::expm1(d);
}

}  // namespace detail

// Picard iteration from c = 0:
//   c^ = F[c];  h^ = c^/(1 - rho c^);  t = F^-1[h^] - c;  d = -beta u + t;
//   h_new = closure(d);  c_new = h_new - t;  c <- (1-lambda) c + lambda c_new
// stopping on max|c_new - c_prev| < tol. The converged sweep is accepted
// unmixed, so the returned h = t + c is exactly a closure output (KH
// solutions have g = 1 + h >= 0 pointwise).
inline RismSolution solve_rism(const ScalarField& u, const SolventModel& solvent,
                               const RismConfig& cfg = {}) {
  validate(u);
  validate(solvent);
  if (!(cfg.mixing > 0.0) || cfg.mixing > 1.0)
    throw ParameterError("rism: mixing must be in (0, 1]");
  if (!(cfg.tol > 0.0)) throw ParameterError("rism: tol must be > 0");
  if (cfg.max_iter < 1) throw ParameterError("rism: max_iter must be >= 1");

  const Grid3D& grid = u.grid;
  const int n = grid.n;
  const size_t npts = grid.point_count();
  const double dv = grid.cell_volume();

  std::vector<double> c(npts, 0.0), t(npts, 0.0);
  std::vector<std::complex<double>> work(npts);
  std::vector<double> history;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    // t = F^-1[ c^ / (1 - rho c^) ] - c with physical normalization
    for (size_t p = 0; p < npts; ++p) work[p] = c[p] * dv;
    fft::forward3(work, n);
    for (size_t p = 0; p < npts; ++p) {
      const std::complex<double> denom = 1.0 - solvent.rho * work[p];
      if (std::abs(denom) < cfg.denom_guard)
        throw DivergenceError(
            "Ornstein-Zernike denominator below guard at iteration " +
            std::to_string(it) + "; reduce rho or the mixing parameter");
      work[p] /= denom;
    }
    fft::inverse3(work, n);
    for (size_t p = 0; p < npts; ++p) t[p] = work[p].real() / dv - c[p];

    double resid = 0.0;
    for (size_t p = 0; p < npts; ++p) {
      const double d = -solvent.beta * u.values[p] + t[p];
      if (cfg.closure == Closure::HNC && d > 690.0)
        throw ClosureOverflowError("exp overflow in HNC closure (d = " +
                                   std::to_string(d) + "); try the KH closure");
      const double h_new = detail::closure_apply(d, cfg.closure);
      const double c_new = h_new - t[p];
      resid = std::max(resid, std::abs(c_new - c[p]));
      work[p] = c_new;  // stash c_new in the real part
    }
    history.push_back(resid);

    if (resid < cfg.tol) {
      RismSolution sol;
      sol.h = ScalarField(grid);
      sol.c = ScalarField(grid);
      for (size_t p = 0; p < npts; ++p) {
        sol.c.values[p] = work[p].real();
        sol.h.values[p] = t[p] + work[p].real();
      }
      sol.iterations = it;
      sol.residual = resid;
      sol.residual_history = std::move(history);
      return sol;
    }
    for (size_t p = 0; p < npts; ++p)
      c[p] = (1.0 - cfg.mixing) * c[p] + cfg.mixing * work[p].real();
  }
  throw NonConvergenceError("rism solver did not converge in " +
                                std::to_string(cfg.max_iter) + " iterations",
                            std::move(history));
}

// Deviation of the solvent charge density from the neutral bulk:
// rho_c(r) = rho q_s h(r).
inline ScalarField solvent_charge_density(const RismSolution& sol,
                                          const SolventModel& solvent) {
  ScalarField out(sol.h.grid);
  for (size_t p = 0; p < out.values.size(); ++p)
    out.values[p] = solvent.rho * solvent.q_s * sol.h.values[p];
  return out;
}

// v_i = sum_cells rho_c(r_cell) dV J(|r_cell - r_i|) by direct summation.
inline std::vector<double> grid_potential_at_sites(const ScalarField& rho_c,
                                                   const std::vector<Vec3>& sites,
                                                   const CoulombParams& params) {
  validate(rho_c);
  const Grid3D& grid = rho_c.grid;
  for (size_t s = 0; s < sites.size(); ++s) {
    const Vec3 d = sites[s] - grid.origin;
    if (d.x < 0 || d.y < 0 || d.z < 0 || d.x > grid.box_len || d.y > grid.box_len ||
        d.z > grid.box_len)
      throw SpillError("site " + std::to_string(s + 1) + " lies outside the grid box");
  }
  std::vector<double> v(sites.size(), 0.0);
  const double dv = grid.cell_volume();
  for (int i = 0; i < grid.n; ++i)
    for (int j = 0; j < grid.n; ++j)
      for (int k = 0; k < grid.n; ++k) {
        const double rc = rho_c.at(i, j, k);
        if (rc == 0.0) continue;
        const Vec3 cell = grid.point(i, j, k);
        for (size_t s = 0; s < sites.size(); ++s)
          v[s] += rc * dv * coulomb_kernel(distance(cell, sites[s]), params);
      }
  return v;
}

}  // namespace fmx::rism
