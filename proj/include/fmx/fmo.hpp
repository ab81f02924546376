#pragma once

// The multi-layered fragment solver: embedded monomer/dimer constrained
// quadratic charge solves, the self-consistent-charge (SCC) sweep loop,
// FMO1/FMO2 energy assembly with a far-pair electrostatic approximation,
// and the global brute-force oracle it is verified against.
//
// Energy model, for an atom subset S with charges q:
//   E_int(S; q) = sum_{i in S} (chi_i q_i + 0.5 eta_i q_i^2)
//               + sum_{i<j in S} J(r_ij) q_i q_j
//   E_ext(S; q, v, env) = sum_{i in S} q_i (v_i + sum_{k not in S} q_k J(r_ik))
// Monomers minimize E_int + E_ext under a per-fragment charge constraint,
// dimers under a single combined constraint (intra-dimer charge transfer),
// the oracle under one global constraint.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"

namespace fmx::fmo {

// Per-atom partial charges; the quantity exchanged in coupling.
struct ChargeState {
  std::vector<double> q;
  int iteration_count = 0;
  double residual = 0.0;

  static ChargeState zeros(int n) {
    ChargeState s;
    s.q.assign(static_cast<size_t>(n), 0.0);
    return s;
  }
};

// Per-atom external potential, the channel by which solvent feedback enters.
struct ExternalPotential {
  std::vector<double> v;

  static ExternalPotential zeros(int n) {
    ExternalPotential p;
    p.v.assign(static_cast<size_t>(n), 0.0);
    return p;
  }
};

struct SccConfig {
  double tol = 1e-8;    // on max |dq| between consecutive sweeps
  int max_iter = 200;   // full sweeps
  double mixing = 1.0;  // in (0, 1]; 1 = plain update
};

struct PairEntry {
  enum class Kind { Near, Far };
  Kind kind;
  double value;  // near: dimer correction E'_IJ - E'_I - E'_J; far: W_IJ
};

struct FmoEnergyReport {
  double e_monomer_sum = 0.0;
  double e_pair_es_far = 0.0;
  double e_pair_corr_near = 0.0;
  double e_fmo1 = 0.0;
  double e_fmo2 = 0.0;
  std::map<std::pair<int, int>, PairEntry> per_pair;
};

struct MonomerResult {
  std::vector<double> q;  // ordered like the fragment's atom_indices
  double e_int = 0.0;
  double e_emb = 0.0;
};

struct DimerResult {
  std::vector<double> q;  // ordered like the merged sorted index list
  double e_int = 0.0;
};

// SCC failure carrying the last iterate so drivers can retry with smaller mixing.
struct SccNonConvergence : NonConvergenceError {
  ChargeState last_state;
  SccNonConvergence(const std::string& msg, std::vector<double> history, ChargeState st)
      : NonConvergenceError(msg, std::move(history)), last_state(std::move(st)) {}
};

namespace detail {

inline void check_sizes(const MolecularSystem& sys, const ChargeState& env,
                        const ExternalPotential& v) {
  if (static_cast<int>(env.q.size()) != sys.size())
    throw ParameterError("charge vector length does not match atom count");
  if (static_cast<int>(v.v.size()) != sys.size())
    throw ParameterError("external potential length does not match atom count");
  for (double x : env.q)
    if (!std::isfinite(x)) throw ParameterError("non-finite environment charge");
  for (double x : v.v)
    if (!std::isfinite(x)) throw ParameterError("non-finite external potential");
}

// Embedding potential at each atom of `unit` from all charges outside it,
// summed in ascending atom-index order so the result is independent of
// fragment enumeration order.
inline std::vector<double> embedding_potential(const MolecularSystem& sys,
                                               const std::vector<int>& unit,
                                               const std::vector<double>& env_q,
                                               const CoulombParams& params) {
  std::vector<char> inside(sys.size(), 0);
  for (int i : unit) inside[i] = 1;
  std::vector<double> vemb(unit.size(), 0.0);
  for (size_t a = 0; a < unit.size(); ++a) {
    const Vec3& ri = sys.atoms[unit[a]].position;
    double acc = 0.0;
    for (int k = 0; k < sys.size(); ++k) {
      if (inside[k] || env_q[k] == 0.0) continue;
      acc += env_q[k] * coulomb_kernel(ri, sys.atoms[k].position, params);
    }
    vemb[a] = acc;
  }
  return vemb;
}

// Solves the (m+1)x(m+1) symmetric KKT system
//   [ A  1 ] [q     ]   [ -(chi + v + vemb) ]
//   [ 1' 0 ] [lambda] = [  Q                ]
// with A_ii = eta_i and A_ij = J(r_ij), then projects the result exactly
// onto the constraint. Throws SingularSystemError when the solve is not
// trustworthy.
inline std::vector<double> solve_constrained(const MolecularSystem& sys,
                                             const std::vector<int>& unit,
                                             const std::vector<double>& rhs_linear,
                                             double total_charge,
                                             const CoulombParams& params,
                                             int fragment_id) {
  const int m = static_cast<int>(unit.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m + 1, m + 1);
  Eigen::VectorXd b(m + 1);
  for (int a = 0; a < m; ++a) {
    K(a, a) = sys.atoms[unit[a]].eta;
    for (int c = a + 1; c < m; ++c) {
      double J = coulomb_kernel(sys.atoms[unit[a]].position,
                                sys.atoms[unit[c]].position, params);
      K(a, c) = J;
      K(c, a) = J;
    }
    K(a, m) = 1.0;
    K(m, a) = 1.0;
    b(a) = -rhs_linear[a];
  }
  b(m) = total_charge;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd x = lu.solve(b);

  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>()) +
                       K.lpNorm<Eigen::Infinity>() * x.lpNorm<Eigen::Infinity>();
  const double resid = (K * x - b).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || !(resid <= 1e-8 * scale))
    throw SingularSystemError("singular or indefinite charge system" +
                                  (fragment_id >= 0
                                       ? " for fragment " + std::to_string(fragment_id)
                                       : std::string()),
                              fragment_id);

  std::vector<double> q(unit.size());
  double sum = 0.0;
  for (int a = 0; a < m; ++a) {
    q[a] = x(a);
    sum += q[a];
  }
  const double shift = (total_charge - sum) / m;
  for (double& qa : q) qa += shift;
  return q;
}

}  // namespace detail

// E_int over an atom subset; `q` is aligned with `indices`.
inline double internal_energy(const MolecularSystem& sys, const std::vector<int>& indices,
                              const std::vector<double>& q, const CoulombParams& params) {
  double e = 0.0;
  for (size_t a = 0; a < indices.size(); ++a) {
    const Atom& atom = sys.atoms[indices[a]];
    e += atom.chi * q[a] + 0.5 * atom.eta * q[a] * q[a];
    for (size_t c = a + 1; c < indices.size(); ++c)
      e += coulomb_kernel(atom.position, sys.atoms[indices[c]].position, params) * q[a] *
           q[c];
  }
  return e;
}

// Minimizes E_int(I) + E_ext(I) under sum(q_I) = Q_I. `env` supplies charges
// for every atom; entries inside the fragment are ignored.
inline MonomerResult solve_monomer(const MolecularSystem& sys,
                                   const FragmentationScheme& scheme, int fragment_id,
                                   const ChargeState& env, const ExternalPotential& v,
                                   const CoulombParams& params) {
  if (fragment_id < 0 || fragment_id >= scheme.count())
    throw IndexError("fragment id " + std::to_string(fragment_id) + " out of range");
  detail::check_sizes(sys, env, v);
  const Fragment& frag = scheme.fragments[fragment_id];
  auto vemb = detail::embedding_potential(sys, frag.atom_indices, env.q, params);

  std::vector<double> lin(frag.atom_indices.size());
  for (size_t a = 0; a < lin.size(); ++a)
    lin[a] = sys.atoms[frag.atom_indices[a]].chi + v.v[frag.atom_indices[a]] + vemb[a];

  MonomerResult res;
  res.q = detail::solve_constrained(sys, frag.atom_indices, lin, frag.formal_charge,
                                    params, fragment_id);
  res.e_int = internal_energy(sys, frag.atom_indices, res.q, params);
  for (size_t a = 0; a < res.q.size(); ++a)
    res.e_emb += res.q[a] * (v.v[frag.atom_indices[a]] + vemb[a]);
  return res;
}

// Dimer solve over I and J with a single combined charge constraint
// (intra-dimer charge transfer allowed); env excludes both fragments.
inline DimerResult solve_dimer(const MolecularSystem& sys,
                               const FragmentationScheme& scheme, int frag_i, int frag_j,
                               const ChargeState& env, const ExternalPotential& v,
                               const CoulombParams& params) {
  if (frag_i == frag_j) throw ParameterError("dimer needs two distinct fragments");
  for (int f : {frag_i, frag_j})
    if (f < 0 || f >= scheme.count())
      throw IndexError("fragment id " + std::to_string(f) + " out of range");
  detail::check_sizes(sys, env, v);
  const Fragment& fi = scheme.fragments[frag_i];
  const Fragment& fj = scheme.fragments[frag_j];

  std::vector<int> unit;
  unit.reserve(fi.atom_indices.size() + fj.atom_indices.size());
  std::merge(fi.atom_indices.begin(), fi.atom_indices.end(), fj.atom_indices.begin(),
             fj.atom_indices.end(), std::back_inserter(unit));

  auto vemb = detail::embedding_potential(sys, unit, env.q, params);
  std::vector<double> lin(unit.size());
  for (size_t a = 0; a < unit.size(); ++a)
    lin[a] = sys.atoms[unit[a]].chi + v.v[unit[a]] + vemb[a];

  DimerResult res;
  res.q = detail::solve_constrained(sys, unit, lin,
                                    fi.formal_charge + fj.formal_charge, params, -1);
  res.e_int = internal_energy(sys, unit, res.q, params);
  return res;
}

// Classical ES interaction between two fragments at the given charges:
// W_IJ = sum_{i in I, j in J} q_i q_j J(r_ij).
inline double es_pair_energy(const MolecularSystem& sys, const FragmentationScheme& scheme,
                             int frag_i, int frag_j, const ChargeState& charges,
                             const CoulombParams& params) {
  const Fragment& fi = scheme.fragments[frag_i];
  const Fragment& fj = scheme.fragments[frag_j];
  double w = 0.0;
  for (int i : fi.atom_indices)
    for (int j : fj.atom_indices)
      w += charges.q[i] * charges.q[j] *
           coulomb_kernel(sys.atoms[i].position, sys.atoms[j].position, params);
  return w;
}

// Jacobi SCC sweeps: every fragment is solved against the charges of the
// previous sweep, so the result is independent of fragment enumeration
// order. The starting point is one sweep against a zero-charge environment.
// Residual is max |dq| between consecutive sweep outputs, measured before
// mixing is applied.
inline ChargeState scc_loop(const MolecularSystem& sys, const FragmentationScheme& scheme,
                            const ExternalPotential& v, const CoulombParams& params,
                            const SccConfig& cfg = {}) {
  if (!(cfg.tol > 0.0)) throw ParameterError("scc: tol must be > 0");
  if (cfg.max_iter < 1) throw ParameterError("scc: max_iter must be >= 1");
  if (!(cfg.mixing > 0.0) || cfg.mixing > 1.0)
    throw ParameterError("scc: mixing must be in (0, 1]");
  validate(scheme, sys);

  auto sweep = [&](const ChargeState& env) {
    std::vector<double> out(sys.size(), 0.0);
    for (int f = 0; f < scheme.count(); ++f) {
      MonomerResult r = solve_monomer(sys, scheme, f, env, v, params);
      const auto& idx = scheme.fragments[f].atom_indices;
      for (size_t a = 0; a < idx.size(); ++a) out[idx[a]] = r.q[a];
    }
    return out;
  };

  ChargeState state = ChargeState::zeros(sys.size());
  state.q = sweep(state);  // uncoupled start: environment of zero charges

  std::vector<double> history;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    std::vector<double> fresh = sweep(state);
    double resid = 0.0;
    for (int i = 0; i < sys.size(); ++i)
      resid = std::max(resid, std::abs(fresh[i] - state.q[i]));
    history.push_back(resid);
    if (resid < cfg.tol) {
      state.q = std::move(fresh);  // accept the self-consistent sweep unmixed
      state.iteration_count = it;
      state.residual = resid;
      return state;
    }
    for (int i = 0; i < sys.size(); ++i)
      state.q[i] = (1.0 - cfg.mixing) * state.q[i] + cfg.mixing * fresh[i];
  }
  state.iteration_count = cfg.max_iter;
  state.residual = history.back();
  throw SccNonConvergence("scc loop did not converge in " +
                              std::to_string(cfg.max_iter) +
                              " sweeps (try smaller mixing)",
                          std::move(history), std::move(state));
}

struct Fmo2Result {
  FmoEnergyReport report;
  ChargeState charges;  // converged monomer charges
};

// Runs the SCC loop, classifies pairs near/far by minimum interatomic
// distance against the scheme cutoff, solves dimers for near pairs under
// the converged monomer embedding, and assembles
//   E_FMO1 = sum_I E'_I + sum_{I<J} W_IJ
//   E_FMO2 = sum_I E'_I + sum_near (E'_IJ - E'_I - E'_J) + sum_far W_IJ.
inline Fmo2Result fmo2_energy(const MolecularSystem& sys, const FragmentationScheme& scheme,
                              const ExternalPotential& v, const CoulombParams& params,
                              const SccConfig& cfg = {}) {
  Fmo2Result out;
  out.charges = scc_loop(sys, scheme, v, params, cfg);

  const int nf = scheme.count();
  std::vector<double> e_mono(nf);
  for (int f = 0; f < nf; ++f) {
    const auto& idx = scheme.fragments[f].atom_indices;
    std::vector<double> qf(idx.size());
    for (size_t a = 0; a < idx.size(); ++a) qf[a] = out.charges.q[idx[a]];
    e_mono[f] = internal_energy(sys, idx, qf, params);
    out.report.e_monomer_sum += e_mono[f];
  }

  double es_all_pairs = 0.0;
  for (int i = 0; i < nf; ++i) {
    for (int j = i + 1; j < nf; ++j) {
      const double w = es_pair_energy(sys, scheme, i, j, out.charges, params);
      es_all_pairs += w;
      const double dmin =
          min_fragment_distance(sys, scheme.fragments[i], scheme.fragments[j]);
      const int id_i = scheme.fragments[i].id;
      const int id_j = scheme.fragments[j].id;
      if (dmin <= scheme.near_pair_cutoff) {
        DimerResult d = solve_dimer(sys, scheme, i, j, out.charges, v, params);
        const double corr = d.e_int - e_mono[i] - e_mono[j];
        out.report.e_pair_corr_near += corr;
        out.report.per_pair[{id_i, id_j}] = {PairEntry::Kind::Near, corr};
      } else {
        out.report.e_pair_es_far += w;
        out.report.per_pair[{id_i, id_j}] = {PairEntry::Kind::Far, w};
      }
    }
  }
  out.report.e_fmo1 = out.report.e_monomer_sum + es_all_pairs;
  out.report.e_fmo2 =
      out.report.e_monomer_sum + out.report.e_pair_corr_near + out.report.e_pair_es_far;
  return out;
}

struct OracleResult {
  double energy = 0.0;  // min of E_int + sum q_i v_i on the feasible set
  ChargeState charges;
};

// Brute-force reference: one dense KKT solve for the whole system under a
// single global charge constraint. Guarded to 2000 atoms.
inline OracleResult oracle_energy(const MolecularSystem& sys,
                                  const FragmentationScheme& scheme,
                                  const ExternalPotential& v,
                                  const CoulombParams& params) {
  constexpr int kMaxAtoms = 2000;
  if (sys.size() > kMaxAtoms)
    throw SizeGuardError("oracle limited to " + std::to_string(kMaxAtoms) + " atoms, got " +
                         std::to_string(sys.size()));
  validate(scheme, sys);
  ChargeState env = ChargeState::zeros(sys.size());
  detail::check_sizes(sys, env, v);

  double q_total = 0.0;
  for (const Fragment& f : scheme.fragments) q_total += f.formal_charge;

  std::vector<int> all(sys.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> lin(sys.size());
  for (int i = 0; i < sys.size(); ++i) lin[i] = sys.atoms[i].chi + v.v[i];

  OracleResult res;
  res.charges.q = detail::solve_constrained(sys, all, lin, q_total, params, -1);
  res.charges.iteration_count = 1;
  res.energy = internal_energy(sys, all, res.charges.q, params);
  for (int i = 0; i < sys.size(); ++i) res.energy += res.charges.q[i] * v.v[i];
  return res;
}

}  // namespace fmx::fmo
