#pragma once

// The coupled outer loop: fragment charges -> solute potential on the grid
// -> solvent response -> induced potential back at the atoms, iterated to
// a fixed point with damping on the potential. Every exchanged dataset
// passes through the mediator catalog, so the catalog versions form an
// audit trail of the flow.

#include <cmath>
#include <string>
#include <vector>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"
#include "fmx/fmo.hpp"
#include "fmx/grid.hpp"
#include "fmx/mediator.hpp"
#include "fmx/rism.hpp"

namespace fmx::coupled {

struct CoupledConfig {
  double outer_tol = 1e-6;     // on max |dq| between outer iterations
  int outer_max = 50;
  double potential_mixing = 0.5;  // damping on the fed-back potential, (0, 1]
  Grid3D grid;
  rism::SolventModel solvent;
  rism::RismConfig rism;
  fmo::SccConfig scc;
  CoulombParams coulomb;
  double spread_width = 1.0;   // only used when exporting charges as a grid
};

// Catalog keys used for the three exchanged datasets.
inline constexpr const char* kKeySoluteCharges = "solute.charges";
inline constexpr const char* kKeySolventDensity = "solvent.charge_density";
inline constexpr const char* kKeySolutePotential = "solute.potential";

struct CoupledReport {
  int outer_iterations = 0;
  fmo::ChargeState final_charges;
  fmo::FmoEnergyReport fmo;        // from the final outer iteration
  double e_fmo2 = 0.0;
  double e_interaction = 0.0;      // sum_i q_i v_i at the final iterate
  std::vector<double> charge_residual;  // one entry per outer iteration
  rism::RismSolution rism;         // from the final outer iteration
};

inline CoupledReport couple_fmo_rism(const MolecularSystem& sys,
                                     const FragmentationScheme& scheme,
                                     const CoupledConfig& cfg, mediator::Catalog& catalog) {
  if (!(cfg.outer_tol > 0.0)) throw ParameterError("couple: outer_tol must be > 0");
  if (cfg.outer_max < 1) throw ParameterError("couple: outer_max must be >= 1");
  if (!(cfg.potential_mixing > 0.0) || cfg.potential_mixing > 1.0)
    throw ParameterError("couple: mixing must be in (0, 1]");
  validate(cfg.grid);

  std::vector<Vec3> sites(sys.size());
  for (int i = 0; i < sys.size(); ++i) sites[i] = sys.atoms[i].position;

  const mediator::Quantity q_charges{mediator::QuantityKind::PointCharges,
                                     mediator::LengthUnit::Angstrom};
  const mediator::Quantity q_density{mediator::QuantityKind::ChargeDensityGrid,
                                     mediator::LengthUnit::Angstrom};

  CoupledReport report;
  auto v = fmo::ExternalPotential::zeros(sys.size());
  std::vector<double> q_prev(sys.size(), 0.0);

  for (int outer = 1; outer <= cfg.outer_max; ++outer) {
    // (1) fragment solve under the current solvent potential
    fmo::Fmo2Result fmo_out = fmo::fmo2_energy(sys, scheme, v, cfg.coulomb, cfg.scc);
    mediator::SiteList charge_sites;
    charge_sites.positions = sites;
    charge_sites.values = fmo_out.charges.q;
    catalog.publish(kKeySoluteCharges, q_charges, charge_sites,
                    "fmo.outer" + std::to_string(outer));

    // (2) solvent response to the published charges
    ScalarField u = rism::build_solute_potential(sys, fmo_out.charges, cfg.grid,
                                                 cfg.solvent, cfg.coulomb);
    rism::RismSolution sol = rism::solve_rism(u, cfg.solvent, cfg.rism);
    ScalarField rho_c = rism::solvent_charge_density(sol, cfg.solvent);
    const int density_version = catalog.publish(kKeySolventDensity, q_density, rho_c,
                                                "rism.outer" + std::to_string(outer));

    // (3) induced potential back at the atom sites, through the catalog
    mediator::DataRecord density_rec = catalog.fetch(kKeySolventDensity, density_version);
    mediator::DataRecord pot_rec = mediator::grid_to_sites(density_rec, sites, cfg.coulomb);
    catalog.publish(kKeySolutePotential, pot_rec.quantity, pot_rec.payload,
                    pot_rec.provenance);
    const auto& v_new = std::get<mediator::SiteList>(pot_rec.payload).values;

    double resid = 0.0;
    for (int i = 0; i < sys.size(); ++i)
      resid = std::max(resid, std::abs(fmo_out.charges.q[i] - q_prev[i]));
    report.charge_residual.push_back(resid);
    q_prev = fmo_out.charges.q;

    if (resid < cfg.outer_tol) {
      report.outer_iterations = outer;
      report.final_charges = std::move(fmo_out.charges);
      report.fmo = std::move(fmo_out.report);
      report.e_fmo2 = report.fmo.e_fmo2;
      report.e_interaction = 0.0;
      for (int i = 0; i < sys.size(); ++i)
        report.e_interaction += report.final_charges.q[i] * v.v[i];
      report.rism = std::move(sol);
      return report;
    }

    // (4) damped potential update
    for (int i = 0; i < sys.size(); ++i)
      v.v[i] = (1.0 - cfg.potential_mixing) * v.v[i] + cfg.potential_mixing * v_new[i];
  }
  throw NonConvergenceError("coupled loop did not converge in " +
                                std::to_string(cfg.outer_max) + " outer iterations",
                            std::move(report.charge_residual));
}

}  // namespace fmx::coupled
