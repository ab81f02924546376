#include <catch2/catch.hpp>

#include "fmx/coupled.hpp"
#include "test_util.hpp"

using namespace fmx;
using namespace fmx::coupled;

namespace {

struct Toy {
  MolecularSystem sys;
  FragmentationScheme scheme;
};

Toy load_toy6() {
  Toy toy;
  ElementTable table = parse_element_table(testutil::read_data("elements.dat"));
  toy.sys = parse_xyz(testutil::read_data("toy6.xyz"), table);
  toy.scheme = parse_fragments(testutil::read_data("toy6.frag"), toy.sys);
  return toy;
}

CoupledConfig toy_config() {
  CoupledConfig cfg;
  cfg.grid = Grid3D{32, 16.0, {0, 0, 0}};
  // bundled toy runs on the screening branch: rho*beta*|q_s|*integral(J) < 1
  cfg.solvent.rho = 0.0015;
  return cfg;
}

}  // namespace

TEST_CASE("zero-density solvent decouples the loop") {
  Toy toy = load_toy6();
  CoupledConfig cfg = toy_config();
  cfg.solvent.rho = 0.0;

  mediator::Catalog catalog;
  CoupledReport report = couple_fmo_rism(toy.sys, toy.scheme, cfg, catalog);

  CHECK(report.outer_iterations == 2);
  CHECK(report.e_interaction == 0.0);
  CHECK(report.charge_residual.size() == 2);
  CHECK(report.charge_residual.back() < cfg.outer_tol);

  // identical to the gas-phase run
  auto v0 = fmo::ExternalPotential::zeros(toy.sys.size());
  fmo::Fmo2Result gas = fmo::fmo2_energy(toy.sys, toy.scheme, v0, cfg.coulomb, cfg.scc);
  CHECK(report.e_fmo2 == Approx(gas.report.e_fmo2).margin(1e-12));
  for (int i = 0; i < toy.sys.size(); ++i)
    CHECK(report.final_charges.q[i] == gas.charges.q[i]);

  // the catalog audit trail holds one version per key per outer iteration
  for (const char* key :
       {kKeySoluteCharges, kKeySolventDensity, kKeySolutePotential})
    CHECK(catalog.latest_version(key) == report.outer_iterations);
}

TEST_CASE("charged toy converges with solvent stabilization") {
  Toy toy = load_toy6();
  CoupledConfig cfg = toy_config();

  mediator::Catalog catalog;
  CoupledReport report = couple_fmo_rism(toy.sys, toy.scheme, cfg, catalog);

  CHECK(report.outer_iterations <= 50);
  CHECK(report.charge_residual.back() < 1e-6);
  CHECK(report.e_interaction < 0.0);
  CHECK(static_cast<int>(report.charge_residual.size()) == report.outer_iterations);

  for (const char* key :
       {kKeySoluteCharges, kKeySolventDensity, kKeySolutePotential})
    CHECK(catalog.latest_version(key) == report.outer_iterations);

  // exchanged data kinds are what the flow advertises
  CHECK(catalog.fetch(kKeySoluteCharges).quantity.kind ==
        mediator::QuantityKind::PointCharges);
  CHECK(catalog.fetch(kKeySolventDensity).quantity.kind ==
        mediator::QuantityKind::ChargeDensityGrid);
  CHECK(catalog.fetch(kKeySolutePotential).quantity.kind ==
        mediator::QuantityKind::PotentialAtSites);
}

TEST_CASE("outer iteration cap raises non-convergence") {
  Toy toy = load_toy6();
  CoupledConfig cfg = toy_config();
  cfg.outer_max = 1;

  mediator::Catalog catalog;
  try {
    couple_fmo_rism(toy.sys, toy.scheme, cfg, catalog);
    FAIL("expected NonConvergenceError");
  } catch (const NonConvergenceError& e) {
    CHECK(e.residual_history.size() == 1);
  }
}
