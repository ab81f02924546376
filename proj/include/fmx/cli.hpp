#pragma once

// Command-line surface: gas-phase fragment runs, solvent solves, the
// coupled outer loop, workflow simulation, and mediator transforms.
// Batch in, files out. Exit codes: 0 success, 1 usage or parameter error,
// 2 numerical non-convergence, 3 I/O or format error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmx/core.hpp"
#include "fmx/coupled.hpp"
#include "fmx/errors.hpp"
#include "fmx/fmo.hpp"
#include "fmx/grid.hpp"
#include "fmx/mediator.hpp"
#include "fmx/rism.hpp"
#include "fmx/workflow.hpp"

namespace fmx::cli {

namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

inline std::string write_report_csv(const fmo::Fmo2Result& result) {
  std::ostringstream out;
  char buf[160];
  out << "pair,kind,value\n";
  for (const auto& [pair, entry] : result.report.per_pair) {
    std::snprintf(buf, sizeof(buf), "%d-%d,%s,%.12e\n", pair.first, pair.second,
                  entry.kind == fmo::PairEntry::Kind::Near ? "near" : "far", entry.value);
    out << buf;
  }
  out << "\nkey,value\n";
  auto kv = [&](const char* key, double value) {
    std::snprintf(buf, sizeof(buf), "%s,%.12e\n", key, value);
    out << buf;
  };
  kv("e_monomer_sum", result.report.e_monomer_sum);
  kv("e_pair_es_far", result.report.e_pair_es_far);
  kv("e_pair_corr_near", result.report.e_pair_corr_near);
  kv("e_fmo1", result.report.e_fmo1);
  kv("e_fmo2", result.report.e_fmo2);
  out << "scc_iterations," << result.charges.iteration_count << "\n";
  kv("scc_residual", result.charges.residual);
  return out.str();
}

inline std::string write_coupled_csv(const coupled::CoupledReport& report) {
  std::ostringstream out;
  char buf[160];
  out << "key,value\n";
  out << "outer_iterations," << report.outer_iterations << "\n";
  std::snprintf(buf, sizeof(buf), "e_fmo2,%.12e\n", report.e_fmo2);
  out << buf;
  std::snprintf(buf, sizeof(buf), "e_interaction,%.12e\n", report.e_interaction);
  out << buf;
  out << "\niteration,charge_residual\n";
  for (size_t i = 0; i < report.charge_residual.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12e\n", i + 1, report.charge_residual[i]);
    out << buf;
  }
  return out.str();
}

inline std::string write_charges_sites(const MolecularSystem& sys,
                                       const std::vector<double>& values) {
  mediator::SiteList sites;
  for (const Atom& a : sys.atoms) sites.positions.push_back(a.position);
  sites.values = values;
  return mediator::write_sites(sites);
}

// ---------------------------------------------------------------------------
// Config file: "key = value" lines, '#' comments, overridden by flags
// ---------------------------------------------------------------------------

struct RunConfig {
  CoulombParams coulomb;
  fmo::SccConfig scc;
  Grid3D grid;
  rism::SolventModel solvent;
  rism::RismConfig rism;
  double outer_tol = 1e-6;
  int outer_max = 50;
  double outer_mixing = 0.5;
  double spread_width = 1.0;
  workflow::CostModel cost;
  int sweeps = 3;
};

inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = fmx::detail::strip_comment(line);
    if (body.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line_no);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty() || value.empty())
      throw FormatError("expected 'key = value'", line_no);
    kv[key] = value;
  }
  return kv;
}

inline RunConfig apply_config(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  auto num = [&](const char* key, double& target) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    double v;
    if (!fmx::detail::parse_double(it->second, v))
      throw FormatError("config: unparsable number for '" + std::string(key) + "'");
    target = v;
  };
  auto integer = [&](const char* key, int& target) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    int v;
    if (!fmx::detail::parse_int(it->second, v))
      throw FormatError("config: unparsable integer for '" + std::string(key) + "'");
    target = v;
  };
  num("gamma", cfg.coulomb.gamma);
  num("scc_tol", cfg.scc.tol);
  integer("scc_max_iter", cfg.scc.max_iter);
  num("scc_mixing", cfg.scc.mixing);
  integer("grid_n", cfg.grid.n);
  num("box_len", cfg.grid.box_len);
  num("origin_x", cfg.grid.origin.x);
  num("origin_y", cfg.grid.origin.y);
  num("origin_z", cfg.grid.origin.z);
  num("rho", cfg.solvent.rho);
  num("q_s", cfg.solvent.q_s);
  num("beta", cfg.solvent.beta);
  num("a_rep", cfg.solvent.a_rep);
  num("w_rep", cfg.solvent.w_rep);
  num("rism_tol", cfg.rism.tol);
  integer("rism_max_iter", cfg.rism.max_iter);
  num("rism_mixing", cfg.rism.mixing);
  num("denom_guard", cfg.rism.denom_guard);
  num("outer_tol", cfg.outer_tol);
  integer("outer_max", cfg.outer_max);
  num("outer_mixing", cfg.outer_mixing);
  num("spread_width", cfg.spread_width);
  num("cost_a", cfg.cost.a);
  num("cost_b", cfg.cost.b);
  num("cost_alpha", cfg.cost.alpha);
  num("cost_beta", cfg.cost.beta_byte);
  integer("sweeps", cfg.sweeps);
  if (auto it = kv.find("closure"); it != kv.end()) {
    if (it->second == "kh")
      cfg.rism.closure = rism::Closure::KH;
    else if (it->second == "hnc")
      cfg.rism.closure = rism::Closure::HNC;
    else
      throw FormatError("config: closure must be 'kh' or 'hnc'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared option state
// ---------------------------------------------------------------------------

namespace detail {

struct CommonArgs {
  std::string xyz, frags, params, config, out = ".";
  std::optional<int> grid_n;
  std::optional<double> box;
  std::optional<int> workers;
  std::optional<unsigned> seed;
};

inline ElementTable load_table(const CommonArgs& a) {
  if (!a.params.empty()) return parse_element_table(read_text_file(a.params));
  ElementTable table;  // generic fallback when no table is supplied
  table.set("*", 0.0, 2.0);
  return table;
}

inline RunConfig load_config(const CommonArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = apply_config(parse_config_text(read_text_file(a.config)));
  if (a.grid_n) cfg.grid.n = *a.grid_n;
  if (a.box) cfg.grid.box_len = *a.box;
  return cfg;
}

inline MolecularSystem load_system(const CommonArgs& a, const ElementTable& table) {
  if (a.xyz.empty()) throw ParameterError("--xyz is required");
  return parse_xyz(read_text_file(a.xyz), table);
}

inline FragmentationScheme load_scheme(const CommonArgs& a, const MolecularSystem& sys,
                                       int max_atoms) {
  if (!a.frags.empty()) return parse_fragments(read_text_file(a.frags), sys);
  if (max_atoms > 0) {
    FragmentationScheme s = auto_fragment(sys, max_atoms);
    return s;
  }
  throw ParameterError("either --frags or --max-atoms is required");
}

inline void add_common(CLI::App* cmd, CommonArgs& a, bool with_grid = false) {
  cmd->add_option("--xyz", a.xyz, "XYZ geometry file");
  cmd->add_option("--frags", a.frags, "fragment definition file");
  cmd->add_option("--params", a.params, "element parameter table (Element chi eta)");
  cmd->add_option("--config", a.config, "key = value configuration file");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "random seed for the simulator");
  cmd->add_option("--workers", a.workers, "simulated worker count");
  if (with_grid) {
    cmd->add_option("--grid-n", a.grid_n, "grid points per axis (power of two)");
    cmd->add_option("--box", a.box, "grid box edge length");
  }
}

}  // namespace detail

inline int classify_error(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (dynamic_cast<const NonConvergenceError*>(&e) ||
      dynamic_cast<const DivergenceError*>(&e) ||
      dynamic_cast<const ClosureOverflowError*>(&e) ||
      dynamic_cast<const SingularSystemError*>(&e) ||
      dynamic_cast<const SizeGuardError*>(&e))
    return 2;
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const SpillError*>(&e))
    return 1;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 3;  // filesystem and stream failures
}

// Entry point used by both the installed binary and the test suite.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"fragment multi-physics toolkit"};
  app.require_subcommand(1);

  detail::CommonArgs a;
  int max_atoms = 0;

  auto* cmd_fragment =
      app.add_subcommand("fragment", "partition a system into contiguous fragments");
  detail::add_common(cmd_fragment, a);
  cmd_fragment->add_option("--max-atoms", max_atoms, "atoms per fragment")->required();

  auto* cmd_fmo = app.add_subcommand("fmo", "gas-phase fragment energy run");
  detail::add_common(cmd_fmo, a);
  cmd_fmo->add_option("--max-atoms", max_atoms, "auto-fragment size when no --frags");

  std::string charges_file;
  auto* cmd_rism = app.add_subcommand("rism", "solvent solve from a charges file");
  detail::add_common(cmd_rism, a, true);
  cmd_rism->add_option("--charges", charges_file, "SITES file with point charges")
      ->required();

  bool dump_catalog = false;
  auto* cmd_couple = app.add_subcommand("couple", "coupled solute/solvent loop");
  detail::add_common(cmd_couple, a, true);
  cmd_couple->add_option("--max-atoms", max_atoms, "auto-fragment size when no --frags");
  cmd_couple->add_flag("--dump-catalog", dump_catalog, "write the exchange catalog");

  auto* cmd_flow = app.add_subcommand("flow", "build and simulate the task graph");
  detail::add_common(cmd_flow, a);
  cmd_flow->add_option("--max-atoms", max_atoms, "auto-fragment size when no --frags");
  std::optional<int> sweeps_flag;
  cmd_flow->add_option("--sweeps", sweeps_flag, "monomer sweep rounds in the DAG");

  std::string conv_in, conv_kind, conv_from = "angstrom", conv_to;
  bool conv_spread = false;
  double conv_width = 1.0;
  auto* cmd_convert = app.add_subcommand("convert", "unit and representation transforms");
  detail::add_common(cmd_convert, a, true);
  cmd_convert->add_option("--in", conv_in, "input record file (SITES or GRID)")
      ->required();
  cmd_convert
      ->add_option("--kind", conv_kind,
                   "semantic kind: point_charges, charge_density_grid, "
                   "potential_at_sites, potential_grid")
      ->required();
  cmd_convert->add_option("--from", conv_from, "input length unit (angstrom|bohr)");
  cmd_convert->add_option("--to", conv_to, "target length unit (angstrom|bohr)");
  cmd_convert->add_flag("--spread", conv_spread, "spread point charges onto a grid");
  cmd_convert->add_option("--width", conv_width, "Gaussian spread width");

  try {
    std::vector<const char*> argv;
    argv.push_back("fmx");
    for (const std::string& s : args) argv.push_back(s.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    const fs::path out_dir(a.out);

    if (cmd_fragment->parsed()) {
      ElementTable table = detail::load_table(a);
      MolecularSystem sys = detail::load_system(a, table);
      FragmentationScheme scheme = auto_fragment(sys, max_atoms);
      write_text_file(out_dir / "fragments.frag", serialize_fragments(scheme));
      out << "wrote " << (out_dir / "fragments.frag").string() << " ("
          << scheme.count() << " fragments)\n";
      return 0;
    }

    if (cmd_fmo->parsed()) {
      ElementTable table = detail::load_table(a);
      RunConfig cfg = detail::load_config(a);
      MolecularSystem sys = detail::load_system(a, table);
      FragmentationScheme scheme = detail::load_scheme(a, sys, max_atoms);
      auto v = fmo::ExternalPotential::zeros(sys.size());
      fmo::Fmo2Result result = fmo::fmo2_energy(sys, scheme, v, cfg.coulomb, cfg.scc);
      write_text_file(out_dir / "fmo_report.csv", write_report_csv(result));
      write_text_file(out_dir / "charges.sites",
                      write_charges_sites(sys, result.charges.q));
      char buf[160];
      std::snprintf(buf, sizeof(buf), "e_fmo1 %.12e\ne_fmo2 %.12e\nscc_iterations %d\n",
                    result.report.e_fmo1, result.report.e_fmo2,
                    result.charges.iteration_count);
      out << buf;
      return 0;
    }

    if (cmd_rism->parsed()) {
      RunConfig cfg = detail::load_config(a);
      mediator::SiteList sites = mediator::read_sites(read_text_file(charges_file));
      MolecularSystem sys;
      sys.name = "charges:" + charges_file;
      for (const Vec3& p : sites.positions)
        sys.atoms.push_back({"X", p, 0.0, 1.0});
      fmo::ChargeState charges;
      charges.q = sites.values;
      ScalarField u =
          rism::build_solute_potential(sys, charges, cfg.grid, cfg.solvent, cfg.coulomb);
      rism::RismSolution sol = rism::solve_rism(u, cfg.solvent, cfg.rism);
      ScalarField rho_c = rism::solvent_charge_density(sol, cfg.solvent);
      ScalarField g = sol.h;
      for (double& x : g.values) x += 1.0;
      write_text_file(out_dir / "u.dat", write_field(u));
      write_text_file(out_dir / "h.dat", write_field(sol.h));
      write_text_file(out_dir / "g.dat", write_field(g));
      write_text_file(out_dir / "solvent_charge_density.dat", write_field(rho_c));
      out << "converged in " << sol.iterations << " iterations (residual "
          << sol.residual << ")\n";
      return 0;
    }

    if (cmd_couple->parsed()) {
      ElementTable table = detail::load_table(a);
      RunConfig run_cfg = detail::load_config(a);
      MolecularSystem sys = detail::load_system(a, table);
      FragmentationScheme scheme = detail::load_scheme(a, sys, max_atoms);

      coupled::CoupledConfig cfg;
      cfg.outer_tol = run_cfg.outer_tol;
      cfg.outer_max = run_cfg.outer_max;
      cfg.potential_mixing = run_cfg.outer_mixing;
      cfg.grid = run_cfg.grid;
      cfg.solvent = run_cfg.solvent;
      cfg.rism = run_cfg.rism;
      cfg.scc = run_cfg.scc;
      cfg.coulomb = run_cfg.coulomb;
      cfg.spread_width = run_cfg.spread_width;

      mediator::Catalog catalog;
      coupled::CoupledReport report = coupled::couple_fmo_rism(sys, scheme, cfg, catalog);

      fmo::Fmo2Result final_fmo;
      final_fmo.report = report.fmo;
      final_fmo.charges = report.final_charges;
      write_text_file(out_dir / "fmo_report.csv", write_report_csv(final_fmo));
      write_text_file(out_dir / "coupled_report.csv", write_coupled_csv(report));
      write_text_file(out_dir / "h.dat", write_field(report.rism.h));
      write_text_file(out_dir / "solvent_charge_density.dat",
                      write_field(rism::solvent_charge_density(report.rism, cfg.solvent)));
      const mediator::DataRecord pot = catalog.fetch(coupled::kKeySolutePotential);
      write_text_file(out_dir / "solute_potential.sites",
                      mediator::write_sites(std::get<mediator::SiteList>(pot.payload)));
      if (dump_catalog) mediator::dump_catalog(catalog, out_dir / "catalog");
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "outer_iterations %d\ne_fmo2 %.12e\ne_interaction %.12e\n",
                    report.outer_iterations, report.e_fmo2, report.e_interaction);
      out << buf;
      return 0;
    }

    if (cmd_flow->parsed()) {
      ElementTable table = detail::load_table(a);
      RunConfig cfg = detail::load_config(a);
      if (sweeps_flag) cfg.sweeps = *sweeps_flag;
      MolecularSystem sys = detail::load_system(a, table);
      FragmentationScheme scheme = detail::load_scheme(a, sys, max_atoms);
      workflow::TaskGraph dag = workflow::build_fmo_dag(sys, scheme, cfg.sweeps, cfg.cost);
      const int workers = a.workers.value_or(4);
      const unsigned seed = a.seed.value_or(0);
      workflow::Trace trace = workflow::simulate(dag, workers, seed);
      write_text_file(out_dir / "trace.csv", workflow::write_trace_csv(trace));
      std::vector<int> counts;
      for (int p = 1; p < workers; p *= 2) counts.push_back(p);
      counts.push_back(workers);
      write_text_file(out_dir / "speedup.csv",
                      workflow::write_speedup_csv(workflow::speedup_curve(dag, counts)));
      char buf[160];
      std::snprintf(buf, sizeof(buf), "tasks %zu\nmakespan %.9g\n", dag.tasks.size(),
                    trace.makespan);
      out << buf;
      return 0;
    }

    if (cmd_convert->parsed()) {
      const std::string text = read_text_file(conv_in);
      mediator::Quantity quantity{mediator::kind_from_string(conv_kind),
                                  mediator::length_unit_from_string(conv_from)};
      mediator::DataRecord rec;
      rec.key = fs::path(conv_in).stem().string();
      rec.quantity = quantity;
      rec.version = 1;
      rec.provenance = "convert:" + conv_in;
      if (text.rfind("SITES", 0) == 0)
        rec.payload = mediator::read_sites(text);
      else
        rec.payload = read_field(text);
      if (!mediator::payload_matches(quantity.kind, rec.payload))
        throw SemanticError("file representation does not match --kind " + conv_kind);

      RunConfig cfg = detail::load_config(a);
      mediator::DataRecord result = rec;
      if (conv_spread) {
        if (!conv_to.empty())
          throw ParameterError("choose either --to or --spread, not both");
        result = mediator::sites_to_grid(rec, cfg.grid, conv_width);
      } else {
        if (conv_to.empty()) throw ParameterError("--to or --spread is required");
        result = mediator::convert_units(
            rec, {quantity.kind, mediator::length_unit_from_string(conv_to)});
      }
      write_text_file(out_dir / "converted.dat", mediator::write_record_payload(result));
      out << "wrote " << (out_dir / "converted.dat").string() << "\n";
      return 0;
    }

    err << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    return classify_error(e, err);
  }
}

}  // namespace fmx::cli
