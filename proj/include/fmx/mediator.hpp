#pragma once

// Typed, versioned catalog of physical data plus the semantic transforms
// that move data between the fragment solver (site lists) and the grid
// solver (scalar fields), converting formats and meaning, not just layout.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"
#include "fmx/grid.hpp"
#include "fmx/rism.hpp"

namespace fmx::mediator {

enum class QuantityKind { PointCharges, ChargeDensityGrid, PotentialAtSites, PotentialGrid };
enum class LengthUnit { Angstrom, Bohr };

// 1 angstrom in bohr.
inline constexpr double kBohrPerAngstrom = 1.8897261255;

inline std::string to_string(QuantityKind k) {
  switch (k) {
    case QuantityKind::PointCharges: return "point_charges";
    case QuantityKind::ChargeDensityGrid: return "charge_density_grid";
    case QuantityKind::PotentialAtSites: return "potential_at_sites";
    case QuantityKind::PotentialGrid: return "potential_grid";
  }
  return "?";
}

inline std::string to_string(LengthUnit u) {
  return u == LengthUnit::Angstrom ? "angstrom" : "bohr";
}

inline QuantityKind kind_from_string(const std::string& s) {
  if (s == "point_charges") return QuantityKind::PointCharges;
  if (s == "charge_density_grid") return QuantityKind::ChargeDensityGrid;
  if (s == "potential_at_sites") return QuantityKind::PotentialAtSites;
  if (s == "potential_grid") return QuantityKind::PotentialGrid;
  throw FormatError("unknown quantity kind '" + s + "'");
}

inline LengthUnit length_unit_from_string(const std::string& s) {
  if (s == "angstrom") return LengthUnit::Angstrom;
  if (s == "bohr") return LengthUnit::Bohr;
  throw FormatError("unknown length unit '" + s + "'");
}

// Physical meaning of a record: what the numbers are and in which units.
// The charge and energy units are fixed tags (e and model units) carried
// along so every record states its units in full.
inline constexpr const char* kChargeUnit = "e";
inline constexpr const char* kEnergyUnit = "model";

struct Quantity {
  QuantityKind kind = QuantityKind::PointCharges;
  LengthUnit length_unit = LengthUnit::Angstrom;
  std::string charge_unit = kChargeUnit;
  std::string energy_unit = kEnergyUnit;
};

// Positions plus one value per site (charges or potentials).
struct SiteList {
  std::vector<Vec3> positions;
  std::vector<double> values;
};

using Payload = std::variant<SiteList, ScalarField>;

inline bool payload_matches(QuantityKind kind, const Payload& payload) {
  const bool is_sites = std::holds_alternative<SiteList>(payload);
  switch (kind) {
    case QuantityKind::PointCharges:
    case QuantityKind::PotentialAtSites: return is_sites;
    case QuantityKind::ChargeDensityGrid:
    case QuantityKind::PotentialGrid: return !is_sites;
  }
  return false;
}

struct DataRecord {
  std::string key;
  Quantity quantity;
  Payload payload;
  int version = 0;          // contiguous from 1 per key
  std::string provenance;   // free-text producer tag
};

// Append-only record store: publishes never mutate, every version stays
// readable. Concurrent readers, exclusive writers; version numbering per
// key has no gaps or duplicates under concurrent publishes.
class Catalog {
 public:
  int publish(const std::string& key, const Quantity& quantity, Payload payload,
              const std::string& provenance) {
    if (!payload_matches(quantity.kind, payload))
      throw SemanticError("payload shape does not match quantity kind " +
                          to_string(quantity.kind) + " for key '" + key + "'");
    if (const auto* f = std::get_if<ScalarField>(&payload)) validate(*f);
    std::unique_lock lock(*mutex_);
    auto& versions = records_[key];
    DataRecord rec;
    rec.key = key;
    rec.quantity = quantity;
    rec.payload = std::move(payload);
    rec.version = static_cast<int>(versions.size()) + 1;
    rec.provenance = provenance;
    versions.push_back(std::move(rec));
    return versions.back().version;
  }

  // Fetches the latest version unless one is named explicitly.
  DataRecord fetch(const std::string& key,
                   std::optional<int> version = std::nullopt) const {
    std::shared_lock lock(*mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) throw NotFoundError("no record under key '" + key + "'");
    const auto& versions = it->second;
    if (!version) return versions.back();
    if (*version < 1 || *version > static_cast<int>(versions.size()))
      throw VersionError("key '" + key + "' has versions 1.." +
                         std::to_string(versions.size()) + ", requested " +
                         std::to_string(*version));
    return versions[static_cast<size_t>(*version) - 1];
  }

  int latest_version(const std::string& key) const {
    std::shared_lock lock(*mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) throw NotFoundError("no record under key '" + key + "'");
    return static_cast<int>(it->second.size());
  }

  std::vector<std::string> keys() const {
    std::shared_lock lock(*mutex_);
    std::vector<std::string> out;
    for (const auto& [k, v] : records_) out.push_back(k);
    return out;
  }

  // Snapshot of every record, key-sorted then version-ordered.
  std::vector<DataRecord> all_records() const {
    std::shared_lock lock(*mutex_);
    std::vector<DataRecord> out;
    for (const auto& [k, versions] : records_)
      for (const auto& rec : versions) out.push_back(rec);
    return out;
  }

 private:
  // behind a pointer so catalogs stay movable
  mutable std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
  std::map<std::string, std::vector<DataRecord>> records_;
};

// ---------------------------------------------------------------------------
// Semantic transforms
// ---------------------------------------------------------------------------

// Rescales lengths (and length-derived values) between angstrom and bohr.
// The quantity kind never changes here; asking for one is a SemanticError.
//   point charges      [e]          -> values unchanged
//   potential          [model/e]    -> values unchanged
//   charge density     [e/length^3] -> values scaled by s^-3
inline DataRecord convert_units(const DataRecord& record, const Quantity& target) {
  if (target.kind != record.quantity.kind)
    throw SemanticError("convert_units cannot change " + to_string(record.quantity.kind) +
                        " into " + to_string(target.kind));
  DataRecord out = record;
  out.quantity = target;
  if (target.length_unit == record.quantity.length_unit) return out;

  const bool to_bohr = target.length_unit == LengthUnit::Bohr;
  auto scale_len = [to_bohr](double x) {
    return to_bohr ? x * kBohrPerAngstrom : x / kBohrPerAngstrom;
  };
  const double s3 = kBohrPerAngstrom * kBohrPerAngstrom * kBohrPerAngstrom;
  const double value_scale =
      record.quantity.kind == QuantityKind::ChargeDensityGrid ? (to_bohr ? 1.0 / s3 : s3)
                                                              : 1.0;

  if (auto* sites = std::get_if<SiteList>(&out.payload)) {
    for (Vec3& p : sites->positions) p = {scale_len(p.x), scale_len(p.y), scale_len(p.z)};
    if (value_scale != 1.0)
      for (double& v : sites->values) v *= value_scale;
  } else {
    ScalarField& f = std::get<ScalarField>(out.payload);
    f.grid.box_len = scale_len(f.grid.box_len);
    f.grid.origin = {scale_len(f.grid.origin.x), scale_len(f.grid.origin.y),
                     scale_len(f.grid.origin.z)};
    if (value_scale != 1.0)
      for (double& v : f.values) v *= value_scale;
  }
  return out;
}

// Spreads point charges onto a grid as Gaussians of width w, each site
// renormalized so its discrete integral equals its charge exactly.
inline DataRecord sites_to_grid(const DataRecord& record, const Grid3D& grid, double w) {
  if (record.quantity.kind != QuantityKind::PointCharges)
    throw SemanticError("sites_to_grid expects point_charges, got " +
                        to_string(record.quantity.kind));
  if (!(w > 0.0)) throw ParameterError("sites_to_grid: width must be > 0");
  validate(grid);
  const SiteList& sites = std::get<SiteList>(record.payload);

  const double margin = 3.0 * w;
  for (size_t s = 0; s < sites.positions.size(); ++s) {
    const Vec3 d = sites.positions[s] - grid.origin;
    if (d.x < margin || d.y < margin || d.z < margin || d.x > grid.box_len - margin ||
        d.y > grid.box_len - margin || d.z > grid.box_len - margin)
      throw SpillError("site " + std::to_string(s + 1) +
                       " is closer than 3*w to a grid box face");
  }

  ScalarField f(grid);
  const double dv = grid.cell_volume();
  const double inv_w2 = 1.0 / (w * w);
  std::vector<double> weight(grid.point_count());
  for (size_t s = 0; s < sites.positions.size(); ++s) {
    double total = 0.0;
    size_t p = 0;
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j)
        for (int k = 0; k < grid.n; ++k, ++p) {
          const double d2 = (grid.point(i, j, k) - sites.positions[s]).norm2();
          weight[p] = std::exp(-d2 * inv_w2);
          total += weight[p];
        }
    // per-site renormalization: discrete integral == site charge
    const double norm = sites.values[s] / (total * dv);
    for (p = 0; p < f.values.size(); ++p) f.values[p] += weight[p] * norm;
  }

  DataRecord out;
  out.key = record.key;
  out.quantity = {QuantityKind::ChargeDensityGrid, record.quantity.length_unit};
  out.payload = std::move(f);
  out.provenance = "sites_to_grid(" + record.provenance + ")";
  return out;
}

// Evaluates the softened-Coulomb potential of a gridded charge density at
// the given sites; the result is tagged potential_at_sites and keeps the
// input's provenance chained.
inline DataRecord grid_to_sites(const DataRecord& record, const std::vector<Vec3>& sites,
                                const CoulombParams& params) {
  if (record.quantity.kind != QuantityKind::ChargeDensityGrid)
    throw SemanticError("grid_to_sites expects charge_density_grid, got " +
                        to_string(record.quantity.kind));
  const ScalarField& f = std::get<ScalarField>(record.payload);

  SiteList out_sites;
  out_sites.positions = sites;
  out_sites.values = rism::grid_potential_at_sites(f, sites, params);

  DataRecord out;
  out.key = record.key;
  out.quantity = {QuantityKind::PotentialAtSites, record.quantity.length_unit};
  out.payload = std::move(out_sites);
  out.provenance = "grid_to_sites(" + record.provenance + ")";
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: SITES text format and catalog dump/load
// ---------------------------------------------------------------------------

inline std::string write_sites(const SiteList& sites) {
  std::ostringstream out;
  out << "SITES " << sites.positions.size() << "\n";
  char buf[160];
  for (size_t i = 0; i < sites.positions.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.8e %.8e %.8e %.8e\n", sites.positions[i].x,
                  sites.positions[i].y, sites.positions[i].z, sites.values[i]);
    out << buf;
  }
  return out.str();
}

inline SiteList read_sites(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  size_t n = 0;
  if (!(in >> tag >> n) || tag != "SITES") throw FormatError("expected SITES header", 1);
  SiteList sites;
  sites.positions.resize(n);
  sites.values.resize(n);
  for (size_t i = 0; i < n; ++i)
    if (!(in >> sites.positions[i].x >> sites.positions[i].y >> sites.positions[i].z >>
          sites.values[i]))
      throw FormatError("sites body ends after " + std::to_string(i) + " of " +
                        std::to_string(n) + " rows");
  return sites;
}

inline std::string record_file_name(const DataRecord& rec) {
  std::string safe;
  for (char ch : rec.key)
    safe += (std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
  return safe + "_v" + std::to_string(rec.version) + ".dat";
}

// Manifest line per record (tab-separated):
//   key  kind  length_unit/charge_unit/energy_unit  version  file  provenance
inline std::string write_manifest(const std::vector<DataRecord>& records) {
  std::ostringstream out;
  for (const DataRecord& rec : records)
    out << rec.key << '\t' << to_string(rec.quantity.kind) << '\t'
        << to_string(rec.quantity.length_unit) << '/' << rec.quantity.charge_unit << '/'
        << rec.quantity.energy_unit << '\t' << rec.version << '\t'
        << record_file_name(rec) << '\t' << rec.provenance << '\n';
  return out.str();
}

inline std::string write_record_payload(const DataRecord& rec) {
  if (const auto* sites = std::get_if<SiteList>(&rec.payload)) return write_sites(*sites);
  return write_field(std::get<ScalarField>(rec.payload));
}

// Writes one payload file per record version plus manifest.tsv into `dir`.
inline void dump_catalog(const Catalog& catalog, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto records = catalog.all_records();
  for (const DataRecord& rec : records) {
    std::ofstream out(dir / record_file_name(rec));
    if (!out) throw Error("cannot write " + (dir / record_file_name(rec)).string());
    out << write_record_payload(rec);
  }
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.tsv").string());
  manifest << write_manifest(records);
}

inline Catalog load_catalog(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw NotFoundError("no manifest.tsv under " + dir.string());
  Catalog catalog;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 5) throw FormatError("manifest needs 6 tab-separated columns", line_no);
    const std::string& key = cols[0];
    Quantity quantity;
    quantity.kind = kind_from_string(cols[1]);
    quantity.length_unit = length_unit_from_string(cols[2].substr(0, cols[2].find('/')));
    int version = 0;
    if (!fmx::detail::parse_int(cols[3], version))
      throw FormatError("unparsable version '" + cols[3] + "'", line_no);
    std::ifstream payload_in(dir / cols[4]);
    if (!payload_in) throw NotFoundError("missing payload file " + cols[4]);
    std::stringstream buf;
    buf << payload_in.rdbuf();
    Payload payload;
    if (payload_matches(quantity.kind, Payload{SiteList{}}))
      payload = read_sites(buf.str());
    else
      payload = read_field(buf.str());
    const std::string provenance = cols.size() > 5 ? cols[5] : "";
    const int got = catalog.publish(key, quantity, std::move(payload), provenance);
    if (got != version)
      throw VersionError("manifest versions for key '" + key +
                         "' are not contiguous from 1");
  }
  return catalog;
}

}  // namespace fmx::mediator
