#pragma once

// Simulation configuration: sectioned key = value text (INI sections).
//
//   [mesh]       file | fractures, resolution, grading, min_size_fraction, jitter, seed
//   [tags]       matrix, fractures, intersections (names or numbers; empty = inferred)
//   [coarsen]    enabled, mode, threshold, protect_fractures
//   [flow]       matrix_permeability, fracture_permeability, fracture_normal_permeability,
//                intersection_permeability, aperture, matrix_source, fracture_source,
//                exact, permeability.<tag>, normal_permeability.<tag>
//   [boundary]   default, left, right, bottom, top, front, back
//   [solver]     method, tolerance, max_iterations
//   [transport]  enabled, porosity, inflow_concentration, initial_concentration, dt, t_end,
//                snapshot_interval, zero_dim_mass
//   [output]     directory, vtu, line.<name>
//   [study]      base_resolution, manufactured, base_steps, reference_steps

#include "mdfrac/coarsen.hpp"
#include "mdfrac/linalg.hpp"
#include "mdfrac/meshgen.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace mdfrac {

struct BoundaryRule {
    enum class Kind { no_flow, pressure, flux, linear };
    Kind kind = Kind::no_flow;
    std::vector<double> values;  ///< pressure {p}, flux {outward u.n}, linear {a, bx, by, bz}

    bool operator==(const BoundaryRule&) const = default;
};

/// Parses "no_flow", "pressure <p>", "flux <q>" or "linear <a> <bx> <by> [<bz>]".
BoundaryRule parse_boundary_rule(const std::string& text);
std::string format_boundary_rule(const BoundaryRule& rule);

struct LineProbe {
    Vec3 p0 = Vec3::Zero();
    Vec3 p1 = Vec3::Zero();
    int samples = 101;

    bool operator==(const LineProbe&) const = default;
};

struct SimulationConfig {
    // mesh: either a Gmsh file or a fracture file for the structured generator
    std::filesystem::path mesh_file;
    std::filesystem::path fracture_file;
    StructuredOptions generator;

    std::vector<std::string> matrix_tags;
    std::vector<std::string> fracture_tags;
    std::vector<std::string> intersection_tags;

    bool coarsen_enabled = false;
    CoarsenConfig coarsen;

    std::vector<double> matrix_permeability{1.0};  ///< 1 value, or the upper triangle of the tensor
    double fracture_permeability = 1.0;
    std::optional<double> fracture_normal_permeability;  ///< defaults to fracture_permeability
    std::optional<double> intersection_permeability;     ///< defaults to fracture_permeability
    double aperture = 1.0;
    double matrix_source = 0.0;
    double fracture_source = 0.0;
    std::map<std::string, double> permeability_by_tag;
    std::map<std::string, double> normal_permeability_by_tag;
    std::optional<std::vector<double>> exact;  ///< linear pressure {a, bx, by, bz} to check against

    BoundaryRule boundary_default;
    std::map<std::string, BoundaryRule> boundary;  ///< left, right, bottom, top, front, back

    SolverConfig solver;

    bool transport_enabled = false;
    double porosity = 1.0;
    double inflow_concentration = 1.0;
    double initial_concentration = 0.0;
    double dt = 0.1;
    double t_end = 1.0;
    long snapshot_interval = 0;  ///< 0 = no transport snapshots
    bool zero_dim_mass = true;

    std::filesystem::path output_dir = "output";
    bool write_vtu = true;
    std::map<std::string, LineProbe> lines;

    int study_base_resolution = 4;
    std::string study_manufactured = "quadratic";
    long study_base_steps = 10;
    long study_reference_steps = 0;  ///< 0 = ten times the finest level

    bool operator==(const SimulationConfig&) const = default;
};

/// Relative paths are resolved against `base_dir`. Throws ConfigError with the
/// offending key path (e.g. "flow.aperture").
SimulationConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
SimulationConfig read_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const SimulationConfig& cfg);

}  // namespace mdfrac
