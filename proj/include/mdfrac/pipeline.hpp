#pragma once

// Configuration-driven drivers: mesh -> coarsen -> Darcy -> transport -> export,
// convergence studies, and the standalone coarsening tool.

#include "mdfrac/config.hpp"
#include "mdfrac/fv_transport.hpp"
#include "mdfrac/meshio.hpp"

#include <json.hpp>

namespace mdfrac {

struct LoadedModel {
    MixedDimGrid grid;
    FractureTagging tagging;
    std::map<std::string, int> tag_names;  ///< physical names of the mesh
    Index fine_cells = 0;                  ///< top cells before coarsening
    std::vector<Index> fine_to_coarse;     ///< empty without coarsening
};

/// Reads or generates the mesh, builds the mixed grid and applies coarsening.
LoadedModel load_model(const SimulationConfig& cfg);

/// Effective coefficients: tangential eps^c K, normal 2 K_n eps_high / eps, sources
/// and flux data scaled by the cross-section eps^c of each grid (c = codimension).
DarcyParams make_darcy_params(const LoadedModel& model, const SimulationConfig& cfg);
TransportParams make_transport_params(const MixedDimGrid& grid, const SimulationConfig& cfg, double dt);

/// Boundary region of an outer face: left, right, bottom, top, front or back.
std::string boundary_region(const MixedDimGrid& grid, int d, Index face);

/// Full pipeline. Writes VTU, CSV and summary.json into cfg.output_dir and
/// returns the summary (no timings, so identical inputs give identical output).
nlohmann::ordered_json run_simulation(const SimulationConfig& cfg);

enum class StudyMode { space, time };

struct StudyRow {
    int level = 0;
    double h = 0.0;
    long steps = 0;
    double dt = 0.0;
    double pressure_error = 0.0;
    double velocity_error = 0.0;
    double concentration_error = 0.0;
};

struct StudyResult {
    StudyMode mode = StudyMode::space;
    std::vector<StudyRow> rows;
    long reference_steps = 0;
    double pressure_order = 0.0;
    double velocity_order = 0.0;
    double concentration_order = 0.0;
};

/// Least-squares slope of log(y) against log(x).
double fitted_order(std::span<const double> x, std::span<const double> y);

/// Space: manufactured solution on the fracture-free generated domain, refined
/// by factors of two. Time: step counts base_steps * 2^l against a tight
/// reference. Throws ConfigError for fewer than 3 levels.
StudyResult run_study(const SimulationConfig& cfg, StudyMode mode, int levels);

/// study_<mode>.csv and study_<mode>.json in `dir`; returns the paths.
std::vector<std::filesystem::path> write_study(const StudyResult& result, const std::filesystem::path& dir);

struct CoarsenOutputs {
    Index fine_cells = 0;
    Index coarse_cells = 0;
    double threshold = 0.0;
    PartitionReport report;
    std::vector<std::filesystem::path> files;
};

/// Coarsens the matrix of a Gmsh mesh. Writes partition.csv, coarse.msh (fine
/// simplices, entity tag = coarse cell + 1), coarse VTU preview and a summary.
CoarsenOutputs coarsen_mesh_file(const std::filesystem::path& mesh, const CoarsenConfig& cfg,
                                 const std::filesystem::path& out_dir);

}  // namespace mdfrac
