#pragma once

// Mixed-dimensional grid: one fixed-dimension grid per dimension plus the
// face/cell coupling maps between consecutive dimensions.

#include "mdfrac/core.hpp"

#include <array>
#include <optional>
#include <set>

namespace mdfrac {

enum class FaceKind : std::uint8_t {
    interior,  ///< shared by two cells of the same grid
    outer,     ///< on the outer boundary of the domain
    tip,       ///< immersed boundary of a lower-dimensional grid (zero-flux tip)
    fracture,  ///< coincides with a cell of the next lower-dimensional grid
};

enum class Side : std::int8_t { minus = -1, none = 0, plus = 1 };

/// Sorted node ids of a face, padded with -1. Used as a topological key.
using FaceKey = std::array<Index, 3>;

FaceKey make_face_key(std::span<const Index> nodes);

struct DimGrid {
    int dim = 0;
    int ambient_dim = 2;
    std::vector<Vec3> nodes;

    // Cells. Every cell is a union of fine simplices with dim+1 nodes each.
    Jagged<Index> cell_simplices;  ///< cell -> simplex ids
    Jagged<Index> simplex_nodes;   ///< simplex -> nodes
    Jagged<Index> cell_faces;      ///< cell -> face ids
    std::vector<std::int8_t> cell_face_signs;  ///< parallel to cell_faces.values
    std::vector<Vec3> cell_face_normals;       ///< outward unit normals, parallel to cell_faces.values
    std::vector<double> cell_measure;
    std::vector<Vec3> cell_centroid;
    std::vector<double> cell_diameter;
    std::vector<int> cell_tag;

    // Faces.
    Jagged<Index> face_nodes;
    std::vector<std::array<Index, 2>> face_cells;  ///< second entry -1 when single-sided
    std::vector<double> face_measure;
    std::vector<Vec3> face_centroid;
    std::vector<Vec3> face_normal;  ///< reference orientation of the face flux
    std::vector<FaceKind> face_kind;
    std::vector<Side> face_side;  ///< side label for fracture faces
    std::vector<Index> face_twin; ///< other half of a split fracture face, or -1

    Index num_cells() const noexcept { return static_cast<Index>(cell_measure.size()); }
    Index num_faces() const noexcept { return static_cast<Index>(face_measure.size()); }
    bool empty() const noexcept { return cell_measure.empty(); }

    /// Nodes of all simplices of a cell, deduplicated and sorted.
    std::vector<Index> cell_nodes(Index cell) const;
    /// Position of `face` in the face list of `cell`, or -1.
    Index local_face_index(Index cell, Index face) const;
    /// Returns true if the face has no neighbour across it in this grid.
    bool is_boundary_face(Index face) const { return face_cells[face][1] < 0; }
};

/// Input description of one (possibly polytopal) cell.
struct CellSpec {
    std::vector<std::vector<Index>> simplices;
    int tag = 0;
};

struct BuildOptions {
    /// Faces with these keys are split into one face per incident cell
    /// (fracture faces, and faces where several fracture branches meet).
    std::set<FaceKey> cut_faces;
};

/// Builds a fixed-dimension grid and all its geometric quantities.
/// Throws GeometryError for degenerate cells or non-manifold faces.
DimGrid build_dim_grid(std::vector<Vec3> nodes, std::span<const CellSpec> cells, int dim,
                       int ambient_dim, const BuildOptions& options = {});

/// Orthonormal basis (3 x dim) of the tangent space of a cell. For dim equal to
/// the ambient dimension the canonical frame is returned.
Eigen::MatrixXd tangent_frame(const DimGrid& grid, Index cell, double rel_tol = 1e-8);

struct CouplingPair {
    Index high_face = -1;
    Index low_cell = -1;
    Side side = Side::none;
    double mortar_area = 0.0;

    bool operator==(const CouplingPair&) const = default;
};

struct CouplingMap {
    int high_dim = 0;
    std::vector<CouplingPair> pairs;  ///< sorted by (low_cell, high_face)
    Jagged<Index> low_cell_pairs;     ///< low cell -> indices into pairs

    bool empty() const noexcept { return pairs.empty(); }
};

/// Matches every cell of `low` with the coincident faces of `high` (centroid within
/// rel_tol times the owning high cell diameter, equal measure). Shared faces that
/// match are split so that each side carries its own flux; matched faces become
/// FaceKind::fracture with side labels. Throws GeometryError("non-conforming mesh").
CouplingMap attach_coupling(DimGrid& high, const DimGrid& low, double rel_tol = 1e-8);

struct DofLayout {
    std::vector<Index> velocity_offset;  ///< per dimension, -1 if absent
    std::vector<Index> velocity_count;
    std::vector<Index> pressure_offset;
    std::vector<Index> pressure_count;
    Index total = 0;
};

struct MixedDimGrid {
    int ambient_dim = 2;
    std::vector<DimGrid> grids;          ///< indexed by dimension, size ambient_dim + 1
    std::vector<CouplingMap> couplings;  ///< couplings[d] couples grid d with grid d-1

    /// Highest dimension with a nonempty grid.
    int top_dim() const;
    const DimGrid& grid(int d) const { return grids.at(d); }
    DimGrid& grid(int d) { return grids.at(d); }
    bool has(int d) const { return d >= 0 && d < static_cast<int>(grids.size()) && !grids[d].empty(); }

    /// Velocity dofs: one per face (split fracture faces count twice).
    /// Pressure dofs: one per cell. Ordering: top dimension first, velocity before pressure.
    DofLayout dof_layout() const;
};

/// Creates a mixed grid from already-built fixed-dimension grids; attaches the
/// couplings between every consecutive nonempty pair and classifies boundary faces.
MixedDimGrid assemble_mixed_grid(std::vector<DimGrid> grids, int ambient_dim, double rel_tol = 1e-8);

/// Tags every single-sided, non-fracture face as outer (touches the boundary of the
/// top grid) or tip (immersed end of a lower-dimensional grid).
void classify_boundaries(MixedDimGrid& grid);

/// Returns true if the 2d cell boundary polygon is convex. Only meaningful for
/// dim == 2 cells with a single boundary loop.
bool is_convex_polygon(const DimGrid& grid, Index cell);

/// Ordered boundary node loops of a 2d cell (several loops for cells with holes).
std::vector<std::vector<Index>> polygon_loops(const DimGrid& grid, Index cell);

}  // namespace mdfrac
