#pragma once

#include "mdfrac/mdgrid.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>

namespace mdfrac {

enum class ElementType : std::uint8_t { point, line, triangle, tetrahedron };

int element_dim(ElementType t);

struct RawElement {
    ElementType type;
    std::vector<Index> nodes;  ///< indices into RawMesh::nodes
    int physical_tag = 0;
    int entity_tag = 0;

    bool operator==(const RawElement&) const = default;
};

struct RawMesh {
    std::vector<Vec3> nodes;
    std::vector<long> node_ids;  ///< file ids, parallel to nodes
    std::vector<RawElement> elements;
    std::map<int, std::string> physical_names;
    std::map<int, int> physical_dims;

    /// 3 when the mesh has tetrahedra, else 2.
    int ambient_dim() const;
};

/// Reads Gmsh MSH 2.2 ASCII. Throws ParseError with a line number for missing
/// sections, malformed counts, unknown versions and unsupported element types.
RawMesh parse_gmsh(const std::filesystem::path& path);
RawMesh parse_gmsh(std::istream& in);

/// Writes MSH 2.2 ASCII with round-trip exact coordinates.
void write_gmsh(std::ostream& out, const RawMesh& mesh);
void write_gmsh(const std::filesystem::path& path, const RawMesh& mesh);

struct FractureTagging {
    std::set<int> matrix_tags;
    std::set<int> fracture_tags;
    std::set<int> intersection_tags;  ///< explicit (N-2)d elements; inferred when empty

    /// Default tagging: every top-dimensional element is matrix; codimension-one
    /// tags with at least one element inside the matrix are fractures (boundary
    /// markers are skipped). Intersections are left to geometric inference.
    static FractureTagging infer(const RawMesh& mesh);
    /// Resolves names from $PhysicalNames (or numeric strings) to tags.
    static FractureTagging from_names(const RawMesh& mesh, const std::vector<std::string>& matrix,
                                      const std::vector<std::string>& fractures,
                                      const std::vector<std::string>& intersections);
};

/// Builds every fixed-dimension grid, detects intersections, attaches the
/// couplings and classifies outer/tip boundaries.
MixedDimGrid build_mixed_grid(const RawMesh& raw, const FractureTagging& tags, double rel_tol = 1e-8);

/// Named per-cell arrays for one dimension: scalars (size = cells) or vectors (3 x cells).
struct CellFields {
    std::vector<std::pair<std::string, std::vector<double>>> scalars;
    std::vector<std::pair<std::string, std::vector<Vec3>>> vectors;
};

/// Writes one grid as a VTU file (ASCII). Polytopes become polygon/polyhedron cells.
void write_vtu(const std::filesystem::path& path, const DimGrid& grid, const CellFields& fields);

/// Writes `<prefix>_<d>d.vtu` for every nonempty grid plus `<prefix>.pvd`.
/// Returns the written paths (the collection file last).
std::vector<std::filesystem::path> export_vtu(const MixedDimGrid& grid, const std::map<int, CellFields>& fields,
                                              const std::filesystem::path& prefix);

struct LineSample {
    double arc_length = 0.0;
    std::optional<double> value;  ///< empty outside the grid
};

/// Samples a cell field along the segment p0-p1 (n_samples >= 2, endpoints included).
std::vector<LineSample> sample_over_line(const DimGrid& grid, std::span<const double> cell_field, const Vec3& p0,
                                         const Vec3& p1, int n_samples);

/// Cell containing the point (first by id on shared boundaries), or -1.
Index locate_point(const DimGrid& grid, const Vec3& p, double rel_tol = 1e-10);

/// CSV with header `arc_length,value`; gaps are written as empty values.
void write_line_csv(const std::filesystem::path& path, std::span<const LineSample> samples);

}  // namespace mdfrac
