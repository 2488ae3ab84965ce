#pragma once

// Structured simplex meshes aligned with axis-parallel fractures. Used for
// presets and tests when no external Gmsh mesh is at hand.

#include "mdfrac/meshio.hpp"

#include <cstdint>

namespace mdfrac {

/// Axis-parallel fracture: a segment (2d) or rectangle (3d) given by two
/// opposite corners; exactly one extent is zero.
struct FractureSpec {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
    int tag = 2;

    bool operator==(const FractureSpec&) const = default;
};

struct FractureNetwork {
    int dim = 2;
    Vec3 domain_lo = Vec3::Zero();
    Vec3 domain_hi = Vec3(1.0, 1.0, 0.0);
    std::vector<FractureSpec> fractures;

    bool operator==(const FractureNetwork&) const = default;
};

/// Plain-text network file:
///   domain x0 y0 x1 y1            (or 6 numbers in 3d)
///   fracture x0 y0 x1 y1 [tag]    (or 6 numbers [tag] in 3d)
/// '#' starts a comment.
FractureNetwork parse_fracture_file(std::istream& in);
FractureNetwork read_fracture_file(const std::filesystem::path& path);

struct StructuredOptions {
    int resolution = 32;             ///< target cells per unit of the longest domain side
    double grading = 1.0;            ///< growth ratio away from fracture planes (1 = uniform)
    double min_size_fraction = 1.0;  ///< smallest spacing near fracture planes, relative to 1/resolution
    double jitter = 0.0;             ///< random node displacement, relative to local spacing (< 0.25)
    std::uint64_t seed = 1;

    bool operator==(const StructuredOptions&) const = default;
};

/// Tensor grid whose planes contain every fracture, split into triangles (2d)
/// or Kuhn tetrahedra (3d). Matrix elements carry physical tag 1; fracture
/// elements carry the fracture tag and entity id (index + 1).
RawMesh structured_mesh(const FractureNetwork& net, const StructuredOptions& opt);

/// Axis coordinates used by structured_mesh, exposed for tests.
std::vector<double> axis_coordinates(std::vector<double> breaks, double h, double grading, double h_min);

}  // namespace mdfrac
