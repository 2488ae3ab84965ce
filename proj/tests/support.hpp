#pragma once

#include "mdfrac/meshgen.hpp"
#include "mdfrac/meshio.hpp"

#include <sstream>

namespace mdfrac::test {

inline FractureSpec vertical(double x, double y0 = 0.0, double y1 = 1.0, int tag = 2) {
    return {Vec3(x, y0, 0.0), Vec3(x, y1, 0.0), tag};
}

inline FractureSpec horizontal(double y, double x0 = 0.0, double x1 = 1.0, int tag = 2) {
    return {Vec3(x0, y, 0.0), Vec3(x1, y, 0.0), tag};
}

inline FractureNetwork unit_square(std::vector<FractureSpec> fractures = {}) {
    FractureNetwork net;
    net.fractures = std::move(fractures);
    return net;
}

inline FractureNetwork unit_cube(std::vector<FractureSpec> fractures = {}) {
    FractureNetwork net;
    net.dim = 3;
    net.domain_hi = Vec3(1.0, 1.0, 1.0);
    net.fractures = std::move(fractures);
    return net;
}

inline MixedDimGrid mesh_grid(const FractureNetwork& net, int resolution, double jitter = 0.0,
                              std::uint64_t seed = 1) {
    StructuredOptions opt;
    opt.resolution = resolution;
    opt.jitter = jitter;
    opt.seed = seed;
    const auto raw = structured_mesh(net, opt);
    return build_mixed_grid(raw, FractureTagging::infer(raw));
}

inline RawMesh parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_gmsh(in);
}

/// Square (0,0)-(1,1) split along the (0,0)-(1,1) diagonal.
inline DimGrid two_triangle_square() {
    std::vector<Vec3> nodes{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
    std::vector<CellSpec> cells{{{{0, 1, 2}}, 1}, {{{0, 2, 3}}, 1}};
    return build_dim_grid(nodes, cells, 2, 2);
}

}  // namespace mdfrac::test
