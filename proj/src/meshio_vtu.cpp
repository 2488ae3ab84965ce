#include "mdfrac/meshio.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace mdfrac {

namespace {

constexpr int vtk_vertex = 1;
constexpr int vtk_line = 3;
constexpr int vtk_poly_line = 4;
constexpr int vtk_triangle = 5;
constexpr int vtk_polygon = 7;
constexpr int vtk_tetra = 10;
constexpr int vtk_polyhedron = 42;

struct VtuCells {
    std::vector<Index> points;  // grid node ids, compacted order
    std::vector<Index> connectivity;
    std::vector<Index> offsets;
    std::vector<int> types;
    std::vector<Index> faces;
    std::vector<Index> face_offsets;
    bool has_polyhedra = false;
};

// Nodes of a 1d cell ordered along its tangent.
std::vector<Index> ordered_chain(const DimGrid& g, Index c) {
    auto nodes = g.cell_nodes(c);
    const auto& s = g.simplex_nodes[g.cell_simplices[c][0]];
    const Vec3 t = g.nodes[s[1]] - g.nodes[s[0]];
    std::sort(nodes.begin(), nodes.end(), [&](Index a, Index b) { return g.nodes[a].dot(t) < g.nodes[b].dot(t); });
    return nodes;
}

// Joins several boundary loops into one polygon with zero-width bridges
// from the outer loop to each hole.
std::vector<Index> keyhole(const DimGrid& g, std::vector<std::vector<Index>> loops) {
    auto area2 = [&](const std::vector<Index>& loop) {
        double a = 0.0;
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const Vec3& p = g.nodes[loop[i]];
            const Vec3& q = g.nodes[loop[(i + 1) % loop.size()]];
            a += p.x() * q.y() - q.x() * p.y();
        }
        return std::abs(a);
    };
    std::stable_sort(loops.begin(), loops.end(), [&](const auto& a, const auto& b) { return area2(a) > area2(b); });
    std::vector<Index> poly = loops.front();
    for (std::size_t h = 1; h < loops.size(); ++h) {
        const auto& hole = loops[h];
        double best = std::numeric_limits<double>::max();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < poly.size(); ++i)
            for (std::size_t j = 0; j < hole.size(); ++j) {
                const double d = (g.nodes[poly[i]] - g.nodes[hole[j]]).squaredNorm();
                if (d < best) best = d, bi = i, bj = j;
            }
        std::vector<Index> merged(poly.begin(), poly.begin() + static_cast<std::ptrdiff_t>(bi) + 1);
        for (std::size_t k = 0; k <= hole.size(); ++k) merged.push_back(hole[(bj + k) % hole.size()]);
        merged.insert(merged.end(), poly.begin() + static_cast<std::ptrdiff_t>(bi), poly.end());
        poly = std::move(merged);
    }
    return poly;
}

VtuCells build_cells(const DimGrid& g) {
    VtuCells out;
    std::vector<Index> local(g.nodes.size(), -1);
    auto id = [&](Index v) {
        if (local[v] < 0) {
            local[v] = static_cast<Index>(out.points.size());
            out.points.push_back(v);
        }
        return local[v];
    };
    for (Index c = 0; c < g.num_cells(); ++c) {
        const auto sids = g.cell_simplices[c];
        std::vector<Index> conn;
        int type = 0;
        if (g.dim == 0) {
            type = vtk_vertex;
            conn = {g.simplex_nodes[sids[0]][0]};
        } else if (sids.size() == 1) {
            const auto s = g.simplex_nodes[sids[0]];
            conn.assign(s.begin(), s.end());
            type = g.dim == 1 ? vtk_line : g.dim == 2 ? vtk_triangle : vtk_tetra;
        } else if (g.dim == 1) {
            conn = ordered_chain(g, c);
            type = vtk_poly_line;
        } else if (g.dim == 2) {
            auto loops = polygon_loops(g, c);
            conn = loops.size() == 1 ? loops.front() : keyhole(g, std::move(loops));
            type = vtk_polygon;
        } else {
            conn = g.cell_nodes(c);
            type = vtk_polyhedron;
            out.has_polyhedra = true;
        }
        for (Index v : conn) out.connectivity.push_back(id(v));
        out.offsets.push_back(static_cast<Index>(out.connectivity.size()));
        out.types.push_back(type);

        if (type == vtk_polyhedron) {
            const auto fids = g.cell_faces[c];
            out.faces.push_back(static_cast<Index>(fids.size()));
            for (std::size_t k = 0; k < fids.size(); ++k) {
                const auto fn = g.face_nodes[fids[k]];
                std::vector<Index> tri(fn.begin(), fn.end());
                const Vec3 n = (g.nodes[tri[1]] - g.nodes[tri[0]]).cross(g.nodes[tri[2]] - g.nodes[tri[0]]);
                const Vec3& outward = g.cell_face_normals[g.cell_faces.offsets[c] + static_cast<Index>(k)];
                if (n.dot(outward) < 0.0) std::swap(tri[1], tri[2]);
                out.faces.push_back(3);
                for (Index v : tri) out.faces.push_back(id(v));
            }
            out.face_offsets.push_back(static_cast<Index>(out.faces.size()));
        } else {
            out.face_offsets.push_back(-1);
        }
    }
    return out;
}

template <class T>
void write_array(std::ofstream& os, const char* type, const char* name, const std::vector<T>& values,
                 int components = 1) {
    os << fmt::format("        <DataArray type=\"{}\" Name=\"{}\"", type, name);
    if (components > 1) os << fmt::format(" NumberOfComponents=\"{}\"", components);
    os << " format=\"ascii\">\n         ";
    for (const auto& v : values) {
        if constexpr (std::is_floating_point_v<T>) {
            os << fmt::format(" {:.16g}", v);
        } else {
            os << ' ' << v;
        }
    }
    os << "\n        </DataArray>\n";
}

}  // namespace

void write_vtu(const std::filesystem::path& path, const DimGrid& grid, const CellFields& fields) {
    const auto n = static_cast<std::size_t>(grid.num_cells());
    for (const auto& [name, values] : fields.scalars)
        if (values.size() != n)
            throw Error(fmt::format("field '{}' has {} values for {} cells", name, values.size(), n));
    for (const auto& [name, values] : fields.vectors)
        if (values.size() != n)
            throw Error(fmt::format("field '{}' has {} values for {} cells", name, values.size(), n));

    const VtuCells cells = build_cells(grid);
    std::ofstream os(path);
    if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));

    os << "<?xml version=\"1.0\"?>\n"
       << "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" header_type=\"UInt64\">\n"
       << "  <UnstructuredGrid>\n"
       << fmt::format("    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">\n", cells.points.size(), n);

    os << "      <Points>\n";
    std::vector<double> coords;
    coords.reserve(cells.points.size() * 3);
    for (Index v : cells.points) coords.insert(coords.end(), grid.nodes[v].data(), grid.nodes[v].data() + 3);
    write_array(os, "Float64", "Points", coords, 3);
    os << "      </Points>\n";

    os << "      <Cells>\n";
    write_array(os, "Int64", "connectivity", cells.connectivity);
    write_array(os, "Int64", "offsets", cells.offsets);
    write_array(os, "UInt8", "types", cells.types);
    if (cells.has_polyhedra) {
        write_array(os, "Int64", "faces", cells.faces);
        write_array(os, "Int64", "faceoffsets", cells.face_offsets);
    }
    os << "      </Cells>\n";

    os << "      <CellData>\n";
    for (const auto& [name, values] : fields.scalars) write_array(os, "Float64", name.c_str(), values);
    for (const auto& [name, values] : fields.vectors) {
        std::vector<double> flat;
        flat.reserve(values.size() * 3);
        for (const auto& v : values) flat.insert(flat.end(), v.data(), v.data() + 3);
        write_array(os, "Float64", name.c_str(), flat, 3);
    }
    os << "      </CellData>\n"
       << "    </Piece>\n"
       << "  </UnstructuredGrid>\n"
       << "</VTKFile>\n";
    if (!os) throw Error(fmt::format("write failed for '{}'", path.string()));
}

std::vector<std::filesystem::path> export_vtu(const MixedDimGrid& grid, const std::map<int, CellFields>& fields,
                                              const std::filesystem::path& prefix) {
    std::vector<std::filesystem::path> written;
    const CellFields none;
    for (int d = grid.top_dim(); d >= 0; --d) {
        if (!grid.has(d)) continue;
        auto it = fields.find(d);
        auto path = prefix;
        path += fmt::format("_{}d.vtu", d);
        write_vtu(path, grid.grid(d), it == fields.end() ? none : it->second);
        written.push_back(path);
    }
    auto pvd = prefix;
    pvd += ".pvd";
    std::ofstream os(pvd);
    if (!os) throw Error(fmt::format("cannot write '{}'", pvd.string()));
    os << "<?xml version=\"1.0\"?>\n"
       << "<VTKFile type=\"Collection\" version=\"0.1\" byte_order=\"LittleEndian\">\n"
       << "  <Collection>\n";
    for (std::size_t i = 0; i < written.size(); ++i) {
        os << fmt::format("    <DataSet timestep=\"0\" group=\"\" part=\"{}\" file=\"{}\"/>\n", i,
                          written[i].filename().string());
    }
    os << "  </Collection>\n</VTKFile>\n";
    if (!os) throw Error(fmt::format("write failed for '{}'", pvd.string()));
    written.push_back(pvd);
    return written;
}

Index locate_point(const DimGrid& grid, const Vec3& p, double rel_tol) {
    if (grid.dim != grid.ambient_dim) {
        throw Error(fmt::format("point location needs a full-dimensional grid, got {}d in R^{}", grid.dim,
                                grid.ambient_dim));
    }
    const int d = grid.dim;
    for (Index c = 0; c < grid.num_cells(); ++c) {
        const double tol = rel_tol * grid.cell_diameter[c];
        if ((p - grid.cell_centroid[c]).head(d).norm() > grid.cell_diameter[c] + tol) continue;
        for (Index s : grid.cell_simplices[c]) {
            const auto sn = grid.simplex_nodes[s];
            Eigen::MatrixXd j(d, d);
            const Vec3& x0 = grid.nodes[sn[0]];
            for (int k = 0; k < d; ++k) j.col(k) = (grid.nodes[sn[k + 1]] - x0).head(d);
            const Eigen::VectorXd lam = j.partialPivLu().solve((p - x0).head(d));
            const double l0 = 1.0 - lam.sum();
            if (l0 >= -rel_tol && (lam.array() >= -rel_tol).all()) return c;
        }
    }
    return -1;
}

std::vector<LineSample> sample_over_line(const DimGrid& grid, std::span<const double> cell_field, const Vec3& p0,
                                         const Vec3& p1, int n_samples) {
    if (n_samples < 2) throw Error(fmt::format("sample_over_line needs at least 2 samples, got {}", n_samples));
    if (cell_field.size() != static_cast<std::size_t>(grid.num_cells())) {
        throw Error(fmt::format("field has {} values for {} cells", cell_field.size(), grid.num_cells()));
    }
    std::vector<LineSample> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    const double length = (p1 - p0).norm();
    for (int i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / (n_samples - 1);
        const Vec3 p = p0 + t * (p1 - p0);
        LineSample s;
        s.arc_length = t * length;
        const Index c = locate_point(grid, p);
        if (c >= 0) s.value = cell_field[c];
        out.push_back(s);
    }
    return out;
}

void write_line_csv(const std::filesystem::path& path, std::span<const LineSample> samples) {
    std::ofstream os(path);
    if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));
    os << "arc_length,value\n";
    for (const auto& s : samples) {
        os << fmt::format("{:.10g},", s.arc_length);
        if (s.value) os << fmt::format("{:.10g}", *s.value);
        os << '\n';
    }
    if (!os) throw Error(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace mdfrac
