#include "mdfrac/mdgrid.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

namespace mdfrac {

namespace {

struct FaceKeyHash {
    std::size_t operator()(const FaceKey& k) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (Index v : k) {
            h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return h;
    }
};

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Measure of the simplex spanned by the given points (k = points - 1 dimensional).
double simplex_measure(std::span<const Vec3> pts) {
    const int k = static_cast<int>(pts.size()) - 1;
    if (k <= 0) return 1.0;
    Eigen::MatrixXd jac(3, k);
    for (int i = 0; i < k; ++i) jac.col(i) = pts[i + 1] - pts[0];
    const double det = (jac.transpose() * jac).determinant();
    return std::sqrt(std::max(det, 0.0)) / factorial(k);
}

// Orthonormal basis of span{pts[i] - pts[0]} by modified Gram-Schmidt.
std::vector<Vec3> affine_basis(std::span<const Vec3> pts) {
    std::vector<Vec3> basis;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        Vec3 v = pts[i] - pts[0];
        const double len0 = v.norm();
        for (const auto& b : basis) v -= v.dot(b) * b;
        const double len = v.norm();
        if (len > 1e-14 * std::max(len0, 1e-300)) basis.push_back(v / len);
    }
    return basis;
}

// Unit vector in the simplex span, orthogonal to the face, pointing away from `opposite`.
Vec3 outward_normal(std::span<const Vec3> face_pts, const Vec3& opposite) {
    const auto tangents = affine_basis(face_pts);
    Vec3 w = opposite - face_pts[0];
    for (const auto& t : tangents) w -= w.dot(t) * t;
    return -w.normalized();
}

Vec3 mean_point(std::span<const Vec3> pts) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    return c / static_cast<double>(pts.size());
}

struct LocalFace {
    FaceKey key;
    Index cell;
    Vec3 outward;
    std::vector<Index> nodes;
    Index face_id = -1;
    std::int8_t sign = 1;
};

}  // namespace

FaceKey make_face_key(std::span<const Index> nodes) {
    if (nodes.size() > 3) throw GeometryError("face with more than 3 nodes");
    FaceKey key{-1, -1, -1};
    std::copy(nodes.begin(), nodes.end(), key.begin());
    std::sort(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(nodes.size()));
    return key;
}

std::vector<Index> DimGrid::cell_nodes(Index cell) const {
    std::vector<Index> out;
    for (Index s : cell_simplices[cell]) {
        auto nodes_of = simplex_nodes[s];
        out.insert(out.end(), nodes_of.begin(), nodes_of.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Index DimGrid::local_face_index(Index cell, Index face) const {
    auto faces = cell_faces[cell];
    auto it = std::find(faces.begin(), faces.end(), face);
    return it == faces.end() ? -1 : static_cast<Index>(it - faces.begin());
}

DimGrid build_dim_grid(std::vector<Vec3> nodes, std::span<const CellSpec> cells, int dim,
                       int ambient_dim, const BuildOptions& options) {
    if (ambient_dim != 2 && ambient_dim != 3) {
        throw GeometryError(fmt::format("ambient dimension must be 2 or 3, got {}", ambient_dim));
    }
    if (dim < 0 || dim > ambient_dim) {
        throw GeometryError(fmt::format("grid dimension {} outside [0, {}]", dim, ambient_dim));
    }
    DimGrid g;
    g.dim = dim;
    g.ambient_dim = ambient_dim;
    g.nodes = std::move(nodes);
    const auto n_nodes = static_cast<Index>(g.nodes.size());
    for (const auto& p : g.nodes) {
        if (!p.allFinite()) throw GeometryError("non-finite node coordinate");
    }

    std::vector<Vec3> pts;
    for (Index c = 0; c < static_cast<Index>(cells.size()); ++c) {
        const auto& spec = cells[c];
        if (spec.simplices.empty()) throw GeometryError(fmt::format("cell {} has no simplices", c));
        std::vector<Index> sids;
        double measure = 0.0;
        Vec3 centroid = Vec3::Zero();
        for (const auto& simplex : spec.simplices) {
            if (static_cast<int>(simplex.size()) != dim + 1) {
                throw GeometryError(fmt::format("cell {}: simplex with {} nodes in a {}d grid", c,
                                                simplex.size(), dim));
            }
            pts.clear();
            for (Index v : simplex) {
                if (v < 0 || v >= n_nodes) {
                    throw GeometryError(fmt::format("cell {}: node id {} out of range", c, v));
                }
                pts.push_back(g.nodes[v]);
            }
            double m = simplex_measure(pts);
            if (dim > 0) {
                double edge = 0.0;
                for (std::size_t i = 0; i < pts.size(); ++i)
                    for (std::size_t j = i + 1; j < pts.size(); ++j)
                        edge = std::max(edge, (pts[i] - pts[j]).norm());
                if (!(m > 1e-12 * std::pow(edge, dim))) {
                    throw GeometryError(fmt::format("degenerate cell {} (zero measure)", c));
                }
            }
            sids.push_back(g.simplex_nodes.size());
            g.simplex_nodes.push_back(simplex);
            measure += m;
            centroid += m * mean_point(pts);
        }
        g.cell_simplices.push_back(sids);
        g.cell_tag.push_back(spec.tag);
        if (dim == 0) {
            g.cell_measure.push_back(1.0);
            g.cell_centroid.push_back(g.nodes[spec.simplices.front().front()]);
            g.cell_diameter.push_back(1.0);
            continue;
        }
        g.cell_measure.push_back(measure);
        g.cell_centroid.push_back(centroid / measure);
        auto cn = g.cell_nodes(c);
        double diam = 0.0;
        for (std::size_t i = 0; i < cn.size(); ++i)
            for (std::size_t j = i + 1; j < cn.size(); ++j)
                diam = std::max(diam, (g.nodes[cn[i]] - g.nodes[cn[j]]).norm());
        g.cell_diameter.push_back(diam);
    }

    if (dim == 0) {
        for (Index c = 0; c < g.num_cells(); ++c) g.cell_faces.push_back(std::vector<Index>{});
        return g;
    }

    // Faces of every cell: simplex faces that appear once inside the cell.
    std::vector<std::vector<LocalFace>> per_cell(cells.size());
    for (Index c = 0; c < g.num_cells(); ++c) {
        std::map<FaceKey, int> count;
        std::vector<LocalFace> candidates;
        for (Index s : g.cell_simplices[c]) {
            auto sn = g.simplex_nodes[s];
            for (int j = 0; j <= dim; ++j) {
                LocalFace lf;
                lf.cell = c;
                for (int i = 0; i <= dim; ++i)
                    if (i != j) lf.nodes.push_back(sn[i]);
                lf.key = make_face_key(lf.nodes);
                pts.clear();
                for (Index v : lf.nodes) pts.push_back(g.nodes[v]);
                lf.outward = outward_normal(pts, g.nodes[sn[j]]);
                ++count[lf.key];
                candidates.push_back(std::move(lf));
            }
        }
        for (auto& lf : candidates) {
            const int n = count[lf.key];
            if (n > 2) throw GeometryError(fmt::format("cell {}: non-manifold internal face", c));
            // Cut faces stay even when a cell encloses both sides of them.
            if (n == 1 || options.cut_faces.contains(lf.key)) per_cell[c].push_back(std::move(lf));
        }
    }

    std::unordered_map<FaceKey, Index, FaceKeyHash> group_of;
    std::vector<std::vector<std::pair<Index, Index>>> groups;  // (cell, local index)
    for (Index c = 0; c < g.num_cells(); ++c) {
        for (Index k = 0; k < static_cast<Index>(per_cell[c].size()); ++k) {
            auto [it, inserted] = group_of.try_emplace(per_cell[c][k].key, static_cast<Index>(groups.size()));
            if (inserted) groups.emplace_back();
            groups[it->second].emplace_back(c, k);
        }
    }

    auto add_face = [&](const LocalFace& lf, Index c0, Index c1, FaceKind kind) {
        const Index id = g.num_faces();
        g.face_nodes.push_back(lf.nodes);
        g.face_cells.push_back({c0, c1});
        pts.clear();
        for (Index v : lf.nodes) pts.push_back(g.nodes[v]);
        g.face_measure.push_back(simplex_measure(pts));
        g.face_centroid.push_back(mean_point(pts));
        g.face_normal.push_back(lf.outward);
        g.face_kind.push_back(kind);
        g.face_side.push_back(Side::none);
        g.face_twin.push_back(-1);
        return id;
    };

    for (const auto& grp : groups) {
        auto& first = per_cell[grp[0].first][grp[0].second];
        const bool cut = options.cut_faces.contains(first.key);
        if (cut) {
            std::vector<Index> ids;
            for (auto [c, k] : grp) {
                auto& lf = per_cell[c][k];
                lf.face_id = add_face(lf, c, -1, FaceKind::fracture);
                lf.sign = 1;
                ids.push_back(lf.face_id);
            }
            if (ids.size() == 2) {
                g.face_twin[ids[0]] = ids[1];
                g.face_twin[ids[1]] = ids[0];
            }
        } else if (grp.size() == 1) {
            first.face_id = add_face(first, first.cell, -1, FaceKind::outer);
            first.sign = 1;
        } else if (grp.size() == 2) {
            auto& second = per_cell[grp[1].first][grp[1].second];
            first.face_id = add_face(first, first.cell, second.cell, FaceKind::interior);
            first.sign = 1;
            second.face_id = first.face_id;
            second.sign = -1;
        } else {
            throw GeometryError(fmt::format("non-manifold face shared by {} cells (first cell {})",
                                            grp.size(), first.cell));
        }
    }

    for (Index c = 0; c < g.num_cells(); ++c) {
        std::vector<Index> ids;
        for (const auto& lf : per_cell[c]) {
            ids.push_back(lf.face_id);
            g.cell_face_signs.push_back(lf.sign);
            g.cell_face_normals.push_back(lf.outward);
        }
        g.cell_faces.push_back(ids);
    }
    return g;
}

Eigen::MatrixXd tangent_frame(const DimGrid& grid, Index cell, double rel_tol) {
    const int d = grid.dim;
    if (d == 0) return Eigen::MatrixXd(3, 0);
    if (d == grid.ambient_dim) return Eigen::MatrixXd::Identity(3, d);
    auto sn = grid.simplex_nodes[grid.cell_simplices[cell][0]];
    std::vector<Vec3> pts;
    for (Index v : sn) pts.push_back(grid.nodes[v]);
    const auto basis = affine_basis(pts);
    if (static_cast<int>(basis.size()) != d) {
        throw GeometryError(fmt::format("cell {}: degenerate tangent space", cell));
    }
    Eigen::MatrixXd frame(3, d);
    for (int i = 0; i < d; ++i) frame.col(i) = basis[i];
    const double tol = rel_tol * grid.cell_diameter[cell];
    for (Index v : grid.cell_nodes(cell)) {
        const Vec3 r = grid.nodes[v] - pts[0];
        const Vec3 off = r - frame * (frame.transpose() * r);
        if (off.norm() > tol) {
            throw GeometryError(fmt::format("cell {}: nodes are not coplanar (offset {:.3e})", cell, off.norm()));
        }
    }
    return frame;
}

namespace {

// Unit normal of a codimension-one low cell, used to label the two sides.
std::optional<Vec3> codim_one_normal(const DimGrid& low, Index cell) {
    if (low.dim != low.ambient_dim - 1) return std::nullopt;
    auto frame = tangent_frame(low, cell);
    Vec3 n;
    if (low.ambient_dim == 2) {
        n = Vec3(-frame(1, 0), frame(0, 0), 0.0);
    } else {
        n = Vec3(frame.col(0)).cross(Vec3(frame.col(1)));
    }
    return n.normalized();
}

void split_face(DimGrid& g, Index face) {
    const auto [c0, c1] = g.face_cells[face];
    const Index id = g.num_faces();
    std::vector<Index> nodes(g.face_nodes[face].begin(), g.face_nodes[face].end());
    g.face_nodes.push_back(nodes);
    g.face_cells.push_back({c1, -1});
    g.face_cells[face] = {c0, -1};
    g.face_measure.push_back(g.face_measure[face]);
    g.face_centroid.push_back(g.face_centroid[face]);
    g.face_kind.push_back(FaceKind::fracture);
    g.face_side.push_back(Side::none);
    g.face_twin.push_back(face);
    g.face_twin[face] = id;
    const Index k = g.local_face_index(c1, face);
    const Index pos = g.cell_faces.offsets[c1] + k;
    g.cell_faces.values[pos] = id;
    g.cell_face_signs[pos] = 1;
    g.face_normal.push_back(g.cell_face_normals[pos]);
}

// Makes the sign of the owning cell +1, i.e. the reference normal points out of the cell.
void orient_outward(DimGrid& g, Index face) {
    const Index c = g.face_cells[face][0];
    const Index pos = g.cell_faces.offsets[c] + g.local_face_index(c, face);
    if (g.cell_face_signs[pos] < 0) {
        g.cell_face_signs[pos] = 1;
        g.face_normal[face] = -g.face_normal[face];
    }
}

}  // namespace

CouplingMap attach_coupling(DimGrid& high, const DimGrid& low, double rel_tol) {
    if (low.dim != high.dim - 1) {
        throw GeometryError(fmt::format("cannot couple a {}d grid with a {}d grid", high.dim, low.dim));
    }
    CouplingMap cmap;
    cmap.high_dim = high.dim;

    double scale = 0.0;
    for (const auto& p : high.nodes) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    scale = std::max(scale, 1.0);

    std::vector<Index> order(high.num_faces());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = high.face_centroid[a].x(), xb = high.face_centroid[b].x();
        return xa < xb || (xa == xb && a < b);
    });
    std::vector<double> xs(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) xs[i] = high.face_centroid[order[i]].x();

    std::vector<std::vector<Index>> matched(low.num_cells());
    std::vector<Index> owner(high.num_faces(), -1);
    for (Index l = 0; l < low.num_cells(); ++l) {
        const double h = low.dim > 0 ? low.cell_diameter[l] : scale;
        const double tol = rel_tol * h;
        const Vec3& x = low.cell_centroid[l];
        auto lo = std::lower_bound(xs.begin(), xs.end(), x.x() - tol);
        auto hi = std::upper_bound(xs.begin(), xs.end(), x.x() + tol);
        for (auto it = lo; it != hi; ++it) {
            const Index f = order[static_cast<std::size_t>(it - xs.begin())];
            if ((high.face_centroid[f] - x).norm() > tol) continue;
            if (low.dim > 0 &&
                std::abs(high.face_measure[f] - low.cell_measure[l]) > 1e-8 * low.cell_measure[l]) {
                continue;
            }
            if (owner[f] >= 0) {
                throw GeometryError(fmt::format("face {} matches low cells {} and {}", f, owner[f], l));
            }
            owner[f] = l;
            matched[l].push_back(f);
        }
        if (matched[l].empty()) {
            throw GeometryError(fmt::format("non-conforming mesh: {}d cell {} matches no {}d face",
                                            low.dim, l, high.dim));
        }
    }

    for (Index l = 0; l < low.num_cells(); ++l) {
        std::vector<Index> halves;
        for (Index f : matched[l]) {
            halves.push_back(f);
            if (high.face_cells[f][1] >= 0) {
                split_face(high, f);
                halves.push_back(high.num_faces() - 1);
            }
        }
        std::sort(halves.begin(), halves.end());
        for (Index f : halves) {
            orient_outward(high, f);
            high.face_kind[f] = FaceKind::fracture;
        }
        Vec3 ref;
        if (auto n = codim_one_normal(low, l)) {
            ref = *n;
        } else {
            ref = -high.face_normal[halves.front()];
        }
        for (Index f : halves) {
            const Vec3 r = high.cell_centroid[high.face_cells[f][0]] - low.cell_centroid[l];
            const Side side = r.dot(ref) > 0.0 ? Side::plus : Side::minus;
            high.face_side[f] = side;
            cmap.pairs.push_back({f, l, side, low.cell_measure[l]});
        }
    }

    std::vector<Index> idx;
    std::size_t p = 0;
    for (Index l = 0; l < low.num_cells(); ++l) {
        idx.clear();
        while (p < cmap.pairs.size() && cmap.pairs[p].low_cell == l) idx.push_back(static_cast<Index>(p++));
        cmap.low_cell_pairs.push_back(idx);
    }
    return cmap;
}

int MixedDimGrid::top_dim() const {
    for (int d = static_cast<int>(grids.size()) - 1; d >= 0; --d)
        if (!grids[d].empty()) return d;
    return -1;
}

DofLayout MixedDimGrid::dof_layout() const {
    DofLayout layout;
    const int n = static_cast<int>(grids.size());
    layout.velocity_offset.assign(n, -1);
    layout.velocity_count.assign(n, 0);
    layout.pressure_offset.assign(n, -1);
    layout.pressure_count.assign(n, 0);
    Index off = 0;
    for (int d = n - 1; d >= 0; --d) {
        if (grids[d].empty()) continue;
        if (d > 0) {
            layout.velocity_offset[d] = off;
            layout.velocity_count[d] = grids[d].num_faces();
            off += grids[d].num_faces();
        }
        layout.pressure_offset[d] = off;
        layout.pressure_count[d] = grids[d].num_cells();
        off += grids[d].num_cells();
    }
    layout.total = off;
    return layout;
}

MixedDimGrid assemble_mixed_grid(std::vector<DimGrid> grids, int ambient_dim, double rel_tol) {
    MixedDimGrid md;
    md.ambient_dim = ambient_dim;
    grids.resize(ambient_dim + 1);
    for (int d = 0; d <= ambient_dim; ++d) {
        if (grids[d].empty()) {
            grids[d].dim = d;
            grids[d].ambient_dim = ambient_dim;
        } else if (grids[d].dim != d || grids[d].ambient_dim != ambient_dim) {
            throw GeometryError(fmt::format("grid at slot {} has dimension {} in R^{}", d, grids[d].dim,
                                            grids[d].ambient_dim));
        }
    }
    md.grids = std::move(grids);
    md.couplings.resize(ambient_dim + 1);
    for (int d = ambient_dim; d >= 1; --d) {
        md.couplings[d].high_dim = d;
        if (md.has(d) && md.has(d - 1)) {
            md.couplings[d] = attach_coupling(md.grids[d], md.grids[d - 1], rel_tol);
        } else if (md.has(d) && !md.has(d - 1) && d >= 2 && md.has(d - 2)) {
            throw GeometryError(fmt::format("grids of dimension {} and {} without a {}d grid between them",
                                            d, d - 2, d - 1));
        }
    }
    classify_boundaries(md);
    return md;
}

void classify_boundaries(MixedDimGrid& md) {
    const int top = md.top_dim();
    if (top < 1) return;
    auto& tg = md.grids[top];
    std::set<FaceKey> boundary_subsets;
    for (Index f = 0; f < tg.num_faces(); ++f) {
        if (tg.face_kind[f] == FaceKind::fracture) continue;
        if (!tg.is_boundary_face(f)) {
            tg.face_kind[f] = FaceKind::interior;
            continue;
        }
        tg.face_kind[f] = FaceKind::outer;
        auto nodes = tg.face_nodes[f];
        const int k = static_cast<int>(nodes.size());
        // Every nonempty subset of the face nodes.
        for (int mask = 1; mask < (1 << k); ++mask) {
            std::vector<Index> sub;
            for (int i = 0; i < k; ++i)
                if (mask & (1 << i)) sub.push_back(nodes[i]);
            boundary_subsets.insert(make_face_key(sub));
        }
    }
    for (int d = top - 1; d >= 1; --d) {
        auto& g = md.grids[d];
        for (Index f = 0; f < g.num_faces(); ++f) {
            if (g.face_kind[f] == FaceKind::fracture) continue;
            if (!g.is_boundary_face(f)) {
                g.face_kind[f] = FaceKind::interior;
                continue;
            }
            const auto key = make_face_key(g.face_nodes[f]);
            g.face_kind[f] = boundary_subsets.contains(key) ? FaceKind::outer : FaceKind::tip;
        }
    }
}

std::vector<std::vector<Index>> polygon_loops(const DimGrid& grid, Index cell) {
    if (grid.dim != 2) throw GeometryError("polygon_loops requires a 2d grid");
    const auto frame = tangent_frame(grid, cell);
    struct Edge {
        Index a, b;
        bool used = false;
    };
    std::vector<Edge> edges;
    auto faces = grid.cell_faces[cell];
    for (std::size_t k = 0; k < faces.size(); ++k) {
        auto fn = grid.face_nodes[faces[k]];
        const Vec3& n = grid.cell_face_normals[grid.cell_faces.offsets[cell] + k];
        const Eigen::Vector2d t = frame.transpose() * (grid.nodes[fn[1]] - grid.nodes[fn[0]]);
        const Eigen::Vector2d nl = frame.transpose() * n;
        // Counter-clockwise traversal keeps the outward normal on the right.
        const double right = t.x() * nl.y() - t.y() * nl.x();
        if (right < 0.0)
            edges.push_back({fn[0], fn[1]});
        else
            edges.push_back({fn[1], fn[0]});
    }
    std::multimap<Index, std::size_t> starts;
    for (std::size_t i = 0; i < edges.size(); ++i) starts.emplace(edges[i].a, i);
    std::vector<std::vector<Index>> loops;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].used) continue;
        std::vector<Index> loop;
        std::size_t cur = i;
        while (true) {
            edges[cur].used = true;
            loop.push_back(edges[cur].a);
            const Index next_node = edges[cur].b;
            if (next_node == edges[i].a) break;
            auto [lo, hi] = starts.equal_range(next_node);
            std::size_t nxt = edges.size();
            for (auto it = lo; it != hi; ++it)
                if (!edges[it->second].used) {
                    nxt = it->second;
                    break;
                }
            if (nxt == edges.size()) break;
            cur = nxt;
        }
        loops.push_back(std::move(loop));
    }
    return loops;
}

bool is_convex_polygon(const DimGrid& grid, Index cell) {
    const auto loops = polygon_loops(grid, cell);
    if (loops.size() != 1) return false;
    const auto& loop = loops.front();
    auto sorted = loop;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
    const auto frame = tangent_frame(grid, cell);
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d a = frame.transpose() * grid.nodes[loop[i]];
        const Eigen::Vector2d b = frame.transpose() * grid.nodes[loop[(i + 1) % n]];
        const Eigen::Vector2d c = frame.transpose() * grid.nodes[loop[(i + 2) % n]];
        const Eigen::Vector2d u = b - a, v = c - b;
        const double cross = u.x() * v.y() - u.y() * v.x();
        if (cross < -1e-12 * u.norm() * v.norm()) return false;
    }
    return true;
}

}  // namespace mdfrac
