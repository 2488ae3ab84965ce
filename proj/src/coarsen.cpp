#include "mdfrac/coarsen.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <queue>

namespace mdfrac {

namespace {

Index find_root(std::vector<Index>& parent, Index c) {
    while (parent[c] != c) {
        parent[c] = parent[parent[c]];
        c = parent[c];
    }
    return c;
}

// Fine cells of every coarse cell connected through interior faces (and
// through split fracture faces when `through_fractures`)?
std::vector<bool> connectivity(const DimGrid& fine, const std::vector<Index>& f2c, Index n_coarse,
                               bool through_fractures) {
    std::vector<std::vector<Index>> adj(fine.num_cells());
    for (Index f = 0; f < fine.num_faces(); ++f) {
        const auto [a, b] = fine.face_cells[f];
        if (b >= 0) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        } else if (through_fractures && fine.face_twin[f] > f) {
            const Index o = fine.face_cells[fine.face_twin[f]][0];
            adj[a].push_back(o);
            adj[o].push_back(a);
        }
    }
    std::vector<bool> ok(n_coarse, true);
    std::vector<bool> visited(fine.num_cells(), false);
    std::vector<bool> started(n_coarse, false);
    for (Index c = 0; c < fine.num_cells(); ++c) {
        const Index k = f2c[c];
        if (visited[c]) continue;
        if (started[k]) {
            ok[k] = false;
            continue;
        }
        started[k] = true;
        std::vector<Index> stack{c};
        visited[c] = true;
        while (!stack.empty()) {
            const Index x = stack.back();
            stack.pop_back();
            for (Index y : adj[x]) {
                if (!visited[y] && f2c[y] == k) {
                    visited[y] = true;
                    stack.push_back(y);
                }
            }
        }
    }
    return ok;
}

std::vector<FaceKey> face_keys(const DimGrid& g, bool fracture) {
    std::vector<FaceKey> keys;
    for (Index f = 0; f < g.num_faces(); ++f) {
        const bool is_frac = g.face_kind[f] == FaceKind::fracture || g.face_twin[f] >= 0;
        if (fracture != is_frac) continue;
        if (!fracture && !g.is_boundary_face(f)) continue;
        keys.push_back(make_face_key(g.face_nodes[f]));
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace

double coarsen_threshold(const DimGrid& grid, const CoarsenConfig& cfg) {
    if (!(cfg.threshold_value >= 0.0)) {
        throw Error(fmt::format("coarsening threshold must be non-negative, got {}", cfg.threshold_value));
    }
    if (cfg.threshold_mode == ThresholdMode::absolute) return cfg.threshold_value;
    if (grid.empty()) return 0.0;
    const double total = std::accumulate(grid.cell_measure.begin(), grid.cell_measure.end(), 0.0);
    return cfg.threshold_value * total / grid.num_cells();
}

Partition make_partition(const DimGrid& fine, const std::vector<Index>& fine_to_coarse) {
    if (fine_to_coarse.size() != static_cast<std::size_t>(fine.num_cells())) {
        throw Error(fmt::format("partition map has {} entries for {} cells", fine_to_coarse.size(), fine.num_cells()));
    }
    std::vector<Index> relabel;
    Partition p;
    p.fine_to_coarse.resize(fine_to_coarse.size());
    std::vector<std::vector<Index>> members;
    for (Index c = 0; c < fine.num_cells(); ++c) {
        const Index k = fine_to_coarse[c];
        if (k < 0) throw Error(fmt::format("negative coarse id for cell {}", c));
        if (static_cast<std::size_t>(k) >= relabel.size()) relabel.resize(k + 1, -1);
        if (relabel[k] < 0) {
            relabel[k] = static_cast<Index>(members.size());
            members.emplace_back();
        }
        p.fine_to_coarse[c] = relabel[k];
        members[relabel[k]].push_back(c);
    }
    std::vector<CellSpec> specs(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
        specs[k].tag = fine.cell_tag[members[k].front()];
        for (Index c : members[k])
            for (Index s : fine.cell_simplices[c]) {
                const auto sn = fine.simplex_nodes[s];
                specs[k].simplices.emplace_back(sn.begin(), sn.end());
            }
    }
    BuildOptions opt;
    for (Index f = 0; f < fine.num_faces(); ++f)
        if (fine.face_kind[f] == FaceKind::fracture || fine.face_twin[f] >= 0)
            opt.cut_faces.insert(make_face_key(fine.face_nodes[f]));
    p.coarse = build_dim_grid(fine.nodes, specs, fine.dim, fine.ambient_dim, opt);
    return p;
}

Partition coarsen(const DimGrid& grid, const CoarsenConfig& cfg) {
    if (grid.empty()) throw Error("cannot coarsen an empty grid");
    const double threshold = coarsen_threshold(grid, cfg);
    const Index n = grid.num_cells();
    std::vector<Index> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    if (threshold <= 0.0) return make_partition(grid, parent);

    const double total = std::accumulate(grid.cell_measure.begin(), grid.cell_measure.end(), 0.0);
    if (threshold > total) {
        spdlog::warn("coarsening threshold {} exceeds the total measure {}; cells merge into connected components",
                     threshold, total);
    }

    std::vector<std::set<Index>> nbrs(n);
    for (Index f = 0; f < grid.num_faces(); ++f) {
        const auto [a, b] = grid.face_cells[f];
        Index other = b;
        if (other < 0 && !cfg.protect_fracture_faces && grid.face_twin[f] >= 0) {
            other = grid.face_cells[grid.face_twin[f]][0];
        }
        if (other >= 0 && other != a) {
            nbrs[a].insert(other);
            nbrs[other].insert(a);
        }
    }

    std::vector<double> measure = grid.cell_measure;
    std::vector<bool> alive(n, true);
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (Index c = 0; c < n; ++c)
        if (measure[c] < threshold) heap.emplace(measure[c], c);

    Index merges = 0;
    while (!heap.empty()) {
        const auto [m, c] = heap.top();
        heap.pop();
        if (!alive[c] || m != measure[c]) continue;
        Index partner = -1;
        for (Index o : nbrs[c]) {
            if (partner < 0 || measure[o] < measure[partner] || (measure[o] == measure[partner] && o < partner)) {
                partner = o;
            }
        }
        if (partner < 0) continue;
        const Index keep = std::min(c, partner);
        const Index gone = std::max(c, partner);
        alive[gone] = false;
        parent[gone] = keep;
        measure[keep] += measure[gone];
        for (Index o : nbrs[gone]) {
            nbrs[o].erase(gone);
            if (o != keep) {
                nbrs[o].insert(keep);
                nbrs[keep].insert(o);
            }
        }
        nbrs[keep].erase(gone);
        nbrs[gone].clear();
        ++merges;
        if (measure[keep] < threshold) heap.emplace(measure[keep], keep);
    }
    for (Index c = 0; c < n; ++c) parent[c] = find_root(parent, c);
    spdlog::debug("coarsening: {} merges, {} -> {} cells", merges, n, n - merges);
    return make_partition(grid, parent);
}

PartitionReport validate_partition(const Partition& p, const DimGrid& fine) {
    PartitionReport r;
    const Index nc = p.coarse.num_cells();
    if (p.fine_to_coarse.size() != static_cast<std::size_t>(fine.num_cells())) {
        r.surjective = false;
        r.messages.push_back("map size differs from the fine cell count");
        return r;
    }
    std::vector<int> hits(nc, 0);
    for (Index k : p.fine_to_coarse) {
        if (k < 0 || k >= nc) {
            r.surjective = false;
            r.messages.push_back(fmt::format("coarse id {} out of range", k));
            return r;
        }
        ++hits[k];
    }
    for (Index k = 0; k < nc; ++k)
        if (hits[k] == 0) {
            r.surjective = false;
            r.messages.push_back(fmt::format("coarse cell {} has no fine cells", k));
        }

    const auto all = connectivity(fine, p.fine_to_coarse, nc, true);
    const auto direct = connectivity(fine, p.fine_to_coarse, nc, false);
    for (Index k = 0; k < nc; ++k) {
        if (!all[k]) {
            r.connected = false;
            r.messages.push_back(fmt::format("coarse cell {} is not face-connected", k));
        } else if (!direct[k]) {
            r.fracture_faces_conserved = false;
            r.messages.push_back(fmt::format("coarse cell {} merges across a fracture face", k));
        }
    }

    std::vector<double> sum(nc, 0.0);
    for (Index c = 0; c < fine.num_cells(); ++c) sum[p.fine_to_coarse[c]] += fine.cell_measure[c];
    for (Index k = 0; k < nc; ++k) {
        if (std::abs(sum[k] - p.coarse.cell_measure[k]) > 1e-12 * p.coarse.cell_measure[k]) {
            r.measure_additive = false;
            r.messages.push_back(fmt::format("coarse cell {}: measure {} vs fine sum {}", k, p.coarse.cell_measure[k], sum[k]));
        }
    }
    if (face_keys(fine, false) != face_keys(p.coarse, false)) {
        r.boundary_faces_conserved = false;
        r.messages.push_back("outer boundary faces differ");
    }
    if (face_keys(fine, true) != face_keys(p.coarse, true)) {
        r.fracture_faces_conserved = false;
        r.messages.push_back("fracture faces differ");
    }
    return r;
}

MixedDimGrid coarsen_mixed_grid(const MixedDimGrid& grid, const CoarsenConfig& cfg, std::vector<Index>* fine_to_coarse) {
    const int top = grid.top_dim();
    if (top < 0) throw Error("cannot coarsen an empty grid");
    auto part = coarsen(grid.grid(top), cfg);
    if (fine_to_coarse) *fine_to_coarse = part.fine_to_coarse;
    std::vector<DimGrid> grids = grid.grids;
    grids[top] = std::move(part.coarse);
    return assemble_mixed_grid(std::move(grids), grid.ambient_dim);
}

}  // namespace mdfrac
