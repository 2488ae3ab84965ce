#include "mdfrac/meshio.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <map>

namespace mdfrac {

namespace {

std::map<FaceKey, int> matrix_face_counts(const RawMesh& raw, int n, const std::set<int>& matrix_tags) {
    std::map<FaceKey, int> count;
    std::vector<Index> face;
    for (const auto& e : raw.elements) {
        if (element_dim(e.type) != n) continue;
        if (!matrix_tags.empty() && !matrix_tags.contains(e.physical_tag)) continue;
        for (std::size_t skip = 0; skip < e.nodes.size(); ++skip) {
            face.clear();
            for (std::size_t i = 0; i < e.nodes.size(); ++i)
                if (i != skip) face.push_back(e.nodes[i]);
            ++count[make_face_key(face)];
        }
    }
    return count;
}

int parse_tag(const RawMesh& mesh, const std::string& name, int dim) {
    for (const auto& [tag, nm] : mesh.physical_names) {
        auto it = mesh.physical_dims.find(tag);
        if (nm == name && (it == mesh.physical_dims.end() || it->second == dim)) return tag;
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), value);
    if (ec == std::errc() && ptr == name.data() + name.size()) return value;
    throw ConfigError(fmt::format("unknown physical name '{}' for dimension {}", name, dim));
}

struct EntityKey {
    int physical;
    int entity;
    auto operator<=>(const EntityKey&) const = default;
};

struct Incidence {
    int count = 0;
    std::set<EntityKey> entities;
};

}  // namespace

FractureTagging FractureTagging::infer(const RawMesh& mesh) {
    FractureTagging t;
    const int n = mesh.ambient_dim();
    for (const auto& e : mesh.elements)
        if (element_dim(e.type) == n) t.matrix_tags.insert(e.physical_tag);
    const auto faces = matrix_face_counts(mesh, n, t.matrix_tags);
    for (const auto& e : mesh.elements) {
        if (element_dim(e.type) != n - 1) continue;
        auto it = faces.find(make_face_key(e.nodes));
        if (it != faces.end() && it->second == 2) t.fracture_tags.insert(e.physical_tag);
    }
    return t;
}

FractureTagging FractureTagging::from_names(const RawMesh& mesh, const std::vector<std::string>& matrix,
                                            const std::vector<std::string>& fractures,
                                            const std::vector<std::string>& intersections) {
    const int n = mesh.ambient_dim();
    FractureTagging t;
    for (const auto& s : matrix) t.matrix_tags.insert(parse_tag(mesh, s, n));
    for (const auto& s : fractures) t.fracture_tags.insert(parse_tag(mesh, s, n - 1));
    for (const auto& s : intersections) t.intersection_tags.insert(parse_tag(mesh, s, n - 2));
    for (int tag : t.fracture_tags)
        if (t.matrix_tags.contains(tag)) throw ConfigError(fmt::format("tag {} is both matrix and fracture", tag));
    for (int tag : t.intersection_tags)
        if (t.matrix_tags.contains(tag) || t.fracture_tags.contains(tag))
            throw ConfigError(fmt::format("intersection tag {} overlaps another role", tag));
    return t;
}

MixedDimGrid build_mixed_grid(const RawMesh& raw, const FractureTagging& tags, double rel_tol) {
    const int n = raw.ambient_dim();
    std::vector<std::vector<CellSpec>> specs(n + 1);
    std::vector<std::set<FaceKey>> seen(n + 1);

    for (const auto& e : raw.elements) {
        if (element_dim(e.type) != n) continue;
        if (!tags.matrix_tags.empty() && !tags.matrix_tags.contains(e.physical_tag)) continue;
        specs[n].push_back({{e.nodes}, e.physical_tag});
    }
    if (specs[n].empty()) throw GeometryError(fmt::format("mesh has no {}d matrix elements", n));

    const auto faces = matrix_face_counts(raw, n, tags.matrix_tags);
    std::vector<EntityKey> frac_entity;
    for (std::size_t i = 0; i < raw.elements.size(); ++i) {
        const auto& e = raw.elements[i];
        if (element_dim(e.type) != n - 1 || !tags.fracture_tags.contains(e.physical_tag)) continue;
        const auto key = make_face_key(e.nodes);
        if (!faces.contains(key)) {
            throw GeometryError(fmt::format("non-conforming fracture: element {} (tag {}) is not a face of the {}d mesh",
                                            i + 1, e.physical_tag, n));
        }
        if (!seen[n - 1].insert(key).second) continue;
        specs[n - 1].push_back({{e.nodes}, e.physical_tag});
        frac_entity.push_back({e.physical_tag, e.entity_tag});
    }

    auto add_explicit = [&](int dim) {
        for (const auto& e : raw.elements) {
            if (element_dim(e.type) != dim || !tags.intersection_tags.contains(e.physical_tag)) continue;
            if (seen[dim].insert(make_face_key(e.nodes)).second) specs[dim].push_back({{e.nodes}, e.physical_tag});
        }
    };

    // Node-graph inference: a node is a junction when at least three cells meet
    // there or cells of different entities touch.
    auto infer_points = [&](const std::vector<CellSpec>& lines, const std::vector<std::set<EntityKey>>& entity_of) {
        std::map<Index, Incidence> at;
        for (std::size_t c = 0; c < lines.size(); ++c) {
            for (Index v : lines[c].simplices.front()) {
                auto& inc = at[v];
                ++inc.count;
                inc.entities.insert(entity_of[c].begin(), entity_of[c].end());
            }
        }
        std::vector<CellSpec> points;
        for (const auto& [v, inc] : at) {
            if (inc.count >= 3 || (inc.count >= 2 && inc.entities.size() >= 2)) points.push_back({{{v}}, 0});
        }
        return points;
    };

    if (n == 2 && !specs[1].empty()) {
        if (!tags.intersection_tags.empty()) {
            add_explicit(0);
        } else {
            std::vector<std::set<EntityKey>> ent;
            for (const auto& k : frac_entity) ent.push_back({k});
            specs[0] = infer_points(specs[1], ent);
        }
    } else if (n == 3 && !specs[2].empty()) {
        std::vector<std::set<EntityKey>> line_entities;
        if (!tags.intersection_tags.empty()) {
            add_explicit(1);
            line_entities.assign(specs[1].size(), {});
            add_explicit(0);
        } else {
            std::map<FaceKey, Incidence> edges;
            std::vector<FaceKey> order;
            for (std::size_t c = 0; c < specs[2].size(); ++c) {
                const auto& tri = specs[2][c].simplices.front();
                for (int skip = 0; skip < 3; ++skip) {
                    std::vector<Index> edge;
                    for (int i = 0; i < 3; ++i)
                        if (i != skip) edge.push_back(tri[i]);
                    const auto key = make_face_key(edge);
                    auto [it, inserted] = edges.try_emplace(key);
                    if (inserted) order.push_back(key);
                    ++it->second.count;
                    it->second.entities.insert(frac_entity[c]);
                }
            }
            for (const auto& key : order) {
                const auto& inc = edges.at(key);
                if (inc.count >= 3 || (inc.count >= 2 && inc.entities.size() >= 2)) {
                    specs[1].push_back({{{key[0], key[1]}}, 0});
                    line_entities.push_back(inc.entities);
                }
            }
        }
        if (specs[0].empty() && !specs[1].empty()) {
            // Lines of one intersection share an entity set; a junction is where sets differ.
            std::map<std::set<EntityKey>, int> set_id;
            std::vector<std::set<EntityKey>> ent;
            for (std::size_t c = 0; c < specs[1].size(); ++c) {
                std::set<EntityKey> s;
                if (c < line_entities.size() && !line_entities[c].empty()) {
                    auto [it, inserted] = set_id.try_emplace(line_entities[c], static_cast<int>(set_id.size()));
                    s.insert({-1, it->second});
                }
                ent.push_back(s);
            }
            specs[0] = infer_points(specs[1], ent);
        }
    }

    std::vector<DimGrid> grids(n + 1);
    for (int d = n; d >= 0; --d) {
        if (specs[d].empty()) continue;
        BuildOptions opt;
        if (d >= 1) {
            for (const auto& spec : specs[d - 1]) opt.cut_faces.insert(make_face_key(spec.simplices.front()));
        }
        grids[d] = build_dim_grid(raw.nodes, specs[d], d, n, opt);
    }
    spdlog::debug("mixed grid: {} / {} / {} cells (dims {}, {}, {})", specs[n].size(), specs[n - 1].size(),
                  specs[n - 2].size(), n, n - 1, n - 2);
    return assemble_mixed_grid(std::move(grids), n, rel_tol);
}

}  // namespace mdfrac
