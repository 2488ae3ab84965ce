#include <doctest.h>

#include "mdfrac/coarsen.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace mdfrac;
using namespace mdfrac::test;

namespace {

// Four rectangles in a row with widths 0.1, 0.1, 0.4, 0.4 (unit height).
DimGrid strip() {
    const std::vector<double> xs{0.0, 0.1, 0.2, 0.6, 1.0};
    std::vector<Vec3> nodes;
    for (double x : xs) nodes.emplace_back(x, 0.0, 0.0);
    for (double x : xs) nodes.emplace_back(x, 1.0, 0.0);
    std::vector<CellSpec> cells;
    for (Index i = 0; i < 4; ++i) cells.push_back({{{i, i + 1, i + 6}, {i, i + 6, i + 5}}, 0});
    return build_dim_grid(nodes, cells, 2, 2);
}

double total(const DimGrid& g) { return std::accumulate(g.cell_measure.begin(), g.cell_measure.end(), 0.0); }

std::vector<FaceKey> fracture_keys(const DimGrid& g) {
    std::vector<FaceKey> k;
    for (Index f = 0; f < g.num_faces(); ++f)
        if (g.face_kind[f] == FaceKind::fracture) k.push_back(make_face_key(g.face_nodes[f]));
    std::sort(k.begin(), k.end());
    return k;
}

}  // namespace

TEST_CASE("greedy rule on four cells") {
    // cell 0 (0.1) is the smallest below 0.2; its only neighbour is cell 1 (0.1) -> merged (0.2), stop.
    const auto g = strip();
    const auto p = coarsen(g, {ThresholdMode::absolute, 0.2, true});
    CHECK(p.fine_to_coarse == std::vector<Index>{0, 0, 1, 2});
    REQUIRE(p.coarse.num_cells() == 3);
    CHECK(p.coarse.cell_measure[0] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(p.coarse.cell_measure[1] == doctest::Approx(0.4));
    CHECK(p.coarse.cell_measure[2] == doctest::Approx(0.4));
    CHECK(validate_partition(p, g).ok());
}

TEST_CASE("threshold zero is the identity") {
    const auto md = mesh_grid(unit_square({vertical(0.5)}), 6, 0.2);
    const auto& g = md.grid(2);
    const auto p = coarsen(g, {ThresholdMode::absolute, 0.0, true});
    std::vector<Index> id(g.num_cells());
    std::iota(id.begin(), id.end(), 0);
    CHECK(p.fine_to_coarse == id);
    CHECK(p.coarse.cell_measure == g.cell_measure);
    CHECK(validate_partition(p, g).ok());
    // and again on the result
    const auto q = coarsen(p.coarse, {ThresholdMode::absolute, 0.0, true});
    CHECK(q.coarse.face_nodes == p.coarse.face_nodes);
}

TEST_CASE("negative threshold and empty grid are errors") {
    CHECK_THROWS_AS(coarsen(strip(), {ThresholdMode::absolute, -1.0, true}), Error);
    CHECK_THROWS_AS(coarsen(DimGrid{}, {ThresholdMode::absolute, 1.0, true}), Error);
}

TEST_CASE("two triangles become one quadrilateral") {
    const auto g = two_triangle_square();
    const auto p = coarsen(g, {ThresholdMode::absolute, 0.6, true});
    REQUIRE(p.coarse.num_cells() == 1);
    CHECK(p.coarse.cell_measure[0] == doctest::Approx(1.0));
    CHECK(p.coarse.num_faces() == 4);
    CHECK(is_convex_polygon(p.coarse, 0));
}

TEST_CASE("huge threshold gives connected components") {
    const auto g = strip();
    const auto p = coarsen(g, {ThresholdMode::absolute, 10.0, true});
    CHECK(p.coarse.num_cells() == 1);
}

TEST_CASE("protected fracture faces survive coarsening") {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        const auto md = mesh_grid(unit_square({vertical(0.5), horizontal(0.3, 0.0, 0.7)}), 16, 0.2, seed);
        const auto& g = md.grid(2);
        const auto p = coarsen(g, {ThresholdMode::mean_fraction, 3.0, true});
        const auto rep = validate_partition(p, g);
        for (const auto& m : rep.messages) MESSAGE(m);
        CHECK(rep.ok());
        CHECK(fracture_keys(p.coarse) == fracture_keys(g));
        CHECK(total(p.coarse) == doctest::Approx(total(g)).epsilon(1e-12));
        const double min_fine = *std::min_element(g.cell_measure.begin(), g.cell_measure.end());
        for (double m : p.coarse.cell_measure) CHECK(m >= min_fine);
        CHECK(p.coarse.num_cells() < g.num_cells());

        const auto coarse_md = coarsen_mixed_grid(md, {ThresholdMode::mean_fraction, 3.0, true});
        CHECK(coarse_md.couplings[2].pairs.size() == md.couplings[2].pairs.size());
    }
}

TEST_CASE("unprotected coarsening may cut through fractures") {
    const auto md = mesh_grid(unit_square({vertical(0.5)}), 8);
    const auto& g = md.grid(2);
    const auto p = coarsen(g, {ThresholdMode::absolute, 10.0, false});
    bool cut = false;
    for (Index f = 0; f < g.num_faces(); ++f)
        if (g.face_twin[f] >= 0 && p.fine_to_coarse[g.face_cells[f][0]] ==
                                       p.fine_to_coarse[g.face_cells[g.face_twin[f]][0]])
            cut = true;
    CHECK(cut);
    const auto rep = validate_partition(p, g);
    CHECK(rep.measure_additive);
    CHECK(rep.connected);
    CHECK_FALSE(rep.fracture_faces_conserved);
    // cut cells keep both fracture faces
    CHECK(fracture_keys(p.coarse) == fracture_keys(g));
    const auto cmd = coarsen_mixed_grid(md, {ThresholdMode::absolute, 10.0, false});
    CHECK(cmd.couplings[2].pairs.size() == md.couplings[2].pairs.size());
}

TEST_CASE("validation catches broken partitions") {
    const auto md = mesh_grid(unit_square({vertical(0.5)}), 4);
    const auto& g = md.grid(2);
    SUBCASE("disconnected coarse cell") {
        std::vector<Index> map(g.num_cells());
        std::iota(map.begin(), map.end(), 0);
        // first and last cells are far apart
        map.back() = 0;
        const auto p = make_partition(g, map);
        const auto rep = validate_partition(p, g);
        CHECK_FALSE(rep.connected);
        CHECK_FALSE(rep.ok());
    }
    SUBCASE("merge across a fracture face") {
        std::vector<Index> map(g.num_cells());
        std::iota(map.begin(), map.end(), 0);
        Index f = 0;
        while (g.face_twin[f] < 0) ++f;
        const Index a = g.face_cells[f][0], b = g.face_cells[g.face_twin[f]][0];
        map[std::max(a, b)] = std::min(a, b);
        for (auto& k : map)
            if (k > std::max(a, b)) --k;
        const auto p = make_partition(g, map);
        const auto rep = validate_partition(p, g);
        CHECK(rep.connected);
        CHECK_FALSE(rep.fracture_faces_conserved);
    }
}

TEST_CASE("graded mesh near fracture tips is balanced") {
    StructuredOptions opt;
    opt.resolution = 16;
    opt.grading = 1.5;
    opt.min_size_fraction = 0.05;
    const auto raw = structured_mesh(unit_square({vertical(0.5, 0.25, 0.75)}), opt);
    const auto md = build_mixed_grid(raw, FractureTagging::infer(raw));
    const auto& g = md.grid(2);
    const auto p = coarsen(g, {ThresholdMode::mean_fraction, 1.0, true});
    auto spread = [](const std::vector<double>& m) {
        return *std::max_element(m.begin(), m.end()) / *std::min_element(m.begin(), m.end());
    };
    CHECK(spread(p.coarse.cell_measure) < spread(g.cell_measure));
    CHECK(validate_partition(p, g).ok());
}
