#include <doctest.h>

#include "mdfrac/coarsen.hpp"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace mdfrac;
using namespace mdfrac::test;
namespace fs = std::filesystem;

namespace {

const char* minimal_msh = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
1
1 2 2 1 1 1 2 3
$EndElements
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "mdfrac_test_meshio";
    fs::create_directories(dir);
    return dir / name;
}

int count(const std::string& s, const std::string& what) {
    int n = 0;
    for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("minimal triangle file") {
    const auto m = parse_text(minimal_msh);
    CHECK(m.nodes.size() == 3);
    REQUIRE(m.elements.size() == 1);
    CHECK(m.elements[0].type == ElementType::triangle);
    CHECK(m.elements[0].nodes == std::vector<Index>{0, 1, 2});
    CHECK(m.elements[0].physical_tag == 1);
}

TEST_CASE("unsupported versions are rejected with a line number") {
    std::string text = minimal_msh;
    text.replace(text.find("2.2 0 8"), 7, "4.1 0 8");
    try {
        parse_text(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("4.1") != std::string::npos);
    }
}

TEST_CASE("malformed input") {
    SUBCASE("missing nodes section") {
        CHECK_THROWS_WITH_AS(parse_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"),
                             doctest::Contains("missing $Nodes"), ParseError);
    }
    SUBCASE("bad node count") {
        std::string text = minimal_msh;
        text.replace(text.find("$Nodes\n3"), 8, "$Nodes\nx3");
        try {
            parse_text(text);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 5);
        }
    }
    SUBCASE("count larger than the section") {
        std::string text = minimal_msh;
        text.replace(text.find("$Nodes\n3"), 8, "$Nodes\n4");
        CHECK_THROWS_WITH_AS(parse_text(text), doctest::Contains("exceeds"), ParseError);
    }
    SUBCASE("quadrilaterals are reported") {
        std::string text = minimal_msh;
        text.replace(text.find("1 2 2 1 1 1 2 3"), 15, "1 3 2 1 1 1 2 3 3");
        CHECK_THROWS_WITH_AS(parse_text(text), doctest::Contains("unsupported element type 3"), ParseError);
    }
    SUBCASE("unknown node id") {
        std::string text = minimal_msh;
        text.replace(text.find("1 2 2 1 1 1 2 3"), 15, "1 2 2 1 1 1 2 9");
        CHECK_THROWS_WITH_AS(parse_text(text), doctest::Contains("unknown node id 9"), ParseError);
    }
    SUBCASE("binary files") {
        std::string text = minimal_msh;
        text.replace(text.find("2.2 0 8"), 7, "2.2 1 8");
        CHECK_THROWS_AS(parse_text(text), ParseError);
    }
}

TEST_CASE("physical names are kept on elements") {
    const char* text = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 7 "frac1"
2 3 "matrix"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$NodeData
1
"ignored"
$EndNodeData
$Elements
3
1 1 2 7 1 1 3
2 2 2 3 1 1 2 3
3 2 2 3 1 1 3 4
$EndElements
)";
    const auto m = parse_text(text);
    CHECK(m.physical_names.at(7) == "frac1");
    CHECK(m.physical_names.at(3) == "matrix");
    CHECK(m.elements[0].type == ElementType::line);
    CHECK(m.elements[0].physical_tag == 7);
    CHECK(m.elements[1].physical_tag == 3);
    const auto tags = FractureTagging::from_names(m, {"matrix"}, {"frac1"}, {});
    CHECK(tags.fracture_tags == std::set<int>{7});
    CHECK_THROWS_AS(FractureTagging::from_names(m, {"matrix"}, {"nope"}, {}), ConfigError);
    const auto md = build_mixed_grid(m, tags);
    CHECK(md.grid(1).num_cells() == 1);
    CHECK(md.couplings[2].pairs.size() == 2);
}

TEST_CASE("write then parse round trip is exact") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    StructuredOptions opt;
    opt.resolution = 5;
    auto m = structured_mesh(unit_square({vertical(0.4)}), opt);
    for (auto& p : m.nodes) p = Vec3(u(rng), u(rng) * 1e-7, u(rng) * 1e9);
    const auto path = scratch("roundtrip.msh");
    write_gmsh(path, m);
    const auto back = parse_gmsh(path);
    REQUIRE(back.nodes.size() == m.nodes.size());
    for (std::size_t i = 0; i < m.nodes.size(); ++i) CHECK(back.nodes[i] == m.nodes[i]);
    CHECK(back.elements == m.elements);
    CHECK(back.physical_names == m.physical_names);
    write_gmsh(scratch("roundtrip2.msh"), back);
    CHECK(slurp(path) == slurp(scratch("roundtrip2.msh")));
}

TEST_CASE("missing file reports the path") {
    CHECK_THROWS_WITH_AS(parse_gmsh(fs::path("/nonexistent/mesh.msh")), doctest::Contains("/nonexistent/mesh.msh"),
                         Error);
}

TEST_CASE("one vertical fracture gives a 2d and a 1d grid") {
    const auto md = mesh_grid(unit_square({vertical(0.5)}), 8);
    CHECK(md.has(2));
    CHECK(md.has(1));
    CHECK_FALSE(md.has(0));
    CHECK(md.grid(1).num_cells() == 8);
}

TEST_CASE("two crossing fractures") {
    const auto md = mesh_grid(unit_square({vertical(0.5), horizontal(0.5)}), 8);
    REQUIRE(md.has(0));
    CHECK(md.grid(0).num_cells() == 1);
    CHECK(md.couplings[1].low_cell_pairs[0].size() == 4);
}

TEST_CASE("explicit intersection tags") {
    StructuredOptions opt;
    opt.resolution = 4;
    auto raw = structured_mesh(unit_square({vertical(0.5), horizontal(0.5)}), opt);
    Index centre = -1;
    for (std::size_t i = 0; i < raw.nodes.size(); ++i)
        if ((raw.nodes[i] - Vec3(0.5, 0.5, 0)).norm() < 1e-12) centre = static_cast<Index>(i);
    raw.elements.push_back({ElementType::point, {centre}, 9, 1});
    auto tags = FractureTagging::infer(raw);
    tags.intersection_tags = {9};
    const auto md = build_mixed_grid(raw, tags);
    REQUIRE(md.has(0));
    CHECK(md.grid(0).cell_tag[0] == 9);
}

TEST_CASE("fracture off the mesh faces is non-conforming") {
    std::string text = minimal_msh;
    text.replace(text.find("$Elements\n1\n"), 12, "$Elements\n2\n2 1 2 5 1 1 4\n");
    text.replace(text.find("$Nodes\n3\n"), 9, "$Nodes\n4\n4 0.3 0.3 0\n");
    const auto raw = parse_text(text);
    FractureTagging tags;
    tags.fracture_tags = {5};
    CHECK_THROWS_WITH_AS(build_mixed_grid(raw, tags), doctest::Contains("non-conforming fracture"), GeometryError);
}

TEST_CASE("construction is deterministic") {
    StructuredOptions opt;
    opt.resolution = 6;
    const auto raw = structured_mesh(unit_square({vertical(0.5), horizontal(0.25, 0.0, 0.75)}), opt);
    const auto a = build_mixed_grid(raw, FractureTagging::infer(raw));
    const auto b = build_mixed_grid(raw, FractureTagging::infer(raw));
    for (int d = 0; d <= 2; ++d) {
        CHECK(a.grid(d).face_nodes == b.grid(d).face_nodes);
        CHECK(a.grid(d).cell_faces == b.grid(d).cell_faces);
        CHECK(a.grid(d).face_cells == b.grid(d).face_cells);
    }
    for (int d = 1; d <= 2; ++d) CHECK(a.couplings[d].pairs == b.couplings[d].pairs);
}

TEST_CASE("boundary markers are not fractures") {
    StructuredOptions opt;
    opt.resolution = 2;
    auto raw = structured_mesh(unit_square(), opt);
    // line elements on the left side with their own tag
    for (std::size_t i = 0; i + 1 < raw.nodes.size(); ++i)
        for (std::size_t j = i + 1; j < raw.nodes.size(); ++j)
            if (raw.nodes[i].x() == 0.0 && raw.nodes[j].x() == 0.0 &&
                std::abs(raw.nodes[i].y() - raw.nodes[j].y()) == 0.5)
                raw.elements.push_back({ElementType::line, {Index(i), Index(j)}, 11, 3});
    const auto tags = FractureTagging::infer(raw);
    CHECK(tags.fracture_tags.empty());
}

TEST_CASE("3d fractures and their intersection line") {
    FractureSpec a{Vec3(0.5, 0, 0), Vec3(0.5, 1, 1)};
    FractureSpec b{Vec3(0, 0.5, 0), Vec3(1, 0.5, 1)};
    const auto md = mesh_grid(unit_cube({a, b}), 4);
    REQUIRE(md.has(1));
    CHECK_FALSE(md.has(0));
    double length = 0.0;
    for (double m : md.grid(1).cell_measure) length += m;
    CHECK(length == doctest::Approx(1.0));
    for (Index l = 0; l < md.grid(1).num_cells(); ++l) CHECK(md.couplings[2].low_cell_pairs[l].size() == 4);

    FractureSpec c{Vec3(0, 0, 0.5), Vec3(1, 1, 0.5)};
    const auto md3 = mesh_grid(unit_cube({a, b, c}), 4);
    REQUIRE(md3.has(0));
    CHECK(md3.grid(0).num_cells() == 1);
    CHECK(md3.couplings[1].low_cell_pairs[0].size() == 6);
}

TEST_CASE("vtu export") {
    SUBCASE("one cell with one array") {
        std::vector<Vec3> nodes{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
        std::vector<CellSpec> cells{{{{0, 1, 2}}, 0}};
        const auto g = build_dim_grid(nodes, cells, 2, 2);
        CellFields f;
        f.scalars.push_back({"pressure", {1.0}});
        const auto path = scratch("one.vtu");
        write_vtu(path, g, f);
        const auto s = slurp(path);
        CHECK(s.find("NumberOfCells=\"1\"") != std::string::npos);
        CHECK(count(s, "Name=\"pressure\"") == 1);
        CHECK(s.find("<CellData>") != std::string::npos);
    }
    SUBCASE("mixed export writes one file per dimension and a collection") {
        const auto md = mesh_grid(unit_square({vertical(0.5)}), 4);
        std::map<int, CellFields> fields;
        fields[2].scalars.push_back({"pressure", std::vector<double>(md.grid(2).num_cells(), 0.0)});
        fields[1].vectors.push_back({"velocity", std::vector<Vec3>(md.grid(1).num_cells(), Vec3::Zero())});
        const auto files = export_vtu(md, fields, scratch("mixed"));
        REQUIRE(files.size() == 3);
        CHECK(files[0].filename() == "mixed_2d.vtu");
        CHECK(files[1].filename() == "mixed_1d.vtu");
        const auto pvd = slurp(files[2]);
        CHECK(count(pvd, "<DataSet") == 2);
        CHECK(slurp(files[1]).find("NumberOfComponents=\"3\"") != std::string::npos);
    }
    SUBCASE("length mismatch") {
        const auto md = mesh_grid(unit_square(), 2);
        std::map<int, CellFields> fields;
        fields[2].scalars.push_back({"p", {1.0}});
        CHECK_THROWS_AS(export_vtu(md, fields, scratch("bad")), Error);
    }
    SUBCASE("polytopes become polygons and polyhedra") {
        const auto md = mesh_grid(unit_square(), 4);
        const auto part = coarsen(md.grid(2), {ThresholdMode::absolute, 0.1, true});
        write_vtu(scratch("poly.vtu"), part.coarse, {});
        CHECK(slurp(scratch("poly.vtu")).find(" 7") != std::string::npos);

        const auto md3 = mesh_grid(unit_cube(), 2);
        const auto part3 = coarsen(md3.grid(3), {ThresholdMode::absolute, 0.05, true});
        write_vtu(scratch("polyhedra.vtu"), part3.coarse, {});
        const auto s = slurp(scratch("polyhedra.vtu"));
        CHECK(s.find("Name=\"faces\"") != std::string::npos);
        CHECK(s.find("Name=\"faceoffsets\"") != std::string::npos);
    }
    SUBCASE("unwritable path") {
        const auto md = mesh_grid(unit_square(), 2);
        CHECK_THROWS_WITH_AS(export_vtu(md, {}, "/nonexistent/dir/out"), doctest::Contains("/nonexistent/dir"), Error);
    }
}

TEST_CASE("sampling over a line") {
    std::vector<Vec3> nodes{Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(1, 0, 0),
                            Vec3(0, 1, 0), Vec3(0.5, 1, 0), Vec3(1, 1, 0)};
    std::vector<CellSpec> cells{{{{0, 1, 4}, {0, 4, 3}}, 0}, {{{1, 2, 5}, {1, 5, 4}}, 0}};
    const auto g = build_dim_grid(nodes, cells, 2, 2);

    SUBCASE("constant field") {
        const std::vector<double> f{3.0, 3.0};
        for (const auto& s : sample_over_line(g, f, Vec3(0.1, 0.2, 0), Vec3(0.9, 0.7, 0), 17)) {
            REQUIRE(s.value.has_value());
            CHECK(*s.value == 3.0);
        }
    }
    SUBCASE("step at the cell boundary") {
        const std::vector<double> f{1.0, 2.0};
        const auto s = sample_over_line(g, f, Vec3(0, 0.5, 0), Vec3(1, 0.5, 0), 11);
        for (const auto& x : s) {
            REQUIRE(x.value.has_value());
            if (x.arc_length < 0.5 - 1e-12) CHECK(*x.value == 1.0);
            if (x.arc_length > 0.5 + 1e-12) CHECK(*x.value == 2.0);
        }
        const auto path = scratch("line.csv");
        write_line_csv(path, s);
        CHECK(slurp(path).rfind("arc_length,value\n0,1\n", 0) == 0);
    }
    SUBCASE("outside the domain") {
        const std::vector<double> f{1.0, 2.0};
        const auto s = sample_over_line(g, f, Vec3(2, 2, 0), Vec3(3, 3, 0), 5);
        for (const auto& x : s) CHECK_FALSE(x.value.has_value());
        const auto path = scratch("gaps.csv");
        write_line_csv(path, s);
        CHECK(slurp(path).find("0,\n") != std::string::npos);
    }
    SUBCASE("too few samples") {
        const std::vector<double> f{1.0, 2.0};
        CHECK_THROWS_AS(sample_over_line(g, f, Vec3(0, 0, 0), Vec3(1, 1, 0), 1), Error);
    }
}

TEST_CASE("fracture file parsing") {
    std::istringstream in("# network\ndomain 0 0 2 1\nfracture 1 0 1 1   # vertical\nfracture 0 0.5 2 0.5 4\n");
    const auto net = parse_fracture_file(in);
    CHECK(net.dim == 2);
    CHECK(net.domain_hi.x() == 2.0);
    REQUIRE(net.fractures.size() == 2);
    CHECK(net.fractures[1].tag == 4);
    std::istringstream bad("domain 0 0 1 1\nfracture 0 0 1\n");
    CHECK_THROWS_AS(parse_fracture_file(bad), ParseError);
}

TEST_CASE("graded axes never produce slivers") {
    const std::vector<double> breaks{0.0, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.625, 0.75, 0.8, 0.9, 1.0};
    for (int res : {8, 10, 12, 16, 24})
        for (double grading : {1.2, 1.3, 1.5, 1.8, 2.5})
            for (double fraction : {0.02, 0.05, 0.1, 0.3}) {
                const double h = 1.0 / res;
                const auto x = axis_coordinates(breaks, h, grading, fraction * h);
                double smallest = 1.0;
                for (std::size_t i = 1; i < x.size(); ++i) smallest = std::min(smallest, x[i] - x[i - 1]);
                CAPTURE(res);
                CAPTURE(grading);
                CAPTURE(fraction);
                CHECK(smallest >= std::min(0.025, 2.0 / 3.0 * fraction * h) * (1.0 - 1e-9));
            }
}

TEST_CASE("structured generator") {
    const auto x = axis_coordinates({0.0, 1.0, 0.3}, 0.1, 1.0, 0.1);
    CHECK(x.front() == 0.0);
    CHECK(x.back() == 1.0);
    CHECK(std::find(x.begin(), x.end(), 0.3) != x.end());
    const auto graded = axis_coordinates({0.0, 1.0}, 0.1, 1.5, 0.01);
    CHECK(graded[1] == doctest::Approx(0.01));
    CHECK(graded.size() > 11);

    StructuredOptions opt;
    opt.resolution = 64;
    FractureNetwork rfn = unit_square({vertical(0.5), horizontal(0.5), vertical(0.75, 0.5, 1.0),
                                       horizontal(0.75, 0.5, 1.0), vertical(0.625, 0.5, 0.75),
                                       horizontal(0.625, 0.5, 0.75)});
    const auto raw = structured_mesh(rfn, opt);
    int tri = 0;
    for (const auto& e : raw.elements) tri += e.type == ElementType::triangle;
    CHECK(tri == 8192);
}
