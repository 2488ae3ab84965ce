#include <doctest.h>

#include "mdfrac/pipeline.hpp"
#include "support.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace mdfrac;
using namespace mdfrac::test;
namespace fs = std::filesystem;

namespace {

const fs::path kPresets = fs::path(MDFRAC_SOURCE_DIR) / "presets";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "mdfrac_test_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

SimulationConfig parse(const std::string& text, const fs::path& base = "/data") {
    std::istringstream in(text);
    return parse_config(in, base);
}

std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "<no error>";
}

const char* kFull = R"(
# everything at once
[mesh]
fractures = "nets/b1.txt"
resolution = 24
grading = 1.3
min_size_fraction = 0.25
jitter = 0.1
seed = 42

[tags]
matrix = [matrix, 1]
fractures = "f1, f2"
intersections = 9

[coarsen]
enabled = true
mode = absolute
threshold = 0.125
protect_fractures = false

[flow]
matrix_permeability = [1.5, 0.25, 1]
fracture_permeability = 1e4
fracture_normal_permeability = 3e-3
intersection_permeability = 7
aperture = 1e-4
matrix_source = 0.1
fracture_source = -2
exact = 1 2 3
permeability.f1 = 5
normal_permeability.f2 = 0.5

[boundary]
default = no_flow
left = flux -1
right = pressure 1
top = linear 1 0.5 -0.25

[solver]
method = minres
tolerance = 1e-11
max_iterations = 777

[transport]
enabled = true
porosity = 0.3
inflow_concentration = 0.75
initial_concentration = 0.125
dt = 0.1
t_end = 2.5
snapshot_interval = 5
zero_dim_mass = false

[output]
directory = out/b1
vtu = false
line.a = 0 0.7 1 0.7
line.b = 0 0.1 0.9 1 33

[study]
base_resolution = 3
manufactured = linear
base_steps = 5
reference_steps = 999
)";

}  // namespace

TEST_CASE("config: every key parses to the expected value") {
    const auto cfg = parse(kFull);
    CHECK(cfg.fracture_file == fs::path("/data/nets/b1.txt"));
    CHECK(cfg.mesh_file.empty());
    CHECK(cfg.generator.resolution == 24);
    CHECK(cfg.generator.seed == 42);
    CHECK(cfg.matrix_tags == std::vector<std::string>{"matrix", "1"});
    CHECK(cfg.fracture_tags == std::vector<std::string>{"f1", "f2"});
    CHECK(cfg.intersection_tags == std::vector<std::string>{"9"});
    CHECK(cfg.coarsen_enabled);
    CHECK(cfg.coarsen.threshold_mode == ThresholdMode::absolute);
    CHECK_FALSE(cfg.coarsen.protect_fracture_faces);
    CHECK(cfg.matrix_permeability == std::vector<double>{1.5, 0.25, 1.0});
    CHECK(cfg.fracture_normal_permeability == 3e-3);
    CHECK(cfg.intersection_permeability == 7.0);
    CHECK(*cfg.exact == std::vector<double>{1, 2, 3, 0});
    CHECK(cfg.permeability_by_tag.at("f1") == 5.0);
    CHECK(cfg.normal_permeability_by_tag.at("f2") == 0.5);
    CHECK(cfg.boundary.at("left") == BoundaryRule{BoundaryRule::Kind::flux, {-1.0}});
    CHECK(cfg.boundary.at("top") == BoundaryRule{BoundaryRule::Kind::linear, {1.0, 0.5, -0.25, 0.0}});
    CHECK(cfg.solver.method == SolverMethod::symmetric_indefinite_iterative);
    CHECK(cfg.solver.max_iter == 777);
    CHECK(cfg.t_end == 2.5);
    CHECK_FALSE(cfg.zero_dim_mass);
    CHECK(cfg.output_dir == fs::path("out/b1"));
    CHECK(cfg.lines.at("a").samples == 101);
    CHECK(cfg.lines.at("b").samples == 33);
    CHECK(cfg.lines.at("b").p1 == Vec3(0.9, 1.0, 0.0));
    CHECK(cfg.study_reference_steps == 999);
}

TEST_CASE("config: write then parse gives an equal config") {
    auto check_round_trip = [](const SimulationConfig& cfg) {
        std::ostringstream out;
        write_config(out, cfg);
        const auto again = parse(out.str(), "/elsewhere");
        CHECK(again == cfg);
        std::ostringstream out2;
        write_config(out2, again);
        CHECK(out2.str() == out.str());
    };
    check_round_trip(parse(kFull));
    check_round_trip(parse("[mesh]\nfile = m.msh\n"));

    auto cfg = parse(kFull);
    cfg.aperture = 0.1 + 0.2;  // not exactly representable in short decimal form
    cfg.fracture_permeability = std::nextafter(1e4, 2e4);
    cfg.boundary["back"] = {BoundaryRule::Kind::linear, {0.1, 0.2, 0.3, 1.0 / 3.0}};
    cfg.lines["c"] = {Vec3(0, 0, 0), Vec3(1, 1, 1), 7};
    check_round_trip(cfg);
}

TEST_CASE("config: errors name the offending key") {
    CHECK(config_error("[mesh]\nfile = a\n[flow]\nfoo = 1\n").find("flow.foo") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[flow]\naperture = -1\n").find("flow.aperture") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[flow]\naperture = abc\n").find("flow.aperture") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[boundary]\nleft = pressure\n").find("boundary.left") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[boundary]\nmiddle = no_flow\n").find("boundary.middle") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[coarsen]\nthreshold = -1\n").find("coarsen.threshold") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[output]\nline.x = 0 0 1\n").find("output.line.x") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[transport]\nenabled = true\ndt = 0.3\nt_end = 1\n").find("transport.t_end") !=
          std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\n[weird]\nx = 1\n").find("[weird]") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\nfile = b\n").find("line 3") != std::string::npos);
    CHECK(config_error("[mesh]\nfile = a\nfractures = b\n").find("either") != std::string::npos);
    CHECK(config_error("[flow]\naperture = 1\n").find("required") != std::string::npos);
    CHECK_THROWS_AS(read_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("config: boundary rules round-trip through text") {
    for (const char* text : {"no_flow", "pressure 2.5", "flux -1", "linear 1 2 3", "linear 1 2 3 4"}) {
        const auto rule = parse_boundary_rule(text);
        CHECK(parse_boundary_rule(format_boundary_rule(rule)) == rule);
    }
    CHECK(parse_boundary_rule("linear 1 2 3").values.size() == 4);
    for (const char* bad : {"", "pressure", "pressure 1 2", "flux x", "no_flow 1", "dirichlet 1", "linear 1 2"})
        CHECK_THROWS_AS(parse_boundary_rule(bad), ConfigError);
}

TEST_CASE("pipeline: boundary regions of the unit square") {
    const auto grid = mesh_grid(unit_square(), 4);
    const auto& g = grid.grid(2);
    std::map<std::string, int> count;
    for (Index f = 0; f < g.num_faces(); ++f)
        if (g.face_cells[f][1] < 0) ++count[boundary_region(grid, 2, f)];
    CHECK(count == std::map<std::string, int>{{"bottom", 4}, {"left", 4}, {"right", 4}, {"top", 4}});
}

TEST_CASE("pipeline: patch-test preset reproduces the linear pressure") {
    auto cfg = read_config(kPresets / "patch_test.ini");
    cfg.output_dir = scratch("patch");
    const auto s = run_simulation(cfg);
    CHECK(s["coarsening"]["cells"].get<long>() < s["coarsening"]["fine_cells"].get<long>());
    CHECK(s["darcy"]["exact_error"]["flux"].get<double>() <= 1e-9);
    CHECK(s["darcy"]["exact_error"]["pressure"].get<double>() <= 1e-9);
    CHECK(s["darcy"]["conservation"]["relative"].get<double>() <= 1e-9);
    CHECK(fs::exists(cfg.output_dir / "summary.json"));
    CHECK(fs::exists(cfg.output_dir / "flow_2d.vtu"));
}

TEST_CASE("pipeline: identical inputs give byte-identical outputs") {
    auto cfg = read_config(kPresets / "chain_transport.ini");
    cfg.lines["mid"] = {Vec3(0, 0.3, 0), Vec3(1, 0.3, 0), 51};
    std::vector<fs::path> dirs{scratch("det_a"), scratch("det_b")};
    for (const auto& d : dirs) {
        cfg.output_dir = d;
        run_simulation(cfg);
    }
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dirs[0])) names.push_back(e.path().filename().string());
    CHECK(names.size() > 5);
    for (const auto& n : names) {
        INFO(n);
        CHECK(fs::exists(dirs[1] / n));
        CHECK(slurp(dirs[0] / n) == slurp(dirs[1] / n));
    }
}

TEST_CASE("pipeline: transport outputs and production curve") {
    auto cfg = read_config(kPresets / "chain_transport.ini");
    cfg.output_dir = scratch("transport");
    cfg.write_vtu = false;
    const auto s = run_simulation(cfg);
    CHECK(s["transport"]["steps"].get<long>() == 50);
    CHECK(s["transport"]["max_mass_error"].get<double>() <= 1e-12);
    CHECK(s["transport"]["concentration_min"].get<double>() >= 0.0);
    CHECK(s["transport"]["concentration_max"].get<double>() <= 1.0);
    std::ifstream in(cfg.output_dir / "production.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "time,instantaneous,cumulative");
    int rows = 0;
    double prev = -1.0;
    while (std::getline(in, line)) {
        double t, rate, cum;
        char c1, c2;
        std::istringstream row(line);
        row >> t >> c1 >> rate >> c2 >> cum;
        CHECK(rate >= 0.0);
        CHECK(cum >= prev);
        prev = cum;
        ++rows;
    }
    CHECK(rows == 51);
    CHECK(prev > 0.0);
}

TEST_CASE("pipeline: effective normal coefficient gives the series-resistance flux") {
    auto cfg = read_config(kPresets / "series_resistance.ini");
    for (double aperture : {1.0, 1e-2, 1e-4}) {
        for (double kstar : {1e-4, 1.0, 1e4}) {
            cfg.aperture = aperture;
            cfg.fracture_normal_permeability = 0.5 * kstar * aperture;
            const auto model = load_model(cfg);
            const auto params = make_darcy_params(model, cfg);
            const auto field = solve_darcy(model.grid, params, cfg.solver);
            const auto& g = model.grid.grid(2);
            double q = 0.0;
            for (Index f = 0; f < g.num_faces(); ++f)
                if (g.face_cells[f][1] < 0 && boundary_region(model.grid, 2, f) == "right")
                    q += g.face_measure[f] * field.flux[2][f] * g.face_normal[f].x();
            INFO("aperture " << aperture << " k* " << kstar);
            CHECK(q == doctest::Approx(1.0 / (1.0 + 2.0 / kstar)).epsilon(1e-8));
        }
    }
}

TEST_CASE("pipeline: tangential fracture coefficient scales with the aperture") {
    // Only the fracture conducts: the matrix is almost impermeable and the fracture
    // spans the domain horizontally, so the rate is aperture * K_f * drop.
    SimulationConfig cfg;
    const auto dir = scratch("tangential");
    {
        std::ofstream f(dir / "net.txt");
        f << "domain 0 0 1 1\nfracture 0 0.5 1 0.5\n";
    }
    cfg.fracture_file = dir / "net.txt";
    cfg.generator.resolution = 8;
    cfg.matrix_permeability = {1e-12};
    cfg.fracture_permeability = 3.0;
    cfg.aperture = 1e-3;
    cfg.boundary["left"] = {BoundaryRule::Kind::pressure, {1.0}};
    cfg.boundary["right"] = {BoundaryRule::Kind::pressure, {0.0}};
    const auto model = load_model(cfg);
    const auto params = make_darcy_params(model, cfg);
    const auto field = solve_darcy(model.grid, params, cfg.solver);
    const auto& g = model.grid.grid(1);
    double q = 0.0;
    for (Index f = 0; f < g.num_faces(); ++f)
        if (g.face_cells[f][1] < 0 && g.face_centroid[f].x() > 0.5) q += field.flux[1][f] * g.face_normal[f].x();
    CHECK(q == doctest::Approx(3e-3).epsilon(1e-6));
}

TEST_CASE("pipeline: unknown tag names and bad tensors are configuration errors") {
    auto cfg = read_config(kPresets / "series_resistance.ini");
    cfg.permeability_by_tag["nosuchtag"] = 1.0;
    const auto model = load_model(cfg);
    CHECK_THROWS_AS(make_darcy_params(model, cfg), ConfigError);
    cfg.permeability_by_tag.clear();
    cfg.matrix_permeability = {1.0, 2.0, 1.0};
    CHECK_THROWS_AS(make_darcy_params(model, cfg), ConfigError);
}

TEST_CASE("pipeline: a missing mesh file is reported with its path") {
    SimulationConfig cfg;
    cfg.mesh_file = "/no/such/dir/mesh.msh";
    try {
        run_simulation(cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("/no/such/dir/mesh.msh") != std::string::npos);
        CHECK(msg.find("mesh") == 0);
    }
}

TEST_CASE("study: fewer than three levels is an error") {
    const auto cfg = read_config(kPresets / "space_study.ini");
    CHECK_THROWS_AS(run_study(cfg, StudyMode::space, 2), ConfigError);
    CHECK_THROWS_AS(run_study(cfg, StudyMode::time, 1), ConfigError);
}

TEST_CASE("study: linear manufactured pressure is exact on every level") {
    auto cfg = read_config(kPresets / "space_study.ini");
    cfg.study_manufactured = "linear";
    const auto res = run_study(cfg, StudyMode::space, 3);
    REQUIRE(res.rows.size() == 3);
    for (const auto& r : res.rows) {
        CHECK(r.pressure_error <= 1e-12);
        CHECK(r.velocity_error <= 1e-11);
    }
}

TEST_CASE("study: quadratic manufactured pressure converges at least linearly") {
    const auto cfg = read_config(kPresets / "space_study.ini");
    const auto res = run_study(cfg, StudyMode::space, 4);
    CHECK(res.pressure_order >= 1.0);
    CHECK(res.velocity_order >= 0.9);
    for (std::size_t i = 1; i < res.rows.size(); ++i) {
        CHECK(res.rows[i].h < res.rows[i - 1].h);
        CHECK(res.rows[i].pressure_error < res.rows[i - 1].pressure_error);
    }
    const auto files = write_study(res, scratch("study"));
    CHECK(slurp(files[0]).rfind("level,h,pressure_error,velocity_error\n", 0) == 0);
}

TEST_CASE("study: implicit Euler is first order in time") {
    auto cfg = read_config(kPresets / "chain_transport.ini");
    cfg.study_reference_steps = 1600;
    const auto res = run_study(cfg, StudyMode::time, 4);
    CHECK(res.rows.back().steps == 80);
    CHECK(res.concentration_order == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("study: the reference must be finer than every level") {
    auto cfg = read_config(kPresets / "chain_transport.ini");
    cfg.study_reference_steps = 40;
    CHECK_THROWS_AS(run_study(cfg, StudyMode::time, 3), ConfigError);
}

TEST_CASE("fitted order of an exact power law") {
    const std::vector<double> x{1, 0.5, 0.25, 0.125};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * v * v);
    CHECK(fitted_order(x, y) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("coarsen tool: threshold 0 writes the identity partition") {
    const auto dir = scratch("coarsen_identity");
    StructuredOptions opt;
    opt.resolution = 6;
    opt.jitter = 0.15;
    write_gmsh(dir / "in.msh", structured_mesh(unit_square({vertical(0.5, 0.2, 0.8)}), opt));
    CoarsenConfig cc;
    cc.threshold_value = 0.0;
    const auto out = coarsen_mesh_file(dir / "in.msh", cc, dir / "out");
    CHECK(out.fine_cells == out.coarse_cells);
    CHECK(out.report.ok());
    std::ifstream in(dir / "out" / "partition.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "fine_cell,coarse_cell");
    Index rows = 0;
    while (std::getline(in, line)) {
        CHECK(line == std::to_string(rows) + "," + std::to_string(rows));
        ++rows;
    }
    CHECK(rows == out.fine_cells);

    const auto coarse = parse_gmsh(dir / "out" / "coarse.msh");
    const auto fine = parse_gmsh(dir / "in.msh");
    CHECK(coarse.nodes.size() == fine.nodes.size());
    CHECK(coarse.elements.size() == fine.elements.size());
    CHECK(fs::exists(dir / "out" / "fine.vtu"));
    CHECK(fs::exists(dir / "out" / "coarsen_summary.json"));
}

TEST_CASE("coarsen tool: merging reduces cells and keeps a valid partition") {
    const auto dir = scratch("coarsen_merge");
    StructuredOptions opt;
    opt.resolution = 16;
    opt.grading = 1.4;
    opt.min_size_fraction = 0.1;
    write_gmsh(dir / "in.msh", structured_mesh(unit_square({vertical(0.5, 0.3, 0.7), horizontal(0.4, 0.1, 0.45)}), opt));
    CoarsenConfig cc;
    cc.threshold_value = 1.0;
    const auto out = coarsen_mesh_file(dir / "in.msh", cc, dir / "out");
    CHECK(out.coarse_cells < out.fine_cells);
    CHECK(out.report.ok());
    const auto summary = nlohmann::json::parse(slurp(dir / "out" / "coarsen_summary.json"));
    CHECK(summary["coarse_measure_ratio"].get<double>() < summary["fine_measure_ratio"].get<double>());

    // coarse.msh groups fine simplices by entity tag: rebuilding from it gives the same partition
    const auto raw = parse_gmsh(dir / "out" / "coarse.msh");
    std::set<int> groups;
    for (const auto& e : raw.elements)
        if (element_dim(e.type) == 2) groups.insert(e.entity_tag);
    CHECK(static_cast<Index>(groups.size()) == out.coarse_cells);
}

TEST_CASE("coarsen tool: negative threshold and missing mesh are errors") {
    const auto dir = scratch("coarsen_errors");
    CoarsenConfig cc;
    cc.threshold_value = -1.0;
    CHECK_THROWS_AS(coarsen_mesh_file(dir / "in.msh", cc, dir / "out"), ConfigError);
    cc.threshold_value = 1.0;
    try {
        coarsen_mesh_file(dir / "missing.msh", cc, dir / "out");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("missing.msh") != std::string::npos);
    }
}
