#include "mdfrac/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <charconv>
#include <fstream>

namespace mdfrac {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Prefixes the pipeline stage to any library error, keeping its type.
template <class F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", name, e.what()), 0);
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", name, e.what()));
    } catch (const GeometryError& e) {
        throw GeometryError(fmt::format("{}: {}", name, e.what()));
    } catch (const SolverError& e) {
        throw SolverError(fmt::format("{}: {}", name, e.what()));
    } catch (const Error& e) {
        throw Error(fmt::format("{}: {}", name, e.what()));
    }
}

Eigen::MatrixXd matrix_tensor(const SimulationConfig& cfg, int n) {
    const auto& k = cfg.matrix_permeability;
    Eigen::MatrixXd t(n, n);
    if (k.size() == 1) {
        t = k[0] * Eigen::MatrixXd::Identity(n, n);
    } else if (n == 2 && k.size() == 3) {
        t << k[0], k[1], k[1], k[2];
    } else if (n == 3 && k.size() == 6) {
        t << k[0], k[1], k[2], k[1], k[3], k[4], k[2], k[4], k[5];
    } else {
        throw ConfigError(fmt::format("flow.matrix_permeability: {} values do not describe a {}x{} tensor", k.size(), n, n));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(t);
    if (llt.info() != Eigen::Success) throw ConfigError("flow.matrix_permeability: tensor is not positive definite");
    return t;
}

std::map<int, double> resolve_tags(const LoadedModel& m, const std::map<std::string, double>& by_name,
                                   const char* key) {
    std::map<int, double> out;
    for (const auto& [name, v] : by_name) {
        if (auto it = m.tag_names.find(name); it != m.tag_names.end()) {
            out[it->second] = v;
            continue;
        }
        int tag = 0;
        const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), tag);
        if (ec != std::errc{} || ptr != name.data() + name.size()) {
            throw ConfigError(fmt::format("flow.{}.{}: unknown tag", key, name));
        }
        out[tag] = v;
    }
    return out;
}

double lookup(const std::map<int, double>& m, int tag, double fallback) {
    const auto it = m.find(tag);
    return it == m.end() ? fallback : it->second;
}

struct Box {
    Vec3 lo, hi;
    double tol;
};

Box bounding_box(const MixedDimGrid& grid) {
    const auto& nodes = grid.grid(grid.top_dim()).nodes;
    Box b{nodes.front(), nodes.front(), 0.0};
    for (const auto& x : nodes) {
        b.lo = b.lo.cwiseMin(x);
        b.hi = b.hi.cwiseMax(x);
    }
    b.tol = 1e-9 * (b.hi - b.lo).maxCoeff();
    return b;
}

std::string region_of(const Box& b, const Vec3& x, int ambient) {
    static const char* names[3][2] = {{"left", "right"}, {"bottom", "top"}, {"front", "back"}};
    for (int a = 0; a < ambient; ++a) {
        if (std::abs(x[a] - b.lo[a]) <= b.tol) return names[a][0];
        if (std::abs(x[a] - b.hi[a]) <= b.tol) return names[a][1];
    }
    return {};
}

std::string dim_key(int d) { return fmt::format("{}d", d); }

ordered_json per_dim(const MixedDimGrid& grid, const std::function<ordered_json(int)>& f) {
    ordered_json j = ordered_json::object();
    for (int d = grid.ambient_dim; d >= 0; --d)
        if (grid.has(d)) j[dim_key(d)] = f(d);
    return j;
}

std::vector<double> to_double(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

}  // namespace

LoadedModel load_model(const SimulationConfig& cfg) {
    return stage("mesh", [&] {
        LoadedModel m;
        RawMesh raw;
        if (!cfg.mesh_file.empty()) {
            if (!fs::exists(cfg.mesh_file)) throw Error(fmt::format("mesh file '{}' does not exist", cfg.mesh_file.string()));
            raw = parse_gmsh(cfg.mesh_file);
        } else {
            if (!fs::exists(cfg.fracture_file)) {
                throw Error(fmt::format("fracture file '{}' does not exist", cfg.fracture_file.string()));
            }
            raw = structured_mesh(read_fracture_file(cfg.fracture_file), cfg.generator);
        }
        for (const auto& [tag, name] : raw.physical_names) m.tag_names[name] = tag;
        const bool explicit_tags = !cfg.matrix_tags.empty() || !cfg.fracture_tags.empty() || !cfg.intersection_tags.empty();
        m.tagging = explicit_tags
                        ? FractureTagging::from_names(raw, cfg.matrix_tags, cfg.fracture_tags, cfg.intersection_tags)
                        : FractureTagging::infer(raw);
        m.grid = build_mixed_grid(raw, m.tagging);
        m.fine_cells = m.grid.grid(m.grid.top_dim()).num_cells();
        if (cfg.coarsen_enabled) {
            m.grid = coarsen_mixed_grid(m.grid, cfg.coarsen, &m.fine_to_coarse);
            spdlog::info("coarsening: {} -> {} cells", m.fine_cells, m.grid.grid(m.grid.top_dim()).num_cells());
        }
        for (int d = m.grid.ambient_dim; d >= 0; --d)
            if (m.grid.has(d)) spdlog::info("{}d grid: {} cells, {} faces", d, m.grid.grid(d).num_cells(), m.grid.grid(d).num_faces());
        return m;
    });
}

std::string boundary_region(const MixedDimGrid& grid, int d, Index face) {
    return region_of(bounding_box(grid), grid.grid(d).face_centroid[face], grid.ambient_dim);
}

DarcyParams make_darcy_params(const LoadedModel& model, const SimulationConfig& cfg) {
    const auto& grid = model.grid;
    const int n = grid.ambient_dim;
    const double eps = cfg.aperture;
    const auto kt_tag = resolve_tags(model, cfg.permeability_by_tag, "permeability");
    const auto kn_tag = resolve_tags(model, cfg.normal_permeability_by_tag, "normal_permeability");
    const double k_int = cfg.intersection_permeability.value_or(cfg.fracture_permeability);

    DarcyParams p;
    p.perm.tangential.resize(n + 1);
    p.perm.normal.resize(n + 1);
    p.source.resize(n + 1);
    for (int d = n; d >= 0; --d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        const double cross = std::pow(eps, n - d);
        if (d == n) {
            p.perm.tangential[d].assign(g.num_cells(), matrix_tensor(cfg, n));
            if (cfg.matrix_source != 0.0) p.source[d].assign(g.num_cells(), cfg.matrix_source);
        } else if (d >= 1) {
            p.perm.tangential[d].resize(g.num_cells());
            for (Index c = 0; c < g.num_cells(); ++c) {
                const double k = d == n - 1 ? lookup(kt_tag, g.cell_tag[c], cfg.fracture_permeability) : k_int;
                p.perm.tangential[d][c] = cross * k * Eigen::MatrixXd::Identity(d, d);
            }
            if (d == n - 1 && cfg.fracture_source != 0.0) p.source[d].assign(g.num_cells(), cross * cfg.fracture_source);
        }
        if (d >= 1 && grid.has(d - 1)) {
            const auto& low = grid.grid(d - 1);
            for (const auto& pair : grid.couplings[d].pairs) {
                double kn = k_int;
                if (d - 1 == n - 1) {
                    const int tag = low.cell_tag[pair.low_cell];
                    const double kt = lookup(kt_tag, tag, cfg.fracture_permeability);
                    kn = lookup(kn_tag, tag, cfg.fracture_normal_permeability.value_or(kt));
                }
                p.perm.normal[d].push_back(2.0 * kn * cross / eps);
            }
        }
    }

    const Box box = bounding_box(grid);
    p.bc = make_boundary_conditions(grid, [&](int d, Index f) -> FaceBc {
        const Vec3& x = grid.grid(d).face_centroid[f];
        const auto region = region_of(box, x, n);
        const auto it = cfg.boundary.find(region);
        const auto& rule = it == cfg.boundary.end() ? cfg.boundary_default : it->second;
        const double cross = std::pow(eps, n - d);
        switch (rule.kind) {
        case BoundaryRule::Kind::pressure:
            return {BcType::dirichlet, rule.values[0]};
        case BoundaryRule::Kind::linear:
            return {BcType::dirichlet, rule.values[0] + rule.values[1] * x.x() + rule.values[2] * x.y() + rule.values[3] * x.z()};
        case BoundaryRule::Kind::flux:
            return {BcType::flux, cross * rule.values[0]};
        case BoundaryRule::Kind::no_flow:
            break;
        }
        return {BcType::flux, 0.0};
    });
    return p;
}

TransportParams make_transport_params(const MixedDimGrid& grid, const SimulationConfig& cfg, double dt) {
    const int n = grid.ambient_dim;
    std::vector<double> aperture(n + 1, 1.0);
    for (int d = 0; d < n; ++d) aperture[d] = std::pow(cfg.aperture, n - d);
    auto tp = TransportParams::uniform(grid, cfg.porosity, aperture, cfg.inflow_concentration, dt, cfg.t_end);
    tp.zero_dim_mass = cfg.zero_dim_mass;
    if (cfg.initial_concentration != 0.0) {
        tp.initial_conc.resize(n + 1);
        for (int d = 0; d <= n; ++d)
            if (grid.has(d)) tp.initial_conc[d].assign(grid.grid(d).num_cells(), cfg.initial_concentration);
    }
    return tp;
}

ordered_json run_simulation(const SimulationConfig& cfg) {
    const auto model = load_model(cfg);
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    std::vector<std::string> outputs;
    auto record = [&](const fs::path& p) { outputs.push_back(p.lexically_relative(out).generic_string()); };

    const auto& grid = model.grid;
    const int n = grid.ambient_dim;
    const int top = grid.top_dim();

    const auto params = stage("darcy", [&] { return make_darcy_params(model, cfg); });
    const auto field = stage("darcy", [&] { return solve_darcy(grid, params, cfg.solver); });
    const auto cons = check_conservation(grid, field, params);
    const double max_res = *std::max_element(cons.max_abs.begin(), cons.max_abs.end());

    ordered_json summary;
    summary["mesh"] = {
        {"source", (cfg.mesh_file.empty() ? cfg.fracture_file : cfg.mesh_file).filename().string()},
        {"generated", cfg.mesh_file.empty()},
        {"cells", per_dim(grid, [&](int d) { return grid.grid(d).num_cells(); })},
        {"faces", per_dim(grid, [&](int d) { return grid.grid(d).num_faces(); })},
    };
    summary["coarsening"] = {
        {"enabled", cfg.coarsen_enabled},
        {"fine_cells", model.fine_cells},
        {"cells", grid.grid(top).num_cells()},
    };

    double p_min = std::numeric_limits<double>::infinity(), p_max = -p_min;
    ordered_json darcy = {
        {"dofs", grid.dof_layout().total},
        {"relative_residual", field.report.relative_residual},
        {"iterations", field.report.iterations},
        {"conservation", {{"max_residual", max_res}, {"flux_scale", cons.flux_scale},
                          {"relative", cons.flux_scale > 0.0 ? max_res / cons.flux_scale : 0.0}}},
        {"pressure", per_dim(grid, [&](int d) {
             const auto& p = field.pressure[d];
             const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
             p_min = std::min(p_min, *lo);
             p_max = std::max(p_max, *hi);
             return ordered_json{{"min", *lo}, {"max", *hi}};
         })},
    };
    darcy["pressure_min"] = p_min;
    darcy["pressure_max"] = p_max;

    if (cfg.exact) {
        const auto& e = *cfg.exact;
        const auto& g = grid.grid(top);
        const Vec3 grad(e[1], e[2], e[3]);
        Vec3 vel = Vec3::Zero();
        vel.head(n) = -matrix_tensor(cfg, n) * grad.head(n);
        double p_err = 0.0, p_scale = 0.0, u_err = 0.0;
        for (Index c = 0; c < g.num_cells(); ++c) {
            const double exact = e[0] + grad.dot(g.cell_centroid[c]);
            p_err = std::max(p_err, std::abs(field.pressure[top][c] - exact));
            p_scale = std::max(p_scale, std::abs(exact));
        }
        for (Index f = 0; f < g.num_faces(); ++f)
            u_err = std::max(u_err, std::abs(field.flux[top][f] - vel.dot(g.face_normal[f])));
        darcy["exact_error"] = {{"pressure", p_scale > 0.0 ? p_err / p_scale : p_err},
                                {"flux", vel.norm() > 0.0 ? u_err / vel.norm() : u_err}};
    }
    summary["darcy"] = darcy;

    if (cfg.write_vtu) {
        std::map<int, CellFields> fields;
        for (int d = 0; d <= n; ++d) {
            if (!grid.has(d)) continue;
            fields[d].scalars.emplace_back("pressure", field.pressure[d]);
            fields[d].vectors.emplace_back("velocity", field.cell_velocity[d]);
            fields[d].scalars.emplace_back("tag", std::vector<double>(grid.grid(d).cell_tag.begin(), grid.grid(d).cell_tag.end()));
        }
        if (!model.fine_to_coarse.empty()) {
            std::vector<double> m = grid.grid(top).cell_measure;
            fields[top].scalars.emplace_back("cell_measure", std::move(m));
        }
        for (const auto& p : stage("output", [&] { return export_vtu(grid, fields, out / "flow"); })) record(p);
    }
    for (const auto& [name, probe] : cfg.lines) {
        const auto samples = sample_over_line(grid.grid(top), field.pressure[top], probe.p0, probe.p1, probe.samples);
        const auto path = out / fmt::format("line_{}.csv", name);
        write_line_csv(path, samples);
        record(path);
    }

    if (cfg.transport_enabled) {
        auto tp = make_transport_params(grid, cfg, cfg.dt);
        tp.fluid_source = params.source;
        std::vector<fs::path> snapshots;
        const auto res = stage("transport", [&] {
            return run_transport(grid, field, tp, [&](const ConcentrationState& s) {
                if (!cfg.write_vtu || cfg.snapshot_interval <= 0 || s.step % cfg.snapshot_interval != 0) return;
                std::map<int, CellFields> fields;
                for (int d = 0; d <= n; ++d)
                    if (grid.has(d)) fields[d].scalars.emplace_back("concentration", s.conc[d]);
                for (const auto& p : export_vtu(grid, fields, out / fmt::format("transport_{:06d}", s.step)))
                    snapshots.push_back(p);
            });
        });
        for (const auto& p : snapshots) record(p);
        const auto csv = out / "production.csv";
        std::ofstream os(csv);
        write_production_csv(os, res.production);
        record(csv);
        summary["transport"] = {
            {"steps", res.final_state.step},
            {"dt", cfg.dt},
            {"t_end", cfg.t_end},
            {"courant", res.courant},
            {"max_mass_error", res.max_mass_error},
            {"concentration_min", res.min_conc},
            {"concentration_max", res.max_conc},
            {"production", {{"final_rate", res.production.instantaneous.back()},
                            {"cumulative", res.production.cumulative.back()}}},
        };
    }

    record(out / "summary.json");
    summary["outputs"] = outputs;
    std::ofstream js(out / "summary.json");
    js << summary.dump(2) << '\n';
    return summary;
}

double fitted_order(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("order fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

StudyResult space_study(const SimulationConfig& cfg, int levels) {
    if (cfg.fracture_file.empty()) throw ConfigError("study: space mode needs a generated mesh ([mesh] fractures = ...)");
    auto net = read_fracture_file(cfg.fracture_file);
    net.fractures.clear();
    const int n = net.dim;
    const Eigen::MatrixXd k = matrix_tensor(cfg, n);

    Eigen::VectorXd g0 = Eigen::Vector3d(0.5, -0.25, 0.3).head(n);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    if (cfg.study_manufactured == "quadratic") {
        Eigen::Matrix3d h3;
        h3 << 2.0, 1.0, 0.0, 1.0, -2.0, 0.5, 0.0, 0.5, 1.0;
        hess = h3.topLeftCorner(n, n);
    }
    auto exact_p = [&](const Vec3& x) {
        const Eigen::VectorXd y = x.head(n);
        return 1.0 + g0.dot(y) + 0.5 * y.dot(hess * y);
    };
    auto exact_u = [&](const Vec3& x) {
        Vec3 u = Vec3::Zero();
        u.head(n) = -k * (g0 + hess * x.head(n));
        return u;
    };
    const double f = -(k.array() * hess.array()).sum();

    StudyResult res;
    res.mode = StudyMode::space;
    for (int l = 0; l < levels; ++l) {
        auto opt = cfg.generator;
        opt.resolution = cfg.study_base_resolution << l;
        const auto raw = structured_mesh(net, opt);
        auto grid = build_mixed_grid(raw, FractureTagging::infer(raw));
        if (cfg.coarsen_enabled) grid = coarsen_mixed_grid(grid, cfg.coarsen);
        const auto& g = grid.grid(n);
        DarcyParams p;
        p.perm.tangential.resize(n + 1);
        p.perm.normal.resize(n + 1);
        p.perm.tangential[n].assign(g.num_cells(), k);
        p.source.resize(n + 1);
        p.source[n].assign(g.num_cells(), f);
        p.bc = make_boundary_conditions(grid, [&](int, Index face) {
            return FaceBc{BcType::dirichlet, exact_p(g.face_centroid[face])};
        });
        const auto field = solve_darcy(grid, p, cfg.solver);
        StudyRow row;
        row.level = l;
        double pe = 0.0, ue = 0.0;
        for (Index c = 0; c < g.num_cells(); ++c) {
            const Vec3& x = g.cell_centroid[c];
            pe += g.cell_measure[c] * std::pow(field.pressure[n][c] - exact_p(x), 2);
            ue += g.cell_measure[c] * (field.cell_velocity[n][c] - exact_u(x)).squaredNorm();
            row.h = std::max(row.h, g.cell_diameter[c]);
        }
        row.pressure_error = std::sqrt(pe);
        row.velocity_error = std::sqrt(ue);
        spdlog::info("space level {}: h = {:.4g}, pressure error {:.4e}, velocity error {:.4e}", l, row.h,
                     row.pressure_error, row.velocity_error);
        res.rows.push_back(row);
    }
    std::vector<double> h, pe, ue;
    for (const auto& r : res.rows) {
        h.push_back(r.h);
        pe.push_back(std::max(r.pressure_error, 1e-300));
        ue.push_back(std::max(r.velocity_error, 1e-300));
    }
    res.pressure_order = fitted_order(h, pe);
    res.velocity_order = fitted_order(h, ue);
    return res;
}

StudyResult time_study(const SimulationConfig& cfg, int levels) {
    if (!(cfg.t_end > 0.0)) throw ConfigError("study: time mode needs transport.t_end > 0");
    const auto model = load_model(cfg);
    const auto& grid = model.grid;
    const auto dparams = make_darcy_params(model, cfg);
    const auto field = stage("darcy", [&] { return solve_darcy(grid, dparams, cfg.solver); });

    StudyResult res;
    res.mode = StudyMode::time;
    const long finest = cfg.study_base_steps << (levels - 1);
    res.reference_steps = cfg.study_reference_steps > 0 ? cfg.study_reference_steps : 10 * finest;
    if (res.reference_steps <= finest) {
        throw ConfigError(fmt::format("study.reference_steps: {} is not finer than the finest level ({} steps)",
                                      res.reference_steps, finest));
    }
    auto final_state = [&](long steps, std::vector<double>* weights) {
        auto tp = make_transport_params(grid, cfg, cfg.t_end / static_cast<double>(steps));
        tp.fluid_source = dparams.source;
        const auto r = run_transport(grid, field, tp);
        std::vector<double> c, w;
        for (int d = grid.ambient_dim; d >= 0; --d) {
            if (!grid.has(d)) continue;
            const auto& g = grid.grid(d);
            for (Index i = 0; i < g.num_cells(); ++i) {
                c.push_back(r.final_state.conc[d][i]);
                w.push_back(tp.porosity[d][i] * tp.aperture[d][i] * (d == 0 ? 1.0 : g.cell_measure[i]));
            }
        }
        if (weights) *weights = std::move(w);
        return c;
    };
    std::vector<double> w;
    const auto ref = stage("transport", [&] { return final_state(res.reference_steps, &w); });
    for (int l = 0; l < levels; ++l) {
        StudyRow row;
        row.level = l;
        row.steps = cfg.study_base_steps << l;
        row.dt = cfg.t_end / static_cast<double>(row.steps);
        const auto c = stage("transport", [&] { return final_state(row.steps, nullptr); });
        double e = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) e += w[i] * (c[i] - ref[i]) * (c[i] - ref[i]);
        row.concentration_error = std::sqrt(e);
        spdlog::info("time level {}: {} steps, error {:.4e}", l, row.steps, row.concentration_error);
        res.rows.push_back(row);
    }
    std::vector<double> dt, err;
    for (const auto& r : res.rows) {
        dt.push_back(r.dt);
        err.push_back(std::max(r.concentration_error, 1e-300));
    }
    res.concentration_order = fitted_order(dt, err);
    return res;
}

}  // namespace

StudyResult run_study(const SimulationConfig& cfg, StudyMode mode, int levels) {
    if (levels < 3) throw ConfigError(fmt::format("study: at least 3 levels are needed, got {}", levels));
    return mode == StudyMode::space ? space_study(cfg, levels) : time_study(cfg, levels);
}

std::vector<fs::path> write_study(const StudyResult& result, const fs::path& dir) {
    fs::create_directories(dir);
    const bool space = result.mode == StudyMode::space;
    const std::string tag = space ? "space" : "time";
    const auto csv = dir / fmt::format("study_{}.csv", tag);
    std::ofstream os(csv);
    os << (space ? "level,h,pressure_error,velocity_error\n" : "level,steps,dt,concentration_error\n");
    ordered_json rows = ordered_json::array();
    for (const auto& r : result.rows) {
        if (space) {
            os << fmt::format("{},{:.10g},{:.10g},{:.10g}\n", r.level, r.h, r.pressure_error, r.velocity_error);
            rows.push_back({{"level", r.level}, {"h", r.h}, {"pressure_error", r.pressure_error},
                            {"velocity_error", r.velocity_error}});
        } else {
            os << fmt::format("{},{},{:.10g},{:.10g}\n", r.level, r.steps, r.dt, r.concentration_error);
            rows.push_back({{"level", r.level}, {"steps", r.steps}, {"dt", r.dt},
                            {"concentration_error", r.concentration_error}});
        }
    }
    ordered_json j = {{"mode", tag}, {"levels", rows}};
    if (space) {
        j["pressure_order"] = result.pressure_order;
        j["velocity_order"] = result.velocity_order;
    } else {
        j["reference_steps"] = result.reference_steps;
        j["concentration_order"] = result.concentration_order;
    }
    const auto json_path = dir / fmt::format("study_{}.json", tag);
    std::ofstream js(json_path);
    js << j.dump(2) << '\n';
    return {csv, json_path};
}

CoarsenOutputs coarsen_mesh_file(const fs::path& mesh, const CoarsenConfig& cfg, const fs::path& out_dir) {
    if (!(cfg.threshold_value >= 0.0)) {
        throw ConfigError(fmt::format("threshold must be non-negative, got {}", cfg.threshold_value));
    }
    if (!fs::exists(mesh)) throw Error(fmt::format("mesh file '{}' does not exist", mesh.string()));
    const auto raw = stage("mesh", [&] { return parse_gmsh(mesh); });
    const auto tags = FractureTagging::infer(raw);
    const auto grid = stage("mesh", [&] { return build_mixed_grid(raw, tags); });
    const int top = grid.top_dim();
    const auto& fine = grid.grid(top);
    const auto part = stage("coarsen", [&] { return coarsen(fine, cfg); });

    CoarsenOutputs out;
    out.fine_cells = fine.num_cells();
    out.coarse_cells = part.coarse.num_cells();
    out.threshold = coarsen_threshold(fine, cfg);
    out.report = validate_partition(part, fine);
    fs::create_directories(out_dir);

    const auto csv = out_dir / "partition.csv";
    {
        std::ofstream os(csv);
        os << "fine_cell,coarse_cell\n";
        for (std::size_t c = 0; c < part.fine_to_coarse.size(); ++c) os << c << ',' << part.fine_to_coarse[c] << '\n';
    }
    out.files.push_back(csv);

    RawMesh relabelled = raw;
    std::size_t k = 0;
    for (auto& e : relabelled.elements) {
        if (element_dim(e.type) != top) continue;
        if (!tags.matrix_tags.empty() && !tags.matrix_tags.contains(e.physical_tag)) continue;
        e.entity_tag = static_cast<int>(part.fine_to_coarse[k++]) + 1;
    }
    write_gmsh(out_dir / "coarse.msh", relabelled);
    out.files.push_back(out_dir / "coarse.msh");

    CellFields fine_fields;
    fine_fields.scalars.emplace_back("coarse_cell", to_double(part.fine_to_coarse));
    fine_fields.scalars.emplace_back("cell_measure", fine.cell_measure);
    write_vtu(out_dir / "fine.vtu", fine, fine_fields);
    out.files.push_back(out_dir / "fine.vtu");

    auto grids = grid.grids;
    grids[top] = part.coarse;
    const auto coarse = stage("coarsen", [&] { return assemble_mixed_grid(std::move(grids), grid.ambient_dim); });
    std::map<int, CellFields> fields;
    std::vector<double> ids(part.coarse.num_cells());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<double>(i);
    fields[top].scalars.emplace_back("coarse_cell", ids);
    fields[top].scalars.emplace_back("cell_measure", part.coarse.cell_measure);
    for (const auto& p : export_vtu(coarse, fields, out_dir / "coarse")) out.files.push_back(p);

    const auto [lo, hi] = std::minmax_element(part.coarse.cell_measure.begin(), part.coarse.cell_measure.end());
    const auto [flo, fhi] = std::minmax_element(fine.cell_measure.begin(), fine.cell_measure.end());
    ordered_json j = {
        {"mesh", mesh.filename().string()},
        {"threshold", out.threshold},
        {"fine_cells", out.fine_cells},
        {"coarse_cells", out.coarse_cells},
        {"reduction", 1.0 - static_cast<double>(out.coarse_cells) / static_cast<double>(out.fine_cells)},
        {"fine_measure_ratio", *fhi / *flo},
        {"coarse_measure_ratio", *hi / *lo},
        {"valid", out.report.ok()},
        {"messages", out.report.messages},
    };
    std::ofstream js(out_dir / "coarsen_summary.json");
    js << j.dump(2) << '\n';
    out.files.push_back(out_dir / "coarsen_summary.json");
    return out;
}

}  // namespace mdfrac
