#include "mdfrac/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace mdfrac {

namespace {

using boost::property_tree::ptree;

std::string unquote(std::string s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

std::vector<std::string> split_list(const std::string& key, std::string text) {
    text = unquote(text);
    if (!text.empty() && text.front() == '[') {
        if (text.back() != ']') throw ConfigError(fmt::format("{}: unterminated list '{}'", key, text));
        text = text.substr(1, text.size() - 2);
    }
    for (char& c : text)
        if (c == ',') c = ' ';
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string item; in >> item;) out.push_back(unquote(item));
    return out;
}

double to_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, text));
    }
    return v;
}

long to_long(const std::string& key, const std::string& text) {
    long v = 0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, text));
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
    if (text == "false" || text == "no" || text == "off" || text == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(key, text)) out.push_back(to_double(key, item));
    return out;
}

double positive(const std::string& key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("{}: must be positive, got {}", key, v));
    return v;
}

double unit_interval(const std::string& key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(fmt::format("{}: must lie in [0, 1], got {}", key, v));
    return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
    std::filesystem::path p(unquote(text));
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

LineProbe to_probe(const std::string& key, const std::string& text) {
    const auto v = to_doubles(key, text);
    LineProbe p;
    switch (v.size()) {
    case 5:
        p.samples = static_cast<int>(v[4]);
        [[fallthrough]];
    case 4:
        p.p0 = Vec3(v[0], v[1], 0.0);
        p.p1 = Vec3(v[2], v[3], 0.0);
        break;
    case 7:
        p.samples = static_cast<int>(v[6]);
        [[fallthrough]];
    case 6:
        p.p0 = Vec3(v[0], v[1], v[2]);
        p.p1 = Vec3(v[3], v[4], v[5]);
        break;
    default:
        throw ConfigError(fmt::format("{}: expected 'x0 y0 x1 y1 [samples]' or 'x0 y0 z0 x1 y1 z1 [samples]'", key));
    }
    if (p.samples < 2) throw ConfigError(fmt::format("{}: needs at least 2 samples", key));
    return p;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string nums(const std::vector<double>& v) {
    std::vector<std::string> s;
    for (double x : v) s.push_back(num(x));
    return fmt::format("{}", fmt::join(s, " "));
}

std::string quoted_list(const std::vector<std::string>& v) {
    std::vector<std::string> s;
    for (const auto& x : v) s.push_back(fmt::format("\"{}\"", x));
    return fmt::format("[{}]", fmt::join(s, ", "));
}

const std::set<std::string> kRegions{"left", "right", "bottom", "top", "front", "back"};

}  // namespace

BoundaryRule parse_boundary_rule(const std::string& text) {
    const auto parts = split_list("boundary", text);
    if (parts.empty()) throw ConfigError("boundary: empty rule");
    BoundaryRule r;
    std::vector<double> values;
    for (std::size_t i = 1; i < parts.size(); ++i) values.push_back(to_double("boundary", parts[i]));
    const auto& kind = parts[0];
    if (kind == "no_flow" && values.empty()) {
        r.kind = BoundaryRule::Kind::no_flow;
    } else if (kind == "pressure" && values.size() == 1) {
        r.kind = BoundaryRule::Kind::pressure;
    } else if (kind == "flux" && values.size() == 1) {
        r.kind = BoundaryRule::Kind::flux;
    } else if (kind == "linear" && (values.size() == 3 || values.size() == 4)) {
        r.kind = BoundaryRule::Kind::linear;
        values.resize(4, 0.0);
    } else {
        throw ConfigError(fmt::format("boundary: cannot parse '{}' (expected no_flow, pressure <p>, flux <q> or "
                                      "linear <a> <bx> <by> [<bz>])",
                                      text));
    }
    r.values = std::move(values);
    return r;
}

std::string format_boundary_rule(const BoundaryRule& rule) {
    switch (rule.kind) {
    case BoundaryRule::Kind::no_flow:
        return "no_flow";
    case BoundaryRule::Kind::pressure:
        return "pressure " + nums(rule.values);
    case BoundaryRule::Kind::flux:
        return "flux " + nums(rule.values);
    case BoundaryRule::Kind::linear:
        return "linear " + nums(rule.values);
    }
    return {};
}

SimulationConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    ptree tree;
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(fmt::format("line {}: {}", e.line(), e.message()));
    }
    SimulationConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ConfigError(fmt::format("{}: key outside a section", section));
        for (const auto& [name, node] : body) {
            const std::string key = section + "." + name;
            const std::string value = unquote(node.data());
            auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
            if (section == "mesh") {
                if (name == "file") cfg.mesh_file = resolve(base_dir, value);
                else if (name == "fractures") cfg.fracture_file = resolve(base_dir, value);
                else if (name == "resolution") cfg.generator.resolution = static_cast<int>(to_long(key, value));
                else if (name == "grading") cfg.generator.grading = to_double(key, value);
                else if (name == "min_size_fraction") cfg.generator.min_size_fraction = to_double(key, value);
                else if (name == "jitter") cfg.generator.jitter = to_double(key, value);
                else if (name == "seed") cfg.generator.seed = static_cast<std::uint64_t>(to_long(key, value));
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "tags") {
                if (name == "matrix") cfg.matrix_tags = split_list(key, value);
                else if (name == "fractures") cfg.fracture_tags = split_list(key, value);
                else if (name == "intersections") cfg.intersection_tags = split_list(key, value);
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "coarsen") {
                if (name == "enabled") cfg.coarsen_enabled = to_bool(key, value);
                else if (name == "mode") {
                    if (value == "mean_fraction") cfg.coarsen.threshold_mode = ThresholdMode::mean_fraction;
                    else if (value == "absolute") cfg.coarsen.threshold_mode = ThresholdMode::absolute;
                    else throw ConfigError(fmt::format("{}: expected mean_fraction or absolute, got '{}'", key, value));
                } else if (name == "threshold") {
                    cfg.coarsen.threshold_value = to_double(key, value);
                    if (!(cfg.coarsen.threshold_value >= 0.0)) throw ConfigError(fmt::format("{}: must be non-negative", key));
                } else if (name == "protect_fractures") cfg.coarsen.protect_fracture_faces = to_bool(key, value);
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "flow") {
                if (name == "matrix_permeability") {
                    cfg.matrix_permeability = to_doubles(key, value);
                    const auto n = cfg.matrix_permeability.size();
                    if (n != 1 && n != 3 && n != 6) {
                        throw ConfigError(fmt::format("{}: expected 1, 3 (2d) or 6 (3d) values, got {}", key, n));
                    }
                } else if (name == "fracture_permeability") cfg.fracture_permeability = positive(key, to_double(key, value));
                else if (name == "fracture_normal_permeability") cfg.fracture_normal_permeability = positive(key, to_double(key, value));
                else if (name == "intersection_permeability") cfg.intersection_permeability = positive(key, to_double(key, value));
                else if (name == "aperture") cfg.aperture = positive(key, to_double(key, value));
                else if (name == "matrix_source") cfg.matrix_source = to_double(key, value);
                else if (name == "fracture_source") cfg.fracture_source = to_double(key, value);
                else if (name == "exact") {
                    auto v = to_doubles(key, value);
                    if (v.size() != 3 && v.size() != 4) throw ConfigError(fmt::format("{}: expected a bx by [bz]", key));
                    v.resize(4, 0.0);
                    cfg.exact = v;
                } else if (starts("permeability.")) cfg.permeability_by_tag[name.substr(13)] = positive(key, to_double(key, value));
                else if (starts("normal_permeability.")) cfg.normal_permeability_by_tag[name.substr(20)] = positive(key, to_double(key, value));
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "boundary") {
                BoundaryRule rule;
                try {
                    rule = parse_boundary_rule(value);
                } catch (const ConfigError& e) {
                    throw ConfigError(fmt::format("{}: {}", key, e.what()));
                }
                if (name == "default") cfg.boundary_default = rule;
                else if (kRegions.contains(name)) cfg.boundary[name] = rule;
                else throw ConfigError(fmt::format("unknown key '{}' (regions: left, right, bottom, top, front, back)", key));
            } else if (section == "solver") {
                if (name == "method") {
                    if (value == "direct") cfg.solver.method = SolverMethod::direct_lu;
                    else if (value == "minres") cfg.solver.method = SolverMethod::symmetric_indefinite_iterative;
                    else throw ConfigError(fmt::format("{}: expected direct or minres, got '{}'", key, value));
                } else if (name == "tolerance") cfg.solver.rel_tol = positive(key, to_double(key, value));
                else if (name == "max_iterations") cfg.solver.max_iter = static_cast<int>(to_long(key, value));
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "transport") {
                if (name == "enabled") cfg.transport_enabled = to_bool(key, value);
                else if (name == "porosity") cfg.porosity = positive(key, to_double(key, value));
                else if (name == "inflow_concentration") cfg.inflow_concentration = unit_interval(key, to_double(key, value));
                else if (name == "initial_concentration") cfg.initial_concentration = unit_interval(key, to_double(key, value));
                else if (name == "dt") cfg.dt = positive(key, to_double(key, value));
                else if (name == "t_end") cfg.t_end = to_double(key, value);
                else if (name == "snapshot_interval") cfg.snapshot_interval = to_long(key, value);
                else if (name == "zero_dim_mass") cfg.zero_dim_mass = to_bool(key, value);
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "output") {
                if (name == "directory") cfg.output_dir = std::filesystem::path(value).lexically_normal();
                else if (name == "vtu") cfg.write_vtu = to_bool(key, value);
                else if (starts("line.")) cfg.lines[name.substr(5)] = to_probe(key, value);
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else if (section == "study") {
                if (name == "base_resolution") cfg.study_base_resolution = static_cast<int>(to_long(key, value));
                else if (name == "manufactured") {
                    if (value != "linear" && value != "quadratic") {
                        throw ConfigError(fmt::format("{}: expected linear or quadratic, got '{}'", key, value));
                    }
                    cfg.study_manufactured = value;
                } else if (name == "base_steps") cfg.study_base_steps = to_long(key, value);
                else if (name == "reference_steps") cfg.study_reference_steps = to_long(key, value);
                else throw ConfigError(fmt::format("unknown key '{}'", key));
            } else {
                throw ConfigError(fmt::format("unknown section '[{}]'", section));
            }
        }
    }
    if (!cfg.mesh_file.empty() && !cfg.fracture_file.empty()) {
        throw ConfigError("mesh: set either 'file' or 'fractures', not both");
    }
    if (cfg.mesh_file.empty() && cfg.fracture_file.empty()) throw ConfigError("mesh: 'file' or 'fractures' is required");
    if (cfg.generator.resolution < 1) throw ConfigError("mesh.resolution: must be at least 1");
    if (!(cfg.t_end >= 0.0)) throw ConfigError("transport.t_end: must be non-negative");
    if (cfg.snapshot_interval < 0) throw ConfigError("transport.snapshot_interval: must be non-negative");
    if (cfg.transport_enabled) {
        const double n = cfg.t_end / cfg.dt;
        if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
            throw ConfigError(fmt::format("transport.t_end: {} is not a multiple of transport.dt = {}", cfg.t_end, cfg.dt));
        }
    }
    if (cfg.study_base_resolution < 1) throw ConfigError("study.base_resolution: must be at least 1");
    if (cfg.study_base_steps < 1) throw ConfigError("study.base_steps: must be at least 1");
    if (cfg.study_reference_steps < 0) throw ConfigError("study.reference_steps: must be non-negative");
    return cfg;
}

SimulationConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    return parse_config(in, path.parent_path());
}

void write_config(std::ostream& out, const SimulationConfig& cfg) {
    out << "[mesh]\n";
    if (!cfg.mesh_file.empty()) out << fmt::format("file = \"{}\"\n", cfg.mesh_file.generic_string());
    if (!cfg.fracture_file.empty()) out << fmt::format("fractures = \"{}\"\n", cfg.fracture_file.generic_string());
    out << fmt::format("resolution = {}\ngrading = {}\nmin_size_fraction = {}\njitter = {}\nseed = {}\n",
                       cfg.generator.resolution, num(cfg.generator.grading), num(cfg.generator.min_size_fraction),
                       num(cfg.generator.jitter), cfg.generator.seed);

    out << "\n[tags]\n";
    out << fmt::format("matrix = {}\nfractures = {}\nintersections = {}\n", quoted_list(cfg.matrix_tags),
                       quoted_list(cfg.fracture_tags), quoted_list(cfg.intersection_tags));

    out << "\n[coarsen]\n";
    out << fmt::format("enabled = {}\nmode = {}\nthreshold = {}\nprotect_fractures = {}\n", cfg.coarsen_enabled,
                       cfg.coarsen.threshold_mode == ThresholdMode::absolute ? "absolute" : "mean_fraction",
                       num(cfg.coarsen.threshold_value), cfg.coarsen.protect_fracture_faces);

    out << "\n[flow]\n";
    out << fmt::format("matrix_permeability = {}\nfracture_permeability = {}\n", nums(cfg.matrix_permeability),
                       num(cfg.fracture_permeability));
    if (cfg.fracture_normal_permeability) out << fmt::format("fracture_normal_permeability = {}\n", num(*cfg.fracture_normal_permeability));
    if (cfg.intersection_permeability) out << fmt::format("intersection_permeability = {}\n", num(*cfg.intersection_permeability));
    out << fmt::format("aperture = {}\nmatrix_source = {}\nfracture_source = {}\n", num(cfg.aperture),
                       num(cfg.matrix_source), num(cfg.fracture_source));
    if (cfg.exact) out << fmt::format("exact = {}\n", nums(*cfg.exact));
    for (const auto& [tag, v] : cfg.permeability_by_tag) out << fmt::format("permeability.{} = {}\n", tag, num(v));
    for (const auto& [tag, v] : cfg.normal_permeability_by_tag) out << fmt::format("normal_permeability.{} = {}\n", tag, num(v));

    out << "\n[boundary]\n";
    out << fmt::format("default = {}\n", format_boundary_rule(cfg.boundary_default));
    for (const auto& [region, rule] : cfg.boundary) out << fmt::format("{} = {}\n", region, format_boundary_rule(rule));

    out << "\n[solver]\n";
    out << fmt::format("method = {}\ntolerance = {}\nmax_iterations = {}\n",
                       cfg.solver.method == SolverMethod::direct_lu ? "direct" : "minres", num(cfg.solver.rel_tol),
                       cfg.solver.max_iter);

    out << "\n[transport]\n";
    out << fmt::format("enabled = {}\nporosity = {}\ninflow_concentration = {}\ninitial_concentration = {}\n"
                       "dt = {}\nt_end = {}\nsnapshot_interval = {}\nzero_dim_mass = {}\n",
                       cfg.transport_enabled, num(cfg.porosity), num(cfg.inflow_concentration),
                       num(cfg.initial_concentration), num(cfg.dt), num(cfg.t_end), cfg.snapshot_interval,
                       cfg.zero_dim_mass);

    out << "\n[output]\n";
    out << fmt::format("directory = \"{}\"\nvtu = {}\n", cfg.output_dir.generic_string(), cfg.write_vtu);
    for (const auto& [name, p] : cfg.lines) {
        out << fmt::format("line.{} = {} {} {} {} {} {} {}\n", name, num(p.p0.x()), num(p.p0.y()), num(p.p0.z()),
                           num(p.p1.x()), num(p.p1.y()), num(p.p1.z()), p.samples);
    }

    out << "\n[study]\n";
    out << fmt::format("base_resolution = {}\nmanufactured = {}\nbase_steps = {}\nreference_steps = {}\n",
                       cfg.study_base_resolution, cfg.study_manufactured, cfg.study_base_steps,
                       cfg.study_reference_steps);
}

}  // namespace mdfrac
