#include "mdfrac/fv_transport.hpp"

#include "mdfrac/parallel.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace mdfrac {

namespace {

void check_sizes(const std::vector<std::vector<double>>& v, const MixedDimGrid& grid, bool per_face, bool required,
                 const char* what) {
    for (int d = 0; d <= grid.ambient_dim; ++d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        const auto n = static_cast<std::size_t>(per_face ? g.num_faces() : g.num_cells());
        const bool present = d < static_cast<int>(v.size()) && !v[d].empty();
        if (!present) {
            if (required) throw ConfigError(fmt::format("{} missing for the {}d grid", what, d));
            continue;
        }
        if (v[d].size() != n) throw ConfigError(fmt::format("{}d {}: {} values for {} entries", d, what, v[d].size(), n));
    }
}

double value_or_zero(const std::vector<std::vector<double>>& v, int d, Index i) {
    return d < static_cast<int>(v.size()) && !v[d].empty() ? v[d][i] : 0.0;
}

// Low cell paired with each fracture face of grid d, or -1.
std::vector<Index> paired_low_cell(const MixedDimGrid& grid, int d, std::vector<double>& area) {
    const auto& g = grid.grid(d);
    std::vector<Index> low(g.num_faces(), -1);
    area.assign(g.num_faces(), 0.0);
    if (!grid.has(d - 1)) return low;
    for (const auto& p : grid.couplings[d].pairs) {
        low[p.high_face] = p.low_cell;
        area[p.high_face] = p.mortar_area;
    }
    return low;
}

}  // namespace

TransportParams TransportParams::uniform(const MixedDimGrid& grid, double porosity, const std::vector<double>& aperture,
                                         double inflow, double dt, double t_end) {
    TransportParams p;
    const int n = grid.ambient_dim;
    p.porosity.resize(n + 1);
    p.aperture.resize(n + 1);
    p.inflow_conc.resize(n + 1);
    p.dt = dt;
    p.t_end = t_end;
    for (int d = 0; d <= n; ++d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        const double eps = d == n ? 1.0 : (d < static_cast<int>(aperture.size()) ? aperture[d] : 1.0);
        p.porosity[d].assign(g.num_cells(), porosity);
        p.aperture[d].assign(g.num_cells(), eps);
        p.inflow_conc[d].assign(g.num_faces(), inflow);
    }
    return p;
}

void TransportParams::validate(const MixedDimGrid& grid) const {
    check_sizes(porosity, grid, false, true, "porosity");
    check_sizes(aperture, grid, false, true, "aperture");
    check_sizes(source, grid, false, false, "transport source");
    check_sizes(inflow_conc, grid, true, false, "inflow concentration");
    check_sizes(initial_conc, grid, false, false, "initial concentration");
    check_sizes(fluid_source, grid, false, false, "fluid source");
    for (int d = 0; d <= grid.ambient_dim; ++d) {
        if (!grid.has(d)) continue;
        for (double v : porosity[d])
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("porosity {} must be positive", v));
        for (double v : aperture[d])
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("aperture {} must be positive", v));
        for (const auto* c : {&inflow_conc, &initial_conc}) {
            if (d >= static_cast<int>(c->size())) continue;
            for (double v : (*c)[d])
                if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(fmt::format("concentration {} outside [0, 1]", v));
        }
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError(fmt::format("time step {} must be positive", dt));
    step_count();
}

long TransportParams::step_count() const {
    if (!(dt > 0.0)) throw ConfigError(fmt::format("time step {} must be positive", dt));
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError(fmt::format("end time {} must be non-negative", t_end));
    const double n = t_end / dt;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
        throw ConfigError(fmt::format("end time {} is not an integer multiple of the time step {}", t_end, dt));
    }
    return static_cast<long>(r);
}

std::vector<double> TransportOperator::flatten(const std::vector<std::vector<double>>& per_dim) const {
    std::vector<double> flat(size(), 0.0);
    for (std::size_t d = 0; d < offset.size(); ++d) {
        if (offset[d] < 0 || d >= per_dim.size() || per_dim[d].empty()) continue;
        if (static_cast<Index>(per_dim[d].size()) != count[d]) {
            throw Error(fmt::format("{}d field has {} values for {} cells", d, per_dim[d].size(), count[d]));
        }
        std::copy(per_dim[d].begin(), per_dim[d].end(), flat.begin() + offset[d]);
    }
    return flat;
}

std::vector<std::vector<double>> TransportOperator::unflatten(std::span<const double> flat) const {
    std::vector<std::vector<double>> out(offset.size());
    for (std::size_t d = 0; d < offset.size(); ++d)
        if (offset[d] >= 0) out[d].assign(flat.begin() + offset[d], flat.begin() + offset[d] + count[d]);
    return out;
}

TransportOperator assemble_transport(const MixedDimGrid& grid, const DarcyField& field, const TransportParams& params) {
    params.validate(grid);
    const int n = grid.ambient_dim;
    TransportOperator op;
    op.dt = params.dt;
    op.offset.assign(n + 1, -1);
    op.count.assign(n + 1, 0);
    Index total = 0;
    for (int d = n; d >= 0; --d) {
        if (!grid.has(d)) continue;
        op.offset[d] = total;
        op.count[d] = grid.grid(d).num_cells();
        total += op.count[d];
    }
    for (int d = 1; d <= n; ++d) {
        if (grid.has(d) && (d >= static_cast<int>(field.flux.size()) ||
                            static_cast<Index>(field.flux[d].size()) != grid.grid(d).num_faces())) {
            throw Error(fmt::format("Darcy field does not match the {}d grid", d));
        }
    }

    DarcyParams dp;
    dp.source = params.fluid_source;
    const auto cons = check_conservation(grid, field, dp);
    const double worst = *std::max_element(cons.max_abs.begin(), cons.max_abs.end());
    if (worst > 1e-6 * std::max(cons.flux_scale, 1e-300)) {
        spdlog::warn("Darcy field is not conservative: cell residual {:.3e} relative to the largest flux",
                     worst / cons.flux_scale);
    }

    op.mass.assign(total, 0.0);
    op.inflow_rhs.assign(total, 0.0);
    op.outflow_rate.assign(total, 0.0);
    std::vector<std::vector<Index>> low_of(n + 1);
    std::vector<std::vector<double>> mortar(n + 1);
    for (int d = 1; d <= n; ++d)
        if (grid.has(d)) low_of[d] = paired_low_cell(grid, d, mortar[d]);

    std::vector<std::pair<int, Index>> rows(total);
    for (int d = 0; d <= n; ++d)
        for (Index c = 0; c < op.count[d]; ++c) rows[op.offset[d] + c] = {d, c};

    const int workers = thread_count();
    std::vector<Triplets> parts(workers, Triplets(total, total));
    std::vector<double> outflow_total(total, 0.0);
    parallel_chunks(total, workers, [&](int w, long begin, long end) {
        auto& t = parts[w];
        for (Index row = static_cast<Index>(begin); row < static_cast<Index>(end); ++row) {
            const auto [d, c] = rows[row];
            const auto& g = grid.grid(d);
            const double volume = params.porosity[d][c] * params.aperture[d][c] * (d == 0 ? 1.0 : g.cell_measure[c]);
            op.mass[row] = d == 0 && !params.zero_dim_mass ? 0.0 : volume / params.dt;
            double diag = 0.0;
            auto take = [&](double q, Index upwind) {
                if (q == 0.0) return;
                if (upwind_delta(q)) diag += q;
                else t.add(row, upwind, q);
            };
            if (d > 0) {
                const auto faces = g.cell_faces[c];
                for (std::size_t k = 0; k < faces.size(); ++k) {
                    const Index pos = g.cell_faces.offsets[c] + static_cast<Index>(k);
                    const Index f = faces[k];
                    const double s = g.cell_face_signs[pos];
                    switch (g.face_kind[f]) {
                    case FaceKind::interior: {
                        const auto [a, b] = g.face_cells[f];
                        take(s * g.face_measure[f] * field.flux[d][f], op.offset[d] + (a == c ? b : a));
                        break;
                    }
                    case FaceKind::outer: {
                        const double q = s * g.face_measure[f] * field.flux[d][f];
                        if (upwind_delta(q)) {
                            diag += q;
                            op.outflow_rate[row] += q;
                        } else {
                            op.inflow_rhs[row] -= q * value_or_zero(params.inflow_conc, d, f);
                        }
                        break;
                    }
                    case FaceKind::fracture: {
                        const Index low = low_of[d][f];
                        if (low < 0) throw GeometryError(fmt::format("fracture face {} of the {}d grid is not coupled", f, d));
                        take(mortar[d][f] * field.flux[d][f], op.offset[d - 1] + low);
                        break;
                    }
                    case FaceKind::tip:
                        break;
                    }
                }
            }
            if (d < n && grid.has(d + 1)) {
                const auto& cm = grid.couplings[d + 1];
                const auto& high = grid.grid(d + 1);
                for (Index i : cm.low_cell_pairs[c]) {
                    const auto& p = cm.pairs[i];
                    // positive flux enters this cell from the high side
                    take(-p.mortar_area * field.flux[d + 1][p.high_face], op.offset[d + 1] + high.face_cells[p.high_face][0]);
                }
            }
            if (diag != 0.0) t.add(row, row, diag);
            outflow_total[row] = diag;
        }
    });
    Triplets adv(total, total);
    for (const auto& p : parts) adv.append(p);
    op.advection = csr_from_triplets(adv);
    for (Index i = 0; i < total; ++i) adv.add(i, i, op.mass[i]);
    op.system = csr_from_triplets(adv);
    for (Index i = 0; i < total; ++i)
        if (op.mass[i] > 0.0) op.courant = std::max(op.courant, outflow_total[i] / op.mass[i]);
    op.factor = std::make_shared<const SparseLu>(op.system);
    spdlog::debug("transport: {} cells, {} nonzeros, Courant number {:.3g}", total, op.system.nnz(), op.courant);
    return op;
}

ConcentrationState initial_state(const TransportOperator& op, const TransportParams& params) {
    ConcentrationState s;
    s.conc = op.unflatten(op.flatten(params.initial_conc));
    return s;
}

ConcentrationState step(const TransportOperator& op, const ConcentrationState& state,
                        const std::vector<std::vector<double>>& source) {
    const auto c = op.flatten(state.conc);
    const auto r = op.flatten(source);
    // increment form: (M + U) dc = r + b - U c
    const auto uc = op.advection.multiply(c);
    std::vector<double> rhs(op.size());
    for (Index i = 0; i < op.size(); ++i) rhs[i] = r[i] + op.inflow_rhs[i] - uc[i];
    auto next = op.factor->solve(rhs, 1e-13, 3);
    for (Index i = 0; i < op.size(); ++i) next[i] += c[i];
    ConcentrationState out;
    out.conc = op.unflatten(next);
    out.step = state.step + 1;
    out.time = static_cast<double>(out.step) * op.dt;
    return out;
}

double outflow_rate(const TransportOperator& op, const ConcentrationState& state) {
    const auto c = op.flatten(state.conc);
    double q = 0.0;
    for (Index i = 0; i < op.size(); ++i) q += op.outflow_rate[i] * c[i];
    return q;
}

double total_mass(const TransportOperator& op, const ConcentrationState& state) {
    const auto c = op.flatten(state.conc);
    double m = 0.0;
    for (Index i = 0; i < op.size(); ++i) m += op.mass[i] * op.dt * c[i];
    return m;
}

void write_production_csv(std::ostream& os, const ProductionCurve& curve) {
    os << "time,instantaneous,cumulative\n";
    for (std::size_t i = 0; i < curve.time.size(); ++i)
        os << fmt::format("{:.10g},{:.10g},{:.10g}\n", curve.time[i], curve.instantaneous[i], curve.cumulative[i]);
}

TransportResult run_transport(const MixedDimGrid& grid, const DarcyField& field, const TransportParams& params,
                              const TransportObserver& observer) {
    const long steps = params.step_count();
    const auto op = assemble_transport(grid, field, params);
    const double inflow = std::accumulate(op.inflow_rhs.begin(), op.inflow_rhs.end(), 0.0);
    const auto r_flat = op.flatten(params.source);
    const double r_total = std::accumulate(r_flat.begin(), r_flat.end(), 0.0);

    TransportResult res;
    res.courant = op.courant;
    auto state = initial_state(op, params);
    auto bounds = [&](const ConcentrationState& s) {
        for (const auto& v : s.conc)
            for (double x : v) {
                res.min_conc = std::min(res.min_conc, x);
                res.max_conc = std::max(res.max_conc, x);
            }
    };
    res.min_conc = std::numeric_limits<double>::infinity();
    res.max_conc = -std::numeric_limits<double>::infinity();
    bounds(state);
    auto& pc = res.production;
    pc.time.push_back(0.0);
    pc.instantaneous.push_back(outflow_rate(op, state));
    pc.cumulative.push_back(0.0);
    if (observer) observer(state);

    double mass = total_mass(op, state);
    for (long k = 0; k < steps; ++k) {
        auto next = step(op, state, params.source);
        const double out = outflow_rate(op, next);
        const double mass_next = total_mass(op, next);
        const double expected = params.dt * (inflow - out + r_total);
        const double scale = std::max({params.dt * (inflow + out + std::abs(r_total)), mass + mass_next, 1e-300});
        res.max_mass_error = std::max(res.max_mass_error, std::abs(mass_next - mass - expected) / scale);
        mass = mass_next;
        pc.time.push_back(next.time);
        pc.instantaneous.push_back(out);
        pc.cumulative.push_back(pc.cumulative.back() + params.dt * out);
        bounds(next);
        state = std::move(next);
        if (observer) observer(state);
    }
    if (res.max_mass_error > 1e-12) spdlog::warn("transport mass balance defect {:.3e}", res.max_mass_error);
    res.final_state = std::move(state);
    return res;
}

}  // namespace mdfrac
