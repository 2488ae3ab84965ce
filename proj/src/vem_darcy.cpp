#include "mdfrac/vem_darcy.hpp"

#include "mdfrac/parallel.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace mdfrac {

namespace {

struct LocalGeometry {
    Eigen::MatrixXd d_mat;  // n x d: dofs of K grad(m_alpha)
    Eigen::MatrixXd f_mat;  // d x n: boundary moments
    Eigen::MatrixXd g_mat;  // d x d
};

LocalGeometry local_geometry(const DimGrid& g, Index cell, const Eigen::MatrixXd& k) {
    const int d = g.dim;
    if (d < 1) throw GeometryError("virtual element matrices need cells of dimension >= 1");
    if (k.rows() != d || k.cols() != d) {
        throw Error(fmt::format("cell {} of the {}d grid: permeability is {}x{}", cell, d, k.rows(), k.cols()));
    }
    const Eigen::MatrixXd frame = tangent_frame(g, cell);
    const double h = g.cell_diameter[cell];
    const Vec3& xc = g.cell_centroid[cell];
    const auto faces = g.cell_faces[cell];
    const auto n = static_cast<Eigen::Index>(faces.size());
    LocalGeometry out;
    out.d_mat.resize(n, d);
    out.f_mat.resize(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Index pos = g.cell_faces.offsets[cell] + static_cast<Index>(i);
        const Index f = faces[i];
        const double s = g.cell_face_signs[pos];
        const Eigen::VectorXd n_loc = frame.transpose() * g.cell_face_normals[pos];
        out.d_mat.row(i) = s * (k * n_loc).transpose() / h;
        out.f_mat.col(i) = s * g.face_measure[f] * frame.transpose() * (g.face_centroid[f] - xc) / h;
    }
    out.g_mat = g.cell_measure[cell] * k / (h * h);
    const double mismatch = (out.f_mat * out.d_mat - out.g_mat).norm();
    if (!(mismatch <= 1e-8 * out.g_mat.norm())) {
        throw GeometryError(fmt::format("cell {} of the {}d grid: boundary moments do not close (mismatch {:.3e})",
                                        cell, d, mismatch / out.g_mat.norm()));
    }
    return out;
}

std::vector<double> zeros_if_empty(const std::vector<std::vector<double>>& v, int d, Index n) {
    if (d < static_cast<int>(v.size()) && !v[d].empty()) {
        if (static_cast<Index>(v[d].size()) != n) {
            throw Error(fmt::format("{}d source has {} values for {} cells", d, v[d].size(), n));
        }
        return v[d];
    }
    return std::vector<double>(n, 0.0);
}

}  // namespace

PermeabilityCompound PermeabilityCompound::isotropic(const MixedDimGrid& grid, const std::vector<double>& k_tangential,
                                                     const std::vector<double>& k_normal) {
    PermeabilityCompound p;
    const int n = grid.ambient_dim;
    p.tangential.resize(n + 1);
    p.normal.resize(n + 1);
    for (int d = 1; d <= n; ++d) {
        const double kt = d < static_cast<int>(k_tangential.size()) ? k_tangential[d] : 1.0;
        p.tangential[d].assign(grid.grid(d).num_cells(), kt * Eigen::MatrixXd::Identity(d, d));
        const double kn = d < static_cast<int>(k_normal.size()) ? k_normal[d] : 1.0;
        p.normal[d].assign(grid.couplings[d].pairs.size(), kn);
    }
    return p;
}

void PermeabilityCompound::validate(const MixedDimGrid& grid) const {
    for (int d = 1; d <= grid.ambient_dim; ++d) {
        if (!grid.has(d)) continue;
        if (d >= static_cast<int>(tangential.size()) || static_cast<Index>(tangential[d].size()) != grid.grid(d).num_cells()) {
            throw Error(fmt::format("permeability missing for the {}d grid", d));
        }
        for (Index c = 0; c < grid.grid(d).num_cells(); ++c) {
            const auto& k = tangential[d][c];
            if (k.rows() != d || k.cols() != d || !k.allFinite() || (k - k.transpose()).norm() > 1e-12 * k.norm()) {
                throw Error(fmt::format("cell {} of the {}d grid: permeability is not a symmetric {}x{} tensor", c, d, d, d));
            }
            Eigen::LLT<Eigen::MatrixXd> llt(k);
            if (llt.info() != Eigen::Success) {
                throw Error(fmt::format("cell {} of the {}d grid: permeability is not positive definite", c, d));
            }
        }
        const auto pairs = grid.couplings[d].pairs.size();
        if (pairs == 0) continue;
        if (d >= static_cast<int>(normal.size()) || normal[d].size() != pairs) {
            throw Error(fmt::format("normal permeability missing for the {}d-{}d coupling", d, d - 1));
        }
        for (double kn : normal[d])
            if (!(kn > 0.0) || !std::isfinite(kn)) throw Error(fmt::format("normal permeability {} must be positive", kn));
    }
}

std::vector<std::vector<FaceBc>> make_boundary_conditions(const MixedDimGrid& grid,
                                                          const std::function<FaceBc(int, Index)>& rule) {
    std::vector<std::vector<FaceBc>> bc(grid.ambient_dim + 1);
    for (int d = 1; d <= grid.ambient_dim; ++d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        bc[d].resize(g.num_faces());
        for (Index f = 0; f < g.num_faces(); ++f)
            if (g.face_kind[f] == FaceKind::outer) bc[d][f] = rule(d, f);
    }
    return bc;
}

LocalVemKernel local_projection(const DimGrid& grid, Index cell, const Eigen::MatrixXd& k_cell) {
    const auto geo = local_geometry(grid, cell, k_cell);
    LocalVemKernel kern;
    kern.cell = cell;
    const auto faces = grid.cell_faces[cell];
    kern.faces.assign(faces.begin(), faces.end());
    try {
        kern.projection = dense_solve(geo.g_mat, geo.f_mat);
    } catch (const SolverError&) {
        throw GeometryError(fmt::format("cell {} of the {}d grid: singular projection system", cell, grid.dim));
    }
    kern.projector = geo.d_mat * kern.projection;
    return kern;
}

Eigen::MatrixXd local_stabilization(const DimGrid& grid, const LocalVemKernel& projected) {
    const auto n = static_cast<Eigen::Index>(projected.faces.size());
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = grid.face_measure[projected.faces[i]];
    const Eigen::MatrixXd t = w.asDiagonal() * (Eigen::MatrixXd::Identity(n, n) - projected.projector);
    return t.transpose() * t;
}

LocalVemKernel local_darcy_matrix(const DimGrid& grid, Index cell, const Eigen::MatrixXd& k_cell) {
    auto kern = local_projection(grid, cell, k_cell);
    const int d = grid.dim;
    const double h = grid.cell_diameter[cell];
    const Eigen::MatrixXd g_mat = grid.cell_measure[cell] * k_cell / (h * h);
    kern.consistency = kern.projection.transpose() * g_mat * kern.projection;
    kern.consistency = 0.5 * (kern.consistency + kern.consistency.transpose()).eval();
    kern.stabilization = local_stabilization(grid, kern);
    const double kappa = k_cell.inverse().trace() / d;
    kern.scaling = std::pow(h, 2 - d) * kappa;
    kern.matrix = kern.consistency + kern.scaling * kern.stabilization;
    return kern;
}

Triplets coupling_blocks(const MixedDimGrid& grid, int d, std::span<const double> k_normal, const DofLayout& layout) {
    const auto& cm = grid.couplings.at(d);
    Triplets t(layout.total, layout.total);
    if (k_normal.size() != cm.pairs.size()) {
        throw Error(fmt::format("{} normal permeabilities for {} coupling pairs", k_normal.size(), cm.pairs.size()));
    }
    for (Index l = 0; l < cm.low_cell_pairs.size(); ++l) {
        if (cm.low_cell_pairs[l].empty()) {
            throw GeometryError(fmt::format("{}d cell {} has no coupled {}d face", d - 1, l, d));
        }
    }
    for (std::size_t i = 0; i < cm.pairs.size(); ++i) {
        const auto& p = cm.pairs[i];
        const Index u = layout.velocity_offset[d] + p.high_face;
        const Index q = layout.pressure_offset[d - 1] + p.low_cell;
        t.add(u, u, p.mortar_area / k_normal[i]);
        t.add(u, q, p.mortar_area);
        t.add(q, u, p.mortar_area);
    }
    return t;
}

SaddlePointSystem assemble_saddle_point(const MixedDimGrid& grid, const DarcyParams& params) {
    params.perm.validate(grid);
    SaddlePointSystem sys;
    sys.layout = grid.dof_layout();
    const auto& lay = sys.layout;
    const Index total = lay.total;
    sys.rhs.assign(total, 0.0);
    Triplets all(total, total);

    std::vector<char> is_fixed(total, 0);
    std::vector<double> fixed_value(total, 0.0);
    bool any_dirichlet = false;

    for (int d = grid.top_dim(); d >= 0; --d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        const Index po = lay.pressure_offset[d];
        const auto f = zeros_if_empty(params.source, d, g.num_cells());
        for (Index c = 0; c < g.num_cells(); ++c) sys.rhs[po + c] = -f[c] * g.cell_measure[c];
        if (d == 0) continue;

        const Index vo = lay.velocity_offset[d];
        const int workers = thread_count();
        std::vector<Triplets> parts(workers);
        parallel_chunks(g.num_cells(), workers, [&](int w, long begin, long end) {
            auto& t = parts[w];
            for (Index c = static_cast<Index>(begin); c < static_cast<Index>(end); ++c) {
                const auto kern = local_darcy_matrix(g, c, params.perm.tangential[d][c]);
                const auto n = static_cast<Index>(kern.faces.size());
                for (Index i = 0; i < n; ++i)
                    for (Index j = 0; j < n; ++j) t.add(vo + kern.faces[i], vo + kern.faces[j], kern.matrix(i, j));
                for (Index i = 0; i < n; ++i) {
                    const Index pos = g.cell_faces.offsets[c] + i;
                    const double b = -g.cell_face_signs[pos] * g.face_measure[kern.faces[i]];
                    t.add(po + c, vo + kern.faces[i], b);
                    t.add(vo + kern.faces[i], po + c, b);
                }
            }
        });
        for (const auto& t : parts) all.append(t);

        if (grid.has(d - 1)) all.append(coupling_blocks(grid, d, params.perm.normal[d], lay));

        const auto* bc = d < static_cast<int>(params.bc.size()) ? &params.bc[d] : nullptr;
        for (Index face = 0; face < g.num_faces(); ++face) {
            const Index dof = vo + face;
            if (g.face_kind[face] == FaceKind::tip) {
                is_fixed[dof] = 1;
                fixed_value[dof] = 0.0;
                continue;
            }
            if (g.face_kind[face] != FaceKind::outer) continue;
            if (!bc || static_cast<Index>(bc->size()) != g.num_faces() || (*bc)[face].type == BcType::unset) {
                throw Error(fmt::format("no boundary condition on outer face {} of the {}d grid (centroid {:.6g}, {:.6g}, {:.6g})",
                                        face, d, g.face_centroid[face].x(), g.face_centroid[face].y(),
                                        g.face_centroid[face].z()));
            }
            const Index owner = g.face_cells[face][0];
            const double s = g.cell_face_signs[g.cell_faces.offsets[owner] + g.local_face_index(owner, face)];
            const auto& b = (*bc)[face];
            if (b.type == BcType::dirichlet) {
                sys.rhs[dof] -= b.value * g.face_measure[face] * s;
                any_dirichlet = true;
            } else {
                is_fixed[dof] = 1;
                fixed_value[dof] = s * b.value;
            }
        }
    }

    if (!any_dirichlet) {
        if (!params.pin_pressure) {
            throw SolverError("no Dirichlet boundary: the pressure is only defined up to a constant "
                              "(set pin_pressure to fix it)");
        }
        const Index dof = lay.pressure_offset[grid.top_dim()];
        is_fixed[dof] = 1;
        fixed_value[dof] = 0.0;
    }

    Triplets reduced(total, total);
    reduced.entries.reserve(all.entries.size());
    for (const auto& e : all.entries) {
        if (is_fixed[e.row]) continue;
        if (is_fixed[e.col]) {
            sys.rhs[e.row] -= e.value * fixed_value[e.col];
            continue;
        }
        reduced.entries.push_back(e);
    }
    for (Index i = 0; i < total; ++i) {
        if (!is_fixed[i]) continue;
        reduced.add(i, i, 1.0);
        sys.rhs[i] = fixed_value[i];
        sys.constrained.push_back(i);
    }
    sys.matrix = csr_from_triplets(reduced);
    return sys;
}

DarcyField solve_darcy(const MixedDimGrid& grid, const DarcyParams& params, const SolverConfig& cfg) {
    const auto sys = assemble_saddle_point(grid, params);
    DarcyField field;
    const auto x = solve(sys.matrix, sys.rhs, cfg, &field.report);
    const auto& lay = sys.layout;
    const int n = grid.ambient_dim;
    field.flux.resize(n + 1);
    field.pressure.resize(n + 1);
    for (int d = 0; d <= n; ++d) {
        if (!grid.has(d)) continue;
        if (d > 0) {
            field.flux[d].assign(x.begin() + lay.velocity_offset[d],
                                 x.begin() + lay.velocity_offset[d] + lay.velocity_count[d]);
        }
        field.pressure[d].assign(x.begin() + lay.pressure_offset[d],
                                 x.begin() + lay.pressure_offset[d] + lay.pressure_count[d]);
    }
    field.cell_velocity = project_velocity(grid, field);
    spdlog::debug("darcy: {} dofs, {} nonzeros, relative residual {:.3e}", lay.total, sys.matrix.nnz(),
                  field.report.relative_residual);
    return field;
}

ConservationReport check_conservation(const MixedDimGrid& grid, const DarcyField& field, const DarcyParams& params) {
    const int n = grid.ambient_dim;
    ConservationReport rep;
    rep.residual.resize(n + 1);
    rep.max_abs.assign(n + 1, 0.0);
    for (int d = 0; d <= n; ++d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        const auto f = zeros_if_empty(params.source, d, g.num_cells());
        auto& r = rep.residual[d];
        r.assign(g.num_cells(), 0.0);
        for (Index c = 0; c < g.num_cells(); ++c) {
            double sum = -f[c] * g.cell_measure[c];
            const auto faces = g.cell_faces[c];
            for (std::size_t k = 0; k < faces.size(); ++k) {
                const Index pos = g.cell_faces.offsets[c] + static_cast<Index>(k);
                const double q = g.cell_face_signs[pos] * g.face_measure[faces[k]] * field.flux[d][faces[k]];
                rep.flux_scale = std::max(rep.flux_scale, std::abs(q));
                sum += q;
            }
            r[c] = sum;
        }
        if (d < n && grid.has(d + 1)) {
            for (const auto& p : grid.couplings[d + 1].pairs) {
                const double q = p.mortar_area * field.flux[d + 1][p.high_face];
                rep.flux_scale = std::max(rep.flux_scale, std::abs(q));
                r[p.low_cell] -= q;
            }
        }
        for (double v : r) rep.max_abs[d] = std::max(rep.max_abs[d], std::abs(v));
    }
    return rep;
}

std::vector<std::vector<Vec3>> project_velocity(const MixedDimGrid& grid, const DarcyField& field) {
    const int n = grid.ambient_dim;
    std::vector<std::vector<Vec3>> out(n + 1);
    for (int d = 0; d <= n; ++d) {
        if (!grid.has(d)) continue;
        const auto& g = grid.grid(d);
        out[d].assign(g.num_cells(), Vec3::Zero());
        if (d == 0) continue;
        for (Index c = 0; c < g.num_cells(); ++c) {
            // integral of u over E equals the boundary moment sum(u.n |e| (x_e - x_E))
            Vec3 v = Vec3::Zero();
            const auto faces = g.cell_faces[c];
            for (std::size_t k = 0; k < faces.size(); ++k) {
                const Index pos = g.cell_faces.offsets[c] + static_cast<Index>(k);
                const Index f = faces[k];
                v += g.cell_face_signs[pos] * g.face_measure[f] * field.flux[d][f] * (g.face_centroid[f] - g.cell_centroid[c]);
            }
            out[d][c] = v / g.cell_measure[c];
        }
    }
    return out;
}

}  // namespace mdfrac
