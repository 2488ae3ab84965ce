#pragma once

// Mixed-dimensional Darcy flow with lowest-order dual virtual elements.
//
// Unknowns: one normal velocity u_e = u.n_e per face (per unit face measure,
// split fracture faces carry one value per side) and one pressure per cell.
// Sign conventions: the reference normal of a fracture face points out of its
// cell towards the fracture, so a positive value is flow into the fracture.

#include "mdfrac/linalg.hpp"
#include "mdfrac/mdgrid.hpp"

#include <functional>
#include <optional>

namespace mdfrac {

struct PermeabilityCompound {
    /// [d][cell]: symmetric positive-definite d x d tensor in the cell's tangent frame
    /// (for the top grid, the canonical frame). Effective values: already aperture-scaled.
    std::vector<std::vector<Eigen::MatrixXd>> tangential;
    /// [d][pair]: normal permeability k_* for every pair of couplings[d].
    std::vector<std::vector<double>> normal;

    /// Isotropic values per dimension: k_tangential[d], k_normal[d] (index d = high dimension of the coupling).
    static PermeabilityCompound isotropic(const MixedDimGrid& grid, const std::vector<double>& k_tangential,
                                          const std::vector<double>& k_normal);
    /// Throws Error unless every tensor is SPD and every k_* is positive and finite.
    void validate(const MixedDimGrid& grid) const;
};

enum class BcType : std::uint8_t { unset, dirichlet, flux };

struct FaceBc {
    BcType type = BcType::unset;
    double value = 0.0;  ///< pressure, or outward normal velocity u.n per unit face measure

    bool operator==(const FaceBc&) const = default;
};

/// Evaluates `rule(d, face)` on every outer face of every grid ([d][face] layout;
/// other faces stay unset).
std::vector<std::vector<FaceBc>> make_boundary_conditions(const MixedDimGrid& grid,
                                                          const std::function<FaceBc(int, Index)>& rule);

struct DarcyParams {
    PermeabilityCompound perm;
    std::vector<std::vector<double>> source;  ///< [d][cell] per unit measure; empty = zero
    std::vector<std::vector<FaceBc>> bc;      ///< [d][face]; needed on outer faces only
    bool pin_pressure = false;                ///< fix p = 0 in the first top cell when no Dirichlet face exists
};

struct LocalVemKernel {
    Index cell = -1;
    std::vector<Index> faces;
    Eigen::MatrixXd projection;     ///< d x n: coefficients of the projected field in K grad(m)
    Eigen::MatrixXd projector;      ///< n x n: the projection expressed in face dofs
    Eigen::MatrixXd consistency;    ///< n x n
    Eigen::MatrixXd stabilization;  ///< n x n, unscaled
    double scaling = 1.0;           ///< h^(2-d) times the permeability scale
    Eigen::MatrixXd matrix;         ///< consistency + scaling * stabilization
};

/// Projection onto K-gradients of linear polynomials: returns the kernel with
/// `projection` and `projector` filled.
LocalVemKernel local_projection(const DimGrid& grid, Index cell, const Eigen::MatrixXd& k_cell);

/// (I - P)^T W^2 (I - P) with W = diag(|e|): the dof-wise stabilization written
/// for integrated face fluxes.
Eigen::MatrixXd local_stabilization(const DimGrid& grid, const LocalVemKernel& projected);

LocalVemKernel local_darcy_matrix(const DimGrid& grid, Index cell, const Eigen::MatrixXd& k_cell);

/// Coupling terms of couplings[d]: eta * |l| on paired face dofs and |l| between
/// the paired face dof and the low cell pressure (both triangles of the saddle point).
Triplets coupling_blocks(const MixedDimGrid& grid, int d, std::span<const double> k_normal, const DofLayout& layout);

struct SaddlePointSystem {
    CsrMatrix matrix;
    std::vector<double> rhs;
    DofLayout layout;
    std::vector<Index> constrained;  ///< dofs fixed by elimination (flux faces, tips, pinned pressure)
};

SaddlePointSystem assemble_saddle_point(const MixedDimGrid& grid, const DarcyParams& params);

struct DarcyField {
    std::vector<std::vector<double>> flux;      ///< [d][face]
    std::vector<std::vector<double>> pressure;  ///< [d][cell]
    std::vector<std::vector<Vec3>> cell_velocity;
    SolveReport report;
};

DarcyField solve_darcy(const MixedDimGrid& grid, const DarcyParams& params, const SolverConfig& cfg = {});

struct ConservationReport {
    std::vector<std::vector<double>> residual;  ///< [d][cell]
    std::vector<double> max_abs;                ///< [d]
    double flux_scale = 0.0;                    ///< largest |integrated face flux|
};

/// Per cell: sum of outgoing integrated fluxes - inflow from the higher dimension - f |E|.
ConservationReport check_conservation(const MixedDimGrid& grid, const DarcyField& field, const DarcyParams& params);

/// Projected velocity at each cell, in ambient coordinates.
std::vector<std::vector<Vec3>> project_velocity(const MixedDimGrid& grid, const DarcyField& field);

}  // namespace mdfrac
