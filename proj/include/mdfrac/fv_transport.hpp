#pragma once

// Upwind finite-volume transport of a passive scalar on a mixed-dimensional
// grid, implicit Euler in time. Fluxes come from a solved Darcy field.

#include "mdfrac/linalg.hpp"
#include "mdfrac/vem_darcy.hpp"

#include <functional>
#include <iosfwd>
#include <memory>

namespace mdfrac {

/// 1 for flux >= 0 (the cell the flux leaves is upwind), 0 otherwise.
constexpr int upwind_delta(double flux) noexcept { return flux >= 0.0 ? 1 : 0; }

struct TransportParams {
    std::vector<std::vector<double>> porosity;      ///< [d][cell]
    std::vector<std::vector<double>> aperture;      ///< [d][cell]: cross-section (1d) or volume (0d); 1 on the top grid
    std::vector<std::vector<double>> source;        ///< [d][cell] mass rate; empty = zero
    std::vector<std::vector<double>> inflow_conc;   ///< [d][face], read on inflow outer faces; empty = zero
    std::vector<std::vector<double>> initial_conc;  ///< [d][cell]; empty = zero
    std::vector<std::vector<double>> fluid_source;  ///< [d][cell] Darcy source, used by the conservation check only
    double dt = 0.0;
    double t_end = 0.0;
    bool zero_dim_mass = true;  ///< mass term for 0d cells; false drops it (singular if no flux reaches a point)

    /// Same porosity everywhere, aperture[d] per dimension, constant inflow concentration.
    static TransportParams uniform(const MixedDimGrid& grid, double porosity, const std::vector<double>& aperture,
                                   double inflow, double dt, double t_end);
    /// Throws ConfigError for missing or inadmissible data.
    void validate(const MixedDimGrid& grid) const;
    /// Number of steps; ConfigError unless t_end / dt is an integer.
    long step_count() const;
};

struct ConcentrationState {
    std::vector<std::vector<double>> conc;  ///< [d][cell]
    long step = 0;
    double time = 0.0;
};

struct TransportOperator {
    double dt = 0.0;
    std::vector<Index> offset;         ///< first dof of each dimension, -1 if absent
    std::vector<Index> count;
    std::vector<double> mass;          ///< phi * eps * |E| / dt
    CsrMatrix advection;               ///< upwind part only
    CsrMatrix system;                  ///< diag(mass) + advection
    std::vector<double> inflow_rhs;    ///< sum of |Q| * c_in over inflow outer faces
    std::vector<double> outflow_rate;  ///< sum of Q over outflow outer faces
    double courant = 0.0;              ///< max over cells of dt * outflow / (phi eps |E|)
    std::shared_ptr<const SparseLu> factor;

    Index size() const noexcept { return static_cast<Index>(mass.size()); }
    std::vector<double> flatten(const std::vector<std::vector<double>>& per_dim) const;
    std::vector<std::vector<double>> unflatten(std::span<const double> flat) const;
};

/// Assembles and factorizes the transport operator. Warns if the Darcy field is
/// not conservative to 1e-6 relative.
TransportOperator assemble_transport(const MixedDimGrid& grid, const DarcyField& field, const TransportParams& params);

ConcentrationState initial_state(const TransportOperator& op, const TransportParams& params);

/// One implicit Euler step; `source` is [d][cell] (empty = zero).
ConcentrationState step(const TransportOperator& op, const ConcentrationState& state,
                        const std::vector<std::vector<double>>& source = {});

/// Mass rate through outflow boundary faces for a given state.
double outflow_rate(const TransportOperator& op, const ConcentrationState& state);
double total_mass(const TransportOperator& op, const ConcentrationState& state);

struct ProductionCurve {
    std::vector<double> time;
    std::vector<double> instantaneous;  ///< outflow mass rate at the end of each step
    std::vector<double> cumulative;     ///< produced mass up to each time
};

void write_production_csv(std::ostream& os, const ProductionCurve& curve);

struct TransportResult {
    ConcentrationState final_state;
    ProductionCurve production;
    double max_mass_error = 0.0;  ///< worst relative per-step mass-balance defect
    double min_conc = 0.0;
    double max_conc = 0.0;
    double courant = 0.0;
};

using TransportObserver = std::function<void(const ConcentrationState&)>;

/// Runs t_end / dt steps. The observer sees the initial state and every step.
TransportResult run_transport(const MixedDimGrid& grid, const DarcyField& field, const TransportParams& params,
                              const TransportObserver& observer = {});

}  // namespace mdfrac
