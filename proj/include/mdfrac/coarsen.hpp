#pragma once

// Agglomeration of small cells into polytopes: repeatedly merge the smallest
// cell below the threshold with its smallest face neighbour.

#include "mdfrac/mdgrid.hpp"

namespace mdfrac {

enum class ThresholdMode { absolute, mean_fraction };

struct CoarsenConfig {
    ThresholdMode threshold_mode = ThresholdMode::mean_fraction;
    double threshold_value = 1.0;  ///< 0 disables merging
    bool protect_fracture_faces = true;

    bool operator==(const CoarsenConfig&) const = default;
};

struct Partition {
    std::vector<Index> fine_to_coarse;
    DimGrid coarse;
};

/// Absolute measure threshold implied by the config for this grid.
double coarsen_threshold(const DimGrid& grid, const CoarsenConfig& cfg);

/// Greedy agglomeration. Throws Error on an empty grid or a negative threshold.
Partition coarsen(const DimGrid& grid, const CoarsenConfig& cfg);

/// Coarse grid for an arbitrary fine-to-coarse map (ids 0..k-1). Coarse cells are
/// numbered by their lowest fine cell; fracture faces of `fine` stay split.
Partition make_partition(const DimGrid& fine, const std::vector<Index>& fine_to_coarse);

struct PartitionReport {
    bool surjective = true;
    bool connected = true;
    bool measure_additive = true;
    bool boundary_faces_conserved = true;
    bool fracture_faces_conserved = true;
    std::vector<std::string> messages;

    bool ok() const {
        return surjective && connected && measure_additive && boundary_faces_conserved && fracture_faces_conserved;
    }
};

PartitionReport validate_partition(const Partition& p, const DimGrid& fine);

/// Coarsens the top-dimensional grid and re-attaches the lower grids.
MixedDimGrid coarsen_mixed_grid(const MixedDimGrid& grid, const CoarsenConfig& cfg,
                                std::vector<Index>* fine_to_coarse = nullptr);

}  // namespace mdfrac
