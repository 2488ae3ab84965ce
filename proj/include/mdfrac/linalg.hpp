#pragma once

#include "mdfrac/core.hpp"
#include "mdfrac/kernels.hpp"

#include <iosfwd>
#include <memory>

namespace mdfrac {

struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Unassembled sparse matrix. Duplicate entries are summed on conversion.
struct Triplets {
    Index rows = 0;
    Index cols = 0;
    std::vector<Triplet> entries;

    Triplets() = default;
    Triplets(Index r, Index c) : rows(r), cols(c) {}

    void add(Index r, Index c, double v) { entries.push_back({r, c, v}); }
    void append(const Triplets& other) { entries.insert(entries.end(), other.entries.begin(), other.entries.end()); }
};

struct CsrMatrix {
    Index rows = 0;
    Index cols = 0;
    std::vector<Index> row_ptr{0};
    std::vector<Index> col_idx;
    std::vector<double> values;

    Index nnz() const noexcept { return static_cast<Index>(values.size()); }
    kernels::CsrView view() const { return {rows, cols, row_ptr, col_idx, values}; }
    /// Entry (r, c), zero if not stored.
    double at(Index r, Index c) const;
    std::vector<double> multiply(std::span<const double> x) const;
    CsrMatrix transpose() const;
    Eigen::MatrixXd to_dense() const;

    bool operator==(const CsrMatrix&) const = default;
};

/// Sorted, deduplicated CSR. Duplicates are summed in a canonical order, so the
/// result is bit-identical for any permutation of the input entries.
CsrMatrix csr_from_triplets(const Triplets& t);

enum class SolverMethod { direct_lu, symmetric_indefinite_iterative };

struct SolverConfig {
    SolverMethod method = SolverMethod::direct_lu;
    double rel_tol = 1e-10;
    int max_iter = 20000;

    bool operator==(const SolverConfig&) const = default;
};

struct SolveReport {
    double relative_residual = 0.0;  ///< ||Ax - b|| / max(||b||, 1)
    int iterations = 0;              ///< refinement steps (direct) or Krylov iterations
};

/// Reusable factorization of a square sparse matrix.
class SparseLu {
public:
    explicit SparseLu(const CsrMatrix& a);
    ~SparseLu();
    SparseLu(SparseLu&&) noexcept;
    SparseLu& operator=(SparseLu&&) noexcept;

    /// Solves with up to `max_refine` steps of iterative refinement until the
    /// relative residual drops below `rel_tol`.
    std::vector<double> solve(std::span<const double> b, double rel_tol = 1e-12, int max_refine = 3,
                              SolveReport* report = nullptr) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Solves A x = b. Throws SolverError on singular matrices (direct) or when the
/// iterative method misses the tolerance within max_iter (reports the residual).
std::vector<double> solve(const CsrMatrix& a, std::span<const double> b, const SolverConfig& cfg = {},
                          SolveReport* report = nullptr);

/// Preconditioned MINRES for symmetric (possibly indefinite) matrices.
std::vector<double> minres(const CsrMatrix& a, std::span<const double> b, double rel_tol, int max_iter,
                           SolveReport* report = nullptr);

double relative_residual(const CsrMatrix& a, std::span<const double> x, std::span<const double> b);

/// Small dense solve with partial pivoting. Throws SolverError when A is singular
/// to working precision; logs a warning when the condition estimate exceeds 1e12.
Eigen::MatrixXd dense_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// MatrixMarket coordinate (real general) writer for debugging.
void write_matrix_market(std::ostream& os, const CsrMatrix& a);

}  // namespace mdfrac
