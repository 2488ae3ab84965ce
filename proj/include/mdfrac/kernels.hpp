#pragma once

// Vector kernels used by the iterative solver and residual checks. Each kernel
// has a portable scalar reference and ISA-specific variants; the variant is
// chosen once at startup from the CPU features (override with MDFRAC_KERNELS).

#include "mdfrac/core.hpp"

#include <string_view>

namespace mdfrac::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// Read-only view of a CSR matrix, the layout every spmv variant consumes.
struct CsrView {
    Index rows = 0;
    Index cols = 0;
    std::span<const Index> row_ptr;
    std::span<const Index> col_idx;
    std::span<const double> values;
};

struct KernelTable {
    Isa isa;
    double (*dot)(std::span<const double> x, std::span<const double> y);
    /// y += alpha * x
    void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);
    /// y = A x
    void (*spmv)(const CsrView& a, std::span<const double> x, std::span<double> y);
};

/// Table for a specific ISA. Throws Error if the ISA is not compiled in or not
/// supported by the running CPU.
const KernelTable& table(Isa isa);

/// ISAs usable on this machine, scalar first.
std::vector<Isa> available();

/// The table selected for this process.
const KernelTable& active();

/// Forces a specific ISA for the rest of the process (tests, benchmarking).
void select(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) { return active().dot(x, y); }
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) { active().axpy(alpha, x, y); }
inline void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) { active().spmv(a, x, y); }

namespace detail {
const KernelTable* scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled for x86-64
const KernelTable* neon_table();  // nullptr when not compiled for aarch64
}  // namespace detail

}  // namespace mdfrac::kernels
