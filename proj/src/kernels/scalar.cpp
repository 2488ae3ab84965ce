#include "mdfrac/kernels.hpp"

namespace mdfrac::kernels {

namespace {

double dot_scalar(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

void axpy_scalar(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void spmv_scalar(const CsrView& a, std::span<const double> x, std::span<double> y) {
    for (Index r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.values[k] * x[a.col_idx[k]];
        y[r] = s;
    }
}

const KernelTable kScalar{Isa::scalar, dot_scalar, axpy_scalar, spmv_scalar};

}  // namespace

const KernelTable* detail::scalar_table() { return &kScalar; }

}  // namespace mdfrac::kernels
