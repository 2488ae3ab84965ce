#include "mdfrac/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace mdfrac::kernels {

namespace {

double dot_neon(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x.data() + i), vld1q_f64(y.data() + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x.data() + i + 2), vld1q_f64(y.data() + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_neon(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size();
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y.data() + i, vfmaq_f64(vld1q_f64(y.data() + i), a, vld1q_f64(x.data() + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void spmv_neon(const CsrView& a, std::span<const double> x, std::span<double> y) {
    for (Index r = 0; r < a.rows; ++r) {
        Index k = a.row_ptr[r];
        const Index end = a.row_ptr[r + 1];
        float64x2_t acc = vdupq_n_f64(0.0);
        for (; k + 2 <= end; k += 2) {
            const double gathered[2] = {x[a.col_idx[k]], x[a.col_idx[k + 1]]};
            acc = vfmaq_f64(acc, vld1q_f64(a.values.data() + k), vld1q_f64(gathered));
        }
        double s = vaddvq_f64(acc);
        for (; k < end; ++k) s += a.values[k] * x[a.col_idx[k]];
        y[r] = s;
    }
}

const KernelTable kNeon{Isa::neon, dot_neon, axpy_neon, spmv_neon};

}  // namespace

const KernelTable* detail::neon_table() { return &kNeon; }

}  // namespace mdfrac::kernels

#else

namespace mdfrac::kernels {
const KernelTable* detail::neon_table() { return nullptr; }
}  // namespace mdfrac::kernels

#endif
