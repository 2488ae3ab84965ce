#include "mdfrac/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace mdfrac::kernels {

namespace {

// horizontal sum of 4 doubles
inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i + 4), _mm256_loadu_pd(y.data() + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_avx2(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size();
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y.data() + i);
        _mm256_storeu_pd(y.data() + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x.data() + i), yv));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void spmv_avx2(const CsrView& a, std::span<const double> x, std::span<double> y) {
    static_assert(sizeof(Index) == 4);
    for (Index r = 0; r < a.rows; ++r) {
        Index k = a.row_ptr[r];
        const Index end = a.row_ptr[r + 1];
        __m256d acc = _mm256_setzero_pd();
        for (; k + 4 <= end; k += 4) {
            const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(a.col_idx.data() + k));
            const __m256d xv = _mm256_i32gather_pd(x.data(), idx, 8);
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.values.data() + k), xv, acc);
        }
        double s = hsum(acc);
        for (; k < end; ++k) s += a.values[k] * x[a.col_idx[k]];
        y[r] = s;
    }
}

const KernelTable kAvx2{Isa::avx2, dot_avx2, axpy_avx2, spmv_avx2};

}  // namespace

const KernelTable* detail::avx2_table() { return &kAvx2; }

}  // namespace mdfrac::kernels

#else

namespace mdfrac::kernels {
const KernelTable* detail::avx2_table() { return nullptr; }
}  // namespace mdfrac::kernels

#endif
