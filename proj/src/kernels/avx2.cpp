#include "tdm/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#include <cmath>
#include <limits>

namespace tdm::kernels {

namespace {

__attribute__((target("avx2"))) void scale_avx2(double* v, const double* g, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(v + i, _mm256_mul_pd(_mm256_loadu_pd(v + i), _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) {
        v[i] *= g[i];
    }
}

__attribute__((target("avx2"))) void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
    }
    for (; i < n; ++i) {
        const double p = a * x[i];
        y[i] += p;
    }
}

__attribute__((target("avx2"))) double max_abs_avx2(const double* v, std::size_t n) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    __m256d m = _mm256_setzero_pd();
    __m256d nan = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d a = _mm256_andnot_pd(sign, _mm256_loadu_pd(v + i));
        nan = _mm256_or_pd(nan, _mm256_cmp_pd(a, a, _CMP_UNORD_Q));
        m = _mm256_max_pd(m, a);
    }
    if (_mm256_movemask_pd(nan) != 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, m);
    double r = lanes[0];
    for (int k = 1; k < 4; ++k) {
        r = lanes[k] > r ? lanes[k] : r;
    }
    for (; i < n; ++i) {
        const double a = std::fabs(v[i]);
        if (std::isnan(a)) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        r = a > r ? a : r;
    }
    return r;
}

}  // namespace

const Table* avx2() {
    static const Table table{Isa::Avx2, scale_avx2, axpy_avx2, max_abs_avx2};
    return __builtin_cpu_supports("avx2") ? &table : nullptr;
}

}  // namespace tdm::kernels

#else

namespace tdm::kernels {
const Table* avx2() { return nullptr; }
}  // namespace tdm::kernels

#endif
