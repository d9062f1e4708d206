#include "tdm/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

#include <cmath>
#include <limits>

namespace tdm::kernels {

namespace {

void scale_neon(double* v, const double* g, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(v + i, vmulq_f64(vld1q_f64(v + i), vld1q_f64(g + i)));
    }
    for (; i < n; ++i) {
        v[i] *= g[i];
    }
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        // Separate multiply and add (no vfmaq) to round like the scalar loop.
        const float64x2_t p = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), p));
    }
    for (; i < n; ++i) {
        const double p = a * x[i];
        y[i] += p;
    }
}

double max_abs_neon(const double* v, std::size_t n) {
    double r = 0.0;
    float64x2_t m = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t a = vabsq_f64(vld1q_f64(v + i));
        if (vminvq_u64(vceqq_f64(a, a)) == 0) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        m = vmaxq_f64(m, a);
    }
    r = vmaxvq_f64(m);
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

const Table* neon() {
    static const Table table{Isa::Neon, scale_neon, axpy_neon, max_abs_neon};
    return &table;
}

}  // namespace tdm::kernels

#else

namespace tdm::kernels {
const Table* neon() { return nullptr; }
}  // namespace tdm::kernels

#endif
