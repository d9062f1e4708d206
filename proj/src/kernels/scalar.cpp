#include "tdm/kernels.hpp"

#include <cmath>
#include <limits>

namespace tdm::kernels {

namespace {

void scale_scalar(double* v, const double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] *= g[i];
    }
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double p = a * x[i];
        y[i] += p;
    }
}

double max_abs_scalar(const double* v, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::fabs(v[i]);
        if (std::isnan(a)) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        m = a > m ? a : m;
    }
    return m;
}

}  // namespace

const Table& scalar() {
    static const Table table{Isa::Scalar, scale_scalar, axpy_scalar, max_abs_scalar};
    return table;
}

}  // namespace tdm::kernels
