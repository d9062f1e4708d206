#pragma once

// Data-parallel loops of the simulator's per-substep update, with scalar,
// AVX2 and NEON variants. Every variant performs the same IEEE operations
// in the same order per element, so results are bit-identical.

#include <cstddef>
#include <span>
#include <string_view>

namespace tdm::kernels {

enum class Isa { Scalar, Avx2, Neon };

[[nodiscard]] std::string_view to_string(Isa isa);

struct Table {
    Isa isa;
    /// v[i] *= g[i]
    void (*scale)(double* v, const double* g, std::size_t n);
    /// y[i] += a * x[i], rounded after the multiply and after the add
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    /// max |v[i]|; NaN if any element is NaN
    double (*max_abs)(const double* v, std::size_t n);
};

/// Best variant supported by this CPU; TDM_KERNELS=scalar forces the reference.
[[nodiscard]] const Table& active();

[[nodiscard]] const Table& scalar();
/// nullptr when the variant is not compiled in or not supported at run time.
[[nodiscard]] const Table* avx2();
[[nodiscard]] const Table* neon();

inline void scale(std::span<double> v, std::span<const double> g) { active().scale(v.data(), g.data(), v.size()); }
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    active().axpy(a, x.data(), y.data(), y.size());
}
inline double max_abs(std::span<const double> v) { return active().max_abs(v.data(), v.size()); }

}  // namespace tdm::kernels
