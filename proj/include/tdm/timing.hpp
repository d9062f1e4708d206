#pragma once

#include <boost/rational.hpp>

#include <cstdint>

namespace tdm {

/// Exact rational used for frequencies and durations.
using Rational = boost::rational<std::int64_t>;

/// Global tick index; one tick is one oversampling substep of a DAC update period.
using Tick = std::int64_t;

[[nodiscard]] inline double to_double(const Rational& r) {
    return boost::rational_cast<double>(r);
}

/// Converts a floating value to a rational with a denominator of 1000
/// (millihertz / millisecond resolution). Throws when the value is not
/// representable at that resolution within 1e-9 relative error.
[[nodiscard]] Rational rational_from_double(double value);

/// Returns the integer `n` with |value - n| small relative to max(1, |value|),
/// or throws InvalidConfig when `value` is not integral within `rel_tol`.
[[nodiscard]] std::int64_t require_integral(double value, const char* what, double rel_tol = 1e-9);

/// The simulator clock: a DAC update period divided into `oversampling` ticks.
struct TickClock {
    Rational dac_rate_hz{1};
    int oversampling = 1;

    [[nodiscard]] Rational tick_seconds() const { return Rational(1) / (dac_rate_hz * oversampling); }
    [[nodiscard]] Rational slot_seconds() const { return Rational(1) / dac_rate_hz; }
    [[nodiscard]] double seconds(Tick tick) const { return to_double(Rational(tick) * tick_seconds()); }
    [[nodiscard]] Tick slot_start(std::int64_t global_slot) const { return global_slot * oversampling; }
};

}  // namespace tdm
