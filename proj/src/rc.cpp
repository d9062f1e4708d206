#include "tdm/rc.hpp"

#include "tdm/kernels.hpp"

#include <cmath>

namespace tdm {

double drive_charge(const NodeState& node, double source_v, double r_ohm, double dt_s) {
    if (dt_s == 0.0) {
        return node.voltage_v;
    }
    return source_v + (node.voltage_v - source_v) * std::exp(-dt_s / (r_ohm * node.capacitance_f));
}

std::pair<double, double> charge_share(const NodeState& a, const NodeState& b, double r_ohm, double dt_s) {
    const double c_series = a.capacitance_f * b.capacitance_f / (a.capacitance_f + b.capacitance_f);
    const double moved = (a.voltage_v - b.voltage_v) * c_series * -std::expm1(-dt_s / (r_ohm * c_series));
    return {a.voltage_v - moved / a.capacitance_f, b.voltage_v + moved / b.capacitance_f};
}

double droop_gain(const LeakageSpec& leak, double dt_s, double capacitance_f,
                  std::optional<double> leak_resistance_ohm) {
    if (leak_resistance_ohm) {
        if (capacitance_f <= 0.0) {
            return 1.0;
        }
        return std::exp(-dt_s / (*leak_resistance_ohm * capacitance_f));
    }
    return 1.0 + leak.droop_rate_v_per_s * dt_s / leak.reference_voltage_v;
}

double apply_droop(const NodeState& node, double dt_s, const LeakageSpec& leak,
                   std::optional<double> leak_resistance_ohm) {
    return node.voltage_v * droop_gain(leak, dt_s, node.capacitance_f, leak_resistance_ohm);
}

void apply_crosstalk(std::span<double> volts, std::span<const double> dv, const CrosstalkMatrix& xt) {
    for (std::size_t a = 0; a < dv.size(); ++a) {
        if (dv[a] != 0.0) {
            kernels::axpy(dv[a], xt.column(a), volts);
        }
    }
}

double apply_charge_injection(const NodeState& node, const SwitchSpec& sw) {
    if (sw.injected_charge_c == 0.0 || node.capacitance_f <= 0.0) {
        return node.voltage_v;
    }
    return node.voltage_v + sw.injected_charge_c / node.capacitance_f;
}

}  // namespace tdm
