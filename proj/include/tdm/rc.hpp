#pragma once

// Closed-form updates of single switched-capacitor events. The simulator's
// network propagator is checked against these.

#include "tdm/model.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace tdm {

struct NodeState {
    int node_id = 0;
    double capacitance_f = 0.0;
    double voltage_v = 0.0;
    std::vector<int> connected;   ///< node ids sharing a conducting switch this slot
};

/// Node charged from an ideal source through r: V' = src + (V - src) exp(-dt / (r C)).
[[nodiscard]] double drive_charge(const NodeState& node, double source_v, double r_ohm, double dt_s);

/// Two capacitors joined through r for dt. The transferred charge is computed once
/// and applied with opposite signs, so Ca Va + Cb Vb is preserved to rounding.
[[nodiscard]] std::pair<double, double> charge_share(const NodeState& a, const NodeState& b, double r_ohm,
                                                     double dt_s);

/// Multiplicative hold droop over dt. Linear mode scales by 1 + rate dt / reference;
/// with a leak resistance the node decays with tau = R C.
[[nodiscard]] double droop_gain(const LeakageSpec& leak, double dt_s, double capacitance_f = 0.0,
                                std::optional<double> leak_resistance_ohm = std::nullopt);

[[nodiscard]] double apply_droop(const NodeState& node, double dt_s, const LeakageSpec& leak,
                                 std::optional<double> leak_resistance_ohm = std::nullopt);

/// volts[v] += sum_a xt(v, a) * dv[a] over the aggressors with a nonzero step.
void apply_crosstalk(std::span<double> volts, std::span<const double> dv, const CrosstalkMatrix& xt);

/// V + q / C for one OFF->ON transition.
[[nodiscard]] double apply_charge_injection(const NodeState& node, const SwitchSpec& sw);

}  // namespace tdm
