#pragma once

// Exact propagator of a linear RC network over a fixed step. Capacitive nodes
// are advanced in the modal basis of C^-1/2 G C^-1/2; zero-capacitance nodes
// are eliminated (Kron reduction) and recovered algebraically. The source is
// a first-order lag u(t) = T + (u0 - T) exp(-t / tau_src) integrated exactly.

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace tdm {

inline constexpr int kSourceNode = -1;

struct Branch {
    int a = 0;
    int b = kSourceNode;   ///< kSourceNode connects `a` to the source
    double conductance_s = 0.0;
};

class RcPropagator {
public:
    /// `capacitance` holds every node's capacitance; nodes without a branch are left alone.
    RcPropagator(std::span<const double> capacitance, std::span<const Branch> branches, double source_tau_s,
                 double dt_s);

    /// Advances `volts` and the source state `source_v` towards `target_v` by one step.
    void step(std::span<double> volts, double& source_v, double target_v) const;

    /// True for nodes touched by some branch.
    [[nodiscard]] const std::vector<bool>& connected() const { return connected_; }

private:
    struct Component {
        std::vector<int> cap_nodes;
        std::vector<int> zero_nodes;
        Eigen::MatrixXd modes;          // Q
        Eigen::VectorXd sqrt_c;
        Eigen::VectorXd decay;          // exp(-lambda dt)
        Eigen::VectorXd hold_gain;      // beta (1 - exp(-lambda dt)) / lambda
        Eigen::VectorXd lag_gain;       // beta * integral of exp(-lambda (dt - s) - s / tau_src)
        Eigen::MatrixXd zero_from_cap;  // -Gzz^-1 Gzc
        Eigen::VectorXd zero_from_src;  // Gzz^-1 bz
    };

    std::vector<Component> components_;
    std::vector<bool> connected_;
    double source_decay_ = 0.0;         // exp(-dt / tau_src)
};

}  // namespace tdm
