#include "tdm/network.hpp"

#include "tdm/error.hpp"

#include <cmath>
#include <numeric>

namespace tdm {

namespace {

int find_root(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

// (1 - exp(-l t)) / l, continuous at l = 0.
double hold_integral(double lambda, double t) {
    const double x = lambda * t;
    if (std::abs(x) < 1e-12) {
        return t;
    }
    return -std::expm1(-x) / lambda;
}

// Integral over [0, t] of exp(-l (t - s)) exp(-k s) ds.
double lag_integral(double lambda, double kappa, double t) {
    const double d = (kappa - lambda) * t;
    if (std::abs(d) < 1e-12) {
        return t * std::exp(-lambda * t);
    }
    return std::exp(-lambda * t) * -std::expm1(-d) / (kappa - lambda);
}

}  // namespace

RcPropagator::RcPropagator(std::span<const double> capacitance, std::span<const Branch> branches,
                           double source_tau_s, double dt_s) {
    const int n = static_cast<int>(capacitance.size());
    connected_.assign(capacitance.size(), false);
    source_decay_ = source_tau_s > 0.0 ? std::exp(-dt_s / source_tau_s) : 0.0;
    const double kappa = source_tau_s > 0.0 ? 1.0 / source_tau_s : 0.0;

    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    for (const auto& br : branches) {
        if (br.a < 0 || br.a >= n || br.b >= n || br.b == br.a || !(br.conductance_s > 0.0)) {
            throw Error(ErrorCode::InvalidSlotState, "malformed network branch");
        }
        connected_[static_cast<std::size_t>(br.a)] = true;
        if (br.b != kSourceNode) {
            connected_[static_cast<std::size_t>(br.b)] = true;
            parent[static_cast<std::size_t>(find_root(parent, br.a))] = find_root(parent, br.b);
        }
    }

    std::vector<int> comp_of_root(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<int>> members;
    for (int i = 0; i < n; ++i) {
        if (!connected_[static_cast<std::size_t>(i)]) {
            continue;
        }
        const int r = find_root(parent, i);
        if (comp_of_root[static_cast<std::size_t>(r)] < 0) {
            comp_of_root[static_cast<std::size_t>(r)] = static_cast<int>(members.size());
            members.emplace_back();
        }
        members[static_cast<std::size_t>(comp_of_root[static_cast<std::size_t>(r)])].push_back(i);
    }

    for (const auto& nodes : members) {
        // Local conductance matrix G and source vector b (G v = b u at DC).
        const auto m = static_cast<Eigen::Index>(nodes.size());
        std::vector<int> local(static_cast<std::size_t>(n), -1);
        for (Eigen::Index k = 0; k < m; ++k) {
            local[static_cast<std::size_t>(nodes[static_cast<std::size_t>(k)])] = static_cast<int>(k);
        }
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
        for (const auto& br : branches) {
            const int la = local[static_cast<std::size_t>(br.a)];
            if (la < 0) {
                continue;
            }
            g(la, la) += br.conductance_s;
            if (br.b == kSourceNode) {
                b(la) += br.conductance_s;
            } else {
                const int lb = local[static_cast<std::size_t>(br.b)];
                g(lb, lb) += br.conductance_s;
                g(la, lb) -= br.conductance_s;
                g(lb, la) -= br.conductance_s;
            }
        }

        Component comp;
        std::vector<Eigen::Index> ci, zi;
        for (Eigen::Index k = 0; k < m; ++k) {
            const int node = nodes[static_cast<std::size_t>(k)];
            if (capacitance[static_cast<std::size_t>(node)] > 0.0) {
                comp.cap_nodes.push_back(node);
                ci.push_back(k);
            } else {
                comp.zero_nodes.push_back(node);
                zi.push_back(k);
            }
        }
        const auto nc = static_cast<Eigen::Index>(ci.size());
        const auto nz = static_cast<Eigen::Index>(zi.size());
        Eigen::MatrixXd a = g(ci, ci);
        Eigen::VectorXd bc = b(ci);
        if (nz > 0) {
            const Eigen::MatrixXd gzz = g(zi, zi);
            const Eigen::MatrixXd gzc = g(zi, ci);
            const Eigen::VectorXd bz = b(zi);
            // Every zero-capacitance node sits on a branch, so Gzz is diagonally dominant and invertible.
            const auto lu = gzz.partialPivLu();
            comp.zero_from_cap = -lu.solve(gzc);
            comp.zero_from_src = lu.solve(bz);
            a += gzc.transpose() * comp.zero_from_cap;
            bc -= gzc.transpose() * comp.zero_from_src;
        }
        if (nc > 0) {
            comp.sqrt_c.resize(nc);
            for (Eigen::Index k = 0; k < nc; ++k) {
                comp.sqrt_c(k) = std::sqrt(capacitance[static_cast<std::size_t>(comp.cap_nodes[static_cast<std::size_t>(k)])]);
            }
            const Eigen::MatrixXd msym = comp.sqrt_c.cwiseInverse().asDiagonal() * a * comp.sqrt_c.cwiseInverse().asDiagonal();
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (msym + msym.transpose()));
            comp.modes = eig.eigenvectors();
            const Eigen::VectorXd beta = comp.modes.transpose() * bc.cwiseQuotient(comp.sqrt_c);
            comp.decay.resize(nc);
            comp.hold_gain.resize(nc);
            comp.lag_gain.resize(nc);
            for (Eigen::Index k = 0; k < nc; ++k) {
                const double lambda = std::max(eig.eigenvalues()(k), 0.0);
                comp.decay(k) = std::exp(-lambda * dt_s);
                comp.hold_gain(k) = beta(k) * hold_integral(lambda, dt_s);
                comp.lag_gain(k) = source_tau_s > 0.0 ? beta(k) * lag_integral(lambda, kappa, dt_s) : 0.0;
            }
        }
        components_.push_back(std::move(comp));
    }
}

void RcPropagator::step(std::span<double> volts, double& source_v, double target_v) const {
    const double lag = source_v - target_v;
    const double source_end = target_v + lag * source_decay_;
    for (const auto& comp : components_) {
        const auto nc = static_cast<Eigen::Index>(comp.cap_nodes.size());
        Eigen::VectorXd vc(nc);
        if (nc > 0) {
            Eigen::VectorXd w(nc);
            for (Eigen::Index k = 0; k < nc; ++k) {
                w(k) = comp.sqrt_c(k) * volts[static_cast<std::size_t>(comp.cap_nodes[static_cast<std::size_t>(k)])];
            }
            Eigen::VectorXd y = comp.modes.transpose() * w;
            for (Eigen::Index k = 0; k < nc; ++k) {
                y(k) = comp.decay(k) * y(k) + comp.hold_gain(k) * target_v + comp.lag_gain(k) * lag;
            }
            vc = (comp.modes * y).cwiseQuotient(comp.sqrt_c);
            for (Eigen::Index k = 0; k < nc; ++k) {
                volts[static_cast<std::size_t>(comp.cap_nodes[static_cast<std::size_t>(k)])] = vc(k);
            }
        }
        if (!comp.zero_nodes.empty()) {
            Eigen::VectorXd vz = comp.zero_from_src * source_end;
            if (nc > 0) {
                vz += comp.zero_from_cap * vc;
            }
            for (std::size_t k = 0; k < comp.zero_nodes.size(); ++k) {
                volts[static_cast<std::size_t>(comp.zero_nodes[k])] = vz(static_cast<Eigen::Index>(k));
            }
        }
    }
    source_v = source_end;
}

}  // namespace tdm
