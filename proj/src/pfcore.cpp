#include "sicnm/pfcore.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "sicnm/error.hpp"
#include "sicnm/linalg.hpp"

namespace sicnm {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw Error(ErrorCode::NonFinite, std::string(what) + " contains NaN or Inf");
}

void require_state(const PfProblem& prob, const StateVector& y) {
    if (y.size() != prob.n_state()) throw Error(ErrorCode::ShapeMismatch, "state vector has wrong length");
    require_finite(y, "state");
}

// Places complex partials into the real state-ordered matrix. For every
// stored Ybus entry (i, k), `entry(i, k)` returns (d/dtheta_k, d/dvm_k) of
// the complex injection at bus i; rows keep Re for P equations and Im for Q.
template <typename Entry>
SparseMatrix assemble_state_matrix(const PfProblem& prob, Entry&& entry) {
    const auto& idx = prob.idx;
    const auto& y = prob.ybus.matrix;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(4 * y.nonZeros()));
    for (int k = 0; k < y.outerSize(); ++k) {
        const int ct = idx.theta_pos[static_cast<std::size_t>(k)];
        const int cv = idx.vm_pos[static_cast<std::size_t>(k)];
        if (ct < 0 && cv < 0) continue;
        for (ComplexSparseMatrix::InnerIterator it(y, k); it; ++it) {
            const int i = it.row();
            const int rp = idx.theta_pos[static_cast<std::size_t>(i)];
            const int rq = idx.vm_pos[static_cast<std::size_t>(i)];
            if (rp < 0 && rq < 0) continue;
            const auto [da, dm] = entry(i, k, it.value());
            if (rp >= 0) {
                if (ct >= 0) trips.emplace_back(rp, ct, da.real());
                if (cv >= 0) trips.emplace_back(rp, cv, dm.real());
            }
            if (rq >= 0) {
                if (ct >= 0) trips.emplace_back(rq, ct, da.imag());
                if (cv >= 0) trips.emplace_back(rq, cv, dm.imag());
            }
        }
    }
    const auto n = static_cast<int>(prob.n_state());
    SparseMatrix out(n, n);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

}  // namespace

PfProblem make_problem(const NetworkCase& network) {
    validate_case(network);
    PfProblem prob;
    prob.ybus = build_ybus(network);
    prob.idx = index_states(network);
    const auto n = static_cast<Index>(network.buses.size());
    prob.p_sched = Vector::Zero(n);
    prob.q_sched = Vector::Zero(n);
    prob.v_setpoint = Vector::Zero(n);

    for (Index i = 0; i < n; ++i) {
        const auto& bus = network.buses[static_cast<std::size_t>(i)];
        prob.p_sched[i] = -bus.pd / network.base_mva;
        prob.q_sched[i] = -bus.qd / network.base_mva;
        prob.v_setpoint[i] = bus.vm;
    }
    std::vector<bool> pinned(static_cast<std::size_t>(n), false);
    for (const auto& g : network.gens) {
        if (!g.in_service()) continue;
        const int b = network.bus_index(g.bus);
        prob.p_sched[b] += g.pg / network.base_mva;
        prob.q_sched[b] += g.qg / network.base_mva;
        // The first in-service generator sets the regulated magnitude.
        if (!pinned[static_cast<std::size_t>(b)] && prob.idx.role[static_cast<std::size_t>(b)] != BusType::PQ) {
            prob.v_setpoint[b] = g.vg;
            pinned[static_cast<std::size_t>(b)] = true;
        }
    }
    prob.slack_angle = network.buses[static_cast<std::size_t>(prob.idx.slack)].va * kDegToRad;
    return prob;
}

ComplexVector bus_voltages(const PfProblem& prob, const StateVector& y) {
    require_state(prob, y);
    const auto& idx = prob.idx;
    const Index n = prob.n_bus();
    ComplexVector v(n);
    for (Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        const double theta = idx.theta_pos[s] >= 0 ? y[idx.theta_pos[s]] : prob.slack_angle;
        const double vm = idx.vm_pos[s] >= 0 ? y[idx.vm_pos[s]] : prob.v_setpoint[i];
        v[i] = std::polar(vm, theta);
    }
    return v;
}

ComplexVector bus_injections(const PfProblem& prob, const StateVector& y) {
    const ComplexVector v = bus_voltages(prob, y);
    const ComplexVector current = prob.ybus.matrix * v;
    return v.cwiseProduct(current.conjugate());
}

Vector mismatch(const PfProblem& prob, const StateVector& y) {
    const ComplexVector s = bus_injections(prob, y);
    const auto& idx = prob.idx;
    Vector g(prob.n_state());
    for (int b : idx.pvpq) {
        g[idx.theta_pos[static_cast<std::size_t>(b)]] = s[b].real() - prob.p_sched[b];
    }
    for (int b : idx.pq) {
        g[idx.vm_pos[static_cast<std::size_t>(b)]] = s[b].imag() - prob.q_sched[b];
    }
    require_finite(g, "mismatch");
    return g;
}

SparseMatrix jacobian(const PfProblem& prob, const StateVector& y) {
    const ComplexVector v = bus_voltages(prob, y);
    const ComplexVector current = prob.ybus.matrix * v;
    const Eigen::VectorXd vm = v.cwiseAbs();

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    auto entry = [&](int i, int k, Complex yik) {
        const Complex vn_k = v[k] / vm[k];
        Complex da = Complex(0.0, -1.0) * v[i] * std::conj(yik * v[k]);
        Complex dm = v[i] * std::conj(yik * vn_k);
        if (i == k) {
            da += Complex(0.0, 1.0) * v[i] * std::conj(current[i]);
            dm += std::conj(current[i]) * vn_k;
        }
        return std::pair{da, dm};
    };
    SparseMatrix jac = assemble_state_matrix(prob, entry);
    for (int k = 0; k < jac.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(jac, k); it; ++it) {
            if (!std::isfinite(it.value())) throw Error(ErrorCode::NonFinite, "Jacobian contains NaN or Inf");
        }
    }
    return jac;
}

SparseMatrix hessian_action(const PfProblem& prob, const StateVector& y, const Vector& z) {
    if (z.size() != prob.n_state()) throw Error(ErrorCode::ShapeMismatch, "direction has wrong length");
    require_finite(z, "direction");
    const auto& idx = prob.idx;
    const ComplexVector v = bus_voltages(prob, y);
    const Index n = prob.n_bus();
    const ComplexVector current = prob.ybus.matrix * v;
    const Eigen::VectorXd vm = v.cwiseAbs();

    // Direction split into per-bus angle and magnitude parts, then
    // dV = V .* u with u = j*dtheta + dvm./vm.
    Eigen::VectorXd dtheta = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dvm = Eigen::VectorXd::Zero(n);
    for (Index b = 0; b < n; ++b) {
        const auto s = static_cast<std::size_t>(b);
        if (idx.theta_pos[s] >= 0) dtheta[b] = z[idx.theta_pos[s]];
        if (idx.vm_pos[s] >= 0) dvm[b] = z[idx.vm_pos[s]];
    }
    ComplexVector u(n);
    for (Index b = 0; b < n; ++b) u[b] = Complex(dvm[b] / vm[b], dtheta[b]);
    const ComplexVector dv = v.cwiseProduct(u);
    const ComplexVector dcurrent = prob.ybus.matrix * dv;

    const Complex j(0.0, 1.0);
    auto entry = [&](int i, int k, Complex yik) {
        const Complex yv = std::conj(yik * v[k]);
        Complex dth = -j * v[i] * u[i] * yv - j * v[i] * std::conj(yik * v[k] * u[k]);
        Complex dmag = v[i] * u[i] * yv / vm[k] - j * v[i] * yv * dtheta[k] / vm[k];
        if (i == k) {
            dth += j * v[i] * (u[i] * std::conj(current[i]) + std::conj(dcurrent[i]));
            dmag += v[i] / vm[i] * (j * dtheta[i] * std::conj(current[i]) + std::conj(dcurrent[i]));
        }
        return std::pair{dth, dmag};
    };
    return assemble_state_matrix(prob, entry);
}

StateVector initial_state(const PfProblem& prob, const NetworkCase& network, InitMode mode) {
    const auto& idx = prob.idx;
    StateVector y(prob.n_state());
    for (int b : idx.pvpq) {
        const auto s = static_cast<std::size_t>(b);
        y[idx.theta_pos[s]] = mode == InitMode::Flat ? 0.0 : network.buses[s].va * kDegToRad;
    }
    for (int b : idx.pq) {
        const auto s = static_cast<std::size_t>(b);
        y[idx.vm_pos[s]] = mode == InitMode::Flat ? 1.0 : network.buses[s].vm;
    }
    return y;
}

DaeState make_dae_state(const PfProblem& prob, const StateVector& y) {
    const Vector g = mismatch(prob, y);
    const LuFactors lu = lu_factorize(jacobian(prob, y));
    return DaeState{y, -lu.solve(g)};
}

}  // namespace sicnm
