#pragma once

#include "sicnm/caseio.hpp"
#include "sicnm/network.hpp"
#include "sicnm/types.hpp"

namespace sicnm {

/// Immutable polar power-flow problem g(y) = S_calc(y) - S_sched.
struct PfProblem {
    YBus ybus;
    StateIndexing idx;
    Vector p_sched;     // per-bus net injection, p.u.
    Vector q_sched;
    Vector v_setpoint;  // fixed magnitudes of slack and PV buses
    double slack_angle = 0.0;  // radians

    [[nodiscard]] Index n_state() const { return idx.n_state; }
    [[nodiscard]] Index n_bus() const { return ybus.n; }
};

/// State vector y laid out per StateIndexing.
using StateVector = Vector;

/// Companion state of the index-1 DAE  y' = z,  0 = J(y) z + g(y).
struct DaeState {
    StateVector y;
    Vector z;
};

enum class InitMode { Flat, CaseValues };

[[nodiscard]] PfProblem make_problem(const NetworkCase& network);

/// Complex bus voltages implied by `y` and the fixed setpoints.
[[nodiscard]] ComplexVector bus_voltages(const PfProblem& prob, const StateVector& y);

/// Complex power injections V .* conj(Y V), p.u.
[[nodiscard]] ComplexVector bus_injections(const PfProblem& prob, const StateVector& y);

/// [dP(pvpq); dQ(pq)]. Throws NonFinite.
[[nodiscard]] Vector mismatch(const PfProblem& prob, const StateVector& y);

/// Analytic dg/dy in state ordering. Throws NonFinite.
[[nodiscard]] SparseMatrix jacobian(const PfProblem& prob, const StateVector& y);

/// W = d[J(y) z]/dy, i.e. the Hessian tensor contracted with direction z.
/// Same sparsity pattern as jacobian(). Throws NonFinite or ShapeMismatch.
[[nodiscard]] SparseMatrix hessian_action(const PfProblem& prob, const StateVector& y, const Vector& z);

[[nodiscard]] StateVector initial_state(const PfProblem& prob, const NetworkCase& network, InitMode mode);

/// Builds (y, z) with z = -J(y)^{-1} g(y). Throws Singular.
[[nodiscard]] DaeState make_dae_state(const PfProblem& prob, const StateVector& y);

[[nodiscard]] inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace sicnm
