#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sicnm/caseio.hpp"
#include "sicnm/dae_step.hpp"
#include "sicnm/linalg.hpp"
#include "sicnm/pfcore.hpp"
#include "sicnm/tableau.hpp"

namespace sicnm {

enum class SolveStatus { Converged, Diverged, MaxIter, Singular };

[[nodiscard]] constexpr const char* to_string(SolveStatus s) noexcept {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::Diverged: return "diverged";
        case SolveStatus::MaxIter: return "max_iter";
        case SolveStatus::Singular: return "singular";
    }
    return "unknown";
}

struct SolverOptions {
    double tol = 1e-5;        // infinity norm of the mismatch
    int max_iter = 1000;      // accepted steps / outer steps / iterations
    double h0 = 0.1;
    double atol = 0.1;
    double rtol = 0.1;
    double h_min = 1e-8;
    double h_max = 10.0;
    double safety = 0.9;
    double max_growth = 2.0;  // step-size growth clamp per accepted step
    double divergence_threshold = 1e10;
    int inner_max_iter = 20;  // ICNM inner Newton loop
    double inner_tol = 1e-8;  // relative to 1 + |g(y0)|

    /// Throws InvalidArgument when the bounds are inconsistent.
    void validate() const;
};

struct TraceRecord {
    long iter = 0;
    double err_inf = 0.0;
    double h = 0.0;
    bool accepted = true;
};

using IterationTrace = std::vector<TraceRecord>;

struct SolveReport {
    std::string method;
    SolveStatus status = SolveStatus::MaxIter;
    long iterations = 0;
    double final_error = 0.0;
    IterationTrace trace;
    StateVector final_state;
    EvalCounters counters;
    double wall_time = 0.0;  // seconds

    [[nodiscard]] bool converged() const { return status == SolveStatus::Converged; }
};

enum class Method { NewtonRaphson, Iwamoto, EcnmRk4, IcnmJH, IcnmJ, IcnmJ1, IcnmJ0, SicnmRodas4, SicnmRodas3d };

enum class IcnmVariant { JH, J, J1, J0 };

/// "m1", "m2", "m3", "m7-jh", "m7-j", "m7-j1", "m7-j0", "m8-rodas4", "m8-rodas3d".
[[nodiscard]] std::string_view method_id(Method m) noexcept;
/// Throws InvalidArgument for unknown ids.
[[nodiscard]] Method parse_method(std::string_view id);
[[nodiscard]] const std::vector<Method>& all_methods();

/// Library defaults adjusted per method (ICNM starts at h = 0.01, the
/// RK4 continuous Newton method integrates with h = 1).
[[nodiscard]] SolverOptions default_options(Method m);

[[nodiscard]] SolveReport newton_raphson(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts);

/// Newton direction scaled by the optimal multiplier of the quadratic
/// residual model g(y + mu*dy) ~ (1 - mu) g + mu^2 g(y + dy).
[[nodiscard]] SolveReport iwamoto(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts);

/// Minimizer of |(1 - mu) a + mu^2 c|^2 over the real stationary points.
[[nodiscard]] double iwamoto_multiplier(const Vector& a, const Vector& c);

/// Classical RK4 on y' = -J(y)^{-1} g(y), fixed step opts.h0.
[[nodiscard]] SolveReport ecnm_rk4(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts);

/// Backward Euler on J(y) y' = -g(y) with an inner Newton loop.
[[nodiscard]] SolveReport icnm(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts,
                               IcnmVariant variant);

[[nodiscard]] DaeJacobian dae_jacobian(const PfProblem& prob, const DaeState& state, EvalCounters* counters = nullptr);

/// One Rosenbrock step on  y' = z, 0 = J(y) z + g(y). Builds the blocks,
/// factorizes the Schur block once and runs the s stages. Throws Singular or
/// NonFinite; the caller treats either as a rejected step.
[[nodiscard]] SicnmStepResult sicnm_step(const PfProblem& prob, const DaeState& state, double h, const Tableau& tab,
                                         EvalCounters* counters = nullptr);

/// Same step with blocks already assembled at `state`.
[[nodiscard]] SicnmStepResult sicnm_step(const PfProblem& prob, const DaeState& state, const DaeJacobian& blocks,
                                         double h, const Tableau& tab, EvalCounters* counters = nullptr);

struct StepSizeDecision {
    double h_new = 0.0;
    double error_ratio = 0.0;  // weighted infinity norm of the embedded error
    bool accept = false;
};

/// h_new = safety * h * min(ratio^(-1/q), max_growth), clamped to
/// [h_min, h_max]; the step is accepted iff ratio <= 1.
[[nodiscard]] StepSizeDecision step_size_update(double h, const Vector& err_y, const Vector& err_z,
                                                const StateVector& y1, const Vector& z1, const SolverOptions& opts,
                                                int q);

[[nodiscard]] SolveReport sicnm_solve(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts,
                                      const Tableau& tab);

/// Dispatch by method id.
[[nodiscard]] SolveReport solve(Method m, const PfProblem& prob, const StateVector& y0, const SolverOptions& opts);

using InnerSolver = std::function<SolveReport(const PfProblem&, const StateVector&)>;

struct QLimitResult {
    SolveReport report;
    NetworkCase final_case;
    std::vector<int> converted_buses;  // bus ids switched from PV to PQ
    int solves = 0;
    bool cycle_detected = false;
};

/// Generator reactive output at every bus (MVAr), recomputed from the
/// injections at `y`: Qg = Q_inj * base + Qd.
[[nodiscard]] Vector generator_q(const PfProblem& prob, const NetworkCase& network, const StateVector& y);

/// Solve, convert PV buses whose generators violate their reactive limits
/// into PQ buses with Q pinned at the violated limit, re-solve (warm start)
/// until no violation remains.
[[nodiscard]] QLimitResult enforce_q_limits(const InnerSolver& inner, const NetworkCase& network, InitMode init,
                                            double q_tol_mvar = 1e-6);

}  // namespace sicnm
