#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sicnm/error.hpp"
#include "sicnm/solvers.hpp"

namespace sicnm {

namespace {

void bump(EvalCounters* c, long EvalCounters::*field) {
    if (c) ++(c->*field);
}

}  // namespace

DaeJacobian dae_jacobian(const PfProblem& prob, const DaeState& state, EvalCounters* counters) {
    bump(counters, &EvalCounters::j_evals);
    bump(counters, &EvalCounters::hz_evals);
    SparseMatrix j = jacobian(prob, state.y);
    SparseMatrix j21 = hessian_action(prob, state.y, state.z) + j;
    return DaeJacobian{std::move(j21), std::move(j)};
}

SicnmStepResult sicnm_step(const PfProblem& prob, const DaeState& state, double h, const Tableau& tab,
                           EvalCounters* counters) {
    return sicnm_step(prob, state, dae_jacobian(prob, state, counters), h, tab, counters);
}

namespace {

struct PfModel {
    const PfProblem& prob;
    [[nodiscard]] Vector g(const Vector& y) const { return mismatch(prob, y); }
    [[nodiscard]] SparseMatrix jacobian(const Vector& y) const { return sicnm::jacobian(prob, y); }
};

}  // namespace

SicnmStepResult sicnm_step(const PfProblem& prob, const DaeState& state, const DaeJacobian& blocks, double h,
                           const Tableau& tab, EvalCounters* counters) {
    if (state.y.size() != prob.n_state()) throw Error(ErrorCode::ShapeMismatch, "DAE state has wrong length");
    return rosenbrock_dae_step(PfModel{prob}, state.y, state.z, blocks, h, tab, counters);
}

StepSizeDecision step_size_update(double h, const Vector& err_y, const Vector& err_z, const StateVector& y1,
                                  const Vector& z1, const SolverOptions& opts, int q) {
    double ratio = 0.0;
    auto weigh = [&](const Vector& err, const Vector& x) {
        for (Index i = 0; i < err.size(); ++i) {
            ratio = std::max(ratio, err[i] / (opts.atol + opts.rtol * std::abs(x[i])));
        }
    };
    weigh(err_y, y1);
    weigh(err_z, z1);
    if (std::isnan(ratio)) ratio = std::numeric_limits<double>::infinity();

    const double factor = ratio > 0.0 ? std::min(std::pow(ratio, -1.0 / q), opts.max_growth) : opts.max_growth;
    StepSizeDecision d;
    d.error_ratio = ratio;
    d.accept = ratio <= 1.0;
    d.h_new = std::clamp(opts.safety * h * factor, opts.h_min, opts.h_max);
    return d;
}

SolveReport sicnm_solve(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts,
                        const Tableau& tab) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    SolveReport rep;
    rep.method = "sicnm-" + tab.name;
    rep.final_state = y0;
    auto& c = rep.counters;
    const int q = tab.embedded_order + 1;

    auto finish = [&](SolveStatus st, double err) {
        rep.status = st;
        rep.final_error = err;
        rep.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
        return rep;
    };
    auto record = [&](double err, double h, bool accepted) {
        rep.trace.push_back({static_cast<long>(rep.trace.size()) + 1, err, h, accepted});
    };

    double err = std::numeric_limits<double>::infinity();
    DaeState state{y0, Vector()};
    DaeJacobian blocks;
    try {
        ++c.g_evals;
        ++c.checks;
        const Vector g = mismatch(prob, y0);
        err = inf_norm(g);
        if (err <= opts.tol) return finish(SolveStatus::Converged, err);
        ++c.j_evals;
        SparseMatrix j = jacobian(prob, y0);
        state.z = -lu_factorize(j, &c).solve(g);
        ++c.hz_evals;
        blocks = DaeJacobian{hessian_action(prob, y0, state.z) + j, j};
    } catch (const Error& e) {
        return finish(e.code() == ErrorCode::Singular ? SolveStatus::Singular : SolveStatus::Diverged, err);
    }

    double h = opts.h0;
    while (true) {
        if (rep.iterations >= opts.max_iter) return finish(SolveStatus::MaxIter, err);

        SicnmStepResult step;
        try {
            step = sicnm_step(prob, state, blocks, h, tab, &c);
        } catch (const Error& e) {
            // A failed linear solve or a blown-up stage is handled as a
            // rejection with a halved step.
            if (h <= opts.h_min) {
                return finish(e.code() == ErrorCode::Singular ? SolveStatus::Singular : SolveStatus::Diverged, err);
            }
            ++c.rejected_steps;
            record(err, h, false);
            h = std::max(0.5 * h, opts.h_min);
            continue;
        }

        const StepSizeDecision d = step_size_update(h, step.err_y, step.err_z, step.y1, step.z1, opts, q);
        if (!d.accept && h > opts.h_min) {
            ++c.rejected_steps;
            record(err, h, false);
            h = d.h_new;
            continue;
        }
        // Accepted, or forced through at h_min.
        ++c.accepted_steps;
        ++rep.iterations;
        state.y = std::move(step.y1);
        state.z = std::move(step.z1);
        try {
            ++c.g_evals;
            ++c.checks;
            err = inf_norm(mismatch(prob, state.y));
        } catch (const Error&) {
            err = std::numeric_limits<double>::infinity();
        }
        record(err, h, true);
        if (!std::isfinite(err) || err > opts.divergence_threshold) return finish(SolveStatus::Diverged, err);
        rep.final_state = state.y;
        if (err <= opts.tol) return finish(SolveStatus::Converged, err);
        try {
            blocks = dae_jacobian(prob, state, &c);
        } catch (const Error&) {
            return finish(SolveStatus::Diverged, err);
        }
        h = d.h_new;
    }
}

}  // namespace sicnm
