#include "sicnm/solvers.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "sicnm/error.hpp"

namespace sicnm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared bookkeeping for the iteration loops below.
struct Run {
    SolveReport report;
    Clock::time_point start = Clock::now();

    Run(std::string_view method, const StateVector& y0) {
        report.method = std::string(method);
        report.final_state = y0;
    }

    void record(double err, double h, bool accepted) {
        report.trace.push_back({static_cast<long>(report.trace.size()) + 1, err, h, accepted});
    }

    SolveReport finish(SolveStatus status, double err) {
        report.status = status;
        report.final_error = err;
        report.wall_time = seconds_since(start);
        return std::move(report);
    }
};

Vector eval_mismatch(const PfProblem& prob, const StateVector& y, EvalCounters& c) {
    ++c.g_evals;
    return mismatch(prob, y);
}

SparseMatrix eval_jacobian(const PfProblem& prob, const StateVector& y, EvalCounters& c) {
    ++c.j_evals;
    return jacobian(prob, y);
}

bool diverging(double err, const SolverOptions& opts) { return !std::isfinite(err) || err > opts.divergence_threshold; }

}  // namespace

void SolverOptions::validate() const {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    if (max_iter < 0) throw Error(ErrorCode::InvalidArgument, "max_iter must be non-negative");
    if (!(h_min > 0.0) || !(h_min <= h0) || !(h0 <= h_max)) {
        throw Error(ErrorCode::InvalidArgument, "step bounds must satisfy 0 < h_min <= h0 <= h_max");
    }
    if (!(atol >= 0.0) || !(rtol >= 0.0) || !(atol + rtol > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "atol and rtol must be non-negative and not both zero");
    }
    if (!(safety > 0.0) || !(max_growth >= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "safety must be positive and max_growth >= 1");
    }
}

std::string_view method_id(Method m) noexcept {
    switch (m) {
        case Method::NewtonRaphson: return "m1";
        case Method::Iwamoto: return "m2";
        case Method::EcnmRk4: return "m3";
        case Method::IcnmJH: return "m7-jh";
        case Method::IcnmJ: return "m7-j";
        case Method::IcnmJ1: return "m7-j1";
        case Method::IcnmJ0: return "m7-j0";
        case Method::SicnmRodas4: return "m8-rodas4";
        case Method::SicnmRodas3d: return "m8-rodas3d";
    }
    return "unknown";
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {
        Method::NewtonRaphson, Method::Iwamoto, Method::EcnmRk4,     Method::IcnmJH,      Method::IcnmJ,
        Method::IcnmJ1,        Method::IcnmJ0,  Method::SicnmRodas4, Method::SicnmRodas3d};
    return methods;
}

Method parse_method(std::string_view id) {
    for (Method m : all_methods()) {
        if (method_id(m) == id) return m;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(id) + "'");
}

SolverOptions default_options(Method m) {
    SolverOptions opts;
    switch (m) {
        case Method::EcnmRk4: opts.h0 = 1.0; break;
        case Method::IcnmJH:
        case Method::IcnmJ:
        case Method::IcnmJ1:
        case Method::IcnmJ0: opts.h0 = 0.01; break;
        default: break;
    }
    return opts;
}

SolveReport newton_raphson(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts) {
    Run run(method_id(Method::NewtonRaphson), y0);
    auto& c = run.report.counters;
    StateVector y = y0;
    Vector g;
    try {
        g = eval_mismatch(prob, y, c);
    } catch (const Error&) {
        return run.finish(SolveStatus::Diverged, std::numeric_limits<double>::infinity());
    }
    double err = inf_norm(g);
    while (true) {
        if (err <= opts.tol) return run.finish(SolveStatus::Converged, err);
        if (run.report.iterations >= opts.max_iter) return run.finish(SolveStatus::MaxIter, err);
        Vector dy;
        try {
            LuFactors lu = lu_factorize(eval_jacobian(prob, y, c), &c);
            dy = -lu.solve(g);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Singular) return run.finish(SolveStatus::Singular, err);
            return run.finish(SolveStatus::Diverged, err);
        }
        y += dy;
        ++run.report.iterations;
        ++c.accepted_steps;
        try {
            g = eval_mismatch(prob, y, c);
            err = inf_norm(g);
        } catch (const Error&) {
            err = std::numeric_limits<double>::infinity();
        }
        run.record(err, 1.0, true);
        if (diverging(err, opts)) return run.finish(SolveStatus::Diverged, err);
        run.report.final_state = y;
    }
}

double iwamoto_multiplier(const Vector& a, const Vector& c) {
    const double aa = a.squaredNorm();
    const double ac = a.dot(c);
    const double cc = c.squaredNorm();
    if (aa == 0.0 || cc <= std::numeric_limits<double>::min()) return 1.0;
    // dF/dmu for F = 1/2 |(1-mu) a + mu^2 c|^2:
    //   2cc mu^3 - 3ac mu^2 + (aa + 2ac) mu - aa = 0
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    const double p2 = -3.0 * ac / (2.0 * cc);
    const double p1 = (aa + 2.0 * ac) / (2.0 * cc);
    const double p0 = -aa / (2.0 * cc);
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    companion(0, 2) = -p0;
    companion(1, 2) = -p1;
    companion(2, 2) = -p2;
    Eigen::EigenSolver<Eigen::Matrix3d> es(companion, false);
    auto cost = [&](double mu) { return ((1.0 - mu) * a + mu * mu * c).squaredNorm(); };
    double best = 1.0;
    double best_cost = std::numeric_limits<double>::infinity();
    const auto roots = es.eigenvalues();
    // The cubic has at least one real root; pick the most real one as a fallback.
    double least_imag = std::numeric_limits<double>::infinity();
    double fallback = 1.0;
    for (int i = 0; i < 3; ++i) {
        const double re = roots[i].real();
        const double im = std::abs(roots[i].imag());
        if (im < least_imag) {
            least_imag = im;
            fallback = re;
        }
        if (im > 1e-9 * (1.0 + std::abs(re))) continue;
        const double f = cost(re);
        if (f < best_cost) {
            best_cost = f;
            best = re;
        }
    }
    if (!std::isfinite(best_cost)) best = fallback;
    return best;
}

SolveReport iwamoto(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts) {
    Run run(method_id(Method::Iwamoto), y0);
    auto& c = run.report.counters;
    StateVector y = y0;
    Vector g;
    try {
        g = eval_mismatch(prob, y, c);
    } catch (const Error&) {
        return run.finish(SolveStatus::Diverged, std::numeric_limits<double>::infinity());
    }
    double err = inf_norm(g);
    while (true) {
        if (err <= opts.tol) return run.finish(SolveStatus::Converged, err);
        if (run.report.iterations >= opts.max_iter) return run.finish(SolveStatus::MaxIter, err);
        Vector dy;
        double mu = 1.0;
        try {
            LuFactors lu = lu_factorize(eval_jacobian(prob, y, c), &c);
            dy = -lu.solve(g);
            const Vector g_full = eval_mismatch(prob, y + dy, c);
            mu = iwamoto_multiplier(g, g_full);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Singular) return run.finish(SolveStatus::Singular, err);
            return run.finish(SolveStatus::Diverged, err);
        }
        y += mu * dy;
        ++run.report.iterations;
        ++c.accepted_steps;
        try {
            g = eval_mismatch(prob, y, c);
            err = inf_norm(g);
        } catch (const Error&) {
            err = std::numeric_limits<double>::infinity();
        }
        run.record(err, mu, true);
        if (diverging(err, opts)) return run.finish(SolveStatus::Diverged, err);
        run.report.final_state = y;
    }
}

SolveReport ecnm_rk4(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts) {
    Run run(method_id(Method::EcnmRk4), y0);
    auto& c = run.report.counters;
    const double h = opts.h0;
    StateVector y = y0;

    // Newton flow -J(v)^{-1} g(v); g(v) is returned through `g_out`.
    auto flow = [&](const StateVector& v, Vector* g_out) {
        Vector g = eval_mismatch(prob, v, c);
        if (g_out) *g_out = g;
        LuFactors lu = lu_factorize(eval_jacobian(prob, v, c), &c);
        return Vector(-lu.solve(g));
    };

    double err = std::numeric_limits<double>::infinity();
    while (true) {
        Vector g;
        Vector k1;
        try {
            g = eval_mismatch(prob, y, c);
            ++c.checks;
            err = inf_norm(g);
            if (err <= opts.tol) return run.finish(SolveStatus::Converged, err);
            if (run.report.iterations >= opts.max_iter) return run.finish(SolveStatus::MaxIter, err);
            LuFactors lu = lu_factorize(eval_jacobian(prob, y, c), &c);
            k1 = -lu.solve(g);
            const Vector k2 = flow(y + 0.5 * h * k1, nullptr);
            const Vector k3 = flow(y + 0.5 * h * k2, nullptr);
            const Vector k4 = flow(y + h * k3, nullptr);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Singular) return run.finish(SolveStatus::Singular, err);
            return run.finish(SolveStatus::Diverged, err);
        }
        ++run.report.iterations;
        ++c.accepted_steps;
        double new_err = std::numeric_limits<double>::infinity();
        try {
            new_err = inf_norm(mismatch(prob, y));
        } catch (const Error&) {
        }
        run.record(new_err, h, true);
        if (diverging(new_err, opts)) return run.finish(SolveStatus::Diverged, new_err);
        run.report.final_state = y;
    }
}

SolveReport icnm(const PfProblem& prob, const StateVector& y0, const SolverOptions& opts, IcnmVariant variant) {
    static constexpr std::array<Method, 4> ids = {Method::IcnmJH, Method::IcnmJ, Method::IcnmJ1, Method::IcnmJ0};
    Run run(method_id(ids[static_cast<std::size_t>(variant)]), y0);
    auto& c = run.report.counters;
    StateVector y = y0;
    double h = opts.h0;

    Vector g;
    try {
        g = eval_mismatch(prob, y, c);
    } catch (const Error&) {
        return run.finish(SolveStatus::Diverged, std::numeric_limits<double>::infinity());
    }
    double err = inf_norm(g);

    // J0 keeps the factorization of J(y_start) for the whole run; the inner
    // matrix (1 + h) J is then applied by scaling the solve.
    LuFactors frozen;
    if (variant == IcnmVariant::J0 && err > opts.tol) {
        try {
            frozen = lu_factorize(eval_jacobian(prob, y, c), &c);
        } catch (const Error&) {
            return run.finish(SolveStatus::Singular, err);
        }
    }

    bool last_failure_singular = false;
    while (true) {
        if (err <= opts.tol) return run.finish(SolveStatus::Converged, err);
        if (run.report.iterations >= opts.max_iter) return run.finish(SolveStatus::MaxIter, err);
        if (h < opts.h_min) {
            return run.finish(last_failure_singular ? SolveStatus::Singular : SolveStatus::MaxIter, err);
        }

        // Inner Newton loop on r(u) = J(u)(u - y) + h g(u).
        StateVector u = y;
        Vector g_u = g;
        bool ok = false;
        bool singular = false;
        const double inner_tol = opts.inner_tol * (1.0 + err);
        try {
            LuFactors step_lu;
            if (variant == IcnmVariant::J1) {
                step_lu = lu_factorize((1.0 + h) * eval_jacobian(prob, y, c), &c);
            }
            double r0 = std::numeric_limits<double>::infinity();
            for (int it = 0; it <= opts.inner_max_iter; ++it) {
                if (it > 0) g_u = eval_mismatch(prob, u, c);
                const Vector d = u - y;
                SparseMatrix j_u = eval_jacobian(prob, u, c);
                const Vector r = j_u * d + h * g_u;
                const double rn = inf_norm(r);
                if (!std::isfinite(rn)) break;
                if (rn <= inner_tol) {
                    ok = true;
                    break;
                }
                if (it == 0) r0 = rn;
                if (rn > 1e6 * r0 || it == opts.inner_max_iter) break;
                Vector du;
                switch (variant) {
                    case IcnmVariant::JH: {
                        ++c.hz_evals;
                        SparseMatrix m = hessian_action(prob, u, d) + (1.0 + h) * j_u;
                        du = -lu_factorize(m, &c).solve(r);
                        break;
                    }
                    case IcnmVariant::J: du = -lu_factorize((1.0 + h) * j_u, &c).solve(r); break;
                    case IcnmVariant::J1: du = -step_lu.solve(r); break;
                    case IcnmVariant::J0: du = -frozen.solve(r) / (1.0 + h); break;
                }
                u += du;
            }
        } catch (const Error& e) {
            ok = false;
            singular = e.code() == ErrorCode::Singular;
        }

        if (!ok) {
            ++c.rejected_steps;
            last_failure_singular = singular;
            run.record(err, h, false);
            h *= 0.5;
            continue;
        }
        y = u;
        g = g_u;
        err = inf_norm(g);
        ++run.report.iterations;
        ++c.accepted_steps;
        run.record(err, h, true);
        if (diverging(err, opts)) return run.finish(SolveStatus::Diverged, err);
        run.report.final_state = y;
        h = std::min(opts.max_growth * h, opts.h_max);
    }
}

SolveReport solve(Method m, const PfProblem& prob, const StateVector& y0, const SolverOptions& opts) {
    opts.validate();
    switch (m) {
        case Method::NewtonRaphson: return newton_raphson(prob, y0, opts);
        case Method::Iwamoto: return iwamoto(prob, y0, opts);
        case Method::EcnmRk4: return ecnm_rk4(prob, y0, opts);
        case Method::IcnmJH: return icnm(prob, y0, opts, IcnmVariant::JH);
        case Method::IcnmJ: return icnm(prob, y0, opts, IcnmVariant::J);
        case Method::IcnmJ1: return icnm(prob, y0, opts, IcnmVariant::J1);
        case Method::IcnmJ0: return icnm(prob, y0, opts, IcnmVariant::J0);
        case Method::SicnmRodas4: {
            SolveReport r = sicnm_solve(prob, y0, opts, rodas4());
            r.method = std::string(method_id(m));
            return r;
        }
        case Method::SicnmRodas3d: {
            SolveReport r = sicnm_solve(prob, y0, opts, rodas3d());
            r.method = std::string(method_id(m));
            return r;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown method");
}

}  // namespace sicnm
