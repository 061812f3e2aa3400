#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include "oracles.hpp"
#include "sicnm/dae_step.hpp"
#include "sicnm/error.hpp"
#include "sicnm/solvers.hpp"

using namespace sicnm;
using Mp = boost::multiprecision::cpp_bin_float_50;

namespace {

struct Loaded {
    NetworkCase net;
    PfProblem prob;
    Vector flat;
};

Loaded load(const std::string& name) {
    Loaded l;
    l.net = load_case(oracle::data_path(name));
    l.prob = make_problem(l.net);
    l.flat = initial_state(l.prob, l.net, InitMode::Flat);
    return l;
}

// Lossless chain 1-2-3 with nothing connected: g = 0 exactly at flat start.
Loaded exact_zero() {
    Loaded l;
    l.net = oracle::two_bus();
    l.net.buses.push_back({.id = 3});
    l.net.branches.push_back({.from_bus = 2, .to_bus = 3, .x = 0.1});
    l.prob = make_problem(l.net);
    l.flat = initial_state(l.prob, l.net, InitMode::Flat);
    return l;
}

SolveReport run(Method m, const Loaded& l, double tol = 1e-5) {
    SolverOptions o = default_options(m);
    o.tol = tol;
    return solve(m, l.prob, l.flat, o);
}

// g(y) = y^2 - 4 as a one-dimensional model for the DAE step.
struct ScalarModel {
    Vector g(const Vector& y) const { return Vector::Constant(1, y[0] * y[0] - 4.0); }
    SparseMatrix jacobian(const Vector& y) const {
        SparseMatrix j(1, 1);
        j.insert(0, 0) = 2.0 * y[0];
        return j;
    }
};

SparseMatrix scalar(double v) {
    SparseMatrix m(1, 1);
    m.insert(0, 0) = v;
    return m;
}

}  // namespace

TEST_CASE("method ids and options") {
    for (Method m : all_methods()) CHECK(parse_method(method_id(m)) == m);
    CHECK(all_methods().size() == 9);
    CHECK_THROWS_AS((void)parse_method("m4"), Error);
    CHECK(default_options(Method::IcnmJH).h0 == 0.01);
    CHECK(default_options(Method::EcnmRk4).h0 == 1.0);
    CHECK(default_options(Method::SicnmRodas3d).h0 == 0.1);
    CHECK(default_options(Method::SicnmRodas3d).atol == 0.1);
    CHECK(default_options(Method::SicnmRodas3d).rtol == 0.1);
    CHECK(default_options(Method::NewtonRaphson).tol == 1e-5);
    CHECK(default_options(Method::NewtonRaphson).max_iter == 1000);

    SolverOptions bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = SolverOptions{};
    bad.h0 = 20.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = SolverOptions{};
    bad.h_min = 1.0;
    bad.h0 = 0.5;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("Newton-Raphson") {
    const Loaded z = exact_zero();
    const SolveReport r0 = run(Method::NewtonRaphson, z);
    CHECK(r0.converged());
    CHECK(r0.iterations <= 1);
    CHECK(r0.final_error == 0.0);

    const Loaded nine = load("case9.m");
    const SolveReport r = run(Method::NewtonRaphson, nine);
    CHECK(r.converged());
    CHECK(r.iterations <= 6);
    CHECK(inf_norm(mismatch(nine.prob, r.final_state)) <= 1e-5);
    CHECK(r.counters.lu_facts == r.iterations);

    const SolveReport bad = run(Method::NewtonRaphson, load("ill6.m"));
    CHECK((bad.status == SolveStatus::Diverged || bad.status == SolveStatus::MaxIter));
}

TEST_CASE("Iwamoto") {
    const Loaded nine = load("case9.m");
    const SolveReport nr = run(Method::NewtonRaphson, nine, 1e-10);
    const SolveReport iw = run(Method::Iwamoto, nine, 1e-10);
    REQUIRE(iw.converged());
    CHECK((iw.final_state - nr.final_state).lpNorm<Eigen::Infinity>() <= 1e-6);

    // Near the solution g(y + dy) is second order small and mu -> 1. Take the
    // first Newton iterate inside 1e-5 so the residual is still above roundoff.
    SolverOptions o = default_options(Method::NewtonRaphson);
    o.tol = 1e-14;
    Vector y = nine.flat;
    for (o.max_iter = 1; o.max_iter < 10; ++o.max_iter) {
        const SolveReport part = newton_raphson(nine.prob, nine.flat, o);
        y = part.final_state;
        if (part.final_error < 1e-5) break;
    }
    const Vector a = mismatch(nine.prob, y);
    const Vector dy = -Matrix(jacobian(nine.prob, y)).fullPivLu().solve(a);
    const Vector c = mismatch(nine.prob, y + dy);
    CHECK(iwamoto_multiplier(a, c) == doctest::Approx(1.0).epsilon(1e-6));

    // a hand case: c = 0 gives the plain Newton step, c = a gives the minimizer of (1-mu+mu^2)^2
    const Vector one = Vector::Ones(2);
    CHECK(iwamoto_multiplier(one, Vector::Zero(2)) == doctest::Approx(1.0));
    CHECK(iwamoto_multiplier(one, one) == doctest::Approx(0.5));

    const SolveReport ill = run(Method::Iwamoto, load("ill6.m"));
    CHECK_FALSE(ill.converged());
}

TEST_CASE("RK4 continuous Newton") {
    const Loaded nine = load("case9.m");
    const SolveReport r = run(Method::EcnmRk4, nine);
    CHECK(r.converged());
    CHECK(r.counters.lu_facts == 4 * r.counters.accepted_steps);
    CHECK(static_cast<long>(r.trace.size()) == r.counters.accepted_steps);

    const SolveReport ill = run(Method::EcnmRk4, load("ill6.m"));
    CHECK(ill.status == SolveStatus::Diverged);
    CHECK(ill.counters.lu_facts == 4 * ill.counters.accepted_steps);
}

TEST_CASE("implicit continuous Newton variants") {
    const Loaded nine = load("case9.m");
    // a huge step turns backward Euler into a Newton solve of g(y1) = 0
    SolverOptions big = default_options(Method::IcnmJH);
    big.h0 = 1e8;
    big.h_max = 1e8;
    big.max_iter = 1;
    const SolveReport one = icnm(nine.prob, nine.flat, big, IcnmVariant::JH);
    CHECK(one.final_error <= 1e-4 * inf_norm(mismatch(nine.prob, nine.flat)));

    for (Method m : {Method::IcnmJH, Method::IcnmJ, Method::IcnmJ1, Method::IcnmJ0}) {
        CAPTURE(method_id(m));
        const SolveReport r = run(m, nine);
        CHECK(r.converged());
        CHECK(static_cast<long>(r.trace.size()) == r.counters.accepted_steps + r.counters.rejected_steps);
        if (m == Method::IcnmJ1) CHECK(r.counters.lu_facts == r.counters.accepted_steps + r.counters.rejected_steps);
        if (m == Method::IcnmJ0) CHECK(r.counters.lu_facts == 1);
        if (m == Method::IcnmJH) CHECK(r.counters.hz_evals == r.counters.lu_facts);
    }

    const Loaded ill = load("ill6.m");
    const SolveReport jh = run(Method::IcnmJH, ill);
    const SolveReport j = run(Method::IcnmJ, ill);
    const SolveReport j0 = run(Method::IcnmJ0, ill);
    CHECK(jh.converged());
    CHECK(j.converged());
    CHECK(j.iterations >= jh.iterations);
    CHECK_FALSE(j0.converged());
}

TEST_CASE("DAE step on a scalar problem against a 50-digit dense oracle") {
    // y' = z, 0 = 2 y z + y^2 - 4, y0 = 3, z0 = -g/J = -5/6, one rodas3d step of 0.1
    const Tableau tab = rodas3d();
    const double y0 = 3.0, z0 = -5.0 / 6.0, h = 0.1;
    const DaeJacobian blocks{scalar(2.0 * z0 + 2.0 * y0), scalar(2.0 * y0)};
    EvalCounters counters;
    const SicnmStepResult got = rosenbrock_dae_step(ScalarModel{}, Vector::Constant(1, y0), Vector::Constant(1, z0),
                                                    blocks, h, tab, &counters);
    CHECK(counters.lu_facts == 1);
    CHECK(counters.g_evals == 4);

    oracle::DenseRosenbrock<Mp> dense;
    dense.mass = {{Mp(1), Mp(0)}, {Mp(0), Mp(0)}};
    dense.f = [](const std::vector<Mp>& u) { return std::vector<Mp>{u[1], Mp(2) * u[0] * u[1] + u[0] * u[0] - Mp(4)}; };
    const Mp my0(3), mz0 = Mp(-5) / Mp(6);
    dense.jac0 = {{Mp(0), Mp(1)}, {Mp(2) * mz0 + Mp(2) * my0, Mp(2) * my0}};
    auto [u1, uh] = dense.step({my0, mz0}, Mp(h), tab.cast<Mp>());
    CHECK(std::abs(got.y1[0] - static_cast<double>(u1[0])) <= 1e-14);
    CHECK(std::abs(got.z1[0] - static_cast<double>(u1[1])) <= 1e-14);
    CHECK(std::abs(got.err_y[0] - static_cast<double>(abs(uh[0] - u1[0]))) <= 1e-14);
    CHECK(std::abs(got.err_z[0] - static_cast<double>(abs(uh[1] - u1[1]))) <= 1e-14);
    // the step moves toward the root y = 2
    CHECK(got.y1[0] < 3.0);
    CHECK(got.y1[0] > 2.0);
}

TEST_CASE("DAE step on the nine-bus network against the dense 2n oracle") {
    const Loaded nine = load("case9.m");
    const PfProblem& p = nine.prob;
    const DaeState s = make_dae_state(p, nine.flat);
    const Index n = p.n_state();
    for (const Tableau& tab : {rodas3d(), rodas4()}) {
        CAPTURE(tab.name);
        const SicnmStepResult got = sicnm_step(p, s, 0.3, tab);

        oracle::DenseRosenbrock<double> dense;
        const auto un = static_cast<std::size_t>(n);
        dense.mass.assign(2 * un, std::vector<double>(2 * un, 0.0));
        for (std::size_t i = 0; i < un; ++i) dense.mass[i][i] = 1.0;
        dense.f = [&](const std::vector<double>& u) {
            const Vector y = Vector::Map(u.data(), n);
            const Vector z = Vector::Map(u.data() + n, n);
            const Vector alg = Matrix(jacobian(p, y)) * z + mismatch(p, y);
            std::vector<double> out(2 * un);
            for (std::size_t i = 0; i < un; ++i) {
                out[i] = z[static_cast<Index>(i)];
                out[un + i] = alg[static_cast<Index>(i)];
            }
            return out;
        };
        const Matrix j(jacobian(p, s.y));
        const Matrix j21 = oracle::fd_hessian_action(p, s.y, s.z) + j;
        dense.jac0.assign(2 * un, std::vector<double>(2 * un, 0.0));
        for (std::size_t r = 0; r < un; ++r) {
            dense.jac0[r][un + r] = 1.0;
            for (std::size_t c = 0; c < un; ++c) {
                dense.jac0[un + r][c] = j21(static_cast<Index>(r), static_cast<Index>(c));
                dense.jac0[un + r][un + c] = j(static_cast<Index>(r), static_cast<Index>(c));
            }
        }
        std::vector<double> u0(2 * un);
        for (std::size_t i = 0; i < un; ++i) {
            u0[i] = s.y[static_cast<Index>(i)];
            u0[un + i] = s.z[static_cast<Index>(i)];
        }
        auto [u1, uh] = dense.step(u0, 0.3, tab);
        for (std::size_t i = 0; i < un; ++i) {
            CHECK(got.y1[static_cast<Index>(i)] == doctest::Approx(u1[i]).epsilon(1e-6));
            CHECK(got.z1[static_cast<Index>(i)] == doctest::Approx(u1[un + i]).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("DAE step at an exact equilibrium is exactly still") {
    const Loaded z = exact_zero();
    REQUIRE(mismatch(z.prob, z.flat).cwiseAbs().maxCoeff() == 0.0);
    const DaeState s = make_dae_state(z.prob, z.flat);
    CHECK(s.z.cwiseAbs().maxCoeff() == 0.0);
    for (const Tableau& tab : {rodas3d(), rodas4()}) {
        EvalCounters counters;
        const SicnmStepResult r = sicnm_step(z.prob, s, 0.5, tab, &counters);
        CHECK(r.y1 == z.flat);
        CHECK(r.z1.cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.err_y.cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.err_z.cwiseAbs().maxCoeff() == 0.0);
        CHECK(counters.lu_facts == 1);
        CHECK(counters.g_evals == tab.s);
    }
}

TEST_CASE("step-size controller") {
    SolverOptions o;
    const Vector zero = Vector::Zero(2);
    const Vector at_tol = Vector::Constant(2, 0.1);  // atol, with y1 = z1 = 0

    auto d1 = step_size_update(0.4, at_tol, zero, zero, zero, o, 3);
    CHECK(d1.error_ratio == doctest::Approx(1.0));
    CHECK(d1.accept);
    CHECK(d1.h_new == doctest::Approx(0.9 * 0.4));

    auto d8 = step_size_update(0.4, 8.0 * at_tol, zero, zero, zero, o, 3);
    CHECK(d8.error_ratio == doctest::Approx(8.0));
    CHECK_FALSE(d8.accept);
    CHECK(d8.h_new == doctest::Approx(0.9 * 0.4 / 2.0));

    auto d0 = step_size_update(9.0, zero, zero, zero, zero, o, 3);
    CHECK(d0.accept);
    CHECK(d0.h_new == o.h_max);

    // relative part: err 0.1 + 0.1*|y1| at y1 = 4 gives ratio 1
    const Vector y1 = Vector::Constant(2, 4.0);
    auto dr = step_size_update(0.2, Vector::Constant(2, 0.5), zero, y1, zero, o, 2);
    CHECK(dr.error_ratio == doctest::Approx(1.0));

    auto tiny = step_size_update(1e-8, Vector::Constant(2, 1e6), zero, zero, zero, o, 3);
    CHECK(tiny.h_new == o.h_min);
}

TEST_CASE("SICNM runs: counter laws, traces, agreement with Newton") {
    const Loaded z = exact_zero();
    for (Method m : {Method::SicnmRodas3d, Method::SicnmRodas4}) {
        const SolveReport r = run(m, z);
        CHECK(r.converged());
        CHECK(r.counters.accepted_steps == 0);
    }

    const Loaded nine = load("case9.m");
    const SolveReport nr = run(Method::NewtonRaphson, nine, 1e-10);
    for (Method m : {Method::SicnmRodas3d, Method::SicnmRodas4}) {
        const SolveReport r = run(m, nine, 1e-10);
        REQUIRE(r.converged());
        CHECK((r.final_state - nr.final_state).lpNorm<Eigen::Infinity>() <= 1e-6);
    }

    std::vector<std::string> names = oracle::stock_cases();
    names.push_back("ill6.m");
    names.push_back("medium35.m");
    for (const auto& name : names) {
        const Loaded l = load(name);
        for (Method m : {Method::SicnmRodas3d, Method::SicnmRodas4}) {
            CAPTURE(name);
            CAPTURE(method_id(m));
            const SolveReport r = run(m, l);
            const auto& c = r.counters;
            const long steps = c.accepted_steps + c.rejected_steps;
            const long s = m == Method::SicnmRodas3d ? 4 : 6;
            CHECK(r.converged());
            CHECK(c.lu_facts == steps + 1);
            CHECK(c.g_evals == s * steps + c.checks);
            CHECK(c.hz_evals <= c.accepted_steps + 1);
            CHECK(static_cast<long>(r.trace.size()) == steps);
            CHECK(r.iterations == c.accepted_steps);
            CHECK(r.trace.back().err_inf <= 1e-5);
            CHECK(r.trace.back().accepted);
            for (const auto& t : r.trace)
                if (t.accepted) CHECK(std::isfinite(t.err_inf));
        }
    }

    const SolveReport ill = run(Method::SicnmRodas3d, load("ill6.m"));
    CHECK(ill.converged());
    CHECK(ill.iterations <= 40);
}

TEST_CASE("equilibrium inputs come back unchanged from every solver") {
    for (const char* name : {"case9.m", "case30.m"}) {
        const Loaded l = load(name);
        const SolveReport ref = run(Method::NewtonRaphson, l, 1e-11);
        REQUIRE(ref.converged());
        for (Method m : all_methods()) {
            CAPTURE(name);
            CAPTURE(method_id(m));
            const SolveReport r = solve(m, l.prob, ref.final_state, default_options(m));
            CHECK(r.converged());
            CHECK(r.final_state == ref.final_state);
            CHECK(r.iterations == 0);
        }
    }
}

TEST_CASE("well-conditioned cases: every method agrees") {
    for (const auto& name : oracle::stock_cases()) {
        const Loaded l = load(name);
        const SolveReport ref = run(Method::NewtonRaphson, l);
        REQUIRE(ref.converged());
        for (Method m : all_methods()) {
            CAPTURE(name);
            CAPTURE(method_id(m));
            const SolveReport r = run(m, l);
            CHECK(r.converged());
            CHECK(inf_norm(mismatch(l.prob, r.final_state)) <= 1e-5);
            CHECK((r.final_state - ref.final_state).lpNorm<Eigen::Infinity>() <= 10 * 1e-5);
        }
    }
}

TEST_CASE("reactive limits") {
    const NetworkCase nine = load_case(oracle::data_path("case9.m"));
    const InnerSolver nr = [](const PfProblem& p, const StateVector& y0) {
        return newton_raphson(p, y0, default_options(Method::NewtonRaphson));
    };

    const QLimitResult plain = enforce_q_limits(nr, nine, InitMode::Flat);
    CHECK(plain.solves == 1);
    CHECK(plain.converted_buses.empty());
    CHECK(plain.report.converged());

    // bus 2 generator's solved Q is about 0.0 MVAr; pin its range below that
    NetworkCase tight = nine;
    for (auto& g : tight.gens)
        if (g.bus == 2) g.qmax = g.qmin = -20.0;
    const QLimitResult forced = enforce_q_limits(nr, tight, InitMode::Flat);
    CHECK(forced.report.converged());
    CHECK(forced.solves == 2);
    REQUIRE(forced.converted_buses == std::vector<int>{2});
    const PfProblem fp = make_problem(forced.final_case);
    CHECK(fp.idx.role[static_cast<std::size_t>(forced.final_case.bus_index(2))] == BusType::PQ);
    const Vector qg = generator_q(fp, forced.final_case, forced.report.final_state);
    CHECK(std::abs(qg[forced.final_case.bus_index(2)] + 20.0) <= 1e-2);
    CHECK(static_cast<long>(forced.report.trace.size()) == forced.report.iterations);

    // a tightened upper limit on the gen at bus 3
    const PfProblem p0 = make_problem(nine);
    const Vector q0 = generator_q(p0, nine, plain.report.final_state);
    const double q3 = q0[nine.bus_index(3)];
    NetworkCase capped = nine;
    for (auto& g : capped.gens)
        if (g.bus == 3) g.qmax = q3 - 10.0;
    const QLimitResult cap = enforce_q_limits(nr, capped, InitMode::Flat);
    CHECK(cap.report.converged());
    const PfProblem cp = make_problem(cap.final_case);
    CHECK(cp.idx.role[static_cast<std::size_t>(cap.final_case.bus_index(3))] == BusType::PQ);
    const Vector qc = generator_q(cp, cap.final_case, cap.report.final_state);
    CHECK(std::abs(qc[cap.final_case.bus_index(3)] - (q3 - 10.0)) <= 1e-2);  // mismatch tol 1e-5 p.u.
    CHECK(inf_norm(mismatch(cp, cap.report.final_state)) <= 1e-5);
}
