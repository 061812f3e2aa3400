// One PASS/FAIL line per acceptance criterion.
//   acceptance               all criteria
//   acceptance --criterion N one criterion

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "../tools/cli.hpp"
#include "oracles.hpp"
#include "sicnm/bench.hpp"
#include "sicnm/dae_step.hpp"
#include "sicnm/error.hpp"
#include "sicnm/linalg.hpp"
#include "sicnm/solvers.hpp"

using namespace sicnm;
using Mp = boost::multiprecision::cpp_bin_float_50;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

class Clock {
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();

public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(prec);
    os << v;
    return os.str();
}

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

double rel_inf(const Matrix& a, const Matrix& b) {
    const double scale = std::max(1.0, b.cwiseAbs().rowwise().sum().maxCoeff());
    return (a - b).cwiseAbs().rowwise().sum().maxCoeff() / scale;
}

Verdict c1_order_conditions() {
    Clock clk;
    std::ostringstream out, err;
    const int code = cli::run({"validate-tableau", "rodas3d"}, out, err);
    const double t = clk.seconds();
    double worst = 0.0;
    for (const auto& r : check_order_conditions(rodas3d())) worst = std::max(worst, r.residual);
    const bool gamma_exact = rodas3d().gamma == 0.57281606;
    return {code == 0 && t < 1.0 && worst <= 1e-12 && gamma_exact,
            "validate-tableau rodas3d exit " + std::to_string(code) + ", max residual " + fmt(worst) + ", gamma " +
                (gamma_exact ? "exact" : "off") + ", " + fmt(t) + " s"};
}

Verdict c2_stability() {
    const Tableau t = rodas3d();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> logr(-3.0, 3.0);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::complex<double> z = std::polar(std::pow(10.0, logr(rng)), ang(rng));
        const auto expect = oracle::closed_form_r(t.gamma, z);
        worst = std::max(worst, std::abs(stability_function(t, z) - expect) / std::abs(expect));
    }
    const double rm = std::abs(stability_function(t, {-1e8, 0.0}));
    const double rp = std::abs(stability_function(t, {1e8, 0.0}));
    return {worst <= 1e-10 && rm <= 1e-5 && rp <= 1e-5,
            "max rel err " + fmt(worst) + " over 100 z, |R(-1e8)| " + fmt(rm) + ", |R(+1e8)| " + fmt(rp)};
}

Verdict c3_convergence_order() {
    Clock clk;
    double lambda = -1e4;
    std::vector<int> ns{500, 1000, 2000, 4000, 8000};
    auto slopes = [&](const Tableau& tab) {
        const RosenbrockTableau<Mp> tm = tab.cast<Mp>();
        std::vector<double> hs, em, ee;
        for (int n : ns) {
            hs.push_back(1.0 / n);
            em.push_back(static_cast<double>(oracle::prothero_robinson_error<Mp>(tm, Mp(lambda), n, false)));
            ee.push_back(static_cast<double>(oracle::prothero_robinson_error<Mp>(tm, Mp(lambda), n, true)));
        }
        return std::pair{oracle::loglog_slope(hs, em), oracle::loglog_slope(hs, ee)};
    };
    const auto [m3, e3] = slopes(rodas3d());
    const auto [m4, e4] = slopes(rodas4());
    const double t = clk.seconds();
    auto near = [](double s, double target) { return std::abs(s - target) <= 0.1; };
    const bool ok = near(m3, 3.0) && near(m4, 4.0) && near(e3, 2.0) && near(e4, 3.0) && t < 10.0;
    // non-stiff reference, not part of the verdict
    lambda = -1.0;
    ns = {25, 50, 100, 200, 400};
    const auto [c3, ce3] = slopes(rodas3d());
    const auto [c4, ce4] = slopes(rodas4());
    return {ok, "lambda -1e4, h 1/500..1/8000: rodas3d " + fmt(m3) + " (emb " + fmt(e3) + "), rodas4 " + fmt(m4) +
                    " (emb " + fmt(e4) + "), " + fmt(t) + " s; lambda -1 reference: " + fmt(c3) + " (" + fmt(ce3) +
                    "), " + fmt(c4) + " (" + fmt(ce4) + ")"};
}

Verdict c4_schur() {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    auto rv = [&](Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = nd(rng);
        return v;
    };
    double worst = 0.0;
    int solves = 0;
    for (const char* name : {"case9.m", "case30.m"}) {
        const Loaded l = load(name);
        const Vector y = oracle::random_state(l.prob, rng);
        const DaeState s = make_dae_state(l.prob, y);
        const SparseMatrix j = jacobian(l.prob, y);
        const SparseMatrix j21 = hessian_action(l.prob, y, s.z) + j;
        const double gamma = rodas3d().gamma;
        for (double h : {1e-3, 0.3, 10.0}) {
            const StageSystem sys = build_stage_system(h, gamma, j21, j);
            for (int r = 0; r < 20; ++r) {
                const Vector a = rv(j.rows()), b = rv(j.rows());
                auto [k, lv] = stage_solve(sys, a, b);
                auto [kd, ld] = oracle::dense_stage_solve(h, gamma, Matrix(j21), Matrix(j), a, b);
                Vector x(2 * j.rows()), xd(2 * j.rows());
                x << k, lv;
                xd << kd, ld;
                worst = std::max(worst, (x - xd).lpNorm<Eigen::Infinity>() / xd.lpNorm<Eigen::Infinity>());
                ++solves;
            }
        }
    }
    return {worst <= 1e-9, std::to_string(solves) + " solves on case9/case30, max rel err " + fmt(worst)};
}

Verdict c5_derivatives() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    double wj = 0.0, wh = 0.0;
    for (const auto& name : oracle::stock_cases()) {
        const Loaded l = load(name);
        for (int k = 0; k < 10; ++k) {
            const Vector y = oracle::random_state(l.prob, rng);
            wj = std::max(wj, rel_inf(Matrix(jacobian(l.prob, y)), oracle::fd_jacobian(l.prob, y)));
            Vector z(l.prob.n_state());
            for (Index i = 0; i < z.size(); ++i) z[i] = nd(rng);
            z.normalize();
            wh = std::max(wh, rel_inf(Matrix(hessian_action(l.prob, y, z)), oracle::fd_hessian_action(l.prob, y, z)));
        }
    }
    return {wj <= 1e-6 && wh <= 1e-5, "10 states x 5 cases: J vs FD " + fmt(wj) + ", H.z vs FD " + fmt(wh)};
}

Verdict c6_counter_laws() {
    std::vector<std::string> names = oracle::stock_cases();
    names.push_back("ill6.m");
    names.push_back("medium35.m");
    int runs = 0, broken = 0;
    std::string first;
    for (const auto& name : names) {
        const Loaded l = load(name);
        for (Method m : {Method::SicnmRodas3d, Method::SicnmRodas4}) {
            const SolveReport r = solve(m, l.prob, l.flat, default_options(m));
            const auto& c = r.counters;
            const long steps = c.accepted_steps + c.rejected_steps;
            const long s = m == Method::SicnmRodas3d ? 4 : 6;
            ++runs;
            if (c.lu_facts != steps + 1 || c.g_evals != s * steps + c.checks) {
                ++broken;
                if (first.empty()) first = name + "/" + std::string(method_id(m));
            }
        }
    }
    return {broken == 0, std::to_string(runs) + " SICNM runs, lu = acc + rej + 1 and g = s(acc + rej) + checks, " +
                             std::to_string(broken) + " broken" + (first.empty() ? "" : " (first " + first + ")")};
}

Verdict c7_agreement() {
    const std::vector<Method> methods{Method::NewtonRaphson, Method::Iwamoto,      Method::EcnmRk4,
                                      Method::IcnmJH,        Method::SicnmRodas3d, Method::SicnmRodas4};
    double spread = 0.0, resid = 0.0;
    int bad = 0;
    for (const auto& name : oracle::stock_cases()) {
        const Loaded l = load(name);
        std::vector<Vector> sol;
        for (Method m : methods) {
            SolverOptions o = default_options(m);
            if (m == Method::EcnmRk4) o.h0 = 1.0;
            const SolveReport r = solve(m, l.prob, l.flat, o);
            if (!r.converged()) ++bad;
            resid = std::max(resid, inf_norm(mismatch(l.prob, r.final_state)));
            sol.push_back(r.final_state);
        }
        for (std::size_t a = 0; a < sol.size(); ++a)
            for (std::size_t b = a + 1; b < sol.size(); ++b)
                spread = std::max(spread, (sol[a] - sol[b]).lpNorm<Eigen::Infinity>());
    }
    return {bad == 0 && spread <= 1e-4 && resid <= 1e-5,
            "6 methods x 5 cases, " + std::to_string(bad) + " not converged, max pairwise diff " + fmt(spread) +
                ", max |g| " + fmt(resid)};
}

Verdict c8_ill_conditioned() {
    const Loaded l = load("ill6.m");
    auto go = [&](Method m) { return solve(m, l.prob, l.flat, default_options(m)); };
    const SolveReport nr = go(Method::NewtonRaphson);
    const SolveReport ec = go(Method::EcnmRk4);
    const SolveReport r3 = go(Method::SicnmRodas3d);
    const bool ok = !nr.converged() && !ec.converged() && r3.converged() && r3.counters.accepted_steps <= 40;
    return {ok, std::string("ill6: m1 ") + to_string(nr.status) + ", m3 " + to_string(ec.status) + ", m8-rodas3d " +
                    to_string(r3.status) + " in " + std::to_string(r3.counters.accepted_steps) + " accepted steps"};
}

Verdict c9_limit_test() {
    Clock clk;
    ExperimentSpec spec;
    spec.cases = {oracle::data_path("medium35.m").string()};
    spec.methods = {"m1", "m8-rodas4", "m8-rodas3d"};
    spec.seed = 7;
    spec.perturb = PerturbSpec{};
    spec.perturb->runs = 100;
    const BenchReport rep = run_limit_test(spec);
    double rate_nr = -1, rate4 = -1, rate3 = -1;
    for (const auto& s : rep.limits) {
        if (s.method == "m1") rate_nr = s.convergence_rate;
        if (s.method == "m8-rodas4") rate4 = s.convergence_rate;
        if (s.method == "m8-rodas3d") rate3 = s.convergence_rate;
    }
    const auto [mean3, mean4] = joint_mean_iterations(rep, "medium35", "m8-rodas3d", "m8-rodas4");
    const double t = clk.seconds();
    const bool ok = rate3 >= rate4 && rate4 >= rate_nr && mean3 <= mean4 && t < 300.0;
    return {ok, "medium35, 100 runs: rate rodas3d " + fmt(rate3) + " >= rodas4 " + fmt(rate4) + " >= m1 " +
                    fmt(rate_nr) + ", joint mean steps " + fmt(mean3, 4) + " <= " + fmt(mean4, 4) + ", " + fmt(t) + " s"};
}

Verdict c10_fixed_point() {
    int runs = 0, bad = 0;
    for (const char* name : {"case9.m", "case30.m", "case118.m"}) {
        const Loaded l = load(name);
        SolverOptions o = default_options(Method::NewtonRaphson);
        o.tol = 1e-11;
        const SolveReport ref = solve(Method::NewtonRaphson, l.prob, l.flat, o);
        if (!ref.converged()) return {false, std::string(name) + ": reference solve failed"};
        for (Method m : all_methods()) {
            const SolveReport r = solve(m, l.prob, ref.final_state, default_options(m));
            ++runs;
            if (!r.converged() || r.final_state != ref.final_state || r.iterations != 0) ++bad;
        }
    }
    // lossless chain with no injections: g = 0 exactly at flat start
    NetworkCase chain = oracle::two_bus();
    chain.buses.push_back({.id = 3});
    chain.branches.push_back({.from_bus = 2, .to_bus = 3, .x = 0.1});
    const PfProblem p = make_problem(chain);
    const Vector y0 = initial_state(p, chain, InitMode::Flat);
    const DaeState s = make_dae_state(p, y0);
    int still = 0;
    for (const Tableau& tab : {rodas3d(), rodas4()}) {
        const SicnmStepResult r = sicnm_step(p, s, 0.5, tab);
        if (r.y1 == y0 && r.z1.cwiseAbs().maxCoeff() == 0.0 && r.err_y.cwiseAbs().maxCoeff() == 0.0 &&
            r.err_z.cwiseAbs().maxCoeff() == 0.0)
            ++still;
    }
    return {bad == 0 && still == 2, std::to_string(runs) + " solver runs at equilibrium, " + std::to_string(bad) +
                                        " moved; step at equilibrium still for " + std::to_string(still) + "/2 tableaus"};
}

Verdict c11_parser() {
    int cases = 0, round_trips = 0;
    for (const char* name : {"case9.m", "case14.m", "case30.m", "case57.m", "case118.m", "ill6.m", "medium35.m"}) {
        const NetworkCase c = load_case(oracle::data_path(name));
        ++cases;
        if (parse_case_json(write_case_json(c)) == c) ++round_trips;
    }

    std::ifstream in(oracle::data_path("case9.m"));
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string base = ss.str();
    const std::string alphabet = "0123456789.;[]%=-+eE \n\tmpc.busgenbranchInfNaN'\"abc...";
    std::mt19937_64 rng(11);
    int crashed = 0, parsed = 0, rejected = 0;
    for (int iter = 0; iter < 3000; ++iter) {
        std::string text = base;
        const int edits = 1 + static_cast<int>(rng() % 8);
        for (int e = 0; e < edits && !text.empty(); ++e) {
            const std::size_t pos = rng() % text.size();
            switch (rng() % 4) {
                case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
                case 1: text.erase(pos, 1 + rng() % 6); break;
                case 2: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
                default: text.insert(pos, text.substr(rng() % text.size(), 1 + rng() % 40)); break;
            }
        }
        try {
            const NetworkCase c = parse_case(text);
            validate_case(c);
            ++parsed;
        } catch (const Error&) {
            ++rejected;
        } catch (...) {
            ++crashed;
        }
    }

    // hand transcription of the nine-bus tables
    const NetworkCase c = load_case(oracle::data_path("case9.m"));
    int mismatched = 0;
    auto want = [&](bool ok) { mismatched += ok ? 0 : 1; };
    want(c.base_mva == 100.0 && c.buses.size() == 9 && c.branches.size() == 9 && c.gens.size() == 3);
    if (mismatched) return {false, "nine-bus table sizes differ"};
    const double bus_tab[9][4] = {{1, 3, 0, 0}, {2, 2, 0, 0},    {3, 2, 0, 0}, {4, 1, 0, 0},  {5, 1, 90, 30},
                                  {6, 1, 0, 0}, {7, 1, 100, 35}, {8, 1, 0, 0}, {9, 1, 125, 50}};
    for (std::size_t i = 0; i < 9; ++i) {
        const auto& b = c.buses[i];
        want(b.id == bus_tab[i][0] && static_cast<int>(b.btype) == bus_tab[i][1] && b.pd == bus_tab[i][2] &&
             b.qd == bus_tab[i][3] && b.gs == 0.0 && b.bs == 0.0 && b.vm == 1.0 && b.va == 0.0 && b.base_kv == 345.0 &&
             b.vmax == 1.1 && b.vmin == 0.9);
    }
    const double gen_tab[3][5] = {{1, 0, 300, -300, 1}, {2, 163, 300, -300, 1}, {3, 85, 300, -300, 1}};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& g = c.gens[i];
        want(g.bus == gen_tab[i][0] && g.pg == gen_tab[i][1] && g.qg == 0.0 && g.qmax == gen_tab[i][2] &&
             g.qmin == gen_tab[i][3] && g.vg == gen_tab[i][4] && g.status == 1);
    }
    const double br_tab[9][5] = {{1, 4, 0, 0.0576, 0},         {4, 5, 0.017, 0.092, 0.158},
                                 {5, 6, 0.039, 0.17, 0.358},    {3, 6, 0, 0.0586, 0},
                                 {6, 7, 0.0119, 0.1008, 0.209}, {7, 8, 0.0085, 0.072, 0.149},
                                 {8, 2, 0, 0.0625, 0},          {8, 9, 0.032, 0.161, 0.306},
                                 {9, 4, 0.01, 0.085, 0.176}};
    for (std::size_t i = 0; i < 9; ++i) {
        const auto& br = c.branches[i];
        want(br.from_bus == br_tab[i][0] && br.to_bus == br_tab[i][1] && br.r == br_tab[i][2] &&
             br.x == br_tab[i][3] && br.b == br_tab[i][4] && br.tap == 1.0 && br.shift == 0.0 && br.status == 1);
    }

    const bool ok = round_trips == cases && crashed == 0 && mismatched == 0;
    return {ok, std::to_string(round_trips) + "/" + std::to_string(cases) + " JSON round trips; fuzz 3000 docs: " +
                    std::to_string(parsed) + " parsed, " + std::to_string(rejected) + " rejected, " +
                    std::to_string(crashed) + " crashed; nine-bus rows off: " + std::to_string(mismatched)};
}

const std::vector<std::pair<const char*, std::function<Verdict()>>> kCriteria = {
    {"order conditions", c1_order_conditions},
    {"stability function", c2_stability},
    {"convergence order", c3_convergence_order},
    {"Schur equivalence", c4_schur},
    {"derivative oracles", c5_derivatives},
    {"counter laws", c6_counter_laws},
    {"well-conditioned agreement", c7_agreement},
    {"ill-conditioned separation", c8_ill_conditioned},
    {"limit-test ordering", c9_limit_test},
    {"fixed points", c10_fixed_point},
    {"parser suite", c11_parser},
};

bool report(int n) {
    const auto& [name, fn] = kCriteria[static_cast<std::size_t>(n - 1)];
    Verdict v;
    try {
        v = fn();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << v.detail << std::endl;
    return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            which.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--criterion N]...\n";
            return 3;
        }
    }
    if (which.empty())
        for (int n = 1; n <= static_cast<int>(kCriteria.size()); ++n) which.push_back(n);
    bool ok = true;
    for (int n : which) {
        if (n < 1 || n > static_cast<int>(kCriteria.size())) {
            std::cerr << "no criterion " << n << "\n";
            return 3;
        }
        ok = report(n) && ok;
    }
    return ok ? 0 : 1;
}
