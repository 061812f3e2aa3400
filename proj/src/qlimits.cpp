#include <cmath>
#include <numbers>
#include <set>

#include "sicnm/error.hpp"
#include "sicnm/solvers.hpp"

namespace sicnm {

Vector generator_q(const PfProblem& prob, const NetworkCase& network, const StateVector& y) {
    const ComplexVector s = bus_injections(prob, y);
    Vector qg(prob.n_bus());
    for (Index i = 0; i < prob.n_bus(); ++i) {
        qg[i] = s[i].imag() * network.base_mva + network.buses[static_cast<std::size_t>(i)].qd;
    }
    return qg;
}

namespace {

// Copies the solved voltages into the case so the next solve starts there.
void store_voltages(NetworkCase& network, const PfProblem& prob, const StateVector& y) {
    const ComplexVector v = bus_voltages(prob, y);
    for (std::size_t i = 0; i < network.buses.size(); ++i) {
        network.buses[i].vm = std::abs(v[static_cast<Index>(i)]);
        network.buses[i].va = std::arg(v[static_cast<Index>(i)]) * 180.0 / std::numbers::pi;
    }
}

void append(SolveReport& total, const SolveReport& part) {
    for (auto rec : part.trace) {
        rec.iter = static_cast<long>(total.trace.size()) + 1;
        total.trace.push_back(rec);
    }
    total.iterations += part.iterations;
    total.wall_time += part.wall_time;
    auto& c = total.counters;
    const auto& p = part.counters;
    c.g_evals += p.g_evals;
    c.j_evals += p.j_evals;
    c.hz_evals += p.hz_evals;
    c.lu_facts += p.lu_facts;
    c.rejected_steps += p.rejected_steps;
    c.accepted_steps += p.accepted_steps;
    c.checks += p.checks;
    total.method = part.method;
    total.status = part.status;
    total.final_error = part.final_error;
    total.final_state = part.final_state;
}

}  // namespace

QLimitResult enforce_q_limits(const InnerSolver& inner, const NetworkCase& network, InitMode init,
                              double q_tol_mvar) {
    QLimitResult result;
    result.final_case = network;
    NetworkCase& current = result.final_case;
    std::set<std::vector<int>> seen;

    while (true) {
        const PfProblem prob = make_problem(current);
        const InitMode mode = result.solves == 0 ? init : InitMode::CaseValues;
        const SolveReport rep = inner(prob, initial_state(prob, current, mode));
        ++result.solves;
        append(result.report, rep);
        if (!rep.converged()) return result;
        store_voltages(current, prob, rep.final_state);

        std::vector<int> pv_ids;
        for (int b : prob.idx.pv) pv_ids.push_back(current.buses[static_cast<std::size_t>(b)].id);
        if (!seen.insert(pv_ids).second) {
            result.cycle_detected = true;
            return result;
        }

        const Vector qg = generator_q(prob, current, rep.final_state);
        bool changed = false;
        for (int b : prob.idx.pv) {
            const int id = current.buses[static_cast<std::size_t>(b)].id;
            double qmax = 0.0;
            double qmin = 0.0;
            for (const auto& g : current.gens) {
                if (g.in_service() && g.bus == id) {
                    qmax += g.qmax;
                    qmin += g.qmin;
                }
            }
            const bool over = qg[b] > qmax + q_tol_mvar;
            const bool under = qg[b] < qmin - q_tol_mvar;
            if (!over && !under) continue;
            for (auto& g : current.gens) {
                if (g.in_service() && g.bus == id) g.qg = over ? g.qmax : g.qmin;
            }
            current.buses[static_cast<std::size_t>(b)].btype = BusType::PQ;
            result.converted_buses.push_back(id);
            changed = true;
        }
        if (!changed) return result;
    }
}

}  // namespace sicnm
