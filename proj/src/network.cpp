#include "sicnm/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sicnm/error.hpp"

namespace sicnm {

YBus build_ybus(const NetworkCase& network) {
    const auto n = static_cast<int>(network.buses.size());
    std::vector<ComplexTriplet> trips;
    trips.reserve(static_cast<std::size_t>(n) + 4 * network.branches.size());

    for (int i = 0; i < n; ++i) {
        const auto& bus = network.buses[static_cast<std::size_t>(i)];
        trips.emplace_back(i, i, Complex(bus.gs, bus.bs) / network.base_mva);
    }
    for (const auto& br : network.branches) {
        if (br.status == 0) continue;
        if (br.r == 0.0 && br.x == 0.0) {
            throw Error(ErrorCode::ZeroImpedanceBranch,
                        "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus));
        }
        const int f = network.bus_index(br.from_bus);
        const int t = network.bus_index(br.to_bus);
        if (f < 0 || t < 0) throw Error(ErrorCode::DanglingBranch, "branch references an unknown bus");

        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex charging(0.0, br.b / 2.0);
        const double ratio = br.tap == 0.0 ? 1.0 : br.tap;
        const Complex tap = std::polar(ratio, br.shift * std::numbers::pi / 180.0);

        trips.emplace_back(f, f, (ys + charging) / (ratio * ratio));
        trips.emplace_back(t, t, ys + charging);
        trips.emplace_back(f, t, -ys / std::conj(tap));
        trips.emplace_back(t, f, -ys / tap);
    }

    YBus y;
    y.n = n;
    y.matrix.resize(n, n);
    y.matrix.setFromTriplets(trips.begin(), trips.end());
    y.matrix.makeCompressed();
    return y;
}

StateIndexing index_states(const NetworkCase& network) {
    const auto n = network.buses.size();
    StateIndexing idx;
    idx.role.resize(n);
    std::vector<bool> has_gen(n, false);
    for (const auto& g : network.gens) {
        int b = network.bus_index(g.bus);
        if (b >= 0 && g.in_service()) has_gen[static_cast<std::size_t>(b)] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        BusType t = network.buses[i].btype;
        if (t == BusType::PV && !has_gen[i]) t = BusType::PQ;
        idx.role[i] = t;
        if (t == BusType::Slack) {
            if (idx.slack >= 0) throw Error(ErrorCode::InvalidCase, "more than one slack bus");
            idx.slack = static_cast<int>(i);
        }
    }
    if (idx.slack < 0) throw Error(ErrorCode::NoSlack, "no bus of type 3");

    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return network.buses[static_cast<std::size_t>(a)].id < network.buses[static_cast<std::size_t>(b)].id;
    });
    for (int b : order) {
        switch (idx.role[static_cast<std::size_t>(b)]) {
            case BusType::PV: idx.pv.push_back(b); idx.pvpq.push_back(b); break;
            case BusType::PQ: idx.pq.push_back(b); idx.pvpq.push_back(b); break;
            case BusType::Slack: break;
        }
    }

    idx.theta_pos.assign(n, -1);
    idx.vm_pos.assign(n, -1);
    int slot = 0;
    for (int b : idx.pvpq) idx.theta_pos[static_cast<std::size_t>(b)] = slot++;
    for (int b : idx.pq) idx.vm_pos[static_cast<std::size_t>(b)] = slot++;
    idx.n_state = slot;
    return idx;
}

}  // namespace sicnm
