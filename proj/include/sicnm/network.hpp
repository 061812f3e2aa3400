#pragma once

#include <vector>

#include "sicnm/caseio.hpp"
#include "sicnm/types.hpp"

namespace sicnm {

struct YBus {
    Index n = 0;
    ComplexSparseMatrix matrix;
};

/// Bus roles and the layout of the state vector
///   y = [theta(pv U pq, ascending bus id); vm(pq, ascending bus id)].
/// All bus references are positions in NetworkCase::buses.
struct StateIndexing {
    int slack = -1;
    std::vector<int> pv;
    std::vector<int> pq;
    std::vector<int> pvpq;       // angle unknowns in state order
    std::vector<int> theta_pos;  // bus -> state slot of its angle, -1 for slack
    std::vector<int> vm_pos;     // bus -> state slot of its magnitude, -1 unless PQ
    std::vector<BusType> role;   // effective bus type after PV demotion
    Index n_state = 0;

    [[nodiscard]] Index n_bus() const { return static_cast<Index>(role.size()); }
    [[nodiscard]] Index n_angles() const { return static_cast<Index>(pvpq.size()); }
};

/// Standard pi-model assembly. Shunts are scaled by base_mva; out-of-service
/// branches are skipped. Throws ZeroImpedanceBranch.
[[nodiscard]] YBus build_ybus(const NetworkCase& network);

/// Demotes PV buses without an in-service generator to PQ, then orders the
/// unknowns. Throws NoSlack.
[[nodiscard]] StateIndexing index_states(const NetworkCase& network);

}  // namespace sicnm
