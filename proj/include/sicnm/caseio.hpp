#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sicnm {

enum class BusType : int { PQ = 1, PV = 2, Slack = 3 };

struct BusRecord {
    int id = 0;
    BusType btype = BusType::PQ;
    double pd = 0.0;  // MW
    double qd = 0.0;  // MVAr
    double gs = 0.0;  // MW at V = 1 p.u.
    double bs = 0.0;  // MVAr at V = 1 p.u.
    double vm = 1.0;  // p.u.
    double va = 0.0;  // degrees
    double base_kv = 0.0;
    double vmax = 1.1;
    double vmin = 0.9;

    bool operator==(const BusRecord&) const = default;
};

struct BranchRecord {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;      // total line charging, p.u.
    double tap = 1.0;    // off-nominal ratio, 0 in the file is stored as 1
    double shift = 0.0;  // degrees
    int status = 1;

    bool operator==(const BranchRecord&) const = default;
};

struct GenRecord {
    int bus = 0;
    double pg = 0.0;  // MW
    double qg = 0.0;  // MVAr
    double qmax = 0.0;
    double qmin = 0.0;
    double vg = 1.0;  // p.u. setpoint
    int status = 1;

    [[nodiscard]] bool in_service() const noexcept { return status > 0; }
    bool operator==(const GenRecord&) const = default;
};

/// Bus/branch/generator model in MATPOWER units (MW, MVAr, p.u. voltages,
/// degrees). Per-unit scaling by `base_mva` happens during assembly.
struct NetworkCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<BusRecord> buses;
    std::vector<BranchRecord> branches;
    std::vector<GenRecord> gens;

    bool operator==(const NetworkCase&) const = default;

    /// Position of bus `id` in `buses`, or -1.
    [[nodiscard]] int bus_index(int id) const noexcept;
};

/// Parse the numeric subset of a MATPOWER case document.
/// Throws sicnm::Error with MissingSection, MalformedRow, NoSlack,
/// DanglingBranch or InvalidCase.
[[nodiscard]] NetworkCase parse_case(std::string_view text);

[[nodiscard]] std::string write_case_json(const NetworkCase& network);
[[nodiscard]] NetworkCase parse_case_json(std::string_view text);

/// Dispatches on extension: `.json` uses the JSON mirror, anything else is
/// read as a MATPOWER `.m` document. Throws Io when the file is unreadable.
[[nodiscard]] NetworkCase load_case(const std::filesystem::path& path);

/// Checks every structural invariant; throws on the first violation.
void validate_case(const NetworkCase& network);

}  // namespace sicnm
