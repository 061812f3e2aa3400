#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sicnm/solvers.hpp"

namespace sicnm {

struct PerturbSpec {
    double fraction_of_buses = 0.5;
    double angle_lo = -0.005;  // rad
    double angle_hi = 0.005;
    double sigma = 0.0025;     // std-dev of the normal draw before clipping
    int runs = 100;
    int iter_cap = 40;
};

struct ExperimentSpec {
    std::vector<std::string> cases;
    std::vector<std::string> methods;
    std::map<std::string, nlohmann::json> opts;  // per method id: partial SolverOptions
    std::uint64_t seed = 0;
    InitMode init = InitMode::Flat;
    bool enforce_q_limits = false;
    std::optional<PerturbSpec> perturb;

    /// Throws InvalidArgument on unknown methods or bad perturbation bounds.
    void validate() const;
};

/// Parses the JSON spec. Relative case paths are resolved against `base_dir`.
[[nodiscard]] ExperimentSpec parse_experiment_spec(std::string_view text, const std::filesystem::path& base_dir = {});
[[nodiscard]] ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// Overwrites the fields present in `j` (SolverOptions field names).
/// Throws InvalidArgument for unknown keys or non-numeric values.
void apply_options(SolverOptions& opts, const nlohmann::json& j);

/// Options for `method` under `spec`: `base` then the spec overrides.
[[nodiscard]] SolverOptions options_for(const ExperimentSpec& spec, const std::string& method, SolverOptions base);

struct CellResult {
    std::string case_name;
    std::string method;
    std::optional<std::string> error;  // set when the cell could not run
    SolveReport report;
};

struct LimitRunRecord {
    std::string case_name;
    std::string method;
    int run = 0;
    SolveStatus status = SolveStatus::MaxIter;
    long iterations = 0;
    double wall_time = 0.0;
};

struct LimitSummary {
    std::string case_name;
    std::string method;
    int runs = 0;
    int converged = 0;
    double convergence_rate = 0.0;
    double mean_iterations = 0.0;  // over converged runs, 0 when none
    double mean_time = 0.0;
};

struct BenchReport {
    std::vector<CellResult> cells;
    std::vector<LimitRunRecord> runs;
    std::vector<LimitSummary> limits;
};

/// SICNM_THREADS when set and positive, otherwise the hardware concurrency.
[[nodiscard]] int bench_threads();

/// Every method on every case. Cell failures are recorded, never thrown.
[[nodiscard]] BenchReport run_comparison(const ExperimentSpec& spec, int threads = 0);

/// Randomized angle perturbations around the case values. Requires
/// spec.perturb. Deterministic for a given spec and seed.
[[nodiscard]] BenchReport run_limit_test(const ExperimentSpec& spec, int threads = 0);

/// Case with a seeded random subset of non-slack bus angles perturbed.
[[nodiscard]] NetworkCase perturb_case(const NetworkCase& network, const PerturbSpec& p, std::uint64_t seed, int run);

/// Summaries recomputed from the per-run records.
[[nodiscard]] std::vector<LimitSummary> summarize_runs(const std::vector<LimitRunRecord>& runs);

/// Mean iterations of methods a and b over runs where both converged.
[[nodiscard]] std::pair<double, double> joint_mean_iterations(const BenchReport& report, const std::string& case_name,
                                                              const std::string& a, const std::string& b);

/// Table cell text: "D." diverged, "NC." not convergent, "SING." singular,
/// "ERR" for cells that could not run, otherwise "iters(time s)".
[[nodiscard]] std::string cell_label(const CellResult& cell);

[[nodiscard]] nlohmann::json to_json(const EvalCounters& c);
[[nodiscard]] nlohmann::json to_json(const SolveReport& r, bool include_state = true);
[[nodiscard]] nlohmann::json to_json(const BenchReport& r, bool include_times = true);

/// Columns iter,err_inf,h,accepted.
[[nodiscard]] std::string trace_csv(const IterationTrace& trace);
void emit_trace_csv(const IterationTrace& trace, const std::filesystem::path& path);

/// {"series": [{"case", "method", "iter": [...], "err_inf": [...], "h": [...], "accepted": [...]}]}
[[nodiscard]] nlohmann::json trace_series(const std::vector<CellResult>& cells);

/// Writes one CSV per cell plus series.json into `dir`.
void emit_traces(const std::vector<CellResult>& cells, const std::filesystem::path& dir);

[[nodiscard]] std::string summary_table_text(const BenchReport& report);
[[nodiscard]] std::string summary_table_csv(const BenchReport& report);

/// Locale-independent shortest round-trip formatting.
[[nodiscard]] std::string format_number(double v);

}  // namespace sicnm
