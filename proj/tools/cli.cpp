#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <complex>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "sicnm/bench.hpp"
#include "sicnm/error.hpp"

namespace sicnm::cli {

namespace {

using nlohmann::json;

struct Overrides {
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<double> h0;
    std::optional<double> atol;
    std::optional<double> rtol;

    void apply(SolverOptions& o) const {
        if (tol) o.tol = *tol;
        if (max_iter) o.max_iter = *max_iter;
        if (h0) o.h0 = *h0;
        if (atol) o.atol = *atol;
        if (rtol) o.rtol = *rtol;
    }

    [[nodiscard]] json as_json() const {
        json j = json::object();
        if (tol) j["tol"] = *tol;
        if (max_iter) j["max_iter"] = *max_iter;
        if (h0) j["h0"] = *h0;
        if (atol) j["atol"] = *atol;
        if (rtol) j["rtol"] = *rtol;
        return j;
    }
};

struct Config {
    std::string case_path;
    std::vector<std::string> methods;
    Overrides overrides;
    bool enforce_q_limits = false;
    std::string init = "flat";
    std::optional<std::uint64_t> seed;
    std::string trace_path;
    std::string report_path;
    std::string spec_path;
    std::string csv_path;
    std::string tableau;
    bool quiet = false;
};

void add_solver_flags(CLI::App* cmd, Config& cfg) {
    cmd->add_option("--case", cfg.case_path, "Case file (MATPOWER .m or .json)")->required();
    cmd->add_option("--tol", cfg.overrides.tol, "Mismatch infinity-norm tolerance (default 1e-5)");
    cmd->add_option("--max-iter", cfg.overrides.max_iter, "Iteration / accepted-step limit (default 1000)");
    cmd->add_option("--h0", cfg.overrides.h0, "Initial step size (method default when omitted)");
    cmd->add_option("--atol", cfg.overrides.atol, "Absolute tolerance of the embedded step control (default 0.1)");
    cmd->add_option("--rtol", cfg.overrides.rtol, "Relative tolerance of the embedded step control (default 0.1)");
    cmd->add_flag("--enforce-q-limits", cfg.enforce_q_limits,
                  "Convert PV buses violating generator Q limits to PQ and re-solve");
    cmd->add_option("--init", cfg.init, "Initial point: flat or case")->check(CLI::IsMember({"flat", "case"}));
    cmd->add_option("--report", cfg.report_path, "Write the JSON report here instead of stdout");
}

std::string sci(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 3);
    return std::string(buf, res.ptr);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    f << text;
}

// Case-level message with the file name prepended, `path:line: ...` for parse errors.
std::string describe(const Error& e, const std::string& path) {
    std::string where = path.empty() ? "" : path + ":";
    if (e.line() > 0) where += std::to_string(e.line()) + ":";
    return where.empty() ? e.what() : where + " " + e.what();
}

SolveReport solve_case(const NetworkCase& network, Method m, const SolverOptions& opts, InitMode init,
                       bool q_limits, json& extra) {
    if (q_limits) {
        auto inner = [&](const PfProblem& p, const StateVector& y) { return solve(m, p, y, opts); };
        QLimitResult q = enforce_q_limits(inner, network, init);
        extra["q_limits"] = {{"solves", q.solves},
                             {"converted_buses", q.converted_buses},
                             {"cycle_detected", q.cycle_detected}};
        q.report.method = std::string(method_id(m));
        return q.report;
    }
    const PfProblem prob = make_problem(network);
    return solve(m, prob, initial_state(prob, network, init), opts);
}

InitMode init_mode(const std::string& s) { return s == "case" ? InitMode::CaseValues : InitMode::Flat; }

int exit_for(SolveStatus s) { return s == SolveStatus::Converged ? kOk : kNotConverged; }

int cmd_run(const Config& cfg, std::ostream& out) {
    const NetworkCase network = load_case(cfg.case_path);
    const Method m = parse_method(cfg.methods.empty() ? "m8-rodas3d" : cfg.methods.front());
    SolverOptions opts = default_options(m);
    cfg.overrides.apply(opts);
    opts.validate();

    json extra = json::object();
    const SolveReport rep = solve_case(network, m, opts, init_mode(cfg.init), cfg.enforce_q_limits, extra);
    json j = to_json(rep);
    j["schema"] = 1;
    j["case"] = network.name;
    j.update(extra);
    if (!cfg.trace_path.empty()) emit_trace_csv(rep.trace, cfg.trace_path);
    if (cfg.report_path.empty()) {
        out << j.dump(2) << "\n";
    } else {
        write_text(cfg.report_path, j.dump(2) + "\n");
        if (!cfg.quiet) {
            out << method_id(m) << " " << to_string(rep.status) << " iterations=" << rep.iterations
                << " final_error=" << format_number(rep.final_error) << "\n";
        }
    }
    return exit_for(rep.status);
}

int cmd_compare(const Config& cfg, std::ostream& out) {
    const NetworkCase network = load_case(cfg.case_path);
    std::vector<std::string> ids = cfg.methods;
    if (ids.empty()) {
        for (Method m : all_methods()) ids.emplace_back(method_id(m));
    }
    BenchReport report;
    bool all_converged = true;
    const std::string name = std::filesystem::path(cfg.case_path).stem().string();
    for (const auto& id : ids) {
        const Method m = parse_method(id);
        SolverOptions opts = default_options(m);
        cfg.overrides.apply(opts);
        opts.validate();
        CellResult cell{name, id, std::nullopt, {}};
        try {
            json extra;
            cell.report = solve_case(network, m, opts, init_mode(cfg.init), cfg.enforce_q_limits, extra);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        all_converged = all_converged && !cell.error && cell.report.converged();
        report.cells.push_back(std::move(cell));
    }
    if (!cfg.quiet) out << summary_table_text(report);
    if (!cfg.report_path.empty()) write_text(cfg.report_path, to_json(report).dump(2) + "\n");
    if (!cfg.csv_path.empty()) write_text(cfg.csv_path, summary_table_csv(report));
    if (!cfg.trace_path.empty()) emit_traces(report.cells, cfg.trace_path);
    return all_converged ? kOk : kNotConverged;
}

int cmd_bench(const Config& cfg, std::ostream& out) {
    ExperimentSpec spec = load_experiment_spec(cfg.spec_path);
    if (cfg.seed) spec.seed = *cfg.seed;
    if (cfg.enforce_q_limits) spec.enforce_q_limits = true;
    const json ov = cfg.overrides.as_json();
    if (!ov.empty()) {
        for (const auto& m : spec.methods) spec.opts[m].update(ov);
    }
    spec.validate();

    BenchReport report = run_comparison(spec);
    if (spec.perturb) {
        BenchReport lim = run_limit_test(spec);
        report.runs = std::move(lim.runs);
        report.limits = std::move(lim.limits);
        for (auto& c : lim.cells) report.cells.push_back(std::move(c));
    }
    if (!cfg.quiet) out << summary_table_text(report);
    if (!cfg.report_path.empty()) write_text(cfg.report_path, to_json(report).dump(2) + "\n");
    if (!cfg.csv_path.empty()) write_text(cfg.csv_path, summary_table_csv(report));
    if (!cfg.trace_path.empty()) emit_traces(report.cells, cfg.trace_path);
    return kOk;
}

int cmd_validate_tableau(const Config& cfg, std::ostream& out) {
    const Tableau tab = tableau_by_name(cfg.tableau);
    const auto residuals = check_order_conditions(tab);
    bool ok = true;
    out << "tableau " << tab.name << " gamma=" << format_number(tab.gamma) << " s=" << tab.s
        << " order=" << tab.order << " embedded_order=" << tab.embedded_order << "\n";
    out << "order conditions (abs residual, limit 1e-12)\n";
    for (const auto& r : residuals) {
        const bool pass = r.residual <= 1e-12;
        ok = ok && pass;
        out << "  " << (pass ? "ok   " : "FAIL ") << sci(r.residual) << "  " << r.label << "\n";
    }
    out << "stability function |R(z)|\n";
    const std::vector<std::complex<double>> samples = {{-1.0, 0.0}, {-10.0, 0.0}, {-1e2, 0.0}, {-1e4, 0.0},
                                                       {-1e8, 0.0}, {1e8, 0.0},   {0.0, 1e8},   {-1e8, 1e8}};
    for (const auto& z : samples) {
        out << "  z=" << format_number(z.real()) << (z.imag() < 0 ? "" : "+") << format_number(z.imag())
            << "i  |R|=" << sci(std::abs(stability_function(tab, z))) << "\n";
    }
    const double r_inf = std::abs(stability_function(tab, std::complex<double>(-1e8, 0.0)));
    const bool stable = r_inf <= 1e-5;
    ok = ok && stable;
    out << (stable ? "ok   " : "FAIL ") << "|R(-1e8)| = " << sci(r_inf) << " (limit 1e-5)\n";
    out << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kOk : kNotConverged;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Power-flow solvers built on continuous Newton methods and Rosenbrock integration", "sicnm"};
    app.require_subcommand(1);
    Config cfg;

    auto* run_cmd = app.add_subcommand("run", "Solve one case with one method");
    add_solver_flags(run_cmd, cfg);
    run_cmd->add_option("--method", cfg.methods, "Method id: m1 m2 m3 m7-jh m7-j m7-j1 m7-j0 m8-rodas4 m8-rodas3d")
        ->expected(1);
    run_cmd->add_option("--trace", cfg.trace_path, "Write the iteration trace CSV here");
    run_cmd->add_flag("-q,--quiet", cfg.quiet, "Suppress the summary line");

    auto* cmp_cmd = app.add_subcommand("compare", "Solve one case with several methods and print a table");
    add_solver_flags(cmp_cmd, cfg);
    cmp_cmd->add_option("--method", cfg.methods, "Method ids to compare (repeatable; default all)");
    cmp_cmd->add_option("--trace", cfg.trace_path, "Directory for per-method trace CSVs and series.json");
    cmp_cmd->add_option("--csv", cfg.csv_path, "Write the summary table as CSV here");
    cmp_cmd->add_flag("-q,--quiet", cfg.quiet, "Suppress the table on stdout");

    auto* bench_cmd = app.add_subcommand("bench", "Run an experiment spec (comparison and optional limit test)");
    bench_cmd->add_option("--spec", cfg.spec_path, "Experiment spec JSON")->required();
    bench_cmd->add_option("--seed", cfg.seed, "Override the spec's master seed");
    bench_cmd->add_option("--tol", cfg.overrides.tol, "Override tol for every method");
    bench_cmd->add_option("--max-iter", cfg.overrides.max_iter, "Override max_iter for every method");
    bench_cmd->add_option("--h0", cfg.overrides.h0, "Override h0 for every method");
    bench_cmd->add_option("--atol", cfg.overrides.atol, "Override atol for every method");
    bench_cmd->add_option("--rtol", cfg.overrides.rtol, "Override rtol for every method");
    bench_cmd->add_flag("--enforce-q-limits", cfg.enforce_q_limits, "Enforce generator Q limits in every solve");
    bench_cmd->add_option("--report", cfg.report_path, "Write the JSON bench report here");
    bench_cmd->add_option("--csv", cfg.csv_path, "Write the summary table as CSV here");
    bench_cmd->add_option("--trace", cfg.trace_path, "Directory for per-cell trace CSVs and series.json");
    bench_cmd->add_flag("-q,--quiet", cfg.quiet, "Suppress the table on stdout");

    auto* val_cmd = app.add_subcommand("validate-tableau", "Check order conditions and stability of a tableau");
    val_cmd->add_option("name", cfg.tableau, "Tableau name: rodas3d or rodas4")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kInputError;
    }

    try {
        if (*run_cmd) return cmd_run(cfg, out);
        if (*cmp_cmd) return cmd_compare(cfg, out);
        if (*bench_cmd) return cmd_bench(cfg, out);
        if (*val_cmd) return cmd_validate_tableau(cfg, out);
    } catch (const Error& e) {
        const std::string path = *bench_cmd ? cfg.spec_path : cfg.case_path;
        err << "error: " << describe(e, e.code() == ErrorCode::Io ? "" : path) << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

}  // namespace sicnm::cli
