#include "sicnm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "sicnm/error.hpp"

namespace sicnm {

namespace {

using nlohmann::json;

// Runs fn(0..n-1) on up to `threads` workers. Each index writes only its own
// output slot, so scheduling order never shows in the results.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
}

std::string case_label(const std::string& path) { return std::filesystem::path(path).stem().string(); }

SolveReport run_one(const NetworkCase& network, Method m, const SolverOptions& opts, InitMode init, bool q_limits) {
    if (q_limits) {
        auto inner = [&](const PfProblem& p, const StateVector& y) { return solve(m, p, y, opts); };
        SolveReport r = enforce_q_limits(inner, network, init).report;
        r.method = std::string(method_id(m));
        return r;
    }
    const PfProblem prob = make_problem(network);
    return solve(m, prob, initial_state(prob, network, init), opts);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

int threads_or_default(int threads) { return threads > 0 ? threads : bench_threads(); }

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void ExperimentSpec::validate() const {
    for (const auto& m : methods) (void)parse_method(m);
    for (const auto& [m, j] : opts) {
        (void)parse_method(m);
        SolverOptions probe;
        apply_options(probe, j);
    }
    if (perturb) {
        const auto& p = *perturb;
        if (!(p.fraction_of_buses > 0.0 && p.fraction_of_buses <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "fraction_of_buses must lie in (0, 1]");
        }
        if (!(p.angle_lo <= p.angle_hi)) throw Error(ErrorCode::InvalidArgument, "angle_range_rad must be ordered");
        if (!(p.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be non-negative");
        if (p.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be at least 1");
        if (p.iter_cap < 1) throw Error(ErrorCode::InvalidArgument, "iter_cap must be at least 1");
    }
}

void apply_options(SolverOptions& opts, const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "solver options must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw Error(ErrorCode::InvalidArgument, "option '" + key + "' must be a number");
        const double v = value.get<double>();
        if (key == "tol") opts.tol = v;
        else if (key == "max_iter") opts.max_iter = value.get<int>();
        else if (key == "h0") opts.h0 = v;
        else if (key == "atol") opts.atol = v;
        else if (key == "rtol") opts.rtol = v;
        else if (key == "h_min") opts.h_min = v;
        else if (key == "h_max") opts.h_max = v;
        else if (key == "safety") opts.safety = v;
        else if (key == "max_growth") opts.max_growth = v;
        else if (key == "divergence_threshold") opts.divergence_threshold = v;
        else if (key == "inner_max_iter") opts.inner_max_iter = value.get<int>();
        else if (key == "inner_tol") opts.inner_tol = v;
        else throw Error(ErrorCode::InvalidArgument, "unknown option '" + key + "'");
    }
}

SolverOptions options_for(const ExperimentSpec& spec, const std::string& method, SolverOptions base) {
    if (auto it = spec.opts.find(method); it != spec.opts.end()) apply_options(base, it->second);
    return base;
}

ExperimentSpec parse_experiment_spec(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("spec is not valid JSON: ") + e.what());
    }
    ExperimentSpec spec;
    try {
        for (const auto& c : j.at("cases")) {
            std::filesystem::path p = c.get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            spec.cases.push_back(p.string());
        }
        if (j.contains("methods")) {
            spec.methods = j.at("methods").get<std::vector<std::string>>();
        } else {
            for (Method m : all_methods()) spec.methods.emplace_back(method_id(m));
        }
        if (j.contains("opts")) {
            for (const auto& [k, v] : j.at("opts").items()) spec.opts[k] = v;
        }
        spec.seed = j.value("seed", std::uint64_t{0});
        const std::string init = j.value("init", std::string("flat"));
        if (init == "flat") spec.init = InitMode::Flat;
        else if (init == "case") spec.init = InitMode::CaseValues;
        else throw Error(ErrorCode::InvalidArgument, "init must be \"flat\" or \"case\"");
        spec.enforce_q_limits = j.value("enforce_q_limits", false);
        if (j.contains("perturb") && !j.at("perturb").is_null()) {
            const auto& pj = j.at("perturb");
            PerturbSpec p;
            p.fraction_of_buses = pj.value("fraction_of_buses", p.fraction_of_buses);
            if (pj.contains("angle_range_rad")) {
                const auto r = pj.at("angle_range_rad").get<std::vector<double>>();
                if (r.size() != 2) throw Error(ErrorCode::InvalidArgument, "angle_range_rad needs two numbers");
                p.angle_lo = r[0];
                p.angle_hi = r[1];
            }
            p.sigma = pj.value("sigma", p.sigma);
            p.runs = pj.value("runs", p.runs);
            p.iter_cap = pj.value("iter_cap", p.iter_cap);
            spec.perturb = p;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("bad spec field: ") + e.what());
    }
    spec.validate();
    return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    return parse_experiment_spec(read_file(path), path.parent_path());
}

int bench_threads() {
    if (const char* env = std::getenv("SICNM_THREADS")) {
        int v = 0;
        const std::string_view s(env);
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec == std::errc() && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

BenchReport run_comparison(const ExperimentSpec& spec, int threads) {
    spec.validate();
    BenchReport out;
    const std::size_t nm = spec.methods.size();
    out.cells.resize(spec.cases.size() * nm);

    // Cases are parsed once; a parse failure marks every cell of that case.
    std::vector<std::optional<NetworkCase>> cases(spec.cases.size());
    std::vector<std::string> load_errors(spec.cases.size());
    for (std::size_t c = 0; c < spec.cases.size(); ++c) {
        try {
            cases[c] = load_case(spec.cases[c]);
        } catch (const std::exception& e) {
            load_errors[c] = e.what();
        }
    }

    parallel_for(out.cells.size(), threads_or_default(threads), [&](std::size_t i) {
        const std::size_t c = i / nm;
        CellResult& cell = out.cells[i];
        cell.case_name = case_label(spec.cases[c]);
        cell.method = spec.methods[i % nm];
        cell.report.method = cell.method;
        if (!cases[c]) {
            cell.error = load_errors[c];
            return;
        }
        try {
            const Method m = parse_method(cell.method);
            cell.report = run_one(*cases[c], m, options_for(spec, cell.method, default_options(m)), spec.init,
                                  spec.enforce_q_limits);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });
    return out;
}

NetworkCase perturb_case(const NetworkCase& network, const PerturbSpec& p, std::uint64_t seed, int run) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run)};
    std::mt19937_64 rng(seq);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < network.buses.size(); ++i) {
        if (network.buses[i].btype != BusType::Slack) candidates.push_back(i);
    }
    const auto count = std::min(
        candidates.size(),
        static_cast<std::size_t>(std::lround(p.fraction_of_buses * static_cast<double>(candidates.size()))));
    std::shuffle(candidates.begin(), candidates.end(), rng);

    NetworkCase out = network;
    std::normal_distribution<double> normal(0.0, p.sigma > 0.0 ? p.sigma : 1.0);
    for (std::size_t k = 0; k < count; ++k) {
        const double draw = p.sigma > 0.0 ? normal(rng) : 0.0;
        const double dtheta = std::clamp(draw, p.angle_lo, p.angle_hi);
        out.buses[candidates[k]].va += dtheta * 180.0 / std::numbers::pi;
    }
    return out;
}

std::vector<LimitSummary> summarize_runs(const std::vector<LimitRunRecord>& runs) {
    std::vector<LimitSummary> out;
    for (const auto& r : runs) {
        auto it = std::find_if(out.begin(), out.end(), [&](const LimitSummary& s) {
            return s.case_name == r.case_name && s.method == r.method;
        });
        if (it == out.end()) {
            out.push_back({r.case_name, r.method});
            it = std::prev(out.end());
        }
        ++it->runs;
        if (r.status == SolveStatus::Converged) {
            ++it->converged;
            it->mean_iterations += static_cast<double>(r.iterations);
            it->mean_time += r.wall_time;
        }
    }
    for (auto& s : out) {
        s.convergence_rate = s.runs > 0 ? static_cast<double>(s.converged) / s.runs : 0.0;
        if (s.converged > 0) {
            s.mean_iterations /= s.converged;
            s.mean_time /= s.converged;
        }
    }
    return out;
}

BenchReport run_limit_test(const ExperimentSpec& spec, int threads) {
    spec.validate();
    if (!spec.perturb) throw Error(ErrorCode::InvalidArgument, "limit test needs a perturb section");
    const PerturbSpec& p = *spec.perturb;
    BenchReport out;
    const std::size_t nm = spec.methods.size();
    const auto runs = static_cast<std::size_t>(p.runs);

    std::vector<NetworkCase> cases;
    std::vector<std::string> names;
    for (const auto& path : spec.cases) {
        try {
            cases.push_back(load_case(path));
            names.push_back(case_label(path));
        } catch (const std::exception& e) {
            for (const auto& m : spec.methods) {
                CellResult cell{case_label(path), m, std::string(e.what()), {}};
                cell.report.method = m;
                out.cells.push_back(std::move(cell));
            }
        }
    }

    std::vector<Method> methods;
    std::vector<SolverOptions> options;
    for (const auto& m : spec.methods) {
        const Method id = parse_method(m);
        SolverOptions base = default_options(id);
        base.h0 = 0.1;
        SolverOptions o = options_for(spec, m, base);
        o.max_iter = p.iter_cap;
        methods.push_back(id);
        options.push_back(o);
    }

    // One task per (case, run) so every method sees the same perturbation.
    out.runs.resize(cases.size() * runs * nm);
    parallel_for(cases.size() * runs, threads_or_default(threads), [&](std::size_t task) {
        const std::size_t c = task / runs;
        const int run = static_cast<int>(task % runs);
        const NetworkCase perturbed = perturb_case(cases[c], p, spec.seed, run);
        for (std::size_t k = 0; k < nm; ++k) {
            LimitRunRecord& rec = out.runs[task * nm + k];
            rec.case_name = names[c];
            rec.method = spec.methods[k];
            rec.run = run;
            try {
                const SolveReport r =
                    run_one(perturbed, methods[k], options[k], InitMode::CaseValues, spec.enforce_q_limits);
                rec.status = r.status;
                rec.iterations = r.iterations;
                rec.wall_time = r.wall_time;
            } catch (const std::exception&) {
                rec.status = SolveStatus::Diverged;
            }
        }
    });
    out.limits = summarize_runs(out.runs);
    return out;
}

std::pair<double, double> joint_mean_iterations(const BenchReport& report, const std::string& case_name,
                                                 const std::string& a, const std::string& b) {
    std::map<int, long> ia;
    std::map<int, long> ib;
    for (const auto& r : report.runs) {
        if (r.case_name != case_name || r.status != SolveStatus::Converged) continue;
        if (r.method == a) ia[r.run] = r.iterations;
        if (r.method == b) ib[r.run] = r.iterations;
    }
    double sa = 0.0;
    double sb = 0.0;
    int n = 0;
    for (const auto& [run, it] : ia) {
        if (auto jt = ib.find(run); jt != ib.end()) {
            sa += static_cast<double>(it);
            sb += static_cast<double>(jt->second);
            ++n;
        }
    }
    if (n == 0) return {0.0, 0.0};
    return {sa / n, sb / n};
}

std::string cell_label(const CellResult& cell) {
    if (cell.error) return "ERR";
    switch (cell.report.status) {
        case SolveStatus::Diverged: return "D.";
        case SolveStatus::MaxIter: return "NC.";
        case SolveStatus::Singular: return "SING.";
        case SolveStatus::Converged: break;
    }
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, cell.report.wall_time, std::chars_format::fixed, 3);
    return std::to_string(cell.report.iterations) + "(" + std::string(buf, res.ptr) + "s)";
}

json to_json(const EvalCounters& c) {
    return json{{"g_evals", c.g_evals},       {"j_evals", c.j_evals},
                {"hz_evals", c.hz_evals},     {"lu_facts", c.lu_facts},
                {"rejected_steps", c.rejected_steps}, {"accepted_steps", c.accepted_steps},
                {"checks", c.checks}};
}

json to_json(const SolveReport& r, bool include_state) {
    json trace = json::array();
    for (const auto& t : r.trace) {
        trace.push_back({{"iter", t.iter}, {"err_inf", t.err_inf}, {"h", t.h}, {"accepted", t.accepted}});
    }
    json j{{"method", r.method},
           {"status", to_string(r.status)},
           {"iterations", r.iterations},
           {"final_error", r.final_error},
           {"wall_time", r.wall_time},
           {"counters", to_json(r.counters)},
           {"trace", std::move(trace)}};
    if (include_state) j["final_state"] = std::vector<double>(r.final_state.begin(), r.final_state.end());
    return j;
}

json to_json(const BenchReport& r, bool include_times) {
    json cells = json::array();
    for (const auto& c : r.cells) {
        json cj{{"case", c.case_name}, {"method", c.method}};
        if (c.error) {
            cj["error"] = *c.error;
        } else {
            cj["label"] = include_times ? cell_label(c) : std::string(to_string(c.report.status));
            json rep = to_json(c.report, false);
            if (!include_times) rep.erase("wall_time");
            cj["report"] = std::move(rep);
        }
        cells.push_back(std::move(cj));
    }
    json runs = json::array();
    for (const auto& x : r.runs) {
        json rj{{"case", x.case_name}, {"method", x.method}, {"run", x.run},
                {"status", to_string(x.status)}, {"iterations", x.iterations}};
        if (include_times) rj["wall_time"] = x.wall_time;
        runs.push_back(std::move(rj));
    }
    json limits = json::array();
    for (const auto& s : r.limits) {
        json sj{{"case", s.case_name},
                {"method", s.method},
                {"runs", s.runs},
                {"converged", s.converged},
                {"convergence_rate", s.convergence_rate},
                {"mean_iterations", s.mean_iterations}};
        if (include_times) sj["mean_time"] = s.mean_time;
        limits.push_back(std::move(sj));
    }
    return json{{"schema", 1}, {"cells", std::move(cells)}, {"runs", std::move(runs)}, {"limits", std::move(limits)}};
}

std::string trace_csv(const IterationTrace& trace) {
    std::string out = "iter,err_inf,h,accepted\n";
    for (const auto& t : trace) {
        out += std::to_string(t.iter) + "," + format_number(t.err_inf) + "," + format_number(t.h) + "," +
               (t.accepted ? "1" : "0") + "\n";
    }
    return out;
}

void emit_trace_csv(const IterationTrace& trace, const std::filesystem::path& path) {
    write_file(path, trace_csv(trace));
}

json trace_series(const std::vector<CellResult>& cells) {
    json series = json::array();
    for (const auto& c : cells) {
        if (c.error) continue;
        json iter = json::array(), err = json::array(), h = json::array(), acc = json::array();
        for (const auto& t : c.report.trace) {
            iter.push_back(t.iter);
            err.push_back(t.err_inf);
            h.push_back(t.h);
            acc.push_back(t.accepted);
        }
        series.push_back({{"case", c.case_name},
                          {"method", c.method},
                          {"iter", std::move(iter)},
                          {"err_inf", std::move(err)},
                          {"h", std::move(h)},
                          {"accepted", std::move(acc)}});
    }
    return json{{"schema", 1}, {"series", std::move(series)}};
}

void emit_traces(const std::vector<CellResult>& cells, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
    for (const auto& c : cells) {
        if (c.error) continue;
        emit_trace_csv(c.report.trace, dir / (c.case_name + "_" + c.method + ".csv"));
    }
    write_file(dir / "series.json", trace_series(cells).dump(1) + "\n");
}

namespace {

using Row = std::vector<std::string>;

std::vector<Row> cell_rows(const BenchReport& r) {
    std::vector<Row> rows;
    rows.push_back({"case", "method", "result", "status", "iters", "time_s", "final_err", "g_evals", "j_evals",
                    "hz_evals", "lu_facts", "rejected", "accepted"});
    for (const auto& c : r.cells) {
        if (c.error) {
            rows.push_back({c.case_name, c.method, "ERR", "error", "", "", "", "", "", "", "", "", ""});
            continue;
        }
        const auto& k = c.report.counters;
        rows.push_back({c.case_name, c.method, cell_label(c), to_string(c.report.status),
                        std::to_string(c.report.iterations), format_number(c.report.wall_time),
                        format_number(c.report.final_error), std::to_string(k.g_evals), std::to_string(k.j_evals),
                        std::to_string(k.hz_evals), std::to_string(k.lu_facts), std::to_string(k.rejected_steps),
                        std::to_string(k.accepted_steps)});
    }
    return rows;
}

std::vector<Row> limit_rows(const BenchReport& r) {
    std::vector<Row> rows;
    rows.push_back({"case", "method", "runs", "converged", "rate", "mean_iters", "mean_time_s"});
    for (const auto& s : r.limits) {
        rows.push_back({s.case_name, s.method, std::to_string(s.runs), std::to_string(s.converged),
                        format_number(s.convergence_rate), format_number(s.mean_iterations),
                        format_number(s.mean_time)});
    }
    return rows;
}

std::string aligned(const std::vector<Row>& rows) {
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line += "  ";
            line += row[i];
            if (i + 1 < row.size()) line.append(width[i] - row[i].size(), ' ');
        }
        out += line + "\n";
    }
    return out;
}

std::string csv(const std::vector<Row>& rows) {
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += row[i];
        }
        out += "\n";
    }
    return out;
}

}  // namespace

std::string summary_table_text(const BenchReport& report) {
    std::string out;
    if (!report.cells.empty()) out += aligned(cell_rows(report));
    if (!report.limits.empty()) {
        if (!out.empty()) out += "\n";
        out += aligned(limit_rows(report));
    }
    return out;
}

std::string summary_table_csv(const BenchReport& report) {
    std::string out;
    if (!report.cells.empty()) out += csv(cell_rows(report));
    if (!report.limits.empty()) {
        if (!out.empty()) out += "\n";
        out += csv(limit_rows(report));
    }
    return out;
}

}  // namespace sicnm
