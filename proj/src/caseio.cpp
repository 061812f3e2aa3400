#include "sicnm/caseio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sicnm/error.hpp"

namespace sicnm {

namespace {

// Minimum column counts of the MATPOWER v2 matrices that carry the fields we
// read. Trailing columns (ratings, OPF results, ...) are ignored.
constexpr std::size_t kBusCols = 13;
constexpr std::size_t kGenCols = 8;
constexpr std::size_t kBranchCols = 11;

struct NumericMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<int> lines;  // source line of each row
};

std::optional<double> parse_number(std::string_view tok) {
    if (tok.empty()) return std::nullopt;
    bool negative = false;
    std::string_view body = tok;
    if (body.front() == '+' || body.front() == '-') {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    if (body == "Inf" || body == "inf") {
        const double inf = std::numeric_limits<double>::infinity();
        return negative ? -inf : inf;
    }
    if (body.empty() || !(std::isdigit(static_cast<unsigned char>(body.front())) || body.front() == '.')) {
        return std::nullopt;
    }
    double value = 0.0;
    const auto* first = body.data();
    const auto* last = body.data() + body.size();
    auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::general);
    if (ec != std::errc() || ptr != last || std::isnan(value)) return std::nullopt;
    return negative ? -value : value;
}

class Scanner {
public:
    explicit Scanner(std::string_view text) : text_(text) {}

    [[nodiscard]] bool done() const { return pos_ >= text_.size(); }
    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] char peek() const { return done() ? '\0' : text_[pos_]; }

    char get() {
        char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_comment() {
        while (!done() && peek() != '\n') get();
    }

    // Skips blanks and comments, including newlines.
    void skip_space() {
        while (!done()) {
            char c = peek();
            if (c == '%') {
                skip_comment();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                get();
            } else {
                break;
            }
        }
    }

    // Skips blanks on the current line only.
    void skip_inline_space() {
        while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) get();
    }

    std::string_view identifier() {
        std::size_t start = pos_;
        while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) get();
        return text_.substr(start, pos_ - start);
    }

    void skip_string() {
        get();  // opening quote
        while (!done() && peek() != '\'' && peek() != '\n') get();
        if (!done() && peek() == '\'') get();
    }

    // Skips the remainder of a statement we do not interpret.
    void skip_statement() {
        int depth = 0;
        while (!done()) {
            char c = peek();
            if (c == '%') {
                skip_comment();
                continue;
            }
            if (c == '\'') {
                skip_string();
                continue;
            }
            if (c == '[' || c == '{' || c == '(') ++depth;
            if (c == ']' || c == '}' || c == ')') depth = std::max(0, depth - 1);
            get();
            if (depth == 0 && (c == ';' || c == '\n')) return;
        }
    }

    double scalar_value(std::string_view field) {
        skip_inline_space();
        int at = line_;
        std::size_t start = pos_;
        while (!done() && peek() != ';' && peek() != '\n' && peek() != '%' && peek() != ',') get();
        std::string_view tok = text_.substr(start, pos_ - start);
        while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back()))) tok.remove_suffix(1);
        auto v = parse_number(tok);
        if (!v) {
            throw Error(ErrorCode::MalformedRow,
                        "line " + std::to_string(at) + ": mpc." + std::string(field) + " is not numeric", at);
        }
        skip_statement();
        return *v;
    }

    NumericMatrix matrix_value(std::string_view field) {
        NumericMatrix out;
        const int open_line = line_;
        get();  // '['
        std::vector<double> row;
        int row_line = line_;
        auto finish_row = [&] {
            if (row.empty()) return;
            if (!out.rows.empty() && row.size() != out.rows.front().size()) {
                throw Error(ErrorCode::MalformedRow,
                            "line " + std::to_string(row_line) + ": ragged row in mpc." + std::string(field) + " (" +
                                std::to_string(row.size()) + " columns, expected " +
                                std::to_string(out.rows.front().size()) + ")",
                            row_line);
            }
            out.rows.push_back(std::move(row));
            out.lines.push_back(row_line);
            row.clear();
        };
        while (true) {
            if (done()) {
                throw Error(ErrorCode::MalformedRow,
                            "line " + std::to_string(open_line) + ": unterminated matrix mpc." + std::string(field),
                            open_line);
            }
            char c = peek();
            if (c == ']') {
                get();
                finish_row();
                break;
            }
            if (c == '%') {
                skip_comment();
                continue;
            }
            if (c == ';' || c == '\n') {
                get();
                finish_row();
                row_line = line_;
                continue;
            }
            if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
                get();
                continue;
            }
            std::size_t start = pos_;
            int tok_line = line_;
            while (!done()) {
                char d = peek();
                if (d == ']' || d == ';' || d == ',' || d == '%' || std::isspace(static_cast<unsigned char>(d))) break;
                get();
            }
            std::string_view tok = text_.substr(start, pos_ - start);
            if (tok == "...") {
                skip_comment();
                if (!done()) get();
                continue;
            }
            auto v = parse_number(tok);
            if (!v) {
                throw Error(ErrorCode::MalformedRow,
                            "line " + std::to_string(tok_line) + ": non-numeric token '" + std::string(tok) +
                                "' in mpc." + std::string(field),
                            tok_line);
            }
            if (row.empty()) row_line = tok_line;
            row.push_back(*v);
        }
        skip_statement();
        return out;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

int as_int(double v, std::string_view what, int line) {
    if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > std::numeric_limits<int>::max()) {
        throw Error(ErrorCode::MalformedRow,
                    "line " + std::to_string(line) + ": " + std::string(what) + " must be an integer", line);
    }
    return static_cast<int>(v);
}

void require_columns(const NumericMatrix& m, std::size_t min_cols, std::string_view field) {
    if (!m.rows.empty() && m.rows.front().size() < min_cols) {
        int line = m.lines.front();
        throw Error(ErrorCode::MalformedRow,
                    "line " + std::to_string(line) + ": mpc." + std::string(field) + " needs at least " +
                        std::to_string(min_cols) + " columns",
                    line);
    }
}

BusType bus_type_from(int code, int line) {
    if (code < 1 || code > 3) {
        throw Error(ErrorCode::InvalidCase,
                    "line " + std::to_string(line) + ": bus type " + std::to_string(code) + " not in {1,2,3}", line);
    }
    return static_cast<BusType>(code);
}

}  // namespace

int NetworkCase::bus_index(int id) const noexcept {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

void validate_case(const NetworkCase& network) {
    if (!(network.base_mva > 0.0) || !std::isfinite(network.base_mva)) {
        throw Error(ErrorCode::InvalidCase, "baseMVA must be positive");
    }
    std::set<int> ids;
    int slack_count = 0;
    for (const auto& bus : network.buses) {
        if (!ids.insert(bus.id).second) {
            throw Error(ErrorCode::InvalidCase, "duplicate bus id " + std::to_string(bus.id));
        }
        int code = static_cast<int>(bus.btype);
        if (code < 1 || code > 3) {
            throw Error(ErrorCode::InvalidCase, "bus " + std::to_string(bus.id) + " has invalid type");
        }
        if (bus.btype == BusType::Slack) ++slack_count;
        if (!(bus.vmin > 0.0) || bus.vmax < bus.vmin) {
            throw Error(ErrorCode::InvalidCase, "bus " + std::to_string(bus.id) + " needs vmax >= vmin > 0");
        }
        for (double v : {bus.pd, bus.qd, bus.gs, bus.bs, bus.vm, bus.va}) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::InvalidCase, "bus " + std::to_string(bus.id) + " has a non-finite field");
            }
        }
    }
    if (slack_count == 0) throw Error(ErrorCode::NoSlack, "no bus of type 3");
    if (slack_count > 1) throw Error(ErrorCode::InvalidCase, "more than one slack bus");

    for (const auto& br : network.branches) {
        if (!ids.contains(br.from_bus) || !ids.contains(br.to_bus)) {
            throw Error(ErrorCode::DanglingBranch, "branch " + std::to_string(br.from_bus) + "-" +
                                                       std::to_string(br.to_bus) + " references an unknown bus");
        }
        if (br.status != 0 && br.status != 1) {
            throw Error(ErrorCode::InvalidCase, "branch status must be 0 or 1");
        }
        for (double v : {br.r, br.x, br.b, br.tap, br.shift}) {
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidCase, "branch has a non-finite field");
        }
    }
    for (const auto& gen : network.gens) {
        if (!ids.contains(gen.bus)) {
            throw Error(ErrorCode::InvalidCase, "generator at unknown bus " + std::to_string(gen.bus));
        }
        if (gen.qmax < gen.qmin) {
            throw Error(ErrorCode::InvalidCase, "generator at bus " + std::to_string(gen.bus) + " has qmax < qmin");
        }
        for (double v : {gen.pg, gen.qg, gen.vg}) {
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidCase, "generator has a non-finite field");
        }
    }
}

NetworkCase parse_case(std::string_view text) {
    Scanner sc(text);
    std::optional<double> base_mva;
    std::optional<NumericMatrix> bus, gen, branch;
    std::string name;

    while (true) {
        sc.skip_space();
        if (sc.done()) break;
        char c = sc.peek();
        if (!std::isalpha(static_cast<unsigned char>(c))) {
            sc.skip_statement();
            continue;
        }
        std::string_view word = sc.identifier();
        if (word == "function") {
            // function mpc = caseN
            sc.skip_inline_space();
            std::string_view out = sc.identifier();
            sc.skip_inline_space();
            if (!out.empty() && sc.peek() == '=') {
                sc.get();
                sc.skip_inline_space();
                name = std::string(sc.identifier());
            }
            sc.skip_statement();
            continue;
        }
        if (word != "mpc" || sc.peek() != '.') {
            sc.skip_statement();
            continue;
        }
        sc.get();
        std::string_view field = sc.identifier();
        sc.skip_inline_space();
        if (sc.peek() != '=') {
            sc.skip_statement();
            continue;
        }
        sc.get();
        sc.skip_space();
        const bool is_matrix = sc.peek() == '[';
        if (field == "baseMVA") {
            base_mva = sc.scalar_value(field);
        } else if ((field == "bus" || field == "gen" || field == "branch") && is_matrix) {
            NumericMatrix m = sc.matrix_value(field);
            if (field == "bus") bus = std::move(m);
            if (field == "gen") gen = std::move(m);
            if (field == "branch") branch = std::move(m);
        } else {
            sc.skip_statement();
        }
    }

    if (!base_mva) throw Error(ErrorCode::MissingSection, "mpc.baseMVA not found");
    if (!bus) throw Error(ErrorCode::MissingSection, "mpc.bus not found");
    if (!gen) throw Error(ErrorCode::MissingSection, "mpc.gen not found");
    if (!branch) throw Error(ErrorCode::MissingSection, "mpc.branch not found");
    require_columns(*bus, kBusCols, "bus");
    require_columns(*gen, kGenCols, "gen");
    require_columns(*branch, kBranchCols, "branch");

    NetworkCase out;
    out.name = name;
    out.base_mva = *base_mva;
    out.buses.reserve(bus->rows.size());
    for (std::size_t i = 0; i < bus->rows.size(); ++i) {
        const auto& r = bus->rows[i];
        int line = bus->lines[i];
        BusRecord b;
        b.id = as_int(r[0], "bus id", line);
        b.btype = bus_type_from(as_int(r[1], "bus type", line), line);
        b.pd = r[2];
        b.qd = r[3];
        b.gs = r[4];
        b.bs = r[5];
        b.vm = r[7];
        b.va = r[8];
        b.base_kv = r[9];
        b.vmax = r[11];
        b.vmin = r[12];
        out.buses.push_back(b);
    }
    for (std::size_t i = 0; i < gen->rows.size(); ++i) {
        const auto& r = gen->rows[i];
        int line = gen->lines[i];
        GenRecord g;
        g.bus = as_int(r[0], "gen bus", line);
        g.pg = r[1];
        g.qg = r[2];
        g.qmax = r[3];
        g.qmin = r[4];
        g.vg = r[5];
        g.status = as_int(r[7], "gen status", line);
        out.gens.push_back(g);
    }
    for (std::size_t i = 0; i < branch->rows.size(); ++i) {
        const auto& r = branch->rows[i];
        int line = branch->lines[i];
        BranchRecord br;
        br.from_bus = as_int(r[0], "branch from bus", line);
        br.to_bus = as_int(r[1], "branch to bus", line);
        br.r = r[2];
        br.x = r[3];
        br.b = r[4];
        br.tap = r[8] == 0.0 ? 1.0 : r[8];
        br.shift = r[9];
        br.status = as_int(r[10], "branch status", line);
        out.branches.push_back(br);
    }
    validate_case(out);
    return out;
}

namespace {

using nlohmann::json;

json number(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "Inf" : "-Inf";
}

double read_number(const json& row, const char* key) {
    if (!row.is_object() || !row.contains(key)) {
        throw Error(ErrorCode::MalformedRow, std::string("missing field '") + key + "'");
    }
    const json& v = row.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s == "Inf") return std::numeric_limits<double>::infinity();
        if (s == "-Inf") return -std::numeric_limits<double>::infinity();
    }
    throw Error(ErrorCode::MalformedRow, std::string("field '") + key + "' is not numeric");
}

int read_int(const json& row, const char* key) {
    double v = read_number(row, key);
    if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > std::numeric_limits<int>::max()) {
        throw Error(ErrorCode::MalformedRow, std::string("field '") + key + "' must be an integer");
    }
    return static_cast<int>(v);
}

const json& section(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
        throw Error(ErrorCode::MissingSection, std::string("JSON has no array '") + key + "'");
    }
    return doc.at(key);
}

}  // namespace

std::string write_case_json(const NetworkCase& network) {
    json doc;
    doc["name"] = network.name;
    doc["base_mva"] = number(network.base_mva);
    json buses = json::array();
    for (const auto& b : network.buses) {
        buses.push_back({{"id", b.id},
                         {"btype", static_cast<int>(b.btype)},
                         {"pd", number(b.pd)},
                         {"qd", number(b.qd)},
                         {"gs", number(b.gs)},
                         {"bs", number(b.bs)},
                         {"vm", number(b.vm)},
                         {"va", number(b.va)},
                         {"base_kv", number(b.base_kv)},
                         {"vmax", number(b.vmax)},
                         {"vmin", number(b.vmin)}});
    }
    json branches = json::array();
    for (const auto& br : network.branches) {
        branches.push_back({{"from_bus", br.from_bus},
                            {"to_bus", br.to_bus},
                            {"r", number(br.r)},
                            {"x", number(br.x)},
                            {"b", number(br.b)},
                            {"tap", number(br.tap)},
                            {"shift", number(br.shift)},
                            {"status", br.status}});
    }
    json gens = json::array();
    for (const auto& g : network.gens) {
        gens.push_back({{"bus", g.bus},
                        {"pg", number(g.pg)},
                        {"qg", number(g.qg)},
                        {"qmax", number(g.qmax)},
                        {"qmin", number(g.qmin)},
                        {"vg", number(g.vg)},
                        {"status", g.status}});
    }
    doc["buses"] = std::move(buses);
    doc["branches"] = std::move(branches);
    doc["gens"] = std::move(gens);
    return doc.dump(2) + "\n";
}

NetworkCase parse_case_json(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw Error(ErrorCode::MalformedRow, "document is not a JSON object");
    }
    NetworkCase out;
    if (doc.contains("name") && doc.at("name").is_string()) out.name = doc.at("name").get<std::string>();
    if (!doc.contains("base_mva")) throw Error(ErrorCode::MissingSection, "JSON has no 'base_mva'");
    out.base_mva = read_number(doc, "base_mva");

    for (const auto& row : section(doc, "buses")) {
        BusRecord b;
        b.id = read_int(row, "id");
        b.btype = bus_type_from(read_int(row, "btype"), 0);
        b.pd = read_number(row, "pd");
        b.qd = read_number(row, "qd");
        b.gs = read_number(row, "gs");
        b.bs = read_number(row, "bs");
        b.vm = read_number(row, "vm");
        b.va = read_number(row, "va");
        b.base_kv = read_number(row, "base_kv");
        b.vmax = read_number(row, "vmax");
        b.vmin = read_number(row, "vmin");
        out.buses.push_back(b);
    }
    for (const auto& row : section(doc, "branches")) {
        BranchRecord br;
        br.from_bus = read_int(row, "from_bus");
        br.to_bus = read_int(row, "to_bus");
        br.r = read_number(row, "r");
        br.x = read_number(row, "x");
        br.b = read_number(row, "b");
        br.tap = read_number(row, "tap");
        if (br.tap == 0.0) br.tap = 1.0;
        br.shift = read_number(row, "shift");
        br.status = read_int(row, "status");
        out.branches.push_back(br);
    }
    for (const auto& row : section(doc, "gens")) {
        GenRecord g;
        g.bus = read_int(row, "bus");
        g.pg = read_number(row, "pg");
        g.qg = read_number(row, "qg");
        g.qmax = read_number(row, "qmax");
        g.qmin = read_number(row, "qmin");
        g.vg = read_number(row, "vg");
        g.status = read_int(row, "status");
        out.gens.push_back(g);
    }
    validate_case(out);
    return out;
}

NetworkCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open case file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    NetworkCase network = path.extension() == ".json" ? parse_case_json(text) : parse_case(text);
    if (network.name.empty()) network.name = path.stem().string();
    return network;
}

}  // namespace sicnm
