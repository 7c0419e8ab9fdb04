#include "gridshield/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <utility>

namespace gridshield {

std::string_view to_string(BusKind kind) {
    return kind == BusKind::Generator ? "generator" : "load";
}

BusKind bus_kind_from_string(std::string_view text) {
    if (text == "generator" || text == "gen") return BusKind::Generator;
    if (text == "load") return BusKind::Load;
    throw ParseError("unknown bus kind '" + std::string(text) + "'");
}

bool is_connected(std::size_t bus_count, std::span<const Line> lines) {
    if (bus_count == 0) return false;
    std::vector<std::size_t> parent(bus_count);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::size_t components = bus_count;
    for (const auto& line : lines) {
        auto a = find(line.from);
        auto b = find(line.to);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Line> lines,
                           std::size_t reference_bus, BalancePolicy balance)
    : buses_(std::move(buses)), reference_(reference_bus) {
    const std::size_t n = buses_.size();
    if (n == 0) throw TopologyError("network has no buses");
    if (reference_ >= n) throw TopologyError("reference bus out of range");

    std::map<int, std::size_t> ids;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = buses_[i];
        if (!ids.emplace(b.id, i).second)
            throw DomainError("duplicate bus id " + std::to_string(b.id));
        if (!(b.v > 0.0)) throw DomainError("bus " + std::to_string(b.id) + ": voltage must be positive");
        if (!(b.inertia > 0.0)) throw DomainError("bus " + std::to_string(b.id) + ": inertia must be positive");
        if (!(b.damping >= 0.0)) throw DomainError("bus " + std::to_string(b.id) + ": damping must be nonnegative");
        if (!std::isfinite(b.p)) throw DomainError("bus " + std::to_string(b.id) + ": injection is not finite");
    }

    // Merge parallel lines, keyed by unordered endpoints, in first-seen order.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
    for (auto line : lines) {
        if (line.from >= n || line.to >= n) throw TopologyError("line endpoint out of range");
        if (line.from == line.to) throw TopologyError("line connects a bus to itself");
        if (!(line.susceptance > 0.0)) throw DomainError("line susceptance must be positive");
        if (!(line.relay_limit > 0.0) || line.relay_limit > std::numbers::pi / 2 + 1e-15)
            throw DomainError("line relay limit must lie in (0, pi/2]");
        auto key = std::minmax(line.from, line.to);
        auto [it, inserted] = seen.emplace(key, lines_.size());
        if (inserted) {
            lines_.push_back(line);
        } else {
            auto& merged = lines_[it->second];
            merged.susceptance += line.susceptance;
            merged.relay_limit = std::min(merged.relay_limit, line.relay_limit);
        }
    }

    if (!is_connected(n, lines_)) throw TopologyError("network graph is not connected");

    const double residual = injection_sum();
    switch (balance) {
    case BalancePolicy::Require:
        if (std::abs(residual) >= kBalanceTolerance)
            throw DomainError("injections are not balanced (sum p = " + std::to_string(residual) + ")");
        break;
    case BalancePolicy::AssignToReference:
        // Already-balanced input is left untouched so JSON round trips are exact.
        if (std::abs(residual) >= kBalanceTolerance) buses_[reference_].p -= residual;
        break;
    case BalancePolicy::Allow:
        break;
    }

    coupling_.reserve(lines_.size());
    for (const auto& line : lines_)
        coupling_.push_back(line.susceptance * buses_[line.from].v * buses_[line.to].v);

    std::vector<std::size_t> degree(n, 0);
    for (const auto& line : lines_) {
        ++degree[line.from];
        ++degree[line.to];
    }
    adjacency_offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) adjacency_offsets_[i + 1] = adjacency_offsets_[i] + degree[i];
    adjacency_.resize(adjacency_offsets_[n]);
    std::vector<std::size_t> fill(adjacency_offsets_.begin(), adjacency_offsets_.end() - 1);
    for (std::size_t l = 0; l < lines_.size(); ++l) {
        adjacency_[fill[lines_[l].from]++] = {lines_[l].to, l};
        adjacency_[fill[lines_[l].to]++] = {lines_[l].from, l};
    }
}

std::span<const Incidence> PowerNetwork::neighbors(std::size_t i) const {
    return std::span<const Incidence>(adjacency_).subspan(
        adjacency_offsets_.at(i), adjacency_offsets_.at(i + 1) - adjacency_offsets_[i]);
}

std::size_t PowerNetwork::index_of(int id) const {
    for (std::size_t i = 0; i < buses_.size(); ++i)
        if (buses_[i].id == id) return i;
    throw DomainError("no bus with id " + std::to_string(id));
}

bool PowerNetwork::has_bus(int id) const noexcept {
    return std::any_of(buses_.begin(), buses_.end(), [id](const Bus& b) { return b.id == id; });
}

double PowerNetwork::injection_sum() const noexcept {
    double s = 0.0;
    for (const auto& b : buses_) s += b.p;
    return s;
}

bool PowerNetwork::balanced() const noexcept {
    return std::abs(injection_sum()) < kBalanceTolerance;
}

std::vector<double> PowerNetwork::injections() const {
    std::vector<double> p;
    p.reserve(buses_.size());
    for (const auto& b : buses_) p.push_back(b.p);
    return p;
}

std::vector<double> PowerNetwork::inertias() const {
    std::vector<double> m;
    m.reserve(buses_.size());
    for (const auto& b : buses_) m.push_back(b.inertia);
    return m;
}

PowerNetwork with_relay_limit(const PowerNetwork& net, double relay_limit) {
    std::vector<Line> lines(net.lines().begin(), net.lines().end());
    for (auto& line : lines) line.relay_limit = relay_limit;
    return PowerNetwork({net.buses().begin(), net.buses().end()}, std::move(lines),
                        net.reference_bus(), BalancePolicy::Allow);
}

double relay_limit_from_security(double beta_relay) {
    if (!(beta_relay > 0.5))
        throw DomainError("relay security parameter must exceed 0.5");
    const double raw = 2.0 * std::asin(1.0 / std::sqrt(2.0 * beta_relay));
    return std::min(raw, std::numbers::pi / 2);
}

// ---------------------------------------------------------------------------
// MATPOWER

namespace {

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    for (char c : text) {
        if (c == '\n') in_comment = false;
        else if (c == '%') in_comment = true;
        if (!in_comment) out.push_back(c);
    }
    return out;
}

std::optional<Table> read_table(const std::string& text, std::string_view name) {
    const std::string key = "mpc." + std::string(name);
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        std::size_t after = pos + key.size();
        std::size_t k = after;
        while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) ++k;
        if (k < text.size() && text[k] == '=') break;
        pos = after;
    }
    if (pos == std::string::npos) return std::nullopt;
    const std::size_t open = text.find('[', pos);
    const std::size_t close = text.find(']', open == std::string::npos ? pos : open);
    if (open == std::string::npos || close == std::string::npos)
        throw ParseError("malformed table mpc." + std::string(name));

    Table rows;
    std::vector<double> row;
    auto flush = [&] {
        if (!row.empty()) rows.push_back(std::move(row));
        row.clear();
    };
    std::string token;
    auto take = [&] {
        if (token.empty()) return;
        try {
            std::size_t used = 0;
            double v = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            row.push_back(v);
        } catch (const std::exception&) {
            if (token == "Inf" || token == "inf") row.push_back(HUGE_VAL);
            else if (token == "-Inf" || token == "-inf") row.push_back(-HUGE_VAL);
            else throw ParseError("bad number '" + token + "' in mpc." + std::string(name));
        }
        token.clear();
    };
    for (std::size_t i = open + 1; i < close; ++i) {
        const char c = text[i];
        if (c == ';' || c == '\n' || c == '\r') {
            take();
            flush();
        } else if (c == ' ' || c == '\t' || c == ',') {
            take();
        } else {
            token.push_back(c);
        }
    }
    take();
    flush();
    return rows;
}

double read_scalar(const std::string& text, std::string_view name, double fallback) {
    const std::string key = "mpc." + std::string(name);
    const auto pos = text.find(key);
    if (pos == std::string::npos) return fallback;
    const auto eq = text.find('=', pos);
    const auto end = text.find(';', eq);
    if (eq == std::string::npos || end == std::string::npos) throw ParseError("malformed mpc." + std::string(name));
    try {
        return std::stod(text.substr(eq + 1, end - eq - 1));
    } catch (const std::exception&) {
        throw ParseError("malformed mpc." + std::string(name));
    }
}

const std::vector<double>& need_columns(const std::vector<double>& row, std::size_t count,
                                        std::string_view table) {
    if (row.size() < count)
        throw ParseError("mpc." + std::string(table) + " row has " + std::to_string(row.size()) +
                         " columns, need " + std::to_string(count));
    return row;
}

}  // namespace

PowerNetwork parse_matpower(std::string_view text, const DynamicsDefaults& dynamics) {
    MatpowerOptions options;
    options.dynamics = dynamics;
    return parse_matpower(text, options);
}

PowerNetwork parse_matpower(std::string_view raw, const MatpowerOptions& options) {
    const std::string text = strip_comments(raw);
    const double base_mva = read_scalar(text, "baseMVA", 100.0);
    if (!(base_mva > 0.0)) throw ParseError("baseMVA must be positive");

    auto bus_table = read_table(text, "bus");
    auto gen_table = read_table(text, "gen");
    auto branch_table = read_table(text, "branch");
    if (!bus_table || !gen_table || !branch_table)
        throw ParseError("case must define mpc.bus, mpc.gen and mpc.branch");

    // bus_i type Pd Qd Gs Bs area Vm
    std::vector<Bus> buses;
    std::map<int, std::size_t> index;
    std::optional<std::size_t> reference;
    for (const auto& raw_row : *bus_table) {
        const auto& row = need_columns(raw_row, 8, "bus");
        const int type = static_cast<int>(row[1]);
        if (type == 4) continue;  // isolated
        Bus b;
        b.id = static_cast<int>(row[0]);
        b.p = -row[2] / base_mva;
        b.v = row[7];
        if (!index.emplace(b.id, buses.size()).second)
            throw ParseError("duplicate bus id " + std::to_string(b.id));
        if (type == 3 && !reference) reference = buses.size();
        buses.push_back(b);
    }
    if (buses.empty()) throw ParseError("case has no buses");

    // bus Pg
    for (const auto& raw_row : *gen_table) {
        const auto& row = need_columns(raw_row, 2, "gen");
        auto it = index.find(static_cast<int>(row[0]));
        if (it == index.end()) continue;
        auto& b = buses[it->second];
        b.kind = BusKind::Generator;
        b.p += row[1] / base_mva;
    }

    const auto& sidecar = options.sidecar;
    for (auto& b : buses) {
        const bool gen = b.kind == BusKind::Generator;
        b.inertia = gen ? options.dynamics.generator_inertia : options.dynamics.load_inertia;
        b.damping = gen ? options.dynamics.generator_damping : options.dynamics.load_damping;
        if (sidecar.is_object()) {
            auto it = sidecar.find(std::to_string(b.id));
            if (it != sidecar.end()) {
                if (it->contains("M")) b.inertia = it->at("M").get<double>();
                if (it->contains("gamma")) b.damping = it->at("gamma").get<double>();
            }
        }
    }

    // fbus tbus r x b rateA rateB rateC ratio angle status
    std::vector<Line> lines;
    for (const auto& raw_row : *branch_table) {
        const auto& row = need_columns(raw_row, 4, "branch");
        if (row.size() >= 11 && row[10] == 0.0) continue;
        const double x = row[3];
        if (!(x > 0.0))
            throw ParseError("branch " + std::to_string(static_cast<int>(row[0])) + "-" +
                             std::to_string(static_cast<int>(row[1])) + " has nonpositive reactance");
        auto from = index.find(static_cast<int>(row[0]));
        auto to = index.find(static_cast<int>(row[1]));
        if (from == index.end() || to == index.end()) continue;  // touches an isolated bus
        lines.push_back({from->second, to->second, 1.0 / x, options.relay_limit});
    }

    return PowerNetwork(std::move(buses), std::move(lines), reference.value_or(0),
                        BalancePolicy::AssignToReference);
}

// ---------------------------------------------------------------------------
// JSON

PowerNetwork parse_json_case(const nlohmann::json& doc) {
    try {
        std::vector<Bus> buses;
        std::map<int, std::size_t> index;
        for (const auto& jb : doc.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
            b.p = jb.at("p").get<double>();
            b.v = jb.value("v", 1.0);
            b.inertia = jb.at("M").get<double>();
            b.damping = jb.value("gamma", 0.0);
            index.emplace(b.id, buses.size());
            buses.push_back(b);
        }
        auto lookup = [&](int id) {
            auto it = index.find(id);
            if (it == index.end()) throw ParseError("line references unknown bus " + std::to_string(id));
            return it->second;
        };
        std::vector<Line> lines;
        for (const auto& jl : doc.at("lines")) {
            Line l;
            l.from = lookup(jl.at("from").get<int>());
            l.to = lookup(jl.at("to").get<int>());
            l.susceptance = jl.at("b").get<double>();
            l.relay_limit = jl.value("theta_max", std::numbers::pi / 2);
            lines.push_back(l);
        }
        const std::size_t ref = lookup(doc.at("reference_bus").get<int>());
        return PowerNetwork(std::move(buses), std::move(lines), ref, BalancePolicy::AssignToReference);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON case: ") + e.what());
    }
}

PowerNetwork parse_json_case(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    return parse_json_case(doc);
}

nlohmann::json to_json(const PowerNetwork& net) {
    nlohmann::json doc;
    auto& jbuses = doc["buses"] = nlohmann::json::array();
    for (const auto& b : net.buses()) {
        jbuses.push_back({{"id", b.id},
                          {"kind", to_string(b.kind)},
                          {"p", b.p},
                          {"v", b.v},
                          {"M", b.inertia},
                          {"gamma", b.damping}});
    }
    auto& jlines = doc["lines"] = nlohmann::json::array();
    for (const auto& l : net.lines()) {
        jlines.push_back({{"from", net.bus(l.from).id},
                          {"to", net.bus(l.to).id},
                          {"b", l.susceptance},
                          {"theta_max", l.relay_limit}});
    }
    doc["reference_bus"] = net.bus(net.reference_bus()).id;
    return doc;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PowerNetwork load_case(const std::filesystem::path& path, const MatpowerOptions& options) {
    const std::string text = read_text_file(path);
    if (path.extension() == ".m") return parse_matpower(text, options);
    return parse_json_case(std::string_view(text));
}

}  // namespace gridshield
