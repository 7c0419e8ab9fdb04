#pragma once

#include <cstddef>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridshield/errors.hpp"

namespace gridshield {

enum class BusKind { Generator, Load };

std::string_view to_string(BusKind kind);
BusKind bus_kind_from_string(std::string_view text);

/// A node of the grid. Quantities are per unit on the case MVA base.
struct Bus {
    int id = 0;
    BusKind kind = BusKind::Load;
    double p = 0.0;        ///< net injection, generation minus load
    double v = 1.0;        ///< voltage magnitude, held constant
    double inertia = 1.0;  ///< M_i, per-unit s^2
    double damping = 0.0;  ///< gamma_i, per-unit s

    friend bool operator==(const Bus&, const Bus&) = default;
};

/// Lossless line. `from` and `to` are positions in PowerNetwork::buses().
struct Line {
    std::size_t from = 0;
    std::size_t to = 0;
    double susceptance = 1.0;
    double relay_limit = std::numbers::pi / 2;  ///< radians, in (0, pi/2]

    friend bool operator==(const Line&, const Line&) = default;
};

/// What to do with a nonzero injection sum at construction.
enum class BalancePolicy {
    Require,            ///< |sum p| must be below kBalanceTolerance
    AssignToReference,  ///< the reference bus absorbs the residual
    Allow,              ///< keep as is (fault-on reduced systems)
};

inline constexpr double kBalanceTolerance = 1e-9;

/// Machine parameters for case formats that do not carry them.
struct DynamicsDefaults {
    double generator_inertia = 0.1;
    double load_inertia = 0.001;
    double generator_damping = 0.05;
    double load_damping = 0.005;
};

/// Neighbour entry of the adjacency structure.
struct Incidence {
    std::size_t bus;
    std::size_t line;
};

/// Immutable, validated grid: connected, no self loops, parallel lines merged.
class PowerNetwork {
public:
    PowerNetwork(std::vector<Bus> buses, std::vector<Line> lines,
                 std::size_t reference_bus,
                 BalancePolicy balance = BalancePolicy::Require);

    std::span<const Bus> buses() const noexcept { return buses_; }
    std::span<const Line> lines() const noexcept { return lines_; }
    const Bus& bus(std::size_t i) const { return buses_.at(i); }
    const Line& line(std::size_t l) const { return lines_.at(l); }
    std::size_t size() const noexcept { return buses_.size(); }
    std::size_t line_count() const noexcept { return lines_.size(); }
    std::size_t reference_bus() const noexcept { return reference_; }

    /// beta_kh * v_k * v_h for line l.
    double coupling(std::size_t l) const { return coupling_.at(l); }
    std::span<const double> couplings() const noexcept { return coupling_; }

    std::span<const Incidence> neighbors(std::size_t i) const;

    /// Position of the bus with external id `id`; throws DomainError if absent.
    std::size_t index_of(int id) const;
    bool has_bus(int id) const noexcept;

    double injection_sum() const noexcept;
    bool balanced() const noexcept;

    std::vector<double> injections() const;
    std::vector<double> inertias() const;

    friend bool operator==(const PowerNetwork& a, const PowerNetwork& b) {
        return a.buses_ == b.buses_ && a.lines_ == b.lines_ &&
               a.reference_ == b.reference_;
    }

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    std::size_t reference_;
    std::vector<double> coupling_;
    std::vector<std::size_t> adjacency_offsets_;
    std::vector<Incidence> adjacency_;
};

/// Copy of `net` with every line's relay limit replaced.
PowerNetwork with_relay_limit(const PowerNetwork& net, double relay_limit);

/// True if every bus can be reached from bus 0 through `lines`.
bool is_connected(std::size_t bus_count, std::span<const Line> lines);

/// 2 * asin(1 / sqrt(2 * beta_relay)), clamped to pi/2.
/// Throws DomainError unless beta_relay > 0.5.
double relay_limit_from_security(double beta_relay);

/// Options for reading MATPOWER cases.
struct MatpowerOptions {
    DynamicsDefaults dynamics;
    /// Relay limit applied to every line.
    double relay_limit = std::numbers::pi / 2;
    /// Optional per-bus overrides: {"<bus id>": {"M": .., "gamma": ..}}.
    nlohmann::json sidecar = nullptr;
};

/// Reads the bus, gen and branch tables of a MATPOWER-style case.
PowerNetwork parse_matpower(std::string_view text, const DynamicsDefaults& dynamics);
PowerNetwork parse_matpower(std::string_view text, const MatpowerOptions& options);

/// Native JSON case format.
PowerNetwork parse_json_case(const nlohmann::json& doc);
PowerNetwork parse_json_case(std::string_view text);
nlohmann::json to_json(const PowerNetwork& net);

/// Loads `.m` files as MATPOWER and anything else as native JSON.
PowerNetwork load_case(const std::filesystem::path& path, const MatpowerOptions& options);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace gridshield
