#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridshield/network.hpp"

namespace gridshield::test {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(GRIDSHIELD_DATA_DIR) / name;
}

inline Bus generator(int id, double p, double m = 1.0, double gamma = 0.1) {
    return Bus{id, BusKind::Generator, p, 1.0, m, gamma};
}

inline Bus load(int id, double p, double m = 0.01, double gamma = 0.01) {
    return Bus{id, BusKind::Load, p, 1.0, m, gamma};
}

/// Three generators on a ring with b = 1.25, 1/1.2, 1.0; bus 0 balances.
inline PowerNetwork triangle(double p1, double p2, double relay_limit = 1.5707963267948966,
                             double gamma = 0.1) {
    std::vector<Bus> buses{generator(0, -(p1 + p2), 1.0, gamma), generator(1, p1, 1.0, gamma),
                           generator(2, p2, 1.0, gamma)};
    std::vector<Line> lines{{0, 1, 1.25, relay_limit}, {0, 2, 1.0 / 1.2, relay_limit}, {1, 2, 1.0, relay_limit}};
    return PowerNetwork(std::move(buses), std::move(lines), 0);
}

inline PowerNetwork two_bus(double b = 1.0, double gamma = 0.0) {
    return PowerNetwork({generator(0, 0.0, 1.0, gamma), generator(1, 0.0, 1.0, gamma)}, {{0, 1, b}}, 0);
}

inline constexpr double kRelayLimit12 = 1.4033482475752073;

}  // namespace gridshield::test
