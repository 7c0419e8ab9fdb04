#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "gridshield/dynamics.hpp"
#include "support.hpp"

using namespace gridshield;
using gridshield::test::triangle;

namespace {

// Generator 0 feeds two loads along a path 0 - 1 - 2.
PowerNetwork path_network() {
    return PowerNetwork({test::generator(0, 1.0, 1.0, 0.1), test::load(1, -0.5), test::load(2, -0.5)},
                        {{0, 1, 2.0}, {1, 2, 2.0}}, 0);
}

SystemState at_rest(const std::vector<double>& theta) {
    return SystemState{0.0, theta, std::vector<double>(theta.size(), 0.0)};
}

double relative_angle_after(const PowerNetwork& net, double x0, double t_end, double dt) {
    auto traj = integrate(net, at_rest({x0, 0.0}), t_end, dt);
    const auto& s = traj.samples.back();
    return s.theta[0] - s.theta[1];
}

}  // namespace

TEST(SwingRhs, EquilibriumIsFixedPoint) {
    auto net = triangle(1.2, -1.5);
    auto eq = solve_equilibrium(net);
    auto d = swing_rhs(net, at_rest(eq.theta_min));
    for (std::size_t i = 0; i < net.size(); ++i) {
        EXPECT_EQ(d.dtheta[i], 0.0);
        EXPECT_LT(std::abs(d.domega[i]), 1e-10);
    }
}

TEST(SwingRhs, TwoBusAnalytic) {
    auto d = swing_rhs(test::two_bus(), at_rest({0.3, 0.0}));
    EXPECT_NEAR(d.domega[0], -std::sin(0.3), 1e-15);
    EXPECT_NEAR(d.domega[1], std::sin(0.3), 1e-15);
}

TEST(SwingRhs, MatchesEnergyGradient) {
    auto net = triangle(0.03, 0.06, std::numbers::pi / 2, 0.4);
    SystemState s{0.0, {0.1, -0.2, 0.3}, {0.5, -0.1, 0.2}};
    auto d = swing_rhs(net, s);
    auto g = grad_potential(net, s.theta);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& b = net.bus(i);
        EXPECT_NEAR(b.inertia * d.domega[i], -g[i] - b.damping * s.omega[i], 1e-14);
        EXPECT_EQ(d.dtheta[i], s.omega[i]);
    }
}

TEST(Integrate, EquilibriumStaysPut) {
    auto net = load_case(test::data_path("case9.m"), MatpowerOptions{});
    auto eq = solve_equilibrium(net);
    auto traj = integrate(net, at_rest(eq.theta_min), 2.0, 1e-2);
    for (const auto& s : traj.samples)
        for (std::size_t i = 0; i < net.size(); ++i) EXPECT_LT(std::abs(s.theta[i] - eq.theta_min[i]), 1e-12);
}

TEST(Integrate, SmallOscillationPeriod) {
    auto net = test::two_bus();
    auto traj = integrate(net, at_rest({0.01, 0.0}), 20.0, 1e-3);
    std::vector<double> crossings;
    for (std::size_t k = 1; k < traj.samples.size(); ++k) {
        const auto& a = traj.samples[k - 1];
        const auto& b = traj.samples[k];
        const double xa = a.theta[0] - a.theta[1], xb = b.theta[0] - b.theta[1];
        if (xa > 0 && xb <= 0) crossings.push_back(a.time + (b.time - a.time) * xa / (xa - xb));
    }
    ASSERT_GE(crossings.size(), 3u);
    const double period = (crossings.back() - crossings.front()) / (crossings.size() - 1);
    EXPECT_NEAR(period, 2 * std::numbers::pi / std::sqrt(2.0), 0.01 * 4.443);
}

TEST(Integrate, UndampedConservesEnergy) {
    auto net = test::two_bus(1.0, 0.0);
    auto traj = integrate(net, at_rest({0.8, 0.0}), 10.0, 1e-3);
    const double e0 = traj.energies.front().total;
    for (const auto& e : traj.energies) EXPECT_LT(std::abs(e.total - e0), 1e-4 * (1 + std::abs(e0)));
}

TEST(Integrate, DampedEnergyDecreases) {
    auto net = triangle(0.03, 0.06, std::numbers::pi / 2, 0.3);
    SystemState s{0.0, {0.0, 0.6, -0.4}, {0.0, 0.3, -0.2}};
    auto traj = integrate(net, s, 10.0, 1e-3);
    for (std::size_t k = 1; k < traj.energies.size(); ++k)
        EXPECT_LE(traj.energies[k].total, traj.energies[k - 1].total + 1e-8);
}

TEST(Integrate, FourthOrder) {
    auto net = test::two_bus();
    const double ref = relative_angle_after(net, 1.0, 5.0, 1e-4);
    const double coarse = std::abs(relative_angle_after(net, 1.0, 5.0, 0.1) - ref);
    const double fine = std::abs(relative_angle_after(net, 1.0, 5.0, 0.05) - ref);
    const double ratio = coarse / fine;
    EXPECT_GE(ratio, 8.0);
    EXPECT_LE(ratio, 32.0);
}

TEST(Integrate, LandsOnEndTimeAndStrides) {
    auto traj = integrate(test::two_bus(), at_rest({0.1, 0.0}), 1.0005, 1e-3, {10});
    EXPECT_DOUBLE_EQ(traj.samples.back().time, 1.0005);
    EXPECT_EQ(traj.samples.front().time, 0.0);
    EXPECT_EQ(traj.samples.size(), traj.energies.size());
    EXPECT_LT(traj.samples.size(), 110u);
}

TEST(Integrate, DivergenceIsReported) {
    SystemState s{0.0, {0.0, 0.0}, {1e308, 0.0}};
    try {
        integrate(test::two_bus(), s, 100.0, 10.0);
        FAIL() << "no divergence reported";
    } catch (const DivergenceError& e) {
        EXPECT_GT(e.time(), 0.0);
    }
}

TEST(Fault, FaultedNetworkShapes) {
    auto tri = faulted_network(triangle(0.03, 0.06), 1);
    EXPECT_EQ(tri.network.size(), 2u);
    EXPECT_EQ(tri.network.line_count(), 1u);
    EXPECT_EQ(tri.faulted, 1u);

    auto path = path_network();
    auto leaf = faulted_network(path, 2);
    EXPECT_EQ(leaf.network.size(), 2u);
    EXPECT_NEAR(leaf.network.injection_sum(), 0.5, 1e-15);
    EXPECT_THROW(faulted_network(path, 1), TopologyError);
}

TEST(Fault, Case118Islanding) {
    auto net = load_case(test::data_path("case118.m"), MatpowerOptions{});
    // Bus 10 hangs off bus 9 alone.
    EXPECT_THROW(faulted_network(net, 9), TopologyError);
    auto f = faulted_network(net, 10);
    EXPECT_EQ(f.network.size(), 117u);
    EXPECT_EQ(f.kept.size(), 117u);
}

TEST(Fault, FaultedGeneratorAccelerates) {
    auto net = path_network();
    auto eq = solve_equilibrium(net);
    auto s = simulate_fault_on(net, eq, {0, 0.5});
    EXPECT_NEAR(s.omega[0], 0.5, 1e-12);
    EXPECT_NEAR(s.theta[0] - eq.theta_min[0], 0.125, 1e-12);
    auto longer = simulate_fault_on(net, eq, {0, 1.0});
    EXPECT_NEAR(longer.omega[0] * longer.omega[0], 4 * s.omega[0] * s.omega[0], 1e-12);
}

TEST(Fault, ShortFaultKeepsEquilibrium) {
    auto net = path_network();
    auto eq = solve_equilibrium(net);
    auto s = simulate_fault_on(net, eq, {2, 1e-9});
    for (std::size_t i = 0; i < net.size(); ++i) {
        EXPECT_NEAR(s.theta[i], eq.theta_min[i], 1e-9);
        EXPECT_NEAR(s.omega[i], 0.0, 1e-6);
    }
    auto plus = clear_fault(net, s, {2, 1e-9}, eq);
    EXPECT_NEAR(post_fault_energy(net, plus), eq.e_min, 1e-9);
}

TEST(Fault, LoadPhaseReconstruction) {
    std::vector<double> phase{0.0}, coupling{1.0};
    EXPECT_NEAR(reconstruct_load_phase(phase, coupling, 0.5, 0.0), std::numbers::pi / 6, 1e-14);
    std::vector<double> two{0.3, 0.3}, b2{1.0, 2.0};
    EXPECT_NEAR(reconstruct_load_phase(two, b2, 0.0, 0.1), 0.3, 1e-12);
    EXPECT_THROW(reconstruct_load_phase(phase, coupling, 1.5, 0.0), ReconstructionError);
}

TEST(Fault, ClearedLoadBalancesItsFlows) {
    auto net = path_network();
    auto eq = solve_equilibrium(net);
    const FaultScenario sc{2, 0.2};
    auto plus = clear_fault(net, simulate_fault_on(net, eq, sc), sc, eq);
    EXPECT_NEAR(2.0 * std::sin(plus.theta[2] - plus.theta[1]), -0.5, 1e-10);
    EXPECT_EQ(plus.omega[2], 0.0);
}

TEST(PostFaultEnergy, HandBuiltState) {
    auto net = triangle(0.03, 0.06);
    EXPECT_NEAR(post_fault_energy(net, at_rest({0.0, std::numbers::pi / 2, 0.0})), 2.2029, 1e-4);
    auto eq = solve_equilibrium(net);
    EXPECT_NEAR(post_fault_energy(net, at_rest(eq.theta_min)), eq.e_min, 1e-15);
}

TEST(Security, ConstantTrajectoryIsClean) {
    auto net = triangle(0.03, 0.06, 1.0);
    auto eq = solve_equilibrium(net);
    auto traj = integrate(net, at_rest(eq.theta_min), 1.0, 1e-2);
    EXPECT_FALSE(check_trajectory_security(traj, net).has_value());
}

TEST(Security, ReportsFirstCrossing) {
    auto net = PowerNetwork({test::generator(0, 0), test::generator(1, 0)}, {{0, 1, 1.0, 0.5}}, 0);
    Trajectory traj;
    traj.samples = {SystemState{0.0, {0.1, 0.0}, {0, 0}}, SystemState{0.25, {0.0, 0.7}, {0, 0}}};
    auto v = check_trajectory_security(traj, net);
    ASSERT_TRUE(v.has_value());
    EXPECT_DOUBLE_EQ(v->time, 0.25);
    EXPECT_EQ(v->line, 0u);
    EXPECT_NEAR(std::abs(v->angle), 0.7, 1e-15);
}

TEST(TrajectoryCsv, Header) {
    auto net = test::two_bus();
    std::ostringstream out;
    write_trajectory_csv(out, net, integrate(net, at_rest({0.1, 0.0}), 0.01, 1e-3));
    std::string header;
    std::getline(std::istringstream(out.str()) >> std::ws, header);
    EXPECT_EQ(header, "time,theta_0,theta_1,omega_0,omega_1,W,U,E");
}
