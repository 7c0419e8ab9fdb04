#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gridshield/energy.hpp"
#include "support.hpp"

using namespace gridshield;
using gridshield::test::triangle;

TEST(Potential, FlatProfileIsZero) {
    std::vector<double> theta{0, 0, 0};
    EXPECT_DOUBLE_EQ(potential_energy(triangle(0.03, 0.06), theta), 0.0);
}

TEST(Potential, TriangleCorner) {
    std::vector<double> theta{0, std::numbers::pi / 2, 0};
    EXPECT_NEAR(potential_energy(triangle(0.03, 0.06), theta), 2.2029, 1e-4);
}

TEST(Potential, DimensionMismatch) {
    std::vector<double> theta{0, 0};
    EXPECT_THROW(potential_energy(triangle(0, 0), theta), DimensionError);
    EXPECT_THROW(grad_potential(triangle(0, 0), theta), DimensionError);
    EXPECT_THROW(kinetic_energy(triangle(0, 0), theta), DimensionError);
}

TEST(Kinetic, Values) {
    PowerNetwork single({test::generator(0, 0.0, 2.0)}, {}, 0);
    std::vector<double> w{3.0}, neg{-3.0}, zero{0.0};
    EXPECT_DOUBLE_EQ(kinetic_energy(single, w), 9.0);
    EXPECT_DOUBLE_EQ(kinetic_energy(single, neg), 9.0);
    EXPECT_DOUBLE_EQ(kinetic_energy(single, zero), 0.0);
}

TEST(Gradient, TwoBusAnalytic) {
    std::vector<double> theta{0.2, 0.0};
    auto g = grad_potential(test::two_bus(), theta);
    EXPECT_NEAR(g[0], std::sin(0.2), 1e-15);
    EXPECT_NEAR(g[1], -std::sin(0.2), 1e-15);
}

TEST(Gradient, CentralDifferences) {
    auto net = load_case(test::data_path("case9.m"), MatpowerOptions{});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> angle(-0.6, 0.6);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> theta(net.size());
        for (auto& t : theta) t = angle(rng);
        auto g = grad_potential(net, theta);
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            auto up = theta, down = theta;
            up[i] += h;
            down[i] -= h;
            const double fd = (potential_energy(net, up) - potential_energy(net, down)) / (2 * h);
            err = std::max(err, std::abs(fd - g[i]));
            scale = std::max(scale, std::abs(g[i]));
        }
        EXPECT_LT(err / scale, 1e-6) << "trial " << trial;
    }
}

TEST(Equilibrium, ZeroInjection) {
    auto eq = solve_equilibrium(triangle(0, 0));
    for (double t : eq.theta_min) EXPECT_NEAR(t, 0.0, 1e-12);
    EXPECT_NEAR(eq.e_min, 0.0, 1e-12);
    EXPECT_TRUE(eq.interior);
}

TEST(Equilibrium, TriangleCases) {
    auto one = solve_equilibrium(triangle(0.03, 0.06));
    EXPECT_LT(std::abs(one.e_min), 0.01);
    auto two = solve_equilibrium(triangle(1.2, -1.5));
    EXPECT_NEAR(two.e_min, -0.70, 0.02);
    EXPECT_NEAR(potential_energy(triangle(1.2, -1.5), two.theta_min), two.e_min, 1e-12);
}

TEST(Equilibrium, GradientVanishes) {
    for (const char* name : {"case9.m", "case118.m"}) {
        auto net = load_case(test::data_path(name), MatpowerOptions{});
        auto eq = solve_equilibrium(net);
        EXPECT_TRUE(eq.interior);
        EXPECT_DOUBLE_EQ(eq.theta_min[net.reference_bus()], 0.0);
        for (double g : grad_potential(net, eq.theta_min)) EXPECT_LT(std::abs(g), 1e-10) << name;
    }
}

TEST(Equilibrium, Case118Minimum) {
    auto net = load_case(test::data_path("case118.m"), MatpowerOptions{});
    EXPECT_NEAR(solve_equilibrium(net).e_min, -3.56, 0.01);
}

TEST(Equilibrium, OverloadedLineIsNotInterior) {
    PowerNetwork net({test::generator(0, 1.5), test::generator(1, -1.5)}, {{0, 1, 1.0}}, 0);
    auto eq = solve_equilibrium(net);
    EXPECT_FALSE(eq.interior);
    EXPECT_NEAR(max_line_angle(net, eq.theta_min), std::numbers::pi / 2, 1e-9);
}
