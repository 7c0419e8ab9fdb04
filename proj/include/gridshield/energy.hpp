#pragma once

#include <span>
#include <vector>

#include "gridshield/network.hpp"

namespace gridshield {

/// Kinetic, potential and total energy of one state.
struct EnergyBreakdown {
    double kinetic = 0.0;
    double potential = 0.0;
    double total = 0.0;
};

/// Sum over lines of b_kh (1 - cos(theta_k - theta_h)) minus sum of p_i theta_i.
double potential_energy(const PowerNetwork& net, std::span<const double> theta);

/// Sum of M_i omega_i^2 / 2.
double kinetic_energy(const PowerNetwork& net, std::span<const double> omega);

/// dU/dtheta_i = sum_j b_ij sin(theta_i - theta_j) - p_i.
std::vector<double> grad_potential(const PowerNetwork& net, std::span<const double> theta);

EnergyBreakdown energy(const PowerNetwork& net, std::span<const double> theta,
                       std::span<const double> omega);

/// Largest |theta_k - theta_h| over all lines.
double max_line_angle(const PowerNetwork& net, std::span<const double> theta);

struct Equilibrium {
    std::vector<double> theta_min;
    double e_min = 0.0;
    /// False when some line sits on |theta_kh| = pi/2; the minimiser then
    /// carries no uniqueness guarantee and the network should not be screened.
    bool interior = true;
    int iterations = 0;
};

inline constexpr double kEquilibriumGradientTolerance = 1e-10;
inline constexpr int kEquilibriumMaxIterations = 200;

/// Minimises U over the box where every line angle is within pi/2, starting
/// from a flat profile. Damped Newton on the reduced gradient (reference angle
/// fixed at zero). Throws ConvergenceError after 200 iterations.
Equilibrium solve_equilibrium(const PowerNetwork& net);

}  // namespace gridshield
