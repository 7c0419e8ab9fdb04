#include "gridshield/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace gridshield {

namespace {

void check_dimension(const PowerNetwork& net, std::span<const double> v, const char* what) {
    if (v.size() != net.size())
        throw DimensionError(std::string(what) + " has " + std::to_string(v.size()) +
                             " entries, network has " + std::to_string(net.size()) + " buses");
}

double inf_norm_reduced(const std::vector<double>& g, std::size_t ref) {
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (i != ref) m = std::max(m, std::abs(g[i]));
    return m;
}

}  // namespace

double potential_energy(const PowerNetwork& net, std::span<const double> theta) {
    check_dimension(net, theta, "theta");
    double u = 0.0;
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const auto& line = net.line(l);
        u += net.coupling(l) * (1.0 - std::cos(theta[line.from] - theta[line.to]));
    }
    for (std::size_t i = 0; i < net.size(); ++i) u -= net.bus(i).p * theta[i];
    return u;
}

double kinetic_energy(const PowerNetwork& net, std::span<const double> omega) {
    check_dimension(net, omega, "omega");
    double w = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) w += 0.5 * net.bus(i).inertia * omega[i] * omega[i];
    return w;
}

std::vector<double> grad_potential(const PowerNetwork& net, std::span<const double> theta) {
    check_dimension(net, theta, "theta");
    std::vector<double> g(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) g[i] = -net.bus(i).p;
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const auto& line = net.line(l);
        const double f = net.coupling(l) * std::sin(theta[line.from] - theta[line.to]);
        g[line.from] += f;
        g[line.to] -= f;
    }
    return g;
}

EnergyBreakdown energy(const PowerNetwork& net, std::span<const double> theta,
                       std::span<const double> omega) {
    EnergyBreakdown e;
    e.kinetic = kinetic_energy(net, omega);
    e.potential = potential_energy(net, theta);
    e.total = e.kinetic + e.potential;
    return e;
}

double max_line_angle(const PowerNetwork& net, std::span<const double> theta) {
    check_dimension(net, theta, "theta");
    double m = 0.0;
    for (const auto& line : net.lines()) m = std::max(m, std::abs(theta[line.from] - theta[line.to]));
    return m;
}

Equilibrium solve_equilibrium(const PowerNetwork& net) {
    constexpr double half_pi = std::numbers::pi / 2;
    constexpr double boundary_tol = 1e-9;
    const std::size_t n = net.size();
    const std::size_t ref = net.reference_bus();

    // Reduced coordinates skip the reference bus.
    std::vector<int> reduced(n, -1);
    int dim = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (i != ref) reduced[i] = dim++;

    Equilibrium eq;
    eq.theta_min.assign(n, 0.0);
    if (dim == 0) {
        eq.e_min = potential_energy(net, eq.theta_min);
        return eq;
    }

    auto& theta = eq.theta_min;
    double u = potential_energy(net, theta);
    std::vector<double> g = grad_potential(net, theta);
    std::vector<double> trial(n);

    Eigen::SparseMatrix<double> hessian(dim, dim);
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::VectorXd rhs(dim);

    for (int iter = 0; iter <= kEquilibriumMaxIterations; ++iter) {
        eq.iterations = iter;
        const double gnorm = inf_norm_reduced(g, ref);
        if (gnorm < kEquilibriumGradientTolerance) break;
        if (iter == kEquilibriumMaxIterations)
            throw ConvergenceError("equilibrium solve did not converge in " +
                                   std::to_string(kEquilibriumMaxIterations) + " iterations");

        // Hessian of U: Laplacian weighted by b_kh cos(theta_kh), positive inside the box.
        triplets.clear();
        for (std::size_t l = 0; l < net.line_count(); ++l) {
            const auto& line = net.line(l);
            const double w = net.coupling(l) * std::cos(theta[line.from] - theta[line.to]);
            const int a = reduced[line.from];
            const int b = reduced[line.to];
            if (a >= 0) triplets.emplace_back(a, a, w);
            if (b >= 0) triplets.emplace_back(b, b, w);
            if (a >= 0 && b >= 0) {
                triplets.emplace_back(a, b, -w);
                triplets.emplace_back(b, a, -w);
            }
        }
        hessian.setFromTriplets(triplets.begin(), triplets.end());
        for (std::size_t i = 0; i < n; ++i)
            if (reduced[i] >= 0) rhs[reduced[i]] = -g[i];

        std::vector<double> step(n, 0.0);
        ldlt.compute(hessian);
        bool newton_ok = ldlt.info() == Eigen::Success;
        if (newton_ok) {
            Eigen::VectorXd d = ldlt.solve(rhs);
            double slope = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (reduced[i] >= 0) {
                    step[i] = d[reduced[i]];
                    slope += step[i] * g[i];
                }
            newton_ok = std::isfinite(slope) && slope < 0.0;
        }
        if (!newton_ok)
            for (std::size_t i = 0; i < n; ++i) step[i] = reduced[i] >= 0 ? -g[i] : 0.0;

        // Clip so the trial point stays inside the box.
        double alpha = 1.0;
        for (const auto& line : net.lines()) {
            const double a0 = theta[line.from] - theta[line.to];
            const double da = step[line.from] - step[line.to];
            if (da > 0.0 && a0 + da > half_pi) alpha = std::min(alpha, (half_pi - a0) / da);
            if (da < 0.0 && a0 + da < -half_pi) alpha = std::min(alpha, (-half_pi - a0) / da);
        }
        alpha = std::max(alpha, 0.0);

        bool accepted = false;
        for (int halving = 0; halving < 60 && alpha > 0.0; ++halving, alpha *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] + alpha * step[i];
            const double u_trial = potential_energy(net, trial);
            auto g_trial = grad_potential(net, trial);
            // Near the optimum U stalls at rounding level; a smaller gradient then counts as progress.
            if (u_trial < u || (u_trial <= u + 1e-14 * (1.0 + std::abs(u)) &&
                                inf_norm_reduced(g_trial, ref) < gnorm)) {
                theta.swap(trial);
                u = u_trial;
                g = std::move(g_trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent from here: the minimiser is on the boundary of the box.
            if (max_line_angle(net, theta) >= half_pi - boundary_tol) break;
            throw ConvergenceError("equilibrium line search failed");
        }
    }

    eq.e_min = u;
    eq.interior = max_line_angle(net, theta) < half_pi - boundary_tol &&
                  inf_norm_reduced(g, ref) < kEquilibriumGradientTolerance;
    return eq;
}

}  // namespace gridshield
