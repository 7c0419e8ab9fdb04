#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "gridshield/energy.hpp"
#include "gridshield/network.hpp"

namespace gridshield {

/// Phases (rad) and frequency deviations (rad/s) of every bus at one instant.
struct SystemState {
    double time = 0.0;
    std::vector<double> theta;
    std::vector<double> omega;
};

struct FaultScenario {
    int faulted_bus = 0;  ///< external bus id
    double duration = 0.0;  ///< tau_f, seconds
};

struct Trajectory {
    std::vector<SystemState> samples;
    std::vector<EnergyBreakdown> energies;
};

struct StateDerivative {
    std::vector<double> dtheta;
    std::vector<double> domega;
};

/// Swing equations: dtheta = omega,
/// M domega = p - sum_j b_ij sin(theta_i - theta_j) - gamma omega.
StateDerivative swing_rhs(const PowerNetwork& net, const SystemState& state);

struct IntegrationOptions {
    /// Record every n-th step; the initial and final states are always kept.
    std::size_t sample_stride = 1;
};

inline constexpr double kDefaultTimeStep = 1e-3;
inline constexpr double kDefaultValidationHorizon = 25.0;

/// Fixed-step classical RK4 from state0.time to t_end; the last step is
/// shortened to land on t_end. Throws DivergenceError on a non-finite state.
Trajectory integrate(const PowerNetwork& net, const SystemState& state0, double t_end, double dt,
                     const IntegrationOptions& options = {});

/// Network seen during the fault: the faulted bus and its lines removed.
struct FaultedSystem {
    PowerNetwork network;  ///< injections left unbalanced on purpose
    std::vector<std::size_t> kept;  ///< reduced position -> full position
    std::size_t faulted;  ///< full position of the faulted bus
};

FaultedSystem faulted_network(const PowerNetwork& net, int faulted_bus_id);

/// State just before clearing, on the full bus set. Surviving buses follow the
/// reduced swing equations from (theta_pre, 0). A faulted generator
/// accelerates freely (theta_pre + p t^2 / 2M, p t / M); a faulted load keeps
/// its pre-fault phase and zero frequency as placeholders.
SystemState simulate_fault_on(const PowerNetwork& net, const Equilibrium& pre,
                              const FaultScenario& scenario, double dt = kDefaultTimeStep);

/// State just after clearing. Unfaulted buses are continuous. A faulted load
/// takes the phase that restores its power balance against the neighbours'
/// phases (root nearest the pre-fault phase); a faulted generator takes
/// omega = sign(p) sqrt(2 |p| tau_f / M) and theta_pre + p tau_f^2 / 2M.
SystemState clear_fault(const PowerNetwork& net, const SystemState& state_minus,
                        const FaultScenario& scenario, const Equilibrium& pre);

/// Phase of a bus whose injection p must balance the flows to neighbours
/// at fixed phases. Returns the root closest to `near`.
double reconstruct_load_phase(std::span<const double> neighbor_phase,
                              std::span<const double> neighbor_coupling, double p, double near);

/// Total energy of the post-clearing state on the full network.
double post_fault_energy(const PowerNetwork& net, const SystemState& state_plus);

struct RelayViolation {
    double time;
    std::size_t line;
    double angle;
};

/// Earliest sample where some |theta_i - theta_j| reaches its relay limit.
std::optional<RelayViolation> check_trajectory_security(const Trajectory& traj,
                                                        const PowerNetwork& net);

/// Columns: time, theta_<id>..., omega_<id>..., W, U, E.
void write_trajectory_csv(std::ostream& out, const PowerNetwork& net, const Trajectory& traj);

}  // namespace gridshield
