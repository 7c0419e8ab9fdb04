#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridshield/dynamics.hpp"
#include "gridshield/energy.hpp"
#include "gridshield/network.hpp"
#include "gridshield/screening.hpp"

namespace gridshield {

struct ScenarioOptions {
    double dt = kDefaultTimeStep;
    /// End time of the post-fault validation run (seconds from fault inception).
    double horizon = kDefaultValidationHorizon;
    bool validate = false;
    ScreeningConfig screening;
};

enum class ScenarioStatus { Ok, FailedReconstruction, FailedTopology };
std::string_view to_string(ScenarioStatus s);

/// Outcome of the post-fault validation simulation.
struct Validation {
    bool diverged = false;
    double divergence_time = 0.0;
    std::optional<RelayViolation> violation;
    double max_angle_ratio = 0.0;  ///< max over samples and lines of |theta_kh| / limit

    bool secure() const { return !diverged && !violation; }
};

struct ScenarioResult {
    FaultScenario scenario;
    ScenarioStatus status = ScenarioStatus::Ok;
    std::string message;
    double e_star = 0.0;
    std::optional<SystemState> post_fault_state;
    std::optional<ScreeningVerdict> verdict;
    std::optional<Validation> validation;
};

/// Line with the largest theta_hat / limit; ties go to the lower index.
std::optional<std::size_t> worst_line(const ScreeningVerdict& verdict);

/// Fault-on simulation, clearing and the post-fault energy, without screening.
SystemState post_fault_state(const PowerNetwork& net, const Equilibrium& eq,
                             const FaultScenario& scenario, double dt);

/// Integrates the full network from `start` to `t_end` and scans every step
/// for relay-limit contact.
Validation validate_post_fault(const PowerNetwork& net, const SystemState& start, double t_end,
                               double dt);

/// Fault-on and post-fault trajectory on the full bus set, up to t_end, with
/// energies of the post-fault network. During the fault the faulted bus
/// carries the placeholder phase described at simulate_fault_on; the sample
/// at tau_f is the post-clearing state.
Trajectory fault_trajectory(const PowerNetwork& net, const Equilibrium& eq, const FaultScenario& scenario,
                            double t_end, double dt, std::size_t stride = 1);

/// Fault-on simulation, clearing, E*, screening and optional validation.
ScenarioResult run_scenario(const PowerNetwork& net, const Equilibrium& eq,
                            const FaultScenario& scenario, const ScenarioOptions& options);

/// All bus x duration scenarios, bus-major. Results keep that order whatever
/// the worker count.
std::vector<ScenarioResult> run_sweep(const PowerNetwork& net, const Equilibrium& eq,
                                      const std::vector<int>& buses,
                                      const std::vector<double>& durations,
                                      const ScenarioOptions& options, unsigned workers = 1);

}  // namespace gridshield
