#include "gridshield/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace gridshield {

std::string_view to_string(ScenarioStatus s) {
    switch (s) {
    case ScenarioStatus::Ok: return "ok";
    case ScenarioStatus::FailedReconstruction: return "FAILED-RECONSTRUCTION";
    case ScenarioStatus::FailedTopology: return "FAILED-TOPOLOGY";
    }
    return "unknown";
}

std::optional<std::size_t> worst_line(const ScreeningVerdict& verdict) {
    std::optional<std::size_t> worst;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : verdict.per_line) {
        const double ratio = r.theta_hat / r.relay_limit;
        if (ratio > best) {
            best = ratio;
            worst = r.line;
        }
    }
    return worst;
}

SystemState post_fault_state(const PowerNetwork& net, const Equilibrium& eq,
                             const FaultScenario& scenario, double dt) {
    const auto minus = simulate_fault_on(net, eq, scenario, dt);
    return clear_fault(net, minus, scenario, eq);
}

Validation validate_post_fault(const PowerNetwork& net, const SystemState& start, double t_end,
                               double dt) {
    Validation v;
    if (!(t_end > start.time)) return v;
    constexpr double chunk = 1.0;  // seconds held in memory at once
    SystemState s = start;
    try {
        while (s.time < t_end && !v.violation) {
            const double stop = std::min(s.time + chunk, t_end);
            if (stop - s.time <= 1e-12) break;
            auto traj = integrate(net, s, stop, dt);
            for (const auto& sample : traj.samples)
                for (std::size_t l = 0; l < net.line_count(); ++l) {
                    const auto& line = net.line(l);
                    const double angle = std::abs(sample.theta[line.from] - sample.theta[line.to]);
                    v.max_angle_ratio = std::max(v.max_angle_ratio, angle / line.relay_limit);
                }
            v.violation = check_trajectory_security(traj, net);
            s = std::move(traj.samples.back());
        }
    } catch (const DivergenceError& e) {
        v.diverged = true;
        v.divergence_time = e.time();
    }
    return v;
}

Trajectory fault_trajectory(const PowerNetwork& net, const Equilibrium& eq, const FaultScenario& scenario,
                            double t_end, double dt, std::size_t stride) {
    if (!(scenario.duration > 0.0)) throw DomainError("fault duration must be positive");
    if (!eq.interior) throw DomainError("pre-fault equilibrium is not interior");
    const auto faulted = faulted_network(net, scenario.faulted_bus);
    const auto& fbus = net.bus(faulted.faulted);

    SystemState reduced0;
    for (auto i : faulted.kept) reduced0.theta.push_back(eq.theta_min[i]);
    reduced0.omega.assign(faulted.kept.size(), 0.0);
    IntegrationOptions opts;
    opts.sample_stride = stride;
    const auto on = integrate(faulted.network, reduced0, std::min(scenario.duration, t_end), dt, opts);

    Trajectory out;
    for (const auto& r : on.samples) {
        SystemState s;
        s.time = r.time;
        s.theta.assign(net.size(), 0.0);
        s.omega.assign(net.size(), 0.0);
        for (std::size_t k = 0; k < faulted.kept.size(); ++k) {
            s.theta[faulted.kept[k]] = r.theta[k];
            s.omega[faulted.kept[k]] = r.omega[k];
        }
        s.theta[faulted.faulted] = eq.theta_min[faulted.faulted];
        if (fbus.kind == BusKind::Generator) {
            s.theta[faulted.faulted] += fbus.p * r.time * r.time / (2.0 * fbus.inertia);
            s.omega[faulted.faulted] = fbus.p * r.time / fbus.inertia;
        }
        out.energies.push_back(energy(net, s.theta, s.omega));
        out.samples.push_back(std::move(s));
    }
    if (t_end <= scenario.duration) return out;

    const auto plus = post_fault_state(net, eq, scenario, dt);
    out.samples.pop_back();
    out.energies.pop_back();
    auto post = integrate(net, plus, t_end, dt, opts);
    for (std::size_t k = 0; k < post.samples.size(); ++k) {
        out.samples.push_back(std::move(post.samples[k]));
        out.energies.push_back(post.energies[k]);
    }
    return out;
}

ScenarioResult run_scenario(const PowerNetwork& net, const Equilibrium& eq,
                            const FaultScenario& scenario, const ScenarioOptions& options) {
    ScenarioResult result;
    result.scenario = scenario;
    SystemState plus;
    try {
        plus = post_fault_state(net, eq, scenario, options.dt);
    } catch (const ReconstructionError& e) {
        result.status = ScenarioStatus::FailedReconstruction;
        result.message = e.what();
        return result;
    } catch (const TopologyError& e) {
        result.status = ScenarioStatus::FailedTopology;
        result.message = e.what();
        return result;
    }
    result.e_star = post_fault_energy(net, plus);
    result.verdict = screen(net, result.e_star, options.screening, eq);
    if (options.validate) result.validation = validate_post_fault(net, plus, options.horizon, options.dt);
    result.post_fault_state = std::move(plus);
    return result;
}

std::vector<ScenarioResult> run_sweep(const PowerNetwork& net, const Equilibrium& eq,
                                      const std::vector<int>& buses,
                                      const std::vector<double>& durations,
                                      const ScenarioOptions& options, unsigned workers) {
    std::vector<FaultScenario> scenarios;
    for (int bus : buses)
        for (double tau : durations) scenarios.push_back({bus, tau});
    std::vector<ScenarioResult> results(scenarios.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        while (!failed) {
            const std::size_t k = next++;
            if (k >= scenarios.size()) return;
            try {
                results[k] = run_scenario(net, eq, scenarios[k], options);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(std::max<std::size_t>(scenarios.size(), 1)));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

}  // namespace gridshield
