#include "gridshield/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>
#include <numbers>

namespace gridshield {

namespace {

void check_state(const PowerNetwork& net, const SystemState& s) {
    if (s.theta.size() != net.size() || s.omega.size() != net.size())
        throw DimensionError("state dimension does not match the network");
}

// dtheta = omega; domega = (p - flows - gamma omega) / M, written into out buffers.
void rhs_into(const PowerNetwork& net, std::span<const double> theta, std::span<const double> omega,
              std::span<double> dtheta, std::span<double> domega) {
    const std::size_t n = net.size();
    for (std::size_t i = 0; i < n; ++i) {
        dtheta[i] = omega[i];
        domega[i] = net.bus(i).p - net.bus(i).damping * omega[i];
    }
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const auto& line = net.line(l);
        const double f = net.coupling(l) * std::sin(theta[line.from] - theta[line.to]);
        domega[line.from] -= f;
        domega[line.to] += f;
    }
    for (std::size_t i = 0; i < n; ++i) domega[i] /= net.bus(i).inertia;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

StateDerivative swing_rhs(const PowerNetwork& net, const SystemState& state) {
    check_state(net, state);
    StateDerivative d{std::vector<double>(net.size()), std::vector<double>(net.size())};
    rhs_into(net, state.theta, state.omega, d.dtheta, d.domega);
    return d;
}

Trajectory integrate(const PowerNetwork& net, const SystemState& state0, double t_end, double dt,
                     const IntegrationOptions& options) {
    check_state(net, state0);
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    if (!(t_end > state0.time)) throw DomainError("t_end must be after the initial time");
    const std::size_t stride = std::max<std::size_t>(options.sample_stride, 1);
    const std::size_t n = net.size();

    Trajectory traj;
    auto record = [&](const SystemState& s) {
        traj.samples.push_back(s);
        traj.energies.push_back(energy(net, s.theta, s.omega));
    };

    SystemState s = state0;
    record(s);

    std::vector<double> k1t(n), k1w(n), k2t(n), k2w(n), k3t(n), k3w(n), k4t(n), k4w(n);
    std::vector<double> tt(n), tw(n);

    // Step count fixed up front so repeated additions of dt do not drift.
    const double span = t_end - state0.time;
    const auto full_steps = static_cast<std::size_t>(std::floor(span / dt * (1.0 + 1e-12)));
    const double remainder = span - static_cast<double>(full_steps) * dt;
    const std::size_t total_steps = full_steps + (remainder > 1e-12 * dt ? 1 : 0);

    for (std::size_t step = 1; step <= total_steps; ++step) {
        const double h = step <= full_steps ? dt : remainder;
        rhs_into(net, s.theta, s.omega, k1t, k1w);
        for (std::size_t i = 0; i < n; ++i) {
            tt[i] = s.theta[i] + 0.5 * h * k1t[i];
            tw[i] = s.omega[i] + 0.5 * h * k1w[i];
        }
        rhs_into(net, tt, tw, k2t, k2w);
        for (std::size_t i = 0; i < n; ++i) {
            tt[i] = s.theta[i] + 0.5 * h * k2t[i];
            tw[i] = s.omega[i] + 0.5 * h * k2w[i];
        }
        rhs_into(net, tt, tw, k3t, k3w);
        for (std::size_t i = 0; i < n; ++i) {
            tt[i] = s.theta[i] + h * k3t[i];
            tw[i] = s.omega[i] + h * k3w[i];
        }
        rhs_into(net, tt, tw, k4t, k4w);
        for (std::size_t i = 0; i < n; ++i) {
            s.theta[i] += h / 6.0 * (k1t[i] + 2.0 * k2t[i] + 2.0 * k3t[i] + k4t[i]);
            s.omega[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
        s.time = step == total_steps ? t_end : state0.time + static_cast<double>(step) * dt;

        if (!all_finite(s.theta) || !all_finite(s.omega))
            throw DivergenceError("integration diverged at t = " + std::to_string(s.time), s.time);
        if (step % stride == 0 || step == total_steps) record(s);
    }
    return traj;
}

FaultedSystem faulted_network(const PowerNetwork& net, int faulted_bus_id) {
    const std::size_t k = net.index_of(faulted_bus_id);
    if (net.size() < 2) throw TopologyError("cannot fault the only bus of a network");

    std::vector<std::size_t> kept;
    std::vector<std::size_t> position(net.size(), net.size());
    std::vector<Bus> buses;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (i == k) continue;
        position[i] = kept.size();
        kept.push_back(i);
        buses.push_back(net.bus(i));
    }
    std::vector<Line> lines;
    for (const auto& line : net.lines()) {
        if (line.from == k || line.to == k) continue;
        lines.push_back({position[line.from], position[line.to], line.susceptance, line.relay_limit});
    }
    if (!is_connected(buses.size(), lines))
        throw TopologyError("removing bus " + std::to_string(faulted_bus_id) + " disconnects the network");
    const std::size_t ref = net.reference_bus() == k ? 0 : position[net.reference_bus()];
    return {PowerNetwork(std::move(buses), std::move(lines), ref, BalancePolicy::Allow), std::move(kept), k};
}

SystemState simulate_fault_on(const PowerNetwork& net, const Equilibrium& pre,
                              const FaultScenario& scenario, double dt) {
    if (!(scenario.duration > 0.0)) throw DomainError("fault duration must be positive");
    if (!pre.interior) throw DomainError("pre-fault equilibrium is not interior");
    if (pre.theta_min.size() != net.size()) throw DimensionError("equilibrium does not match the network");

    const auto faulted = faulted_network(net, scenario.faulted_bus);
    SystemState reduced0;
    reduced0.time = 0.0;
    for (auto i : faulted.kept) reduced0.theta.push_back(pre.theta_min[i]);
    reduced0.omega.assign(faulted.kept.size(), 0.0);

    IntegrationOptions opts;
    opts.sample_stride = std::numeric_limits<std::size_t>::max();
    const auto traj = integrate(faulted.network, reduced0, scenario.duration, dt, opts);
    const auto& last = traj.samples.back();

    SystemState out;
    out.time = scenario.duration;
    out.theta.assign(net.size(), 0.0);
    out.omega.assign(net.size(), 0.0);
    for (std::size_t r = 0; r < faulted.kept.size(); ++r) {
        out.theta[faulted.kept[r]] = last.theta[r];
        out.omega[faulted.kept[r]] = last.omega[r];
    }
    const auto& bus = net.bus(faulted.faulted);
    const double t = scenario.duration;
    out.theta[faulted.faulted] = pre.theta_min[faulted.faulted];
    if (bus.kind == BusKind::Generator) {
        out.theta[faulted.faulted] += bus.p * t * t / (2.0 * bus.inertia);
        out.omega[faulted.faulted] = bus.p * t / bus.inertia;
    }
    return out;
}

double reconstruct_load_phase(std::span<const double> neighbor_phase,
                              std::span<const double> neighbor_coupling, double p, double near) {
    if (neighbor_phase.size() != neighbor_coupling.size())
        throw DimensionError("neighbour phase and coupling lists differ in length");
    double total = 0.0;
    for (double b : neighbor_coupling) total += b;
    if (std::abs(p) > total)
        throw ReconstructionError("injection exceeds the total coupling of the faulted bus");

    // sum_j b_j sin(x - phi_j) = Im(e^{ix} C) = A sin(x + arg C), C = sum_j b_j e^{-i phi_j}.
    std::complex<double> c(0.0, 0.0);
    for (std::size_t j = 0; j < neighbor_phase.size(); ++j)
        c += neighbor_coupling[j] * std::polar(1.0, -neighbor_phase[j]);
    const double amplitude = std::abs(c);
    if (std::abs(p) > amplitude * (1.0 + 1e-12) || amplitude == 0.0) {
        if (p == 0.0 && amplitude == 0.0) return near;
        throw ReconstructionError("power balance at the faulted bus has no solution");
    }
    const double s = std::asin(std::clamp(p / amplitude, -1.0, 1.0));
    const double shift = std::arg(c);
    const double two_pi = 2.0 * std::numbers::pi;
    double best = 0.0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (double root : {s - shift, std::numbers::pi - s - shift}) {
        const double wrapped = root + two_pi * std::round((near - root) / two_pi);
        const double dist = std::abs(wrapped - near);
        if (dist < best_dist) {
            best_dist = dist;
            best = wrapped;
        }
    }
    return best;
}

SystemState clear_fault(const PowerNetwork& net, const SystemState& state_minus,
                        const FaultScenario& scenario, const Equilibrium& pre) {
    check_state(net, state_minus);
    const std::size_t k = net.index_of(scenario.faulted_bus);
    SystemState out = state_minus;
    const auto& bus = net.bus(k);
    if (bus.kind == BusKind::Generator) {
        const double t = scenario.duration;
        const double sign = bus.p > 0.0 ? 1.0 : (bus.p < 0.0 ? -1.0 : 0.0);
        out.omega[k] = sign * std::sqrt(2.0 * std::abs(bus.p) * t / bus.inertia);
        out.theta[k] = pre.theta_min[k] + bus.p * t * t / (2.0 * bus.inertia);
    } else {
        std::vector<double> phases;
        std::vector<double> couplings;
        for (const auto& inc : net.neighbors(k)) {
            phases.push_back(state_minus.theta[inc.bus]);
            couplings.push_back(net.coupling(inc.line));
        }
        out.theta[k] = reconstruct_load_phase(phases, couplings, bus.p, pre.theta_min[k]);
    }
    return out;
}

double post_fault_energy(const PowerNetwork& net, const SystemState& state_plus) {
    check_state(net, state_plus);
    return energy(net, state_plus.theta, state_plus.omega).total;
}

std::optional<RelayViolation> check_trajectory_security(const Trajectory& traj,
                                                        const PowerNetwork& net) {
    for (const auto& s : traj.samples) {
        for (std::size_t l = 0; l < net.line_count(); ++l) {
            const auto& line = net.line(l);
            const double angle = std::abs(s.theta.at(line.from) - s.theta.at(line.to));
            if (angle >= line.relay_limit) return RelayViolation{s.time, l, angle};
        }
    }
    return std::nullopt;
}

void write_trajectory_csv(std::ostream& out, const PowerNetwork& net, const Trajectory& traj) {
    out << "time";
    for (const auto& b : net.buses()) out << ",theta_" << b.id;
    for (const auto& b : net.buses()) out << ",omega_" << b.id;
    out << ",W,U,E\n";
    const auto old_precision = out.precision(12);
    for (std::size_t k = 0; k < traj.samples.size(); ++k) {
        const auto& s = traj.samples[k];
        out << s.time;
        for (double v : s.theta) out << ',' << v;
        for (double v : s.omega) out << ',' << v;
        const auto& e = traj.energies[k];
        out << ',' << e.kinetic << ',' << e.potential << ',' << e.total << '\n';
    }
    out.precision(old_precision);
}

}  // namespace gridshield
