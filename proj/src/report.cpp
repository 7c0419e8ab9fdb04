#include "gridshield/report.hpp"

#include <cmath>
#include <iomanip>

namespace gridshield {

namespace {

nlohmann::json finite_or_null(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

}  // namespace

nlohmann::json verdict_to_json(const PowerNetwork& net, const ScreeningVerdict& verdict) {
    nlohmann::json j;
    j["status"] = std::string(to_string(verdict.status));
    j["e_star"] = verdict.e_star;
    j["e_min"] = verdict.e_min;
    auto& lines = j["lines"] = nlohmann::json::array();
    for (const auto& r : verdict.per_line) {
        const auto& line = net.line(r.line);
        lines.push_back({{"line", r.line},
                         {"from", net.bus(line.from).id},
                         {"to", net.bus(line.to).id},
                         {"theta_hat", finite_or_null(r.theta_hat)},
                         {"theta_max", r.relay_limit},
                         {"at_boundary", r.at_boundary},
                         {"termination", std::string(to_string(r.termination))},
                         {"iterations", r.iterations},
                         {"cuts_added", r.cuts_added},
                         {"epsilon", r.epsilon}});
    }
    auto& boundary = j["boundary_lines"] = nlohmann::json::array();
    for (auto l : verdict.boundary_lines) boundary.push_back(l);
    return j;
}

void write_verdict_csv(std::ostream& out, const PowerNetwork& net, const ScreeningVerdict& verdict) {
    const auto old = out.precision(12);
    out << "line,from,to,theta_hat,theta_max,at_boundary,termination,iterations,cuts\n";
    for (const auto& r : verdict.per_line) {
        const auto& line = net.line(r.line);
        out << r.line << ',' << net.bus(line.from).id << ',' << net.bus(line.to).id << ',';
        if (std::isfinite(r.theta_hat)) out << r.theta_hat;
        out << ',' << r.relay_limit << ',' << (r.at_boundary ? 1 : 0) << ',' << to_string(r.termination)
            << ',' << r.iterations << ',' << r.cuts_added << '\n';
    }
    out.precision(old);
}

nlohmann::json scenario_to_json(const PowerNetwork& net, const ScenarioResult& result) {
    nlohmann::json j;
    j["bus"] = result.scenario.faulted_bus;
    j["tau_f"] = result.scenario.duration;
    j["status"] = std::string(to_string(result.status));
    if (result.status != ScenarioStatus::Ok) {
        j["message"] = result.message;
        return j;
    }
    j["e_star"] = result.e_star;
    if (result.verdict) {
        j["verdict"] = std::string(to_string(result.verdict->status));
        if (auto w = worst_line(*result.verdict)) {
            const auto& r = result.verdict->per_line[*w];
            const auto& line = net.line(*w);
            j["worst_line"] = {{"line", *w},
                               {"from", net.bus(line.from).id},
                               {"to", net.bus(line.to).id},
                               {"theta_hat", finite_or_null(r.theta_hat)},
                               {"theta_max", r.relay_limit}};
        }
        j["boundary_lines"] = result.verdict->boundary_lines;
    }
    if (result.validation) {
        const auto& v = *result.validation;
        nlohmann::json jv{{"secure", v.secure()}, {"diverged", v.diverged},
                          {"max_angle_ratio", v.max_angle_ratio}};
        if (v.diverged) jv["divergence_time"] = v.divergence_time;
        if (v.violation) {
            const auto& line = net.line(v.violation->line);
            jv["violation"] = {{"time", v.violation->time},
                               {"line", v.violation->line},
                               {"from", net.bus(line.from).id},
                               {"to", net.bus(line.to).id},
                               {"angle", v.violation->angle}};
        }
        j["validation"] = jv;
    }
    return j;
}

void write_scenario_csv_header(std::ostream& out) {
    out << "bus,tau_f,status,e_star,verdict,worst_line,theta_hat,theta_max,validation,violation_time\n";
}

void write_scenario_csv_row(std::ostream& out, const PowerNetwork& net, const ScenarioResult& result) {
    const auto old = out.precision(10);
    out << result.scenario.faulted_bus << ',' << result.scenario.duration << ','
        << to_string(result.status) << ',';
    if (result.status != ScenarioStatus::Ok || !result.verdict) {
        out << ",,,,,,\n";
        out.precision(old);
        return;
    }
    out << result.e_star << ',' << to_string(result.verdict->status) << ',';
    if (auto w = worst_line(*result.verdict)) {
        const auto& line = net.line(*w);
        const auto& r = result.verdict->per_line[*w];
        out << net.bus(line.from).id << '-' << net.bus(line.to).id << ',';
        if (std::isfinite(r.theta_hat)) out << r.theta_hat;
        out << ',' << r.relay_limit << ',';
    } else {
        out << ",,,";
    }
    if (result.validation) {
        const auto& v = *result.validation;
        out << (v.diverged ? "diverged" : (v.violation ? "violation" : "secure")) << ',';
        if (v.violation) out << v.violation->time;
        else if (v.diverged) out << v.divergence_time;
    } else {
        out << ',';
    }
    out << '\n';
    out.precision(old);
}

}  // namespace gridshield
