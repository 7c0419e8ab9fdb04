#pragma once

#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridshield/pipeline.hpp"
#include "gridshield/screening.hpp"

namespace gridshield {

/// Per-line theta_hat, relay limit, termination and iteration counts.
nlohmann::json verdict_to_json(const PowerNetwork& net, const ScreeningVerdict& verdict);

/// One row per line: line,from,to,theta_hat,theta_max,at_boundary,termination,iterations,cuts.
void write_verdict_csv(std::ostream& out, const PowerNetwork& net, const ScreeningVerdict& verdict);

nlohmann::json scenario_to_json(const PowerNetwork& net, const ScenarioResult& result);

/// Header: bus,tau_f,status,e_star,verdict,worst_line,theta_hat,theta_max,validation,violation_time
void write_scenario_csv_header(std::ostream& out);
void write_scenario_csv_row(std::ostream& out, const PowerNetwork& net, const ScenarioResult& result);

}  // namespace gridshield
