#pragma once

// JSON configuration documents and CSV/JSON result files.
//
// Scenario and filter documents mirror the Scenario and FilterConfig fields
// one-to-one (SI units, radians). Unknown keys are rejected so that a typo
// never silently falls back to a default. Both documents accept an optional
// free-text "description".

#include <filesystem>
#include <iosfwd>
#include <string>

#include "qpf/particle_filter.hpp"
#include "qpf/simulation.hpp"

namespace qpf {

Scenario ParseScenario(std::string const& json_text);
Scenario LoadScenario(std::filesystem::path const& path);
std::string ScenarioToJson(Scenario const& scenario);

FilterConfig ParseFilterConfig(std::string const& json_text);
FilterConfig LoadFilterConfig(std::filesystem::path const& path);
std::string FilterConfigToJson(FilterConfig const& config);

// Header: t,err_att_rad,err_bias_x,err_bias_y,err_bias_z,sig3_att,ess,norm_dev
void WriteRunCsv(RunMetrics const& metrics, std::ostream& out);

// {strategy, n_runs, median_final_rmse_rad, mean_final_rmse_rad,
//  sigma3_consistency, wall_time_s, ...}
std::string SummaryToJson(MonteCarloSummary const& summary,
                          MetricsOptions const& options);

// One row per seed with both arms' final RMSE and divergence flags.
void WriteComparisonCsv(ComparisonReport const& report, std::ostream& out);
std::string ComparisonToJson(ComparisonReport const& report,
                             MetricsOptions const& options);

}  // namespace qpf
