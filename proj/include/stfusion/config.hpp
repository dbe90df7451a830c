#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "stfusion/scenario.hpp"

namespace stf {

// Raised for unreadable, unparsable, or schema-violating configuration;
// the message names the offending key or carries the parser's line info.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Full experiment description as read from a JSON config file. Every field
// has a benchmark default, so an empty object {} is a valid config.
struct CliConfig {
  ScenarioConfig scenario = default_scenario();
  std::vector<std::string> methods = method_names();
  AaVariant aa_variant = AaVariant::V1;
  DofRule dof_rule = DofRule::Average;
  std::vector<double> p_o_list = {0.05};
  std::string output_path = "results.csv";
};

CliConfig parse_config(const std::string& path);
// Same parser over in-memory text; `origin` labels error messages.
CliConfig parse_config_text(const std::string& text, const std::string& origin);
std::string serialize_config(const CliConfig& cfg);

std::vector<MethodConfig> resolve_methods(const CliConfig& cfg);

// Sibling path carrying the summary table: "x.csv" -> "x_summary.csv".
std::string summary_path(const std::string& output_path);

// Per-step table (header "p_o,method,step,position_rmse,velocity_rmse") and
// summary table (p_o, method, avg_position_rmse, avg_velocity_rmse,
// mean_weight_sensor_1, excluded_runs). Methods without fusion weights get
// an empty mean-weight cell (null in JSON) so numeric fields stay finite.
void write_results_csv(const std::vector<RunReport>& reports, const std::string& path);
void write_results_json(const std::vector<RunReport>& reports, const std::string& path);

}  // namespace stf
