#include "stfusion/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

namespace stf {
namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

Eigen::VectorXd parse_vector(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) {
    throw ConfigError(where + " must be a nonempty array of numbers");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ConfigError(where + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd parse_matrix(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) {
    throw ConfigError(where + " must be a nonempty array of rows");
  }
  const std::size_t cols = arr[0].is_array() ? arr[0].size() : 0;
  if (cols == 0) throw ConfigError(where + " rows must be nonempty arrays");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(arr.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_array() || arr[i].size() != cols) {
      throw ConfigError(where + " rows must all have the same length");
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (!arr[i][j].is_number()) throw ConfigError(where + " must contain only numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          arr[i][j].get<double>();
    }
  }
  return m;
}

OutlierNoiseSpec parse_noise(const json& obj, const std::string& where,
                             OutlierNoiseSpec base) {
  check_keys(obj, {"nominal_sigma", "outlier_sigma", "outlier_prob"}, where);
  if (obj.contains("nominal_sigma")) base.nominal_sigma = obj["nominal_sigma"].get<double>();
  if (obj.contains("outlier_sigma")) base.outlier_sigma = obj["outlier_sigma"].get<double>();
  if (obj.contains("outlier_prob")) base.outlier_prob = obj["outlier_prob"].get<double>();
  return base;
}

json noise_to_json(const OutlierNoiseSpec& spec) {
  return {{"nominal_sigma", spec.nominal_sigma},
          {"outlier_sigma", spec.outlier_sigma},
          {"outlier_prob", spec.outlier_prob}};
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    arr.push_back(row);
  }
  return arr;
}

ScenarioConfig parse_scenario(const json& obj, ScenarioConfig base) {
  check_keys(obj,
             {"initial_mean", "initial_cov", "delta_t", "process_noise", "sensors",
              "steps", "runs", "seed", "filter_dofs", "t_scale_convention"},
             "scenario");
  if (obj.contains("initial_mean")) {
    base.initial_mean = parse_vector(obj["initial_mean"], "scenario.initial_mean");
  }
  if (obj.contains("initial_cov")) {
    base.initial_cov = parse_matrix(obj["initial_cov"], "scenario.initial_cov");
  }
  if (obj.contains("delta_t")) base.delta_t = obj["delta_t"].get<double>();
  if (obj.contains("process_noise")) {
    base.process_noise =
        parse_noise(obj["process_noise"], "scenario.process_noise", base.process_noise);
  }
  if (obj.contains("sensors")) {
    const json& arr = obj["sensors"];
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError("scenario.sensors must be a nonempty array");
    }
    base.sensors.clear();
    for (const json& entry : arr) {
      check_keys(entry, {"observation", "noise"}, "scenario.sensors[]");
      SensorSpec spec;
      if (!entry.contains("observation") || !entry.contains("noise")) {
        throw ConfigError("each sensor needs 'observation' and 'noise'");
      }
      spec.observation = parse_matrix(entry["observation"], "sensor observation");
      spec.noise = parse_noise(entry["noise"], "sensor noise", OutlierNoiseSpec{});
      base.sensors.push_back(std::move(spec));
    }
  }
  if (obj.contains("steps")) base.steps = obj["steps"].get<std::size_t>();
  if (obj.contains("runs")) base.runs = obj["runs"].get<std::size_t>();
  if (obj.contains("seed")) base.seed = obj["seed"].get<std::uint64_t>();
  if (obj.contains("filter_dofs")) {
    const json& dofs = obj["filter_dofs"];
    check_keys(dofs, {"initial", "process", "measurement"}, "scenario.filter_dofs");
    if (dofs.contains("initial")) base.filter_dofs.initial = dofs["initial"].get<double>();
    if (dofs.contains("process")) base.filter_dofs.process = dofs["process"].get<double>();
    if (dofs.contains("measurement")) {
      base.filter_dofs.measurement = dofs["measurement"].get<double>();
    }
  }
  if (obj.contains("t_scale_convention")) {
    const std::string value = obj["t_scale_convention"].get<std::string>();
    if (value == "nominal") {
      base.t_scale_convention = TScaleConvention::Nominal;
    } else if (value == "moment-matched") {
      base.t_scale_convention = TScaleConvention::MomentMatched;
    } else {
      throw ConfigError("t_scale_convention must be 'nominal' or 'moment-matched'");
    }
  }
  return base;
}

std::string format_number(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace

CliConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(origin + ": config must be a JSON object");

  CliConfig cfg;
  try {
    check_keys(root,
               {"scenario", "methods", "aa_variant", "dof_rule", "p_o_list",
                "output_path"},
               "config");
    if (root.contains("scenario")) {
      cfg.scenario = parse_scenario(root["scenario"], cfg.scenario);
    }
    if (root.contains("methods")) {
      const json& arr = root["methods"];
      if (!arr.is_array() || arr.empty()) {
        throw ConfigError("methods must be a nonempty array of method names");
      }
      cfg.methods.clear();
      for (const json& entry : arr) cfg.methods.push_back(entry.get<std::string>());
    }
    if (root.contains("aa_variant")) {
      const std::string value = root["aa_variant"].get<std::string>();
      if (value == "v1") {
        cfg.aa_variant = AaVariant::V1;
      } else if (value == "v2") {
        cfg.aa_variant = AaVariant::V2;
      } else {
        throw ConfigError("aa_variant must be 'v1' or 'v2'");
      }
    }
    if (root.contains("dof_rule")) {
      const std::string value = root["dof_rule"].get<std::string>();
      if (value == "min") {
        cfg.dof_rule = DofRule::Min;
      } else if (value == "average") {
        cfg.dof_rule = DofRule::Average;
      } else {
        throw ConfigError("dof_rule must be 'min' or 'average'");
      }
    }
    if (root.contains("p_o_list")) {
      const Eigen::VectorXd values = parse_vector(root["p_o_list"], "p_o_list");
      cfg.p_o_list.assign(values.data(), values.data() + values.size());
    }
    if (root.contains("output_path")) {
      cfg.output_path = root["output_path"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  try {
    validate_scenario(cfg.scenario);
    for (const std::string& name : cfg.methods) {
      resolve_method(name, cfg.aa_variant, cfg.dof_rule);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  for (double p : cfg.p_o_list) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError("p_o_list entries must lie in [0, 1]");
    }
  }
  if (cfg.p_o_list.empty()) throw ConfigError("p_o_list must be nonempty");
  if (cfg.output_path.empty()) throw ConfigError("output_path must be nonempty");
  return cfg;
}

CliConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

std::string serialize_config(const CliConfig& cfg) {
  json sensors = json::array();
  for (const SensorSpec& sensor : cfg.scenario.sensors) {
    sensors.push_back({{"observation", matrix_to_json(sensor.observation)},
                       {"noise", noise_to_json(sensor.noise)}});
  }
  const json root = {
      {"scenario",
       {{"initial_mean", vector_to_json(cfg.scenario.initial_mean)},
        {"initial_cov", matrix_to_json(cfg.scenario.initial_cov)},
        {"delta_t", cfg.scenario.delta_t},
        {"process_noise", noise_to_json(cfg.scenario.process_noise)},
        {"sensors", sensors},
        {"steps", cfg.scenario.steps},
        {"runs", cfg.scenario.runs},
        {"seed", cfg.scenario.seed},
        {"filter_dofs",
         {{"initial", cfg.scenario.filter_dofs.initial},
          {"process", cfg.scenario.filter_dofs.process},
          {"measurement", cfg.scenario.filter_dofs.measurement}}},
        {"t_scale_convention",
         cfg.scenario.t_scale_convention == TScaleConvention::Nominal
             ? "nominal"
             : "moment-matched"}}},
      {"methods", cfg.methods},
      {"aa_variant", cfg.aa_variant == AaVariant::V1 ? "v1" : "v2"},
      {"dof_rule", cfg.dof_rule == DofRule::Min ? "min" : "average"},
      {"p_o_list", cfg.p_o_list},
      {"output_path", cfg.output_path}};
  return root.dump(2) + "\n";
}

std::vector<MethodConfig> resolve_methods(const CliConfig& cfg) {
  std::vector<MethodConfig> methods;
  methods.reserve(cfg.methods.size());
  for (const std::string& name : cfg.methods) {
    methods.push_back(resolve_method(name, cfg.aa_variant, cfg.dof_rule));
  }
  return methods;
}

std::string summary_path(const std::string& output_path) {
  const std::size_t slash = output_path.find_last_of('/');
  const std::size_t dot = output_path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return output_path + "_summary";
  }
  return output_path.substr(0, dot) + "_summary" + output_path.substr(dot);
}

void write_results_csv(const std::vector<RunReport>& reports, const std::string& path) {
  std::ofstream steps = open_output(path);
  steps << "p_o,method,step,position_rmse,velocity_rmse\n";
  for (const RunReport& report : reports) {
    for (const MethodReport& method : report.methods) {
      for (std::size_t k = 0; k < method.position_rmse.size(); ++k) {
        if (!std::isfinite(method.position_rmse[k]) ||
            !std::isfinite(method.velocity_rmse[k])) {
          continue;  // fully-excluded method: no finite row to report
        }
        steps << format_number(report.outlier_prob) << ',' << method.name << ','
              << k + 1 << ',' << format_number(method.position_rmse[k]) << ','
              << format_number(method.velocity_rmse[k]) << '\n';
      }
    }
  }

  std::ofstream summary = open_output(summary_path(path));
  summary << "p_o,method,avg_position_rmse,avg_velocity_rmse,mean_weight_sensor_1,"
             "excluded_runs\n";
  for (const RunReport& report : reports) {
    for (const MethodReport& method : report.methods) {
      summary << format_number(report.outlier_prob) << ',' << method.name << ',';
      if (std::isfinite(method.avg_position_rmse)) {
        summary << format_number(method.avg_position_rmse);
      }
      summary << ',';
      if (std::isfinite(method.avg_velocity_rmse)) {
        summary << format_number(method.avg_velocity_rmse);
      }
      summary << ',';
      if (std::isfinite(method.mean_weight_sensor_1)) {
        summary << format_number(method.mean_weight_sensor_1);
      }
      summary << ',' << method.excluded_runs << '\n';
    }
  }
}

void write_results_json(const std::vector<RunReport>& reports, const std::string& path) {
  json steps = json::array();
  json summary = json::array();
  for (const RunReport& report : reports) {
    for (const MethodReport& method : report.methods) {
      for (std::size_t k = 0; k < method.position_rmse.size(); ++k) {
        if (!std::isfinite(method.position_rmse[k]) ||
            !std::isfinite(method.velocity_rmse[k])) {
          continue;
        }
        steps.push_back({{"p_o", report.outlier_prob},
                         {"method", method.name},
                         {"step", k + 1},
                         {"position_rmse", method.position_rmse[k]},
                         {"velocity_rmse", method.velocity_rmse[k]}});
      }
      json row = {{"p_o", report.outlier_prob},
                  {"method", method.name},
                  {"excluded_runs", method.excluded_runs}};
      row["avg_position_rmse"] = std::isfinite(method.avg_position_rmse)
                                     ? json(method.avg_position_rmse)
                                     : json(nullptr);
      row["avg_velocity_rmse"] = std::isfinite(method.avg_velocity_rmse)
                                     ? json(method.avg_velocity_rmse)
                                     : json(nullptr);
      row["mean_weight_sensor_1"] = std::isfinite(method.mean_weight_sensor_1)
                                        ? json(method.mean_weight_sensor_1)
                                        : json(nullptr);
      summary.push_back(std::move(row));
    }
  }
  open_output(path) << steps.dump(2) << "\n";
  open_output(summary_path(path)) << summary.dump(2) << "\n";
}

}  // namespace stf
