#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stfusion/config.hpp"
#include "stfusion/diagnostics.hpp"
#include "stfusion/scenario.hpp"

namespace {

int run_command(const std::string& config_path, long long runs_override,
                long long seed_override, const std::string& out_override,
                const std::string& format, int parallel) {
  stf::CliConfig cfg =
      config_path.empty() ? stf::CliConfig{} : stf::parse_config(config_path);
  if (runs_override >= 0) cfg.scenario.runs = static_cast<std::size_t>(runs_override);
  if (seed_override >= 0) cfg.scenario.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.output_path = out_override;

  const std::vector<stf::MethodConfig> methods = stf::resolve_methods(cfg);
  std::vector<stf::RunReport> reports;
  reports.reserve(cfg.p_o_list.size());
  for (double p : cfg.p_o_list) {
    const auto started = std::chrono::steady_clock::now();
    std::cerr << "p_o=" << p << ": " << cfg.scenario.runs << " runs x "
              << methods.size() << " methods..." << std::flush;
    reports.push_back(
        stf::run_experiment(stf::with_outlier_prob(cfg.scenario, p), methods, parallel));
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    std::cerr << " done (" << elapsed << " s)\n";
  }

  if (format == "json") {
    stf::write_results_json(reports, cfg.output_path);
  } else {
    stf::write_results_csv(reports, cfg.output_path);
  }
  std::cerr << "wrote " << cfg.output_path << " and "
            << stf::summary_path(cfg.output_path) << "\n";
  return 0;
}

int diagnostics_command(const std::string& out, double dof, double offset_max,
                        int points, double scale, double scale_ratio, int dim,
                        std::size_t samples, std::uint64_t seed,
                        const std::string& variant, const std::string& dof_rule) {
  std::vector<double> offsets;
  offsets.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    offsets.push_back(points == 1 ? 0.0 : offset_max * i / (points - 1));
  }
  const Eigen::MatrixXd base = scale * Eigen::MatrixXd::Identity(dim, dim);
  const std::vector<stf::DivergenceRow> rows = stf::divergence_curve(
      base, scale_ratio * base, dof, offsets,
      variant == "v2" ? stf::AaVariant::V2 : stf::AaVariant::V1,
      dof_rule == "min" ? stf::DofRule::Min : stf::DofRule::Average, samples, seed);
  stf::write_divergence_csv(rows, out);
  std::cerr << "wrote " << out << " (" << rows.size() << " offsets)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Student's t Kalman filtering and multi-sensor fusion benchmark"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the Monte Carlo tracking experiment");
  std::string config_path;
  long long runs_override = -1;
  long long seed_override = -1;
  std::string out_override;
  std::string format = "csv";
  int parallel = 1;
  run->add_option("--config", config_path, "JSON config file (defaults used if omitted)");
  run->add_option("--runs", runs_override, "Override the Monte Carlo run count");
  run->add_option("--seed", seed_override, "Override the base RNG seed");
  run->add_option("--out", out_override, "Override the output path");
  run->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--parallel", parallel, "Worker thread count")
      ->check(CLI::PositiveNumber);

  auto* diag = app.add_subcommand(
      "diagnostics", "Emit divergence-approximation and fusion-balance curves");
  std::string diag_out = "diagnostics.csv";
  double dof = 3.0;
  double offset_max = 3.0;
  int points = 13;
  double scale = 1.0;
  double scale_ratio = 1.0;
  int dim = 2;
  std::size_t samples = 20000;
  std::uint64_t diag_seed = 1;
  std::string variant = "v1";
  std::string dof_rule = "average";
  diag->add_option("--out", diag_out, "Output CSV path");
  diag->add_option("--dof", dof, "Dof of both densities")->check(CLI::Range(2.0001, 1e9));
  diag->add_option("--offset-max", offset_max, "Largest mean offset")
      ->check(CLI::NonNegativeNumber);
  diag->add_option("--points", points, "Number of offsets")->check(CLI::PositiveNumber);
  diag->add_option("--scale", scale, "Scale of the first density (isotropic)")
      ->check(CLI::PositiveNumber);
  diag->add_option("--scale-ratio", scale_ratio, "Second scale / first scale")
      ->check(CLI::PositiveNumber);
  diag->add_option("--dim", dim, "State dimension")->check(CLI::PositiveNumber);
  diag->add_option("--samples", samples, "Monte Carlo draws per divergence");
  diag->add_option("--seed", diag_seed, "RNG seed");
  diag->add_option("--variant", variant, "Weight objective variant")
      ->check(CLI::IsMember({"v1", "v2"}));
  diag->add_option("--dof-rule", dof_rule, "Fused dof rule")
      ->check(CLI::IsMember({"min", "average"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (run->parsed()) {
      return run_command(config_path, runs_override, seed_override, out_override,
                         format, parallel);
    }
    return diagnostics_command(diag_out, dof, offset_max, points, scale, scale_ratio,
                               dim, samples, diag_seed, variant, dof_rule);
  } catch (const stf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
