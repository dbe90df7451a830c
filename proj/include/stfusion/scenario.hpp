#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "stfusion/network.hpp"

namespace stf {

// Contaminated-Gaussian noise channel: each step the standard deviation is
// outlier_sigma with probability outlier_prob, else nominal_sigma.
struct OutlierNoiseSpec {
  double nominal_sigma = 1.0;
  double outlier_sigma = 1.0;
  double outlier_prob = 0.0;
};

struct SensorSpec {
  Eigen::MatrixXd observation;  // H
  OutlierNoiseSpec noise;
};

struct FilterDofs {
  double initial = 3.0;      // dof of the t prior
  double process = 3.0;      // modeled process-noise dof
  double measurement = 3.0;  // modeled measurement-noise dof
};

// How the t filters turn a nominal noise covariance into a scale matrix:
// Nominal uses the covariance as the scale directly; MomentMatched shrinks
// it by (dof-2)/dof so the modeled t covariance equals the nominal one.
enum class TScaleConvention { Nominal, MomentMatched };

struct ScenarioConfig {
  Eigen::VectorXd initial_mean;
  Eigen::MatrixXd initial_cov;
  double delta_t = 1.0;
  OutlierNoiseSpec process_noise;
  std::vector<SensorSpec> sensors;
  std::size_t steps = 100;
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  FilterDofs filter_dofs;
  TScaleConvention t_scale_convention = TScaleConvention::Nominal;
};

// Planar nearly-constant-velocity tracking benchmark: state
// (px, vx, py, vy), two position sensors with contaminated noise.
ScenarioConfig default_scenario();
void validate_scenario(const ScenarioConfig& cfg);

// Copy of cfg with the process and every sensor outlier probability set to p.
ScenarioConfig with_outlier_prob(ScenarioConfig cfg, double p);

// Constant-velocity transition F and acceleration-noise gain G for one axis
// pair per planar axis.
Eigen::MatrixXd ncv_transition(double dt);
Eigen::MatrixXd ncv_noise_gain(double dt);

// Models as the filters assume them: noise modeled at nominal level, t scale
// per cfg.t_scale_convention, process scale jittered to stay PD.
ProcessModel scenario_process_model(const ScenarioConfig& cfg, FilterKind kind);
MeasurementModel scenario_measurement_model(const ScenarioConfig& cfg,
                                            std::size_t sensor, FilterKind kind);
Belief scenario_initial_belief(const ScenarioConfig& cfg, FilterKind kind);

double sample_outlier_sigma(const OutlierNoiseSpec& spec, std::mt19937_64& rng);

// Truth trajectory x_0..x_steps of one run; the draw is keyed by
// cfg.seed ^ run_index so runs are reproducible individually.
std::vector<Eigen::VectorXd> generate_truth(const ScenarioConfig& cfg,
                                            std::uint64_t run_index);

// Per-step, per-sensor measurements of a truth trajectory plus the outlier
// indicator of each draw: measurements[t][s] observes truth[t+1].
struct MeasurementSet {
  std::vector<std::vector<Eigen::VectorXd>> measurements;
  std::vector<std::vector<bool>> outliers;
};

MeasurementSet generate_measurements(const std::vector<Eigen::VectorXd>& truth,
                                     const std::vector<SensorSpec>& sensors,
                                     std::uint64_t run_key);

enum class StateComponent { Position, Velocity };

// Per-time RMSE over runs of the selected 2-D sub-vector (position indices
// 0 and 2, velocity indices 1 and 3).
std::vector<double> rmse(const std::vector<std::vector<Eigen::VectorXd>>& estimates,
                         const std::vector<std::vector<Eigen::VectorXd>>& truths,
                         StateComponent selector);

// Named experiment arm: which filter, which fusion, and whether it uses the
// whole network or only sensor 1.
struct MethodConfig {
  std::string name;
  FusionConfig fusion;
  bool cooperative = true;
};

const std::vector<std::string>& method_names();
MethodConfig resolve_method(const std::string& name, AaVariant aa_variant,
                            DofRule dof_rule);

struct MethodReport {
  std::string name;
  std::vector<double> position_rmse;  // per step
  std::vector<double> velocity_rmse;
  double avg_position_rmse = 0.0;
  double avg_velocity_rmse = 0.0;
  // Node 0's mean fusion weight per sensor over runs, per step (steps x S);
  // NaN-filled when the method has no fusion weights (single sensor, AM).
  Eigen::MatrixXd mean_weights;
  double mean_weight_sensor_1 = std::numeric_limits<double>::quiet_NaN();
  std::size_t excluded_runs = 0;
};

struct RunReport {
  double outlier_prob = 0.0;
  std::size_t runs = 0;
  std::size_t steps = 0;
  std::vector<MethodReport> methods;
};

// Paired Monte Carlo comparison: every method sees the same truths and
// measurements per run. Estimates are node 0's post-fusion means. Runs with
// a non-finite estimate or a filter/fusion breakdown are excluded from the
// averages and counted. `parallel` splits runs across threads; the reduction
// runs in run order, so results do not depend on the thread count.
RunReport run_experiment(const ScenarioConfig& cfg,
                         const std::vector<MethodConfig>& methods, int parallel = 1);

}  // namespace stf
