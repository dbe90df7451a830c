#include "stfusion/scenario.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <utility>

#include "stfusion/common.hpp"

namespace stf {
namespace {

// RNG substream tags per run: one channel per independent noise source.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kProcessSwitchStream = 2;
constexpr std::uint64_t kProcessNoiseStream = 3;
constexpr std::uint64_t kSensorStreamBase = 100;  // sensor s: switch 100+2s, noise 101+2s

constexpr double kProcessJitter = 1e-9;  // keeps the rank-2 G Q G^T scale PD

void check_noise(const OutlierNoiseSpec& spec, const char* what) {
  if (!(spec.nominal_sigma > 0.0) || !(spec.outlier_sigma > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": sigmas must be positive");
  }
  if (spec.outlier_sigma < spec.nominal_sigma) {
    throw std::invalid_argument(std::string(what) +
                                ": outlier sigma must be at least the nominal sigma");
  }
  if (!(spec.outlier_prob >= 0.0 && spec.outlier_prob <= 1.0)) {
    throw std::invalid_argument(std::string(what) +
                                ": outlier probability must lie in [0, 1]");
  }
}

Eigen::MatrixXd nominal_process_cov(const ScenarioConfig& cfg) {
  const Eigen::MatrixXd gain = ncv_noise_gain(cfg.delta_t);
  const double var = cfg.process_noise.nominal_sigma * cfg.process_noise.nominal_sigma;
  return var * (gain * gain.transpose()) +
         kProcessJitter * Eigen::MatrixXd::Identity(gain.rows(), gain.rows());
}

double t_scale_factor(const ScenarioConfig& cfg, double dof) {
  return cfg.t_scale_convention == TScaleConvention::Nominal ? 1.0
                                                             : (dof - 2.0) / dof;
}

// Squared norm of the selected 2-D sub-vector of an estimate error.
double component_sq(const Eigen::VectorXd& err, StateComponent selector) {
  const Eigen::Index a = selector == StateComponent::Position ? 0 : 1;
  const Eigen::Index b = selector == StateComponent::Position ? 2 : 3;
  return err[a] * err[a] + err[b] * err[b];
}

const Eigen::VectorXd& belief_mean(const Belief& b) {
  if (const TBelief* t = std::get_if<TBelief>(&b)) return t->density.mean;
  return std::get<GBelief>(b).density.mean;
}

// Everything one (run, method) simulation contributes to the report;
// reduced later in run order so thread scheduling cannot reorder sums.
struct RunOutcome {
  bool excluded = false;
  std::vector<double> pos_sq;          // per step
  std::vector<double> vel_sq;
  Eigen::MatrixXd node0_weights;       // steps x S
};

RunOutcome simulate_one(const ScenarioConfig& cfg, const MethodConfig& method,
                        const std::vector<Eigen::VectorXd>& truth,
                        const MeasurementSet& meas) {
  const std::size_t sensor_count = method.cooperative ? cfg.sensors.size() : 1;
  const FilterKind kind = method.fusion.filter_kind;

  std::vector<SensorNode> nodes;
  nodes.reserve(sensor_count);
  for (std::size_t s = 0; s < sensor_count; ++s) {
    nodes.push_back({static_cast<int>(s), scenario_initial_belief(cfg, kind),
                     scenario_measurement_model(cfg, s, kind),
                     scenario_process_model(cfg, kind), false});
  }
  const SensorGraph graph = SensorGraph::complete(sensor_count, 1);

  std::vector<std::vector<Eigen::VectorXd>> zs(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    zs[t].assign(meas.measurements[t].begin(),
                 meas.measurements[t].begin() + static_cast<std::ptrdiff_t>(sensor_count));
  }

  RunOutcome out;
  out.pos_sq.assign(cfg.steps, 0.0);
  out.vel_sq.assign(cfg.steps, 0.0);
  out.node0_weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.steps),
                                            static_cast<Eigen::Index>(cfg.sensors.size()));
  try {
    const SequenceResult seq = run_sequence(std::move(nodes), graph, method.fusion, zs);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      const Eigen::VectorXd& estimate = belief_mean(seq.beliefs[t][0]);
      if (!estimate.allFinite()) {
        out.excluded = true;
        return out;
      }
      const Eigen::VectorXd err = estimate - truth[t + 1];
      out.pos_sq[t] = component_sq(err, StateComponent::Position);
      out.vel_sq[t] = component_sq(err, StateComponent::Velocity);
      for (std::size_t s = 0; s < sensor_count; ++s) {
        out.node0_weights(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) =
            seq.fusion_weights[t](0, static_cast<Eigen::Index>(s));
      }
    }
  } catch (const DefinitenessError&) {
    out.excluded = true;  // numerical breakdown counts as a diverged run
  } catch (const OptimizerError&) {
    out.excluded = true;
  }
  return out;
}

}  // namespace

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.initial_mean = Eigen::Vector4d(1000.0, 20.0, 1000.0, 0.0);
  cfg.initial_cov = Eigen::Vector4d(500.0, 50.0, 500.0, 50.0).asDiagonal();
  cfg.delta_t = 1.0;
  cfg.process_noise = {5.0, 50.0, 0.05};
  Eigen::MatrixXd h(2, 4);
  h << 1, 0, 0, 0,
       0, 0, 1, 0;
  cfg.sensors = {{h, {20.0, 200.0, 0.05}}, {h, {10.0, 100.0, 0.05}}};
  cfg.steps = 100;
  cfg.runs = 1000;
  cfg.seed = 1;
  return cfg;
}

void validate_scenario(const ScenarioConfig& cfg) {
  if (cfg.initial_mean.size() != 4) {
    throw std::invalid_argument("initial mean must be a 4-vector");
  }
  if (cfg.initial_cov.rows() != 4 || cfg.initial_cov.cols() != 4) {
    throw std::invalid_argument("initial covariance must be 4x4");
  }
  spd_cholesky(cfg.initial_cov, "initial covariance");
  if (!(cfg.delta_t > 0.0)) throw std::invalid_argument("delta_t must be positive");
  check_noise(cfg.process_noise, "process noise");
  if (cfg.sensors.empty()) throw std::invalid_argument("at least one sensor required");
  for (const SensorSpec& sensor : cfg.sensors) {
    if (sensor.observation.cols() != 4 || sensor.observation.rows() < 1) {
      throw std::invalid_argument("sensor matrix must have four columns");
    }
    check_noise(sensor.noise, "sensor noise");
  }
  if (cfg.steps < 1) throw std::invalid_argument("steps must be at least 1");
  if (cfg.runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (!(cfg.filter_dofs.initial > 2.0 && cfg.filter_dofs.process > 2.0 &&
        cfg.filter_dofs.measurement > 2.0)) {
    throw std::invalid_argument("filter dofs must exceed 2");
  }
}

ScenarioConfig with_outlier_prob(ScenarioConfig cfg, double p) {
  cfg.process_noise.outlier_prob = p;
  for (SensorSpec& sensor : cfg.sensors) sensor.noise.outlier_prob = p;
  return cfg;
}

Eigen::MatrixXd ncv_transition(double dt) {
  Eigen::MatrixXd f(4, 4);
  f << 1, dt, 0, 0,
       0, 1, 0, 0,
       0, 0, 1, dt,
       0, 0, 0, 1;
  return f;
}

Eigen::MatrixXd ncv_noise_gain(double dt) {
  Eigen::MatrixXd g(4, 2);
  g << 0.5 * dt * dt, 0,
       dt, 0,
       0, 0.5 * dt * dt,
       0, dt;
  return g;
}

ProcessModel scenario_process_model(const ScenarioConfig& cfg, FilterKind kind) {
  const Eigen::MatrixXd cov = nominal_process_cov(cfg);
  const double factor =
      kind == FilterKind::StKF ? t_scale_factor(cfg, cfg.filter_dofs.process) : 1.0;
  return linear_process(ncv_transition(cfg.delta_t), factor * cov,
                        cfg.filter_dofs.process);
}

MeasurementModel scenario_measurement_model(const ScenarioConfig& cfg,
                                            std::size_t sensor, FilterKind kind) {
  if (sensor >= cfg.sensors.size()) throw DimensionError("sensor index out of range");
  const SensorSpec& spec = cfg.sensors[sensor];
  const double var = spec.noise.nominal_sigma * spec.noise.nominal_sigma;
  const double factor =
      kind == FilterKind::StKF ? t_scale_factor(cfg, cfg.filter_dofs.measurement) : 1.0;
  const Eigen::MatrixXd r =
      factor * var *
      Eigen::MatrixXd::Identity(spec.observation.rows(), spec.observation.rows());
  return linear_measurement(spec.observation, r, cfg.filter_dofs.measurement);
}

Belief scenario_initial_belief(const ScenarioConfig& cfg, FilterKind kind) {
  if (kind == FilterKind::KF) {
    return Belief(GBelief{Gaussian(cfg.initial_mean, cfg.initial_cov)});
  }
  const double nu = cfg.filter_dofs.initial;
  return Belief(TBelief{
      StudentT(cfg.initial_mean, ((nu - 2.0) / nu) * cfg.initial_cov, nu)});
}

double sample_outlier_sigma(const OutlierNoiseSpec& spec, std::mt19937_64& rng) {
  std::bernoulli_distribution outlier(spec.outlier_prob);
  return outlier(rng) ? spec.outlier_sigma : spec.nominal_sigma;
}

std::vector<Eigen::VectorXd> generate_truth(const ScenarioConfig& cfg,
                                            std::uint64_t run_index) {
  validate_scenario(cfg);
  const std::uint64_t key = cfg.seed ^ run_index;
  std::mt19937_64 init_rng = make_stream(key, kInitStream);
  std::mt19937_64 switch_rng = make_stream(key, kProcessSwitchStream);
  std::mt19937_64 noise_rng = make_stream(key, kProcessNoiseStream);
  std::normal_distribution<double> standard_normal(0.0, 1.0);

  const Eigen::MatrixXd root =
      spd_cholesky(cfg.initial_cov, "initial covariance").matrixL();
  Eigen::VectorXd z(4);
  for (Eigen::Index i = 0; i < 4; ++i) z[i] = standard_normal(init_rng);

  std::vector<Eigen::VectorXd> truth;
  truth.reserve(cfg.steps + 1);
  truth.push_back(cfg.initial_mean + root * z);

  const Eigen::MatrixXd f = ncv_transition(cfg.delta_t);
  const Eigen::MatrixXd g = ncv_noise_gain(cfg.delta_t);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double sigma = sample_outlier_sigma(cfg.process_noise, switch_rng);
    Eigen::Vector2d accel;
    accel << sigma * standard_normal(noise_rng), sigma * standard_normal(noise_rng);
    truth.push_back(f * truth.back() + g * accel);
  }
  return truth;
}

MeasurementSet generate_measurements(const std::vector<Eigen::VectorXd>& truth,
                                     const std::vector<SensorSpec>& sensors,
                                     std::uint64_t run_key) {
  if (truth.size() < 2) throw DimensionError("truth must contain at least one step");
  if (sensors.empty()) throw DimensionError("at least one sensor required");
  const std::size_t steps = truth.size() - 1;

  std::vector<std::mt19937_64> switch_rngs;
  std::vector<std::mt19937_64> noise_rngs;
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    switch_rngs.push_back(make_stream(run_key, kSensorStreamBase + 2 * s));
    noise_rngs.push_back(make_stream(run_key, kSensorStreamBase + 2 * s + 1));
  }
  std::normal_distribution<double> standard_normal(0.0, 1.0);

  MeasurementSet out;
  out.measurements.assign(steps, {});
  out.outliers.assign(steps, {});
  for (std::size_t t = 0; t < steps; ++t) {
    out.measurements[t].reserve(sensors.size());
    out.outliers[t].reserve(sensors.size());
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      const SensorSpec& spec = sensors[s];
      if (spec.observation.cols() != truth[t + 1].size()) {
        throw DimensionError("sensor matrix does not match the state dimension");
      }
      std::bernoulli_distribution outlier_switch(spec.noise.outlier_prob);
      const bool is_outlier = outlier_switch(switch_rngs[s]);
      const double sigma =
          is_outlier ? spec.noise.outlier_sigma : spec.noise.nominal_sigma;
      Eigen::VectorXd noise(spec.observation.rows());
      for (Eigen::Index i = 0; i < noise.size(); ++i) {
        noise[i] = sigma * standard_normal(noise_rngs[s]);
      }
      out.measurements[t].push_back(spec.observation * truth[t + 1] + noise);
      out.outliers[t].push_back(is_outlier);
    }
  }
  return out;
}

std::vector<double> rmse(const std::vector<std::vector<Eigen::VectorXd>>& estimates,
                         const std::vector<std::vector<Eigen::VectorXd>>& truths,
                         StateComponent selector) {
  if (estimates.empty() || estimates.size() != truths.size()) {
    throw DimensionError("rmse needs matching nonempty estimate and truth sets");
  }
  const std::size_t steps = estimates.front().size();
  if (steps == 0) throw DimensionError("rmse needs at least one time step");
  std::vector<double> acc(steps, 0.0);
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i].size() != steps || truths[i].size() != steps) {
      throw DimensionError("rmse trajectories differ in length");
    }
    for (std::size_t k = 0; k < steps; ++k) {
      acc[k] += component_sq(estimates[i][k] - truths[i][k], selector);
    }
  }
  for (double& v : acc) v = std::sqrt(v / static_cast<double>(estimates.size()));
  return acc;
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {
      "stkf-aa", "stkf-aa-uniform", "stkf-ci", "stkf-am", "stkf-single",
      "kf-aa",   "kf-aa-uniform",   "kf-ci",   "kf-am",   "kf-single"};
  return names;
}

MethodConfig resolve_method(const std::string& name, AaVariant aa_variant,
                            DofRule dof_rule) {
  const FusionKind subopt =
      aa_variant == AaVariant::V1 ? FusionKind::AaSuboptV1 : FusionKind::AaSuboptV2;
  MethodConfig m;
  m.name = name;
  m.fusion.method.dof_rule = dof_rule;
  m.fusion.filter_kind = name.starts_with("stkf-") ? FilterKind::StKF : FilterKind::KF;
  if (!name.starts_with("stkf-") && !name.starts_with("kf-")) {
    throw std::invalid_argument("unknown method name: " + name);
  }

  const std::string tail = name.substr(name.find('-') + 1);
  if (tail == "aa") {
    m.fusion.method.kind = subopt;
  } else if (tail == "aa-uniform") {
    m.fusion.method.kind = FusionKind::AaUniform;
  } else if (tail == "ci") {
    m.fusion.method.kind = FusionKind::Ci;
  } else if (tail == "am") {
    m.fusion.method.kind = FusionKind::Am;
  } else if (tail == "single") {
    m.fusion.method.kind = FusionKind::AaUniform;  // identity on one node
    m.cooperative = false;
  } else {
    throw std::invalid_argument("unknown method name: " + name);
  }
  return m;
}

RunReport run_experiment(const ScenarioConfig& cfg,
                         const std::vector<MethodConfig>& methods, int parallel) {
  validate_scenario(cfg);
  if (methods.empty()) throw DimensionError("at least one method required");
  if (parallel < 1) throw std::invalid_argument("parallel must be at least 1");

  const std::size_t run_count = cfg.runs;
  const std::size_t method_count = methods.size();
  // outcomes[run * method_count + m]
  std::vector<RunOutcome> outcomes(run_count * method_count);

  std::atomic<std::size_t> next_run{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next_run.fetch_add(1);
      if (i >= run_count) return;
      const std::vector<Eigen::VectorXd> truth = generate_truth(cfg, i);
      const MeasurementSet meas =
          generate_measurements(truth, cfg.sensors, cfg.seed ^ i);
      for (std::size_t m = 0; m < method_count; ++m) {
        outcomes[i * method_count + m] = simulate_one(cfg, methods[m], truth, meas);
      }
    }
  };
  if (parallel == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(parallel));
    for (int t = 0; t < parallel; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  RunReport report;
  report.outlier_prob = cfg.process_noise.outlier_prob;
  report.runs = run_count;
  report.steps = cfg.steps;
  report.methods.resize(method_count);
  const Eigen::Index steps = static_cast<Eigen::Index>(cfg.steps);
  const Eigen::Index sensor_count = static_cast<Eigen::Index>(cfg.sensors.size());

  for (std::size_t m = 0; m < method_count; ++m) {
    MethodReport& mr = report.methods[m];
    mr.name = methods[m].name;
    std::vector<double> pos_acc(cfg.steps, 0.0);
    std::vector<double> vel_acc(cfg.steps, 0.0);
    Eigen::MatrixXd weight_acc = Eigen::MatrixXd::Zero(steps, sensor_count);
    std::size_t included = 0;
    for (std::size_t i = 0; i < run_count; ++i) {
      const RunOutcome& out = outcomes[i * method_count + m];
      if (out.excluded) {
        ++mr.excluded_runs;
        continue;
      }
      ++included;
      for (std::size_t k = 0; k < cfg.steps; ++k) {
        pos_acc[k] += out.pos_sq[k];
        vel_acc[k] += out.vel_sq[k];
      }
      weight_acc += out.node0_weights;
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    mr.position_rmse.assign(cfg.steps, nan);
    mr.velocity_rmse.assign(cfg.steps, nan);
    mr.mean_weights = Eigen::MatrixXd::Constant(steps, sensor_count, nan);
    if (included > 0) {
      const double inv = 1.0 / static_cast<double>(included);
      for (std::size_t k = 0; k < cfg.steps; ++k) {
        mr.position_rmse[k] = std::sqrt(pos_acc[k] * inv);
        mr.velocity_rmse[k] = std::sqrt(vel_acc[k] * inv);
      }
      mr.avg_position_rmse = 0.0;
      mr.avg_velocity_rmse = 0.0;
      for (std::size_t k = 0; k < cfg.steps; ++k) {
        mr.avg_position_rmse += mr.position_rmse[k];
        mr.avg_velocity_rmse += mr.velocity_rmse[k];
      }
      mr.avg_position_rmse /= static_cast<double>(cfg.steps);
      mr.avg_velocity_rmse /= static_cast<double>(cfg.steps);
      const bool has_weights =
          methods[m].cooperative && methods[m].fusion.method.kind != FusionKind::Am;
      if (has_weights) {
        mr.mean_weights = weight_acc * inv;
        mr.mean_weight_sensor_1 = mr.mean_weights.col(0).mean();
      }
    } else {
      mr.avg_position_rmse = nan;
      mr.avg_velocity_rmse = nan;
    }
  }
  return report;
}

}  // namespace stf
