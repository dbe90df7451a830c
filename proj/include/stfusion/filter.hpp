#pragma once

#include <Eigen/Dense>
#include <functional>

#include "stfusion/densities.hpp"

namespace stf {

// Plant description x_{k+1} = f(x_k) + w, with w heavy-tailed of scale
// q_scale and dof q_dof. jacobian_f supplies F at the linearization point.
struct ProcessModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian_f;
  Eigen::MatrixXd q_scale;
  double q_dof = 3.0;
};

// Sensor description z = h(x) + v, with v of scale r_scale and dof r_dof.
struct MeasurementModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian_h;
  Eigen::MatrixXd r_scale;
  double r_dof = 3.0;

  Eigen::Index measurement_dim() const { return r_scale.rows(); }
};

// Helpers for the common linear case f(x) = F x, h(x) = H x.
ProcessModel linear_process(const Eigen::MatrixXd& transition,
                            const Eigen::MatrixXd& q_scale, double q_dof);
MeasurementModel linear_measurement(const Eigen::MatrixXd& observation,
                                    const Eigen::MatrixXd& r_scale, double r_dof);

struct TBelief {
  StudentT density;
};

struct GBelief {
  Gaussian density;
};

// Student's t Kalman filter prediction: mean f(x), scale F P F^T + Q,
// dof min(dof, q_dof).
TBelief stkf_predict(const TBelief& post, const ProcessModel& pm);

// Student's t Kalman filter update. The posterior scale is the KF posterior
// scale inflated by alpha = (nu' + innovation Mahalanobis) / (nu' + m) with
// nu' = min(prior dof, r_dof); the posterior dof is nu' + m.
TBelief stkf_update(const TBelief& prior, const MeasurementModel& mm,
                    const Eigen::VectorXd& z);

// Classical Kalman filter baseline; same arithmetic with alpha fixed to one
// and no dof bookkeeping.
GBelief kf_predict(const GBelief& post, const ProcessModel& pm);
GBelief kf_update(const GBelief& prior, const MeasurementModel& mm,
                  const Eigen::VectorXd& z);

}  // namespace stf
