#include "stfusion/filter.hpp"

#include <algorithm>
#include <cmath>

namespace stf {

namespace {

// Symmetrize, retrying once with a small diagonal jitter when round-off has
// pushed the matrix off the PD cone.
Eigen::MatrixXd recondition_spd(Eigen::MatrixXd m, const char* what) {
  m = symmetrized(m);
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return m;
  m += 1e-12 * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::LLT<Eigen::MatrixXd> retry(m);
  if (retry.info() != Eigen::Success) {
    throw DefinitenessError(std::string(what) + " is not positive definite");
  }
  return m;
}

struct UpdateCore {
  Eigen::VectorXd mean;       // x + K (z - h(x))
  Eigen::MatrixXd posterior;  // P - K S K^T, symmetrized
  double innovation_maha = 0.0;
};

// Shared innovation/gain arithmetic so the StKF and KF mean updates coincide
// exactly. S is factored once; K S K^T is formed as U^T U to stay symmetric.
UpdateCore update_core(const Eigen::VectorXd& x, const Eigen::MatrixXd& p,
                       const MeasurementModel& mm, const Eigen::VectorXd& z) {
  if (z.size() != mm.measurement_dim()) {
    throw DimensionError("update measurement dimension mismatch");
  }
  const Eigen::MatrixXd h_jac = mm.jacobian_h(x);
  const Eigen::VectorXd innovation = z - mm.h(x);
  const Eigen::MatrixXd s = symmetrized(h_jac * p * h_jac.transpose() + mm.r_scale);
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw DefinitenessError("innovation covariance is singular");
  }
  const Eigen::MatrixXd hp = h_jac * p;
  const Eigen::MatrixXd gain = llt.solve(hp).transpose();
  // U = L^-1 H P so that K S K^T = U^T U.
  const Eigen::MatrixXd u = llt.matrixL().solve(hp);

  UpdateCore core;
  core.mean = x + gain * innovation;
  core.posterior = symmetrized(p - u.transpose() * u);
  core.innovation_maha = innovation.dot(llt.solve(innovation));
  return core;
}

Eigen::MatrixXd predicted_scale(const Eigen::VectorXd& x, const Eigen::MatrixXd& p,
                                const ProcessModel& pm) {
  const Eigen::MatrixXd f_jac = pm.jacobian_f(x);
  return recondition_spd(f_jac * p * f_jac.transpose() + pm.q_scale,
                         "predicted scale");
}

}  // namespace

ProcessModel linear_process(const Eigen::MatrixXd& transition,
                            const Eigen::MatrixXd& q_scale, double q_dof) {
  return {[transition](const Eigen::VectorXd& x) { return (transition * x).eval(); },
          [transition](const Eigen::VectorXd&) { return transition; }, q_scale, q_dof};
}

MeasurementModel linear_measurement(const Eigen::MatrixXd& observation,
                                    const Eigen::MatrixXd& r_scale, double r_dof) {
  return {[observation](const Eigen::VectorXd& x) { return (observation * x).eval(); },
          [observation](const Eigen::VectorXd&) { return observation; }, r_scale, r_dof};
}

TBelief stkf_predict(const TBelief& post, const ProcessModel& pm) {
  const auto& d = post.density;
  return {StudentT(pm.f(d.mean), predicted_scale(d.mean, d.scale, pm),
                   std::min(d.dof, pm.q_dof))};
}

TBelief stkf_update(const TBelief& prior, const MeasurementModel& mm,
                    const Eigen::VectorXd& z) {
  const auto& d = prior.density;
  const double m = static_cast<double>(mm.measurement_dim());
  const double nu = std::min(d.dof, mm.r_dof);
  const UpdateCore core = update_core(d.mean, d.scale, mm, z);
  const double alpha = (nu + core.innovation_maha) / (nu + m);
  return {StudentT(core.mean,
                   recondition_spd(alpha * core.posterior, "posterior scale"),
                   nu + m)};
}

GBelief kf_predict(const GBelief& post, const ProcessModel& pm) {
  const auto& d = post.density;
  return {Gaussian(pm.f(d.mean), predicted_scale(d.mean, d.cov, pm))};
}

GBelief kf_update(const GBelief& prior, const MeasurementModel& mm,
                  const Eigen::VectorXd& z) {
  const auto& d = prior.density;
  const UpdateCore core = update_core(d.mean, d.cov, mm, z);
  return {Gaussian(core.mean, recondition_spd(core.posterior, "posterior covariance"))};
}

}  // namespace stf
