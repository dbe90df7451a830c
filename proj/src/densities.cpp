#include "stfusion/densities.hpp"

#include <cmath>
#include <numbers>

namespace stf {

namespace {

void check_spd_param(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionError(std::string(what) + " shape does not match mean dimension");
  }
  if (!is_symmetric(m)) {
    throw DefinitenessError(std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw DefinitenessError(std::string(what) + " is not positive definite");
  }
}

}  // namespace

StudentT::StudentT(Eigen::VectorXd mean_in, Eigen::MatrixXd scale_in, double dof_in)
    : mean(std::move(mean_in)), scale(), dof(dof_in) {
  check_spd_param(scale_in, mean.size(), "StudentT scale");
  scale = symmetrized(scale_in);
  if (!(dof > 2.0)) {
    throw DimensionError("StudentT dof must exceed 2");
  }
}

Gaussian::Gaussian(Eigen::VectorXd mean_in, Eigen::MatrixXd cov_in)
    : mean(std::move(mean_in)), cov() {
  check_spd_param(cov_in, mean.size(), "Gaussian cov");
  cov = symmetrized(cov_in);
}

WeightedTMix::WeightedTMix(std::vector<StudentT> components_in, Eigen::VectorXd weights_in)
    : components(std::move(components_in)), weights(std::move(weights_in)) {
  if (components.empty()) {
    throw DimensionError("WeightedTMix needs at least one component");
  }
  if (weights.size() != static_cast<Eigen::Index>(components.size())) {
    throw DimensionError("WeightedTMix weight count does not match component count");
  }
  const Eigen::Index n = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != n) {
      throw DimensionError("WeightedTMix components must share one dimension");
    }
  }
  if ((weights.array() <= 0.0).any()) {
    throw DimensionError("WeightedTMix weights must be strictly positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw DimensionError("WeightedTMix weights must sum to one");
  }
}

double t_logpdf(const StudentT& d, const Eigen::VectorXd& x) {
  if (x.size() != d.dim()) {
    throw DimensionError("t_logpdf point dimension mismatch");
  }
  const double n = static_cast<double>(d.dim());
  const double nu = d.dof;
  auto llt = spd_cholesky(d.scale, "StudentT scale");
  const Eigen::VectorXd delta = x - d.mean;
  const double quad = delta.dot(llt.solve(delta));
  return std::lgamma(0.5 * (nu + n)) - std::lgamma(0.5 * nu) -
         0.5 * log_det_from_cholesky(llt) -
         0.5 * n * std::log(std::numbers::pi * nu) -
         0.5 * (nu + n) * std::log1p(quad / nu);
}

Moments t_moments(const StudentT& d) {
  return {d.mean, d.covariance()};
}

double gaussian_kl(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) {
    throw DimensionError("gaussian_kl dimension mismatch");
  }
  const double n = static_cast<double>(p.dim());
  auto llt_q = spd_cholesky(q.cov, "gaussian_kl q.cov");
  auto llt_p = spd_cholesky(p.cov, "gaussian_kl p.cov");
  const double trace = llt_q.solve(p.cov).trace();
  const Eigen::VectorXd delta = q.mean - p.mean;
  const double maha = delta.dot(llt_q.solve(delta));
  const double log_det_ratio = log_det_from_cholesky(llt_q) - log_det_from_cholesky(llt_p);
  return 0.5 * (trace + maha - n + log_det_ratio);
}

double t_kl_mc(const StudentT& p, const StudentT& q, std::size_t samples,
               std::uint64_t seed) {
  if (p.dim() != q.dim()) {
    throw DimensionError("t_kl_mc dimension mismatch");
  }
  if (samples == 0) {
    throw DimensionError("t_kl_mc needs at least one sample");
  }
  double acc = 0.0;
  for (const auto& x : t_sample(p, samples, seed)) {
    acc += t_logpdf(p, x) - t_logpdf(q, x);
  }
  return acc / static_cast<double>(samples);
}

std::vector<Eigen::VectorXd> t_sample(const StudentT& d, std::size_t count,
                                      std::uint64_t seed) {
  if (count == 0) {
    throw DimensionError("t_sample needs count >= 1");
  }
  auto llt = spd_cholesky(d.scale, "StudentT scale");
  const Eigen::MatrixXd chol = llt.matrixL();
  auto rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> chi2(0.5 * d.dof, 2.0);

  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  Eigen::VectorXd z(d.dim());
  for (std::size_t i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
    const double u = chi2(rng);
    out.push_back(d.mean + chol * z * std::sqrt(d.dof / u));
  }
  return out;
}

Moments mix_moments(const WeightedTMix& m) {
  const Eigen::Index n = m.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    mean += m.weights[static_cast<Eigen::Index>(i)] * m.components[i].mean;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Eigen::VectorXd spread = m.components[i].mean - mean;
    cov += m.weights[static_cast<Eigen::Index>(i)] *
           (m.components[i].covariance() + spread * spread.transpose());
  }
  return {std::move(mean), symmetrized(cov)};
}

}  // namespace stf
