#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "stfusion/common.hpp"

namespace stf {

// Multivariate Student's t density S(x; mean, scale, dof). `scale` is the
// scale matrix, not the covariance: the covariance is dof/(dof-2) * scale,
// which requires dof > 2.
struct StudentT {
  StudentT(Eigen::VectorXd mean_in, Eigen::MatrixXd scale_in, double dof_in);

  Eigen::VectorXd mean;
  Eigen::MatrixXd scale;
  double dof;

  Eigen::Index dim() const { return mean.size(); }
  Eigen::MatrixXd covariance() const { return (dof / (dof - 2.0)) * scale; }
};

struct Gaussian {
  Gaussian(Eigen::VectorXd mean_in, Eigen::MatrixXd cov_in);

  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

// Weighted finite mixture of Student's t components over a common space.
// Weights are strictly positive and sum to one within 1e-12.
struct WeightedTMix {
  WeightedTMix(std::vector<StudentT> components_in, Eigen::VectorXd weights_in);

  std::vector<StudentT> components;
  Eigen::VectorXd weights;

  Eigen::Index dim() const { return components.front().dim(); }
  std::size_t size() const { return components.size(); }
};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Log density of x under d. Evaluated in log space; the normalizer uses the
// state dimension n in (pi*nu)^(n/2).
double t_logpdf(const StudentT& d, const Eigen::VectorXd& x);

// Mean and covariance (dof/(dof-2) * scale) of d.
Moments t_moments(const StudentT& d);

// Closed-form KL divergence D(p || q) between Gaussians.
double gaussian_kl(const Gaussian& p, const Gaussian& q);

// Monte Carlo estimate of D(p || q) between Student's t densities from
// `samples` draws of p. Deterministic for a fixed seed.
double t_kl_mc(const StudentT& p, const StudentT& q, std::size_t samples,
               std::uint64_t seed);

// Draws from d: x = mean + L z sqrt(dof/u) with z standard normal,
// u ~ chi-square(dof) (via Gamma(dof/2, 2)), L the Cholesky factor of scale.
std::vector<Eigen::VectorXd> t_sample(const StudentT& d, std::size_t count,
                                      std::uint64_t seed);

// Mean and covariance of the mixture: the mean is the convex combination of
// component means; the covariance adds the spread-of-means term to the
// weighted component covariances.
Moments mix_moments(const WeightedTMix& m);

}  // namespace stf
