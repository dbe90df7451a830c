#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stfusion/densities.hpp"
#include "stfusion/fusion.hpp"

namespace stf {

// One point of the divergence-vs-mean-offset study: how the two analytic
// Gaussian surrogates track the Monte Carlo KL between two t densities, and
// how balanced the optimized-weight fusion leaves the per-side divergences.
struct DivergenceRow {
  double offset = 0.0;           // distance between the two means
  double kl_mc = 0.0;            // sampled KL between the t pair
  double kl_gauss_moment = 0.0;  // KL of their moment-matched Gaussians
  double kl_gauss_scale = 0.0;   // KL treating scale matrices as covariances
  double w1 = 0.0;               // optimized weight on the first density
  double kl_left = 0.0;          // sampled KL(first || fused)
  double kl_right = 0.0;         // sampled KL(second || fused)
  double middle_residual = 0.0;  // |kl_left - kl_right| / max(kl_left, kl_right)
};

// Balance of the two per-side divergences after fusing with optimized
// weights; small values mean the fused density sits KL-midway between the
// pair. `samples` draws feed each Monte Carlo divergence.
double middle_residual(const StudentT& first, const StudentT& second,
                       AaVariant variant, DofRule dof_rule, std::size_t samples,
                       std::uint64_t seed);

// Sweeps the mean offset (applied along the first axis to the second
// density) over `offsets` and fills one DivergenceRow per point.
std::vector<DivergenceRow> divergence_curve(const Eigen::MatrixXd& scale_first,
                                            const Eigen::MatrixXd& scale_second,
                                            double dof,
                                            const std::vector<double>& offsets,
                                            AaVariant variant, DofRule dof_rule,
                                            std::size_t samples, std::uint64_t seed);

void write_divergence_csv(const std::vector<DivergenceRow>& rows,
                          const std::string& path);

}  // namespace stf
