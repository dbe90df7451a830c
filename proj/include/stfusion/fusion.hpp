#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stfusion/densities.hpp"
#include "stfusion/filter.hpp"

namespace stf {

// Dof assigned to an AA-fused density: the minimum preserves the heaviest
// tail of the fusing densities, the average is the default.
enum class DofRule { Min, Average };

// Which analytic surrogate drives the suboptimal AA weights: V1 uses the
// moment-matched Gaussian form, V2 treats scale matrices as covariances.
enum class AaVariant { V1, V2 };

enum class FusionKind { AaSuboptV1, AaSuboptV2, AaUniform, Ci, Am };

struct FusionMethod {
  FusionKind kind = FusionKind::AaSuboptV1;
  DofRule dof_rule = DofRule::Average;
};

// Fusing weights on the simplex: strictly positive for AA (open), allowed to
// touch the boundary for CI (closed). Sum-to-one enforced within 1e-12.
struct WeightVector {
  enum class Domain { Open, Closed };
  explicit WeightVector(Eigen::VectorXd w_in, Domain domain = Domain::Open);
  Eigen::VectorXd w;
};

WeightVector uniform_weights(std::size_t count);

double fused_dof(const std::vector<StudentT>& components, DofRule rule);

// Single-t approximation of the mixture with the mixture's first two
// moments: mean from the convex combination, scale (nu-2)/nu times the
// mixture covariance, dof per rule.
StudentT aa_moment_match(const WeightedTMix& m, DofRule dof_rule);

// Value of the suboptimal-weight objective at w; the fused moments are
// recomputed from the candidate w. Maximized by aa_weights.
double aa_weight_objective(const std::vector<StudentT>& components,
                           const Eigen::VectorXd& w, AaVariant variant,
                           DofRule dof_rule = DofRule::Average);
double aa_weight_objective(const std::vector<Gaussian>& components,
                           const Eigen::VectorXd& w);

// Diversity-preference AA weights: argmax of the objective over the open
// simplex. Flat objectives (identical components) return uniform weights.
WeightVector aa_weights(const std::vector<StudentT>& components, AaVariant variant,
                        DofRule dof_rule = DofRule::Average);
WeightVector aa_weights(const std::vector<Gaussian>& components);

// Weight selection followed by the moment-matched collapse.
StudentT aa_fuse(const std::vector<StudentT>& components, const FusionMethod& method);

// Moment-matched single-Gaussian merge of a Gaussian mixture.
Gaussian gaussian_aa_merge(const std::vector<Gaussian>& components,
                           const WeightVector& weights);

// Trace of the covariance-intersection fused covariance at w; minimized by
// ci_weights over the closed simplex.
double ci_trace_objective(const std::vector<StudentT>& components,
                          const Eigen::VectorXd& w);
double ci_trace_objective(const std::vector<Gaussian>& components,
                          const Eigen::VectorXd& w);

WeightVector ci_weights(const std::vector<StudentT>& components);
WeightVector ci_weights(const std::vector<Gaussian>& components);

// Covariance intersection over the moment-matched Gaussian surrogates. The
// t overload re-wraps the fused pair as a Student's t whose covariance
// equals the CI covariance, with dof per rule.
StudentT ci_fuse(const std::vector<StudentT>& components, const WeightVector& weights,
                 DofRule dof_rule = DofRule::Average);
Gaussian ci_fuse(const std::vector<Gaussian>& components, const WeightVector& weights);

// Augmented-measurement model: stacked h and Jacobian, block-diagonal noise
// scale, joint dof the minimum of the component dofs.
MeasurementModel am_stack(const std::vector<MeasurementModel>& models);

// Actual outlier probability of a stacked measurement when per-sensor
// outliers are independent: 1 - prod(1 - p_i).
double am_outlier_prob(const std::vector<double>& probs);

}  // namespace stf
