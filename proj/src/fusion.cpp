#include "stfusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "stfusion/common.hpp"

namespace stf {
namespace {

constexpr double kAaFloor = 1e-6;      // open-simplex margin for AA weights
constexpr int kScanPoints = 33;        // coarse bracketing scan for two sensors
constexpr int kGoldenIters = 120;
constexpr int kGradientIters = 200;
constexpr double kFlatTol = 1e-12;     // objective gain below this -> uniform

void check_components_dim(std::size_t count, Eigen::Index dim, Eigen::Index w_size) {
  if (count == 0) throw DimensionError("fusion needs at least one component");
  if (w_size >= 0 && w_size != static_cast<Eigen::Index>(count)) {
    throw DimensionError("weight count does not match component count");
  }
  (void)dim;
}

// Per-component quantities that do not depend on the candidate weights. The
// objective for every variant reduces to
//   sum_i w_i [ tr(P(w)^-1 cov_i) + log det P(w) + logdet_offset
//               - logdet_ref_i + maha_factor * (x_i - x(w))' P(w)^-1 (x_i - x(w)) ]
// with P(w) the weighted mixture covariance of the component covariances.
struct ObjectiveCache {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> logdet_ref;
  double logdet_offset = 0.0;
  double maha_factor = 1.0;
  Eigen::Index dim = 0;
};

ObjectiveCache make_cache(const std::vector<StudentT>& components, AaVariant variant,
                          DofRule dof_rule) {
  ObjectiveCache c;
  c.dim = components.front().dim();
  c.means.reserve(components.size());
  c.covs.reserve(components.size());
  c.logdet_ref.reserve(components.size());
  for (const StudentT& d : components) {
    if (d.dim() != c.dim) throw DimensionError("fusion components differ in dimension");
    c.means.push_back(d.mean);
    c.covs.push_back(d.covariance());
    const Eigen::MatrixXd& ref =
        variant == AaVariant::V1 ? c.covs.back() : d.scale;
    c.logdet_ref.push_back(log_det_from_cholesky(spd_cholesky(ref, "component scale")));
  }
  if (variant == AaVariant::V2) {
    const double nu = fused_dof(components, dof_rule);
    c.logdet_offset = static_cast<double>(c.dim) * std::log(nu / (nu - 2.0));
    c.maha_factor = (nu - 2.0) / nu;
  }
  return c;
}

ObjectiveCache make_cache(const std::vector<Gaussian>& components) {
  ObjectiveCache c;
  c.dim = components.front().dim();
  for (const Gaussian& d : components) {
    if (d.dim() != c.dim) throw DimensionError("fusion components differ in dimension");
    c.means.push_back(d.mean);
    c.covs.push_back(d.cov);
    c.logdet_ref.push_back(log_det_from_cholesky(spd_cholesky(d.cov, "component covariance")));
  }
  return c;
}

double eval_objective(const ObjectiveCache& c, const Eigen::VectorXd& w) {
  const std::size_t count = c.means.size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(c.dim);
  for (std::size_t i = 0; i < count; ++i) mean += w[static_cast<Eigen::Index>(i)] * c.means[i];
  Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(c.dim, c.dim);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd diff = c.means[i] - mean;
    mix += w[static_cast<Eigen::Index>(i)] * (c.covs[i] + diff * diff.transpose());
  }
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_cholesky(mix, "fused mixture covariance");
  const double logdet = log_det_from_cholesky(llt);
  double value = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd diff = c.means[i] - mean;
    const double tr = llt.solve(c.covs[i]).trace();
    const double maha = diff.dot(llt.solve(diff));
    value += w[static_cast<Eigen::Index>(i)] *
             (tr + logdet + c.logdet_offset - c.logdet_ref[i] + c.maha_factor * maha);
  }
  return value;
}

Eigen::VectorXd pair_weights(double first) {
  Eigen::VectorXd w(2);
  w << first, 1.0 - first;
  return w;
}

// Euclidean projection onto { w : w_i >= floor, sum w = 1 } using the usual
// sort-and-threshold rule on the shifted simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v, double floor) {
  const Eigen::Index n = v.size();
  const double mass = 1.0 - floor * static_cast<double>(n);
  Eigen::VectorXd shifted = v.array() - floor;
  std::vector<double> sorted(shifted.data(), shifted.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double running = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    running += sorted[static_cast<std::size_t>(j)];
    const double candidate = (running - mass) / static_cast<double>(j + 1);
    if (j + 1 == n || sorted[static_cast<std::size_t>(j + 1)] <= candidate) {
      theta = candidate;
      break;
    }
  }
  Eigen::VectorXd out = (shifted.array() - theta).cwiseMax(0.0).matrix();
  out = out.array() + floor;
  return out / out.sum();
}

// Maximizes a scalar objective over the simplex. Two components use a coarse
// scan plus golden-section refinement of w_1; more use projected gradient
// ascent with a numeric gradient from the uniform start. Flat objectives
// fall back to uniform weights so that identical inputs fuse evenly.
template <typename Fn>
Eigen::VectorXd maximize_simplex(Fn&& objective, std::size_t count, double floor) {
  const Eigen::VectorXd uniform =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count),
                                1.0 / static_cast<double>(count));
  if (count == 1) return uniform;

  const auto safe = [&](const Eigen::VectorXd& w) -> double {
    try {
      const double value = objective(w);
      return std::isfinite(value) ? value : -std::numeric_limits<double>::infinity();
    } catch (const DefinitenessError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd best = uniform;
  double best_value = safe(uniform);

  if (count == 2) {
    const double lo = floor;
    const double hi = 1.0 - floor;
    double scan_best = 0.5;
    double scan_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kScanPoints; ++j) {
      const double t = lo + (hi - lo) * static_cast<double>(j) / (kScanPoints - 1);
      const double value = safe(pair_weights(t));
      if (value > scan_value) {
        scan_value = value;
        scan_best = t;
      }
    }
    if (!std::isfinite(scan_value)) {
      throw OptimizerError("weight objective is non-finite on the simplex", uniform);
    }
    const double cell = (hi - lo) / (kScanPoints - 1);
    double a = std::max(lo, scan_best - cell);
    double b = std::min(hi, scan_best + cell);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = safe(pair_weights(x1));
    double f2 = safe(pair_weights(x2));
    for (int iter = 0; iter < kGoldenIters && (b - a) > 1e-10; ++iter) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = safe(pair_weights(x2));
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = safe(pair_weights(x1));
      }
    }
    const double mid = 0.5 * (a + b);
    const double mid_value = safe(pair_weights(mid));
    double refined = scan_best;
    double refined_value = scan_value;
    if (mid_value > refined_value) {
      refined = mid;
      refined_value = mid_value;
    }
    if (refined_value > best_value) {
      best = pair_weights(refined);
      best_value = refined_value;
    }
  } else {
    Eigen::VectorXd w = uniform;
    double value = best_value;
    if (!std::isfinite(value)) {
      throw OptimizerError("weight objective is non-finite at the uniform start", uniform);
    }
    double step = 0.1;
    for (int iter = 0; iter < kGradientIters; ++iter) {
      Eigen::VectorXd grad(w.size());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        Eigen::VectorXd up = w;
        Eigen::VectorXd down = w;
        up[i] += h;
        down[i] -= h;
        grad[i] = (safe(up) - safe(down)) / (2.0 * h);
      }
      if (!grad.allFinite()) {
        throw OptimizerError("weight gradient is non-finite", w);
      }
      const Eigen::VectorXd candidate = project_simplex(w + step * grad, floor);
      const double candidate_value = safe(candidate);
      if (candidate_value > value + 1e-15) {
        w = candidate;
        value = candidate_value;
        step = std::min(step * 1.5, 1.0);
      } else {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }
    if (value > best_value) {
      best = w;
      best_value = value;
    }
  }

  // Identical (or objective-equivalent) components give a flat objective;
  // prefer the uniform split over whichever point the search stopped at.
  const double uniform_value = safe(uniform);
  if (best_value <= uniform_value + kFlatTol * (1.0 + std::abs(uniform_value))) {
    return uniform;
  }
  return best;
}

std::vector<Eigen::MatrixXd> precision_list(const std::vector<Eigen::MatrixXd>& covs,
                                            Eigen::Index dim) {
  std::vector<Eigen::MatrixXd> precisions;
  precisions.reserve(covs.size());
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(dim, dim);
  for (const Eigen::MatrixXd& cov : covs) {
    precisions.push_back(symmetrized(spd_cholesky(cov, "component covariance").solve(identity)));
  }
  return precisions;
}

double trace_of_ci(const std::vector<Eigen::MatrixXd>& precisions,
                   const Eigen::VectorXd& w, Eigen::Index dim) {
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < precisions.size(); ++i) {
    info += w[static_cast<Eigen::Index>(i)] * precisions[i];
  }
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_cholesky(info, "fused information matrix");
  return llt.solve(Eigen::MatrixXd::Identity(dim, dim)).trace();
}

template <typename Density>
std::vector<Eigen::MatrixXd> covariance_list(const std::vector<Density>& components) {
  std::vector<Eigen::MatrixXd> covs;
  covs.reserve(components.size());
  const Eigen::Index dim = components.front().dim();
  for (const Density& d : components) {
    if (d.dim() != dim) throw DimensionError("fusion components differ in dimension");
    if constexpr (std::is_same_v<Density, StudentT>) {
      covs.push_back(d.covariance());
    } else {
      covs.push_back(d.cov);
    }
  }
  return covs;
}

template <typename Density>
std::pair<Eigen::VectorXd, Eigen::MatrixXd> ci_combine(
    const std::vector<Density>& components, const Eigen::VectorXd& w) {
  const Eigen::Index dim = components.front().dim();
  const std::vector<Eigen::MatrixXd> precisions =
      precision_list(covariance_list(components), dim);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd info_mean = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double wi = w[static_cast<Eigen::Index>(i)];
    info += wi * precisions[i];
    info_mean += wi * (precisions[i] * components[i].mean);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_cholesky(info, "fused information matrix");
  const Eigen::MatrixXd cov =
      symmetrized(llt.solve(Eigen::MatrixXd::Identity(dim, dim)));
  return {llt.solve(info_mean), cov};
}

}  // namespace

WeightVector::WeightVector(Eigen::VectorXd w_in, Domain domain) : w(std::move(w_in)) {
  if (w.size() == 0) throw DimensionError("weight vector is empty");
  if (!w.allFinite()) throw std::invalid_argument("weights must be finite");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const bool ok = domain == Domain::Open ? w[i] > 0.0 : w[i] >= 0.0;
    if (!ok) throw std::invalid_argument("weights must lie on the simplex");
  }
  if (std::abs(w.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("weights must sum to one");
  }
}

WeightVector uniform_weights(std::size_t count) {
  if (count == 0) throw DimensionError("weight vector is empty");
  return WeightVector(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count),
                                                1.0 / static_cast<double>(count)));
}

double fused_dof(const std::vector<StudentT>& components, DofRule rule) {
  if (components.empty()) throw DimensionError("fusion needs at least one component");
  double value = rule == DofRule::Min ? std::numeric_limits<double>::infinity() : 0.0;
  for (const StudentT& d : components) {
    if (rule == DofRule::Min) {
      value = std::min(value, d.dof);
    } else {
      value += d.dof / static_cast<double>(components.size());
    }
  }
  return value;
}

StudentT aa_moment_match(const WeightedTMix& m, DofRule dof_rule) {
  const Moments moments = mix_moments(m);
  const double nu = fused_dof(m.components, dof_rule);
  return StudentT(moments.mean, symmetrized(((nu - 2.0) / nu) * moments.cov), nu);
}

double aa_weight_objective(const std::vector<StudentT>& components,
                           const Eigen::VectorXd& w, AaVariant variant,
                           DofRule dof_rule) {
  check_components_dim(components.size(), components.front().dim(), w.size());
  return eval_objective(make_cache(components, variant, dof_rule), w);
}

double aa_weight_objective(const std::vector<Gaussian>& components,
                           const Eigen::VectorXd& w) {
  check_components_dim(components.size(), components.front().dim(), w.size());
  return eval_objective(make_cache(components), w);
}

WeightVector aa_weights(const std::vector<StudentT>& components, AaVariant variant,
                        DofRule dof_rule) {
  check_components_dim(components.size(), components.front().dim(), -1);
  const ObjectiveCache cache = make_cache(components, variant, dof_rule);
  const Eigen::VectorXd w = maximize_simplex(
      [&](const Eigen::VectorXd& v) { return eval_objective(cache, v); },
      components.size(), kAaFloor);
  return WeightVector(w);
}

WeightVector aa_weights(const std::vector<Gaussian>& components) {
  check_components_dim(components.size(), components.front().dim(), -1);
  const ObjectiveCache cache = make_cache(components);
  const Eigen::VectorXd w = maximize_simplex(
      [&](const Eigen::VectorXd& v) { return eval_objective(cache, v); },
      components.size(), kAaFloor);
  return WeightVector(w);
}

StudentT aa_fuse(const std::vector<StudentT>& components, const FusionMethod& method) {
  check_components_dim(components.size(), components.front().dim(), -1);
  WeightVector weights = uniform_weights(components.size());
  switch (method.kind) {
    case FusionKind::AaSuboptV1:
      weights = aa_weights(components, AaVariant::V1, method.dof_rule);
      break;
    case FusionKind::AaSuboptV2:
      weights = aa_weights(components, AaVariant::V2, method.dof_rule);
      break;
    case FusionKind::AaUniform:
      break;
    default:
      throw std::invalid_argument("aa_fuse requires an arithmetic-average method");
  }
  return aa_moment_match(WeightedTMix(components, weights.w), method.dof_rule);
}

Gaussian gaussian_aa_merge(const std::vector<Gaussian>& components,
                           const WeightVector& weights) {
  check_components_dim(components.size(), components.front().dim(), weights.w.size());
  const Eigen::Index dim = components.front().dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i].dim() != dim) {
      throw DimensionError("fusion components differ in dimension");
    }
    mean += weights.w[static_cast<Eigen::Index>(i)] * components[i].mean;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < components.size(); ++i) {
    const Eigen::VectorXd diff = components[i].mean - mean;
    cov += weights.w[static_cast<Eigen::Index>(i)] *
           (components[i].cov + diff * diff.transpose());
  }
  return Gaussian(mean, symmetrized(cov));
}

double ci_trace_objective(const std::vector<StudentT>& components,
                          const Eigen::VectorXd& w) {
  check_components_dim(components.size(), components.front().dim(), w.size());
  const Eigen::Index dim = components.front().dim();
  return trace_of_ci(precision_list(covariance_list(components), dim), w, dim);
}

double ci_trace_objective(const std::vector<Gaussian>& components,
                          const Eigen::VectorXd& w) {
  check_components_dim(components.size(), components.front().dim(), w.size());
  const Eigen::Index dim = components.front().dim();
  return trace_of_ci(precision_list(covariance_list(components), dim), w, dim);
}

namespace {

template <typename Density>
WeightVector ci_weights_impl(const std::vector<Density>& components) {
  check_components_dim(components.size(), components.front().dim(), -1);
  const Eigen::Index dim = components.front().dim();
  const std::vector<Eigen::MatrixXd> precisions =
      precision_list(covariance_list(components), dim);
  const Eigen::VectorXd w = maximize_simplex(
      [&](const Eigen::VectorXd& v) { return -trace_of_ci(precisions, v, dim); },
      components.size(), 0.0);
  return WeightVector(w, WeightVector::Domain::Closed);
}

}  // namespace

WeightVector ci_weights(const std::vector<StudentT>& components) {
  return ci_weights_impl(components);
}

WeightVector ci_weights(const std::vector<Gaussian>& components) {
  return ci_weights_impl(components);
}

StudentT ci_fuse(const std::vector<StudentT>& components, const WeightVector& weights,
                 DofRule dof_rule) {
  check_components_dim(components.size(), components.front().dim(), weights.w.size());
  const auto [mean, cov] = ci_combine(components, weights.w);
  const double nu = fused_dof(components, dof_rule);
  return StudentT(mean, symmetrized(((nu - 2.0) / nu) * cov), nu);
}

Gaussian ci_fuse(const std::vector<Gaussian>& components, const WeightVector& weights) {
  check_components_dim(components.size(), components.front().dim(), weights.w.size());
  const auto [mean, cov] = ci_combine(components, weights.w);
  return Gaussian(mean, cov);
}

MeasurementModel am_stack(const std::vector<MeasurementModel>& models) {
  if (models.empty()) throw DimensionError("am_stack needs at least one sensor model");
  Eigen::Index total = 0;
  double dof = std::numeric_limits<double>::infinity();
  for (const MeasurementModel& m : models) {
    if (m.r_scale.rows() != m.r_scale.cols() || m.r_scale.rows() == 0) {
      throw DimensionError("sensor noise scale must be square and non-empty");
    }
    total += m.r_scale.rows();
    dof = std::min(dof, m.r_dof);
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(total, total);
  Eigen::Index offset = 0;
  for (const MeasurementModel& m : models) {
    const Eigen::Index rows = m.r_scale.rows();
    r.block(offset, offset, rows, rows) = m.r_scale;
    offset += rows;
  }

  MeasurementModel stacked;
  stacked.r_scale = std::move(r);
  stacked.r_dof = dof;
  stacked.h = [models, total](const Eigen::VectorXd& x) {
    Eigen::VectorXd z(total);
    Eigen::Index at = 0;
    for (const MeasurementModel& m : models) {
      const Eigen::VectorXd part = m.h(x);
      if (part.size() != m.measurement_dim()) {
        throw DimensionError("sensor function output does not match its noise dimension");
      }
      z.segment(at, part.size()) = part;
      at += part.size();
    }
    return z;
  };
  stacked.jacobian_h = [models, total](const Eigen::VectorXd& x) {
    Eigen::MatrixXd jac(total, x.size());
    Eigen::Index at = 0;
    for (const MeasurementModel& m : models) {
      const Eigen::MatrixXd part = m.jacobian_h(x);
      if (part.rows() != m.measurement_dim() || part.cols() != x.size()) {
        throw DimensionError("sensor Jacobian does not match state or noise dimension");
      }
      jac.middleRows(at, part.rows()) = part;
      at += part.rows();
    }
    return jac;
  };
  return stacked;
}

double am_outlier_prob(const std::vector<double>& probs) {
  if (probs.empty()) throw DimensionError("am_outlier_prob needs at least one probability");
  double clean = 1.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("outlier probabilities must lie in [0, 1]");
    }
    clean *= 1.0 - p;
  }
  return 1.0 - clean;
}

}  // namespace stf
