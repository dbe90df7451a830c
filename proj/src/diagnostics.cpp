#include "stfusion/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace stf {
namespace {

struct SideKls {
  double left = 0.0;
  double right = 0.0;
};

SideKls side_divergences(const StudentT& first, const StudentT& second,
                         AaVariant variant, DofRule dof_rule, std::size_t samples,
                         std::uint64_t seed, double* w1_out) {
  const std::vector<StudentT> pair = {first, second};
  const WeightVector w = aa_weights(pair, variant, dof_rule);
  if (w1_out != nullptr) *w1_out = w.w[0];
  const StudentT fused = aa_moment_match(WeightedTMix(pair, w.w), dof_rule);
  return {t_kl_mc(first, fused, samples, seed),
          t_kl_mc(second, fused, samples, seed + 1)};
}

double residual_of(const SideKls& kls) {
  const double top = std::max(kls.left, kls.right);
  if (!(top > 0.0)) return 0.0;  // identical densities: both divergences vanish
  return std::abs(kls.left - kls.right) / top;
}

std::string format_number(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace

double middle_residual(const StudentT& first, const StudentT& second,
                       AaVariant variant, DofRule dof_rule, std::size_t samples,
                       std::uint64_t seed) {
  return residual_of(side_divergences(first, second, variant, dof_rule, samples,
                                      seed, nullptr));
}

std::vector<DivergenceRow> divergence_curve(const Eigen::MatrixXd& scale_first,
                                            const Eigen::MatrixXd& scale_second,
                                            double dof,
                                            const std::vector<double>& offsets,
                                            AaVariant variant, DofRule dof_rule,
                                            std::size_t samples, std::uint64_t seed) {
  if (scale_first.rows() == 0 || scale_first.rows() != scale_second.rows()) {
    throw DimensionError("scale matrices must share a nonzero dimension");
  }
  const Eigen::Index dim = scale_first.rows();
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(dim);
  const StudentT first(origin, scale_first, dof);

  std::vector<DivergenceRow> rows;
  rows.reserve(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    Eigen::VectorXd shifted = origin;
    shifted[0] += offsets[i];
    const StudentT second(shifted, scale_second, dof);

    DivergenceRow row;
    row.offset = offsets[i];
    const std::uint64_t row_seed = seed + 1000 * static_cast<std::uint64_t>(i);
    row.kl_mc = t_kl_mc(first, second, samples, row_seed);
    row.kl_gauss_moment = gaussian_kl(Gaussian(first.mean, first.covariance()),
                                      Gaussian(second.mean, second.covariance()));
    row.kl_gauss_scale = gaussian_kl(Gaussian(first.mean, first.scale),
                                     Gaussian(second.mean, second.scale));
    const SideKls kls = side_divergences(first, second, variant, dof_rule, samples,
                                         row_seed + 1, &row.w1);
    row.kl_left = kls.left;
    row.kl_right = kls.right;
    row.middle_residual = residual_of(kls);
    rows.push_back(row);
  }
  return rows;
}

void write_divergence_csv(const std::vector<DivergenceRow>& rows,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << "offset,kl_mc,kl_gauss_moment,kl_gauss_scale,w1,kl_left,kl_right,"
         "middle_residual\n";
  for (const DivergenceRow& row : rows) {
    out << format_number(row.offset) << ',' << format_number(row.kl_mc) << ','
        << format_number(row.kl_gauss_moment) << ','
        << format_number(row.kl_gauss_scale) << ',' << format_number(row.w1) << ','
        << format_number(row.kl_left) << ',' << format_number(row.kl_right) << ','
        << format_number(row.middle_residual) << '\n';
  }
}

}  // namespace stf
