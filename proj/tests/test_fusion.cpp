#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "stfusion/fusion.hpp"

using stf::AaVariant;
using stf::DofRule;
using stf::FusionKind;
using stf::FusionMethod;
using stf::Gaussian;
using stf::StudentT;
using stf::WeightedTMix;
using stf::WeightVector;

namespace {

StudentT t1d(double mean, double scale, double dof) {
  return StudentT(Eigen::VectorXd::Constant(1, mean),
                  Eigen::MatrixXd::Constant(1, 1, scale), dof);
}

std::vector<StudentT> random_t_pair(std::mt19937_64& rng, Eigen::Index dim) {
  std::uniform_real_distribution<double> dof_dist(3.0, 8.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<StudentT> out;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd mean(dim);
    for (Eigen::Index j = 0; j < dim; ++j) mean[j] = 2.0 * normal(rng);
    out.emplace_back(mean, oracles::random_spd(dim, rng), dof_dist(rng));
  }
  return out;
}

}  // namespace

TEST_CASE("fused_dof takes the minimum or the average") {
  const std::vector<StudentT> comps{t1d(0.0, 1.0, 3.0), t1d(1.0, 2.0, 7.0)};
  CHECK(stf::fused_dof(comps, DofRule::Min) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(stf::fused_dof(comps, DofRule::Average) == doctest::Approx(5.0).epsilon(1e-15));

  // Both rules stay inside the component dof range.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pair = random_t_pair(rng, 2);
    const double lo = std::min(pair[0].dof, pair[1].dof);
    const double hi = std::max(pair[0].dof, pair[1].dof);
    for (DofRule rule : {DofRule::Min, DofRule::Average}) {
      const double nu = stf::fused_dof(pair, rule);
      CHECK(nu >= lo - 1e-12);
      CHECK(nu <= hi + 1e-12);
    }
  }
}

TEST_CASE("aa_moment_match") {
  SUBCASE("identical components reproduce the component") {
    std::mt19937_64 rng(7);
    const StudentT c(Eigen::VectorXd::Ones(2), oracles::random_spd(2, rng), 4.0);
    for (DofRule rule : {DofRule::Min, DofRule::Average}) {
      const StudentT fused =
          stf::aa_moment_match(WeightedTMix({c, c}, Eigen::VectorXd::Constant(2, 0.5)), rule);
      CHECK((fused.mean - c.mean).norm() <= 1e-12);
      CHECK((fused.scale - c.scale).norm() <= 1e-12 * c.scale.norm());
      CHECK(fused.dof == doctest::Approx(c.dof).epsilon(1e-15));
    }
  }
  SUBCASE("symmetric pair at plus/minus one collapses to scale 4/3") {
    const WeightedTMix mix({t1d(-1.0, 1.0, 3.0), t1d(1.0, 1.0, 3.0)},
                           Eigen::VectorXd::Constant(2, 0.5));
    const StudentT fused = stf::aa_moment_match(mix, DofRule::Average);
    CHECK(std::abs(fused.mean[0]) <= 1e-10);
    CHECK(fused.scale(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-10));
    CHECK(fused.dof == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("output covariance equals the mixture covariance") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      const auto pair = random_t_pair(rng, 3);
      Eigen::VectorXd w(2);
      w << 0.35, 0.65;
      const WeightedTMix mix(pair, w);
      const stf::Moments mm = stf::mix_moments(mix);
      for (DofRule rule : {DofRule::Min, DofRule::Average}) {
        const StudentT fused = stf::aa_moment_match(mix, rule);
        CHECK((fused.mean - mm.mean).norm() <= 1e-12 * (1.0 + mm.mean.norm()));
        CHECK((stf::t_moments(fused).cov - mm.cov).norm() <= 1e-12 * mm.cov.norm());
      }
    }
  }
}

TEST_CASE("aa_weights") {
  SUBCASE("single component gets weight one") {
    for (AaVariant variant : {AaVariant::V1, AaVariant::V2}) {
      const WeightVector w = stf::aa_weights({t1d(0.0, 1.0, 3.0)}, variant);
      REQUIRE(w.w.size() == 1);
      CHECK(w.w[0] == 1.0);
    }
  }
  SUBCASE("mirror-image pair splits evenly") {
    Eigen::VectorXd mu(2);
    mu << 1.0, -0.5;
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd scale = oracles::random_spd(2, rng);
    const std::vector<StudentT> pair{StudentT(mu, scale, 3.5), StudentT(-mu, scale, 3.5)};
    for (AaVariant variant : {AaVariant::V1, AaVariant::V2}) {
      const WeightVector w = stf::aa_weights(pair, variant);
      CHECK(w.w[0] == 0.5);
      CHECK(w.w[1] == 0.5);
    }
  }
  SUBCASE("1-D pair with separated means matches grid search") {
    const std::vector<StudentT> pair{t1d(0.0, 1.0, 3.0), t1d(2.0, 1.0, 3.0)};
    for (AaVariant variant : {AaVariant::V1, AaVariant::V2}) {
      const double grid = oracles::grid_best_w1(
          [&](double w1) {
            Eigen::VectorXd w(2);
            w << w1, 1.0 - w1;
            return stf::aa_weight_objective(pair, w, variant);
          },
          1e-3, /*maximize=*/true);
      const WeightVector w = stf::aa_weights(pair, variant);
      CHECK(std::abs(w.w[0] - grid) < 5e-3);
    }
  }
  SUBCASE("weights lie on the open simplex") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const auto pair = random_t_pair(rng, 2);
      for (AaVariant variant : {AaVariant::V1, AaVariant::V2}) {
        const WeightVector w = stf::aa_weights(pair, variant);
        CHECK((w.w.array() > 0.0).all());
        CHECK(std::abs(w.w.sum() - 1.0) <= 1e-12);
      }
    }
  }
  SUBCASE("three-component optimizer beats the uniform start") {
    std::mt19937_64 rng(19);
    std::vector<StudentT> comps;
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd mean = Eigen::VectorXd::Random(2);
      comps.emplace_back(mean, (1.0 + i) * oracles::random_spd(2, rng), 3.0 + i);
    }
    const WeightVector w = stf::aa_weights(comps, AaVariant::V1);
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    CHECK(stf::aa_weight_objective(comps, w.w, AaVariant::V1) >=
          stf::aa_weight_objective(comps, uniform, AaVariant::V1) - 1e-12);
    CHECK(std::abs(w.w.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("aa_fuse") {
  SUBCASE("identical inputs give identity output") {
    std::mt19937_64 rng(23);
    const StudentT c(Eigen::VectorXd::Ones(3), oracles::random_spd(3, rng), 5.0);
    for (FusionKind kind : {FusionKind::AaSuboptV1, FusionKind::AaSuboptV2,
                            FusionKind::AaUniform}) {
      const StudentT fused = stf::aa_fuse({c, c}, {kind, DofRule::Average});
      CHECK((fused.mean - c.mean).norm() <= 1e-12);
      CHECK((fused.scale - c.scale).norm() <= 1e-12 * c.scale.norm());
      CHECK(fused.dof == doctest::Approx(c.dof).epsilon(1e-15));
    }
  }
  SUBCASE("fused mean lies on the segment between the component means") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 10; ++trial) {
      const auto pair = random_t_pair(rng, 2);
      const StudentT fused = stf::aa_fuse(pair, {FusionKind::AaSuboptV1, DofRule::Average});
      const Eigen::VectorXd seg = pair[1].mean - pair[0].mean;
      const double t = (fused.mean - pair[0].mean).dot(seg) / seg.squaredNorm();
      const Eigen::VectorXd off_axis = fused.mean - (pair[0].mean + t * seg);
      CHECK(t >= -1e-9);
      CHECK(t <= 1.0 + 1e-9);
      CHECK(off_axis.norm() <= 1e-9 * (1.0 + seg.norm()));
    }
  }
  SUBCASE("optimized weights differ from uniform on an asymmetric pair") {
    const std::vector<StudentT> pair{t1d(0.0, 4.0, 3.0), t1d(1.0, 1.0, 3.0)};
    const WeightVector w = stf::aa_weights(pair, AaVariant::V1);
    CHECK(std::abs(w.w[0] - 0.5) > 1e-3);
    const StudentT opt = stf::aa_fuse(pair, {FusionKind::AaSuboptV1, DofRule::Average});
    const StudentT uni = stf::aa_fuse(pair, {FusionKind::AaUniform, DofRule::Average});
    CHECK(std::abs(opt.mean[0] - uni.mean[0]) > 1e-6);
  }
  SUBCASE("fused moments equal the mixture moments at the chosen weights") {
    std::mt19937_64 rng(31);
    const auto pair = random_t_pair(rng, 3);
    const WeightVector w = stf::aa_weights(pair, AaVariant::V1);
    const StudentT fused = stf::aa_fuse(pair, {FusionKind::AaSuboptV1, DofRule::Average});
    Eigen::VectorXd expected_mean = w.w[0] * pair[0].mean + w.w[1] * pair[1].mean;
    CHECK((fused.mean - expected_mean).norm() <= 1e-12 * (1.0 + expected_mean.norm()));
    const stf::Moments mm = stf::mix_moments(WeightedTMix(pair, w.w));
    CHECK((stf::t_moments(fused).cov - mm.cov).norm() <= 1e-12 * mm.cov.norm());
  }
  SUBCASE("average component-to-fused divergence is finite") {
    std::mt19937_64 rng(37);
    const auto pair = random_t_pair(rng, 2);
    const WeightVector w = stf::aa_weights(pair, AaVariant::V1);
    const StudentT fused = stf::aa_fuse(pair, {FusionKind::AaSuboptV1, DofRule::Average});
    double avg = 0.0;
    for (int i = 0; i < 2; ++i) {
      avg += w.w[i] * stf::t_kl_mc(pair[static_cast<std::size_t>(i)], fused, 20000, 43 + i);
    }
    CHECK(std::isfinite(avg));
    CHECK(avg >= 0.0);
  }
  SUBCASE("non-AA kinds are rejected") {
    const std::vector<StudentT> pair{t1d(0.0, 1.0, 3.0), t1d(1.0, 1.0, 3.0)};
    CHECK_THROWS_AS(stf::aa_fuse(pair, {FusionKind::Ci, DofRule::Average}),
                    std::invalid_argument);
    CHECK_THROWS_AS(stf::aa_fuse(pair, {FusionKind::Am, DofRule::Average}),
                    std::invalid_argument);
  }
}

TEST_CASE("gaussian_aa_merge") {
  SUBCASE("identical components stay unchanged") {
    std::mt19937_64 rng(41);
    const Gaussian c(Eigen::VectorXd::Ones(2), oracles::random_spd(2, rng));
    const Gaussian merged = stf::gaussian_aa_merge({c, c}, stf::uniform_weights(2));
    CHECK((merged.mean - c.mean).norm() <= 1e-12);
    CHECK((merged.cov - c.cov).norm() <= 1e-12 * c.cov.norm());
  }
  SUBCASE("unit-variance pair at plus/minus one merges to variance two") {
    const Gaussian a(Eigen::VectorXd::Constant(1, -1.0), Eigen::MatrixXd::Identity(1, 1));
    const Gaussian b(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1));
    const Gaussian merged = stf::gaussian_aa_merge({a, b}, stf::uniform_weights(2));
    CHECK(std::abs(merged.mean[0]) <= 1e-12);
    CHECK(merged.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("matches a hierarchical sampling estimate") {
    std::mt19937_64 rng(43);
    Eigen::VectorXd m1(2), m2(2);
    m1 << 1.0, 0.0;
    m2 << -1.0, 0.5;
    const Gaussian a(m1, oracles::random_spd(2, rng));
    const Gaussian b(m2, oracles::random_spd(2, rng));
    Eigen::VectorXd wv(2);
    wv << 0.3, 0.7;
    const Gaussian merged = stf::gaussian_aa_merge({a, b}, WeightVector(wv));

    const std::size_t n = 200000;
    std::mt19937_64 draw_rng(47);
    std::discrete_distribution<int> pick({0.3, 0.7});
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
    std::vector<Eigen::VectorXd> draws;
    draws.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Gaussian& c = pick(draw_rng) == 0 ? a : b;
      draws.push_back(oracles::gaussian_draw(c.mean, c.cov, draw_rng));
      sum += draws.back();
    }
    const Eigen::VectorXd sample_mean = sum / static_cast<double>(n);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& x : draws) {
      const Eigen::VectorXd d = x - sample_mean;
      sq += d * d.transpose();
    }
    const Eigen::MatrixXd sample_cov = sq / static_cast<double>(n - 1);
    for (int i = 0; i < 2; ++i) {
      const double se = std::sqrt(merged.cov(i, i) / static_cast<double>(n));
      CHECK(std::abs(sample_mean[i] - merged.mean[i]) < 4.0 * se);
      for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(sample_cov(i, j) - merged.cov(i, j)) <
              0.05 * std::max(1.0, std::abs(merged.cov(i, j))));
      }
    }
  }
}

TEST_CASE("ci_weights") {
  SUBCASE("identical components tie-break to uniform") {
    std::mt19937_64 rng(53);
    const StudentT c(Eigen::VectorXd::Zero(2), oracles::random_spd(2, rng), 4.0);
    const WeightVector w = stf::ci_weights(std::vector<StudentT>{c, c});
    CHECK(w.w[0] == 0.5);
    CHECK(w.w[1] == 0.5);
  }
  SUBCASE("all weight goes to the strictly better sensor") {
    const std::vector<StudentT> pair{t1d(0.0, 2.0, 3.0), t1d(0.5, 1.0, 3.0)};
    const WeightVector w = stf::ci_weights(pair);
    CHECK(w.w[0] == 0.0);
    CHECK(w.w[1] == 1.0);
  }
  SUBCASE("matches grid search on random 2-D pairs") {
    std::mt19937_64 rng(59);
    for (int trial = 0; trial < 5; ++trial) {
      const auto pair = random_t_pair(rng, 2);
      const double grid = oracles::grid_best_w1(
          [&](double w1) {
            Eigen::VectorXd w(2);
            w << w1, 1.0 - w1;
            return stf::ci_trace_objective(pair, w);
          },
          1e-3, /*maximize=*/false, /*include_boundary=*/true);
      const WeightVector w = stf::ci_weights(pair);
      CHECK(std::abs(w.w[0] - grid) < 5e-3);
    }
  }
  SUBCASE("Gaussian overload agrees with moment-matched t inputs") {
    std::mt19937_64 rng(61);
    const auto pair = random_t_pair(rng, 2);
    const std::vector<Gaussian> gpair{Gaussian(pair[0].mean, pair[0].covariance()),
                                      Gaussian(pair[1].mean, pair[1].covariance())};
    const WeightVector wt = stf::ci_weights(pair);
    const WeightVector wg = stf::ci_weights(gpair);
    CHECK(std::abs(wt.w[0] - wg.w[0]) < 1e-9);
  }
}

TEST_CASE("ci_fuse") {
  SUBCASE("single component keeps its covariance") {
    std::mt19937_64 rng(67);
    const StudentT c(Eigen::VectorXd::Ones(2), oracles::random_spd(2, rng), 4.0);
    const StudentT fused = stf::ci_fuse({c}, WeightVector(Eigen::VectorXd::Ones(1)));
    CHECK((fused.mean - c.mean).norm() <= 1e-10);
    CHECK((stf::t_moments(fused).cov - c.covariance()).norm() <=
          1e-10 * c.covariance().norm());
    CHECK(fused.dof == doctest::Approx(c.dof).epsilon(1e-15));
  }
  SUBCASE("identical components fuse to themselves for any weights") {
    std::mt19937_64 rng(71);
    const StudentT c(Eigen::VectorXd::Zero(2), oracles::random_spd(2, rng), 5.0);
    Eigen::VectorXd w(2);
    w << 0.2, 0.8;
    const StudentT fused =
        stf::ci_fuse(std::vector<StudentT>{c, c}, WeightVector(w, WeightVector::Domain::Closed));
    CHECK((fused.mean - c.mean).norm() <= 1e-10);
    CHECK((stf::t_moments(fused).cov - c.covariance()).norm() <=
          1e-10 * c.covariance().norm());
  }
  SUBCASE("boundary weights reproduce the selected sensor") {
    const std::vector<StudentT> pair{t1d(0.0, 2.0, 3.0), t1d(0.5, 1.0, 3.0)};
    Eigen::VectorXd w(2);
    w << 0.0, 1.0;
    const StudentT fused = stf::ci_fuse(pair, WeightVector(w, WeightVector::Domain::Closed));
    CHECK(stf::t_moments(fused).cov(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fused.mean[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fused.dof == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(fused.scale(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("fused covariance equals the weighted-precision construction") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 5; ++trial) {
      const auto pair = random_t_pair(rng, 3);
      Eigen::VectorXd w(2);
      w << 0.4, 0.6;
      const StudentT fused = stf::ci_fuse(pair, WeightVector(w));
      Eigen::MatrixXd info = Eigen::MatrixXd::Zero(3, 3);
      Eigen::VectorXd info_mean = Eigen::VectorXd::Zero(3);
      for (int i = 0; i < 2; ++i) {
        const Eigen::MatrixXd prec = pair[static_cast<std::size_t>(i)].covariance().inverse();
        info += w[i] * prec;
        info_mean += w[i] * prec * pair[static_cast<std::size_t>(i)].mean;
      }
      const Eigen::MatrixXd expected_cov = info.inverse();
      CHECK((stf::t_moments(fused).cov - expected_cov).norm() <=
            1e-10 * expected_cov.norm());
      CHECK((fused.mean - expected_cov * info_mean).norm() <=
            1e-10 * (1.0 + fused.mean.norm()));
    }
  }
  SUBCASE("equal-weight fusion dominates the pooled-precision bound") {
    std::mt19937_64 rng(79);
    for (int trial = 0; trial < 5; ++trial) {
      const auto pair = random_t_pair(rng, 2);
      const StudentT fused = stf::ci_fuse(pair, stf::uniform_weights(2));
      Eigen::MatrixXd pooled_info = Eigen::MatrixXd::Zero(2, 2);
      for (const auto& c : pair) pooled_info += c.covariance().inverse();
      CHECK(oracles::min_eigenvalue(stf::t_moments(fused).cov -
                                    pooled_info.inverse()) >= -1e-10);
    }
  }
  SUBCASE("Gaussian overload matches the same construction") {
    std::mt19937_64 rng(83);
    const Gaussian a(Eigen::VectorXd::Zero(2), oracles::random_spd(2, rng));
    const Gaussian b(Eigen::VectorXd::Ones(2), oracles::random_spd(2, rng));
    Eigen::VectorXd w(2);
    w << 0.3, 0.7;
    const Gaussian fused = stf::ci_fuse(std::vector<Gaussian>{a, b}, WeightVector(w));
    const Eigen::MatrixXd info = 0.3 * a.cov.inverse() + 0.7 * b.cov.inverse();
    CHECK((fused.cov - info.inverse()).norm() <= 1e-10 * fused.cov.norm());
  }
}

TEST_CASE("am_stack") {
  Eigen::MatrixXd h1(2, 4), h2(2, 4);
  h1 << 1, 0, 0, 0, 0, 0, 1, 0;
  h2 << 0, 1, 0, 0, 0, 0, 0, 1;
  const Eigen::MatrixXd r1 = 4.0 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd r2 = 9.0 * Eigen::MatrixXd::Identity(2, 2);
  const stf::MeasurementModel a = stf::linear_measurement(h1, r1, 3.0);
  const stf::MeasurementModel b = stf::linear_measurement(h2, r2, 5.0);

  SUBCASE("stacks rows, block-diagonal noise, min dof") {
    const stf::MeasurementModel stacked = stf::am_stack({a, b});
    CHECK(stacked.measurement_dim() == 4);
    CHECK(stacked.r_dof == doctest::Approx(3.0).epsilon(1e-15));

    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    const Eigen::MatrixXd jac = stacked.jacobian_h(x);
    CHECK((jac.topRows(2) - h1).norm() == 0.0);
    CHECK((jac.bottomRows(2) - h2).norm() == 0.0);
    const Eigen::VectorXd z = stacked.h(x);
    CHECK((z.head(2) - h1 * x).norm() == 0.0);
    CHECK((z.tail(2) - h2 * x).norm() == 0.0);

    CHECK((stacked.r_scale.block(0, 0, 2, 2) - r1).norm() == 0.0);
    CHECK((stacked.r_scale.block(2, 2, 2, 2) - r2).norm() == 0.0);
    CHECK(stacked.r_scale.block(0, 2, 2, 2).norm() == 0.0);
    CHECK(stacked.r_scale.block(2, 0, 2, 2).norm() == 0.0);
  }
  SUBCASE("single model passes through") {
    const stf::MeasurementModel one = stf::am_stack({a});
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(4);
    CHECK((one.h(x) - a.h(x)).norm() == 0.0);
    CHECK((one.jacobian_h(x) - a.jacobian_h(x)).norm() == 0.0);
    CHECK((one.r_scale - a.r_scale).norm() == 0.0);
    CHECK(one.r_dof == a.r_dof);
  }
  SUBCASE("stacked KF update equals sequential single-sensor updates") {
    std::mt19937_64 rng(89);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::MatrixXd p = oracles::random_spd(4, rng);
      const Eigen::VectorXd mean = Eigen::VectorXd::Random(4);
      Eigen::VectorXd z1 = Eigen::VectorXd::Random(2);
      Eigen::VectorXd z2 = Eigen::VectorXd::Random(2);

      stf::GBelief seq = {Gaussian(mean, p)};
      seq = stf::kf_update(seq, a, z1);
      seq = stf::kf_update(seq, b, z2);

      Eigen::VectorXd z(4);
      z << z1, z2;
      const stf::GBelief joint = stf::kf_update({Gaussian(mean, p)}, stf::am_stack({a, b}), z);

      CHECK((joint.density.mean - seq.density.mean).norm() <= 1e-10);
      CHECK((joint.density.cov - seq.density.cov).norm() <=
            1e-10 * seq.density.cov.norm());
    }
  }
  SUBCASE("stacked posterior never loses information versus one sensor") {
    std::mt19937_64 rng(97);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::MatrixXd p = oracles::random_spd(4, rng);
      const Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
      Eigen::VectorXd z(4);
      z << Eigen::VectorXd::Random(2), Eigen::VectorXd::Random(2);

      const Eigen::MatrixXd joint_cov =
          stf::kf_update({Gaussian(mean, p)}, stf::am_stack({a, b}), z).density.cov;
      const Eigen::MatrixXd first_cov =
          stf::kf_update({Gaussian(mean, p)}, a, z.head(2)).density.cov;
      const Eigen::MatrixXd second_cov =
          stf::kf_update({Gaussian(mean, p)}, b, z.tail(2)).density.cov;
      CHECK(oracles::min_eigenvalue(first_cov - joint_cov) >= -1e-10);
      CHECK(oracles::min_eigenvalue(second_cov - joint_cov) >= -1e-10);
    }
  }
  SUBCASE("rejects empty and malformed inputs") {
    CHECK_THROWS_AS(stf::am_stack({}), stf::DimensionError);
    stf::MeasurementModel bad = a;
    bad.r_scale = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(stf::am_stack({bad}), stf::DimensionError);
  }
}

TEST_CASE("am_outlier_prob") {
  CHECK(stf::am_outlier_prob({0.05, 0.05}) == doctest::Approx(0.0975).epsilon(1e-15));
  CHECK(stf::am_outlier_prob({0.0}) == 0.0);
  CHECK(stf::am_outlier_prob({1.0}) == 1.0);

  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs;
    double top = 0.0;
    for (int i = 0; i < 3; ++i) {
      probs.push_back(u(rng));
      top = std::max(top, probs.back());
    }
    CHECK(stf::am_outlier_prob(probs) >= top - 1e-15);
  }

  CHECK_THROWS_AS(stf::am_outlier_prob({}), stf::DimensionError);
  CHECK_THROWS_AS(stf::am_outlier_prob({1.5}), std::invalid_argument);
  CHECK_THROWS_AS(stf::am_outlier_prob({-0.1}), std::invalid_argument);
}

TEST_CASE("weight vector validation") {
  CHECK_THROWS_AS(WeightVector(Eigen::VectorXd::Zero(0)), stf::DimensionError);
  CHECK_THROWS_AS(WeightVector(Eigen::Vector2d(0.0, 1.0)), std::invalid_argument);
  CHECK_NOTHROW(WeightVector(Eigen::Vector2d(0.0, 1.0), WeightVector::Domain::Closed));
  CHECK_THROWS_AS(WeightVector(Eigen::Vector2d(-0.1, 1.1), WeightVector::Domain::Closed),
                  std::invalid_argument);
  CHECK_THROWS_AS(WeightVector(Eigen::Vector2d(0.6, 0.6)), std::invalid_argument);
  CHECK_NOTHROW(WeightVector(Eigen::Vector2d(0.25, 0.75)));
}
