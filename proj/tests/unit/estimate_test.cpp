#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "hybridpool/error.hpp"
#include "hybridpool/estimate.hpp"
#include "hybridpool/fisher.hpp"
#include "hybridpool/simulate.hpp"

namespace hp = hybridpool;

namespace {

constexpr double kNoLimit = -std::numeric_limits<double>::infinity();

hp::Dataset individuals(const std::vector<double>& values, double llod) {
  hp::Dataset data;
  data.llod = llod;
  const int n = static_cast<int>(values.size());
  data.design = {n, n, {{1, 0, n, 1}}, {}};
  for (int i = 0; i < n; ++i) {
    std::optional<double> v;
    if (values[static_cast<std::size_t>(i)] >= llod) v = values[static_cast<std::size_t>(i)];
    data.observations.push_back({i + 1, 0, 1, v});
  }
  return data;
}

}  // namespace

TEST(FitMle, UncensoredNormalMatchesClosedForm) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist(3.0, 0.7);
  std::vector<double> values(500);
  for (double& v : values) v = dist(rng);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / values.size());

  const auto fit = hp::fit_mle(hp::Family::kNormal, individuals(values, kNoLimit));
  ASSERT_TRUE(fit.converged) << fit.message;
  EXPECT_NEAR(fit.estimates.as_normal().mu_x, mean, 1e-6);
  EXPECT_NEAR(fit.estimates.as_normal().sigma_x, sd, 1e-6);
  EXPECT_LE(fit.scaled_gradient_norm, 1e-4);
  ASSERT_TRUE(fit.covariance.has_value());
  EXPECT_NEAR((*fit.covariance)(0, 0), sd * sd / 500, 1e-3 * sd * sd / 500);
  EXPECT_NEAR((*fit.covariance)(0, 1), (*fit.covariance)(1, 0), 1e-15);
}

TEST(FitMle, AllCensoredIsAnError) {
  EXPECT_THROW(hp::fit_mle(hp::Family::kNormal, individuals({-1.0, -2.0}, 0.0)), hp::ConfigError);
}

TEST(FitMle, InvariantToRestartSeedAndOrder) {
  const auto model = hp::ModelSpec::normal(0, 1, 0.3, 0.4);
  auto data = hp::generate_dataset(model, hp::three_assay_design(1000, 100, 0.3, 0.4, 5), 0.0, 5);
  hp::FitOptions a;
  a.free = hp::ParamMask{true, true, true, true};
  a.init = hp::ModelSpec::normal(0.1, 0.8, 0.2, 0.2);
  hp::FitOptions b = a;
  b.restart_seed = 12345;
  const auto fa = hp::fit_mle(hp::Family::kNormal, data, a);
  const auto fb = hp::fit_mle(hp::Family::kNormal, data, b);
  std::mt19937 rng(1);
  std::shuffle(data.observations.begin(), data.observations.end(), rng);
  const auto fc = hp::fit_mle(hp::Family::kNormal, data, a);
  ASSERT_TRUE(fa.converged && fb.converged && fc.converged);
  EXPECT_NEAR(fa.loglik, fb.loglik, 1e-8);
  EXPECT_NEAR(fa.loglik, fc.loglik, 1e-8);
}

TEST(FitMle, CovarianceIsSymmetricPositiveDefinite) {
  const auto data = hp::generate_dataset(hp::ModelSpec::normal(0, 1, 0.3, 0.4),
                                         hp::three_assay_design(1000, 100, 0.4, 0.4, 5), -0.5, 3);
  hp::FitOptions options;
  options.free = hp::ParamMask{true, true, true, false};
  options.init = hp::ModelSpec::normal(0.2, 0.8, 0.2, 0.4);
  const auto fit = hp::fit_mle(hp::Family::kNormal, data, options);
  ASSERT_TRUE(fit.covariance.has_value()) << fit.message;
  const Eigen::MatrixXd& c = *fit.covariance;
  EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-12 * c.cwiseAbs().maxCoeff());
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff(), 0.0);
  EXPECT_EQ(fit.standard_errors().size(), 3u);
}

TEST(FitMle, BoundaryEstimateReportsMissingCovariance) {
  // This sample puts the sigma_p estimate on its zero boundary, where the
  // finite-difference stencil cannot be centred.
  const auto data = hp::generate_dataset(hp::ModelSpec::normal(0, 1, 0.3, 0.4),
                                         hp::three_assay_design(1000, 100, 0.4, 0.4, 5), -0.5, 3);
  hp::FitOptions options;
  options.free = hp::ParamMask{true, true, true, true};
  const auto fit = hp::fit_mle(hp::Family::kNormal, data, options);
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.estimates.as_normal().sigma_p, 1e-3);
  EXPECT_FALSE(fit.covariance.has_value());
  EXPECT_NE(fit.message.find("sigma_p"), std::string::npos);
}

TEST(FitMle, ThreeAssayEstimatesCalibratedAgainstAsymptoticErrors) {
  const auto truth = hp::ModelSpec::normal(0.0, 1.0, 0.3, 0.4);
  const auto design = hp::three_assay_design(1000, 100, 0.3, 0.4, 5);
  const double llod = -0.5;
  const hp::ParamMask all{true, true, true, true};
  const auto variances = hp::asymptotic_variances(truth, design, llod, all);
  const auto t = truth.params();
  std::array<int, 4> covered{};
  int fits = 0;
  for (int r = 0; r < 200; ++r) {
    const auto data = hp::generate_dataset(truth, design, llod, hp::replication_seed(77, r));
    hp::FitOptions options;
    options.free = all;
    options.compute_covariance = false;
    const auto fit = hp::fit_mle(hp::Family::kNormal, data, options);
    if (!fit.converged) continue;
    ++fits;
    const auto e = fit.estimates.params();
    for (std::size_t i = 0; i < 4; ++i) {
      if (std::abs(e[i] - t[i]) <= 3.0 * std::sqrt(variances[i].second)) ++covered[i];
    }
  }
  ASSERT_GE(fits, 180);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GE(covered[i], 0.9 * fits) << variances[i].first;
  }
}

TEST(FitMle, GammaShapeNearlyUnbiasedAtOnePoolAlpha) {
  hp::SimConfig config;
  config.model = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  config.design = hp::two_assay_design(1000, 100, 0.99);
  config.llod = 0.05;
  config.replications = 1000;
  config.base_seed = 31;
  const auto mc = hp::monte_carlo_variance(config);
  ASSERT_EQ(mc.parameters[0].name, "a");
  EXPECT_NEAR(mc.parameters[0].mean, 1.5, 0.05 * 1.5);
  EXPECT_NEAR(mc.parameters[1].mean, 0.1, 0.05 * 0.1);
}

TEST(FitMle, GammaFixedErrorsFitsOnlyShapeAndScale) {
  const auto truth = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  const auto data = hp::generate_dataset(truth, hp::two_assay_design(1000, 100, 0.5), 0.05, 8);
  hp::FitOptions options;
  options.init = truth;
  const auto fit = hp::fit_mle(hp::Family::kGamma, data, options);
  ASSERT_TRUE(fit.converged) << fit.message;
  EXPECT_EQ(fit.estimates.as_gamma().c, 0.02);
  EXPECT_EQ(fit.estimates.as_gamma().d, 0.03);
  const auto se = fit.standard_errors();
  ASSERT_EQ(se.size(), 2u);
  EXPECT_NEAR(fit.estimates.as_gamma().a, 1.5, 4 * se[0].second);
  EXPECT_NEAR(fit.estimates.as_gamma().b, 0.1, 4 * se[1].second);
}

TEST(ReplicateErrors, HalvedDifferenceFormulas) {
  const auto e = hp::error_variances_from_sample_variances(0.0022, 0.0051);
  EXPECT_DOUBLE_EQ(e.var_m, 0.0022 / 2);
  EXPECT_DOUBLE_EQ(e.var_p, (0.0051 - 0.0022) / 2);
  EXPECT_NEAR(e.var_m, 0.0011, 1e-15);
  EXPECT_NEAR(e.var_p, 0.00145, 1e-15);
  EXPECT_FALSE(e.var_p_floored);
}

TEST(ReplicateErrors, LinearInSampleVariances) {
  for (auto [a, b] : {std::pair{1.0, 3.0}, std::pair{0.5, 0.7}, std::pair{2.0, 10.0}}) {
    const auto e = hp::error_variances_from_sample_variances(a, b);
    const auto e2 = hp::error_variances_from_sample_variances(2 * a, 2 * b);
    EXPECT_DOUBLE_EQ(e2.var_m, 2 * e.var_m);
    EXPECT_DOUBLE_EQ(e2.var_p, 2 * e.var_p);
  }
}

TEST(ReplicateErrors, ZeroDifferencesAndFloor) {
  const hp::ReplicatePairSet zeros{{0, 0, 0}, {0, 0}};
  const auto e = hp::replicate_error_variances(zeros);
  EXPECT_EQ(e.var_m, 0.0);
  EXPECT_EQ(e.var_p, 0.0);
  const auto floored = hp::error_variances_from_sample_variances(0.004, 0.003);
  EXPECT_EQ(floored.var_p, 0.0);
  EXPECT_TRUE(floored.var_p_floored);
  EXPECT_THROW(hp::replicate_error_variances({{0.1}, {0.1, 0.2}}), hp::ConfigError);
}

TEST(LaplaceScale, SymmetricPair) {
  const std::vector<double> diffs{-1.0, 1.0};
  const auto fit = hp::fit_laplace_scale(diffs);
  EXPECT_DOUBLE_EQ(fit.diff_scale, 1.0);
  EXPECT_DOUBLE_EQ(fit.component_scale, 1.0 / std::sqrt(2.0));
}

TEST(LaplaceScale, DifferenceScaleToComponentScale) {
  const std::vector<double> diffs{-0.033, 0.033};
  EXPECT_NEAR(hp::fit_laplace_scale(diffs).component_scale, 0.0233, 1e-4);
}

TEST(LaplaceScale, ScaleEquivariantAndZeroForConstantInput) {
  const std::vector<double> diffs{-0.3, 0.1, 0.25, 0.8, -1.2, 0.05};
  std::vector<double> scaled;
  for (double d : diffs) scaled.push_back(3.5 * d);
  EXPECT_NEAR(hp::fit_laplace_scale(scaled).diff_scale, 3.5 * hp::fit_laplace_scale(diffs).diff_scale,
              1e-14);
  const std::vector<double> same{0.2, 0.2, 0.2};
  EXPECT_EQ(hp::fit_laplace_scale(same).diff_scale, 0.0);
}

TEST(LaplaceScale, DifferenceOfLaplaceErrors) {
  // e1 - e2 with e ~ Laplace(s) has E|e1 - e2| = 1.5 s, so the mean absolute
  // deviation fit gives diff_scale = 1.5 s and component_scale = 1.5 s / sqrt 2.
  const auto pairs =
      hp::generate_replicate_pairs(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.0), 100000, 0, 2, 4);
  const auto fit = hp::fit_laplace_scale(pairs.individual_diffs);
  EXPECT_NEAR(fit.component_scale, 1.5 * 0.02 / std::sqrt(2.0), 0.02 * 1.5 * 0.02 / std::sqrt(2.0));
  const auto var = hp::sample_variance(pairs.individual_diffs);
  EXPECT_NEAR(std::sqrt(var / 4.0), 0.02, 0.02 * 0.02);
}

TEST(MomentInitialValues, InsideParameterSpace) {
  const auto data = hp::generate_dataset(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03),
                                         hp::two_assay_design(1000, 100, 0.0), 0.15, 2);
  const hp::CensoredLikelihood likelihood(data);
  const auto start = hp::moment_initial_values(hp::Family::kGamma, likelihood,
                                               hp::ModelSpec::gamma(1, 1, 0.02, 0.03),
                                               hp::default_free_mask(hp::Family::kGamma));
  EXPECT_GT(start.as_gamma().a, 0.0);
  EXPECT_GT(start.as_gamma().b, 0.0);
  EXPECT_TRUE(std::isfinite(likelihood(start)));
}
