#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <gtest/gtest.h>

#include "hybridpool/error.hpp"
#include "hybridpool/model.hpp"
#include "support.hpp"

namespace hp = hybridpool;
using testing_support::simpson;

namespace {

double laplace_oracle(double x, double s) { return std::exp(-std::abs(x) / s) / (2.0 * s); }

double laplace_sum_oracle(double x, double c, double d, int intervals = 4000) {
  if (c == 0.0 && d == 0.0) return 0.0;
  if (d == 0.0) return laplace_oracle(x, c);
  if (c == 0.0) return laplace_oracle(x, d);
  if (c == d) {
    // Nested convolution, split at the two cusps.
    auto f = [&](double y) { return laplace_oracle(y, c) * laplace_oracle(x - y, d); };
    const double lo = std::min(0.0, x), hi = std::max(0.0, x), w = 40.0 * c;
    return simpson(f, lo - w, lo, intervals) + simpson(f, lo, hi, intervals) +
           simpson(f, hi, hi + w, intervals);
  }
  return (c * std::exp(-std::abs(x) / c) - d * std::exp(-std::abs(x) / d)) /
         (2.0 * (c * c - d * d));
}

// Density of Gamma(shape, scale) + kernel at z, with x = u^2 to smooth the
// origin and a split at the kernel cusp.
double gamma_convolution_oracle(double z, double shape, double scale, double c, double d) {
  const boost::math::gamma_distribution<double> g(shape, scale);
  auto integrand = [&](double u) {
    const double x = u * u;
    return 2.0 * u * boost::math::pdf(g, x) * laplace_sum_oracle(z - x, c, d);
  };
  const double upper = std::sqrt(boost::math::quantile(g, 1.0 - 1e-15));
  if (z <= 0.0) return simpson(integrand, 0.0, upper, 20000);
  const double cusp = std::min(std::sqrt(z), upper);
  return simpson(integrand, 0.0, cusp, 20000) + simpson(integrand, cusp, upper, 20000);
}

hp::ObservedComponentSpec component(const hp::ModelSpec& m, int p) {
  return hp::ObservedComponentSpec::make(m, p);
}

}  // namespace

TEST(PooledDistribution, NormalIdentityAtOne) {
  const auto d = std::get<hp::NormalDist>(hp::pooled_distribution(hp::ModelSpec::normal(0, 1), 1));
  EXPECT_DOUBLE_EQ(d.mean, 0.0);
  EXPECT_DOUBLE_EQ(d.variance, 1.0);
}

TEST(PooledDistribution, GammaShapeScalesWithPoolSize) {
  const auto d =
      std::get<hp::GammaDist>(hp::pooled_distribution(hp::ModelSpec::gamma(1.5, 0.1), 2));
  EXPECT_DOUBLE_EQ(d.shape, 3.0);
  EXPECT_DOUBLE_EQ(d.scale, 0.05);
}

TEST(PooledDistribution, NormalVarianceDividesByPoolSize) {
  const auto d = std::get<hp::NormalDist>(hp::pooled_distribution(hp::ModelSpec::normal(0, 1), 4));
  EXPECT_DOUBLE_EQ(d.variance, 0.25);
}

TEST(ObservedPdf, NormalThreeAssayPoolVarianceSum) {
  const auto spec = component(hp::ModelSpec::normal(0, 1, 0.3, 0.4), 5);
  EXPECT_EQ(spec.gamma_flag, 1);
  const double expected = 1.0 / std::sqrt(2.0 * M_PI * 0.45);
  EXPECT_NEAR(hp::observed_pdf(spec, 0.0), expected, 1e-14);
  EXPECT_NEAR(hp::observed_variance(spec), 0.45, 1e-15);
}

TEST(ObservedCdf, NormalSymmetryAndTail) {
  const auto spec = component(hp::ModelSpec::normal(0, 1), 1);
  EXPECT_DOUBLE_EQ(hp::observed_cdf(spec, 0.0), 0.5);
  EXPECT_NEAR(hp::observed_cdf(spec, -5.0) / 2.866515718791939e-07, 1.0, 1e-12);
}

TEST(ObservedPdf, GammaWithoutErrorsIsGammaPdf) {
  const auto model = hp::ModelSpec::gamma(1.5, 0.1);
  for (int p : {1, 2, 5}) {
    const boost::math::gamma_distribution<double> g(1.5 * p, 0.1 / p);
    const auto spec = component(model, p);
    for (double z : {0.001, 0.02, 0.1, 0.15, 0.3, 0.8}) {
      const double expected = boost::math::pdf(g, z);
      EXPECT_NEAR(hp::observed_pdf(spec, z), expected, 1e-10 * std::max(1.0, expected))
          << "p=" << p << " z=" << z;
      EXPECT_NEAR(hp::observed_cdf(spec, z), boost::math::cdf(g, z), 1e-12);
    }
    EXPECT_EQ(hp::observed_pdf(spec, -0.01), 0.0);
  }
}

TEST(ObservedPdf, GammaLaplaceMatchesNumericConvolution) {
  const auto model = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  for (int p : {1, 2, 5}) {
    const auto spec = component(model, p);
    const double d = spec.gamma_flag ? 0.03 : 0.0;
    for (double z : {-0.05, -0.01, 0.0, 0.02, 0.05, 0.15, 0.3, 0.6}) {
      const double oracle = gamma_convolution_oracle(z, 1.5 * p, 0.1 / p, 0.02, d);
      EXPECT_NEAR(hp::observed_pdf(spec, z), oracle, 1e-7 + 1e-6 * oracle)
          << "p=" << p << " z=" << z;
    }
  }
}

TEST(ObservedPdf, PairedPoolExampleWithinOneInTenThousand) {
  const auto spec = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 2);
  const double oracle = gamma_convolution_oracle(0.15, 3.0, 0.05, 0.02, 0.03);
  EXPECT_NEAR(hp::observed_pdf(spec, 0.15), oracle, 1e-4);
}

TEST(ObservedPdf, EqualErrorScalesMatchNestedConvolution) {
  const auto spec = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.02), 3);
  for (double z : {-0.03, 0.01, 0.05, 0.12, 0.4}) {
    const double oracle = gamma_convolution_oracle(z, 4.5, 0.1 / 3, 0.02, 0.02);
    EXPECT_NEAR(hp::observed_pdf(spec, z), oracle, 1e-6 + 1e-5 * oracle) << "z=" << z;
  }
}

TEST(ObservedPdf, NearEqualScalesAreContinuous) {
  const auto equal = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.02), 2);
  const auto near = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.02 * (1 + 1e-6)), 2);
  for (double z : {-0.02, 0.03, 0.1, 0.3}) {
    EXPECT_NEAR(hp::observed_pdf(equal, z), hp::observed_pdf(near, z),
                1e-5 * hp::observed_pdf(equal, z));
    EXPECT_NEAR(hp::observed_cdf(equal, z), hp::observed_cdf(near, z), 1e-6);
  }
}

TEST(ObservedPdf, ClosedFormAgreesWithQuadratureRoute) {
  const std::vector<hp::ModelSpec> models = {hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03),
                                             hp::ModelSpec::gamma(0.6, 2.0, 0.5, 0.5),
                                             hp::ModelSpec::gamma(3.0, 0.5, 0.1, 0.0)};
  for (const auto& model : models) {
    for (int p : {1, 2, 10}) {
      const auto spec = component(model, p);
      const double mean = model.individual_mean();
      for (double f : {-0.5, 0.0, 0.2, 0.5, 1.0, 2.0, 4.0}) {
        const double z = f * mean;
        const double pdf_q = hp::observed_pdf(spec, z, hp::ConvolutionMethod::kQuadrature);
        const double cdf_q = hp::observed_cdf(spec, z, hp::ConvolutionMethod::kQuadrature);
        EXPECT_NEAR(hp::observed_pdf(spec, z), pdf_q, 1e-7 * pdf_q + 1e-12);
        EXPECT_NEAR(hp::observed_cdf(spec, z), cdf_q, 1e-7 * cdf_q + 1e-12);
      }
    }
  }
}

TEST(ObservedCdf, DerivativeMatchesPdf) {
  const auto spec = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 2);
  const double h = 1e-6;
  for (double z : {-0.02, 0.05, 0.15, 0.4}) {
    const double slope = (hp::observed_cdf(spec, z + h) - hp::observed_cdf(spec, z - h)) / (2 * h);
    EXPECT_NEAR(slope, hp::observed_pdf(spec, z), 1e-5 * hp::observed_pdf(spec, z));
  }
}

TEST(ObservedPdf, IntegratesToOneForEveryConsistentComponent) {
  const std::vector<hp::ModelSpec> models = {hp::ModelSpec::normal(0.0, 1.0, 0.3, 0.4),
                                             hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03)};
  for (const auto& model : models) {
    for (int p : {1, 2, 5, 10}) {
      const auto spec = component(model, p);
      const double mean = model.individual_mean();
      const double sd = std::sqrt(hp::observed_variance(spec));
      const double lo = model.family() == hp::Family::kNormal ? mean - 14 * sd : -40 * 0.05;
      const double hi = mean + 30 * sd;
      auto f = [&](double z) { return hp::observed_pdf(spec, z); };
      // Gamma densities have a kink at the origin when errors vanish; the
      // error kernels here keep them smooth, but split there anyway.
      const double total = lo < 0.0 && hi > 0.0
                               ? simpson(f, lo, 0.0, 40000) + simpson(f, 0.0, hi, 40000)
                               : simpson(f, lo, hi, 80000);
      EXPECT_NEAR(total, 1.0, 1e-6) << hp::to_string(model.family()) << " p=" << p;
    }
  }
}

TEST(ObservedCdf, MonotoneOnGridAndLimits) {
  for (const auto& model :
       {hp::ModelSpec::normal(0.0, 1.0, 0.3, 0.4), hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03)}) {
    const auto spec = component(model, 2);
    const double mean = model.individual_mean();
    const double sd = std::sqrt(hp::observed_variance(spec));
    double previous = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double z = mean - 8 * sd + 16 * sd * i / 99.0;
      const double v = hp::observed_cdf(spec, z);
      EXPECT_GE(v, previous);
      EXPECT_LE(v, 1.0);
      previous = v;
    }
    EXPECT_NEAR(hp::observed_cdf(spec, mean + 60 * sd), 1.0, 1e-12);
    EXPECT_EQ(hp::observed_cdf(spec, -std::numeric_limits<double>::infinity()), 0.0);
  }
}

TEST(ObservedVariance, NormalMomentIdentity) {
  const auto model = hp::ModelSpec::normal(1.0, 2.0, 0.5, 0.7);
  for (int p : {1, 3, 8}) {
    const auto spec = component(model, p);
    const double expected = 4.0 / p + (p > 1 ? 0.49 : 0.0) + 0.25;
    EXPECT_DOUBLE_EQ(hp::observed_variance(spec), expected);
  }
}

TEST(LaplaceSum, IntegratesToOneWithAdditiveVariance) {
  for (auto [c, d] : {std::pair{0.02, 0.03}, std::pair{0.02, 0.02}, std::pair{0.05, 0.0}}) {
    auto f = [&](double x) { return hp::laplace_sum_pdf(x, c, d); };
    auto g = [&](double x) { return x * x * hp::laplace_sum_pdf(x, c, d); };
    const double w = 60 * std::max(c, d);
    const double mass = simpson(f, -w, 0.0, 20000) + simpson(f, 0.0, w, 20000);
    const double var = simpson(g, -w, 0.0, 20000) + simpson(g, 0.0, w, 20000);
    EXPECT_NEAR(mass, 1.0, 1e-6);
    EXPECT_NEAR(var / (2 * c * c + 2 * d * d), 1.0, 1e-6);
    EXPECT_NEAR(hp::laplace_sum_cdf(0.0, c, d), 0.5, 1e-15);
    EXPECT_NEAR(hp::laplace_sum_cdf(0.013, c, d), 0.5 + simpson(f, 0.0, 0.013, 2000), 1e-10);
  }
}

TEST(LaplaceSum, EqualScaleMatchesNestedConvolution) {
  for (double x : {-0.05, 0.0, 0.01, 0.04}) {
    EXPECT_NEAR(hp::laplace_sum_pdf(x, 0.02, 0.02), laplace_sum_oracle(x, 0.02, 0.02, 20000), 1e-8);
  }
}

TEST(ObservedPdf, RejectsNonFiniteArguments) {
  const auto spec = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 1);
  EXPECT_THROW(hp::observed_pdf(spec, std::nan("")), hp::ConfigError);
  EXPECT_THROW(hp::observed_pdf(spec, std::numeric_limits<double>::infinity()), hp::ConfigError);
  EXPECT_THROW(hp::observed_cdf(spec, std::nan("")), hp::ConfigError);
}

TEST(ModelSpec, RejectsInvalidParameters) {
  EXPECT_THROW(hp::ModelSpec::normal(0.0, 0.0), hp::ConfigError);
  EXPECT_THROW(hp::ModelSpec::normal(0.0, 1.0, -0.1), hp::ConfigError);
  EXPECT_THROW(hp::ModelSpec::gamma(-1.0, 0.1), hp::ConfigError);
  EXPECT_THROW(hp::ModelSpec::gamma(1.0, 0.1, 0.0, std::nan("")), hp::ConfigError);
  hp::ObservedComponentSpec bad{hp::ModelSpec::normal(0, 1), 3, 0};
  EXPECT_THROW(bad.validate(), hp::ConfigError);
  EXPECT_THROW(hp::parse_family("weibull"), hp::ConfigError);
}

TEST(ModelSpec, ImpliedMoments) {
  const auto g = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  EXPECT_DOUBLE_EQ(g.individual_mean(), 0.15);
  EXPECT_NEAR(g.individual_variance(), 0.015, 1e-17);
  EXPECT_NEAR(g.measurement_error_variance(), 0.0008, 1e-18);
  EXPECT_NEAR(g.pooling_error_variance(), 0.0018, 1e-18);
}

TEST(NormalLogCdf, AccurateDeepInTheTail) {
  for (double x : {-1.0, -10.0, -30.0, -37.0, -40.0, -100.0}) {
    const long double exact = std::log(0.5L * std::erfc(-static_cast<long double>(x) / std::sqrt(2.0L)));
    EXPECT_NEAR(hp::normal_log_cdf(x), static_cast<double>(exact), 1e-12 * std::abs(exact)) << x;
  }
}

TEST(ObservedLogPdf, FiniteFarBelowTheGammaSupport) {
  const auto spec = component(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 2);
  const double v = hp::observed_log_pdf(spec, -2.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(v, -50.0);
  EXPECT_TRUE(std::isfinite(hp::observed_log_cdf(spec, -2.0)));
}
