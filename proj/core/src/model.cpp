#include "hybridpool/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "convolution.hpp"
#include "hybridpool/error.hpp"

namespace hybridpool {
namespace {

constexpr std::array<std::string_view, kParamCount> kNormalNames = {
    "mu_x", "sigma_x", "sigma_m", "sigma_p"};
constexpr std::array<std::string_view, kParamCount> kGammaNames = {"a", "b", "c",
                                                                   "d"};

void require(bool ok, const char* what, double value) {
  if (!ok) {
    std::ostringstream os;
    os << "invalid model parameter " << what << " = " << value;
    throw ConfigError(os.str());
  }
}

}  // namespace

std::string_view to_string(Family family) {
  return family == Family::kNormal ? "normal" : "gamma";
}

Family parse_family(std::string_view name) {
  if (name == "normal") return Family::kNormal;
  if (name == "gamma") return Family::kGamma;
  throw ConfigError("unknown family '" + std::string(name) +
                    "' (expected normal or gamma)");
}

const std::array<std::string_view, kParamCount>& parameter_names(Family family) {
  return family == Family::kNormal ? kNormalNames : kGammaNames;
}

std::size_t parameter_index(Family family, std::string_view name) {
  const auto& names = parameter_names(family);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "' for family " +
                    std::string(to_string(family)));
}

ModelSpec ModelSpec::normal(double mu_x, double sigma_x, double sigma_m,
                            double sigma_p) {
  require(std::isfinite(mu_x), "mu_x", mu_x);
  require(std::isfinite(sigma_x) && sigma_x > 0.0, "sigma_x", sigma_x);
  require(std::isfinite(sigma_m) && sigma_m >= 0.0, "sigma_m", sigma_m);
  require(std::isfinite(sigma_p) && sigma_p >= 0.0, "sigma_p", sigma_p);
  return ModelSpec(NormalParams{mu_x, sigma_x, sigma_m, sigma_p});
}

ModelSpec ModelSpec::gamma(double a, double b, double c, double d) {
  require(std::isfinite(a) && a > 0.0, "a", a);
  require(std::isfinite(b) && b > 0.0, "b", b);
  require(std::isfinite(c) && c >= 0.0, "c", c);
  require(std::isfinite(d) && d >= 0.0, "d", d);
  return ModelSpec(GammaParams{a, b, c, d});
}

ModelSpec ModelSpec::from_params(Family family, const ParamVector& v) {
  return family == Family::kNormal ? normal(v[0], v[1], v[2], v[3])
                                   : gamma(v[0], v[1], v[2], v[3]);
}

Family ModelSpec::family() const noexcept {
  return std::holds_alternative<NormalParams>(params_) ? Family::kNormal
                                                       : Family::kGamma;
}

ParamVector ModelSpec::params() const noexcept {
  if (const auto* n = std::get_if<NormalParams>(&params_)) {
    return {n->mu_x, n->sigma_x, n->sigma_m, n->sigma_p};
  }
  const auto& g = std::get<GammaParams>(params_);
  return {g.a, g.b, g.c, g.d};
}

ModelSpec ModelSpec::with_params(const ParamVector& values) const {
  return from_params(family(), values);
}

const NormalParams& ModelSpec::as_normal() const {
  if (const auto* n = std::get_if<NormalParams>(&params_)) return *n;
  throw ConfigError("model is not in the normal family");
}

const GammaParams& ModelSpec::as_gamma() const {
  if (const auto* g = std::get_if<GammaParams>(&params_)) return *g;
  throw ConfigError("model is not in the gamma family");
}

double ModelSpec::individual_mean() const noexcept {
  if (const auto* n = std::get_if<NormalParams>(&params_)) return n->mu_x;
  const auto& g = std::get<GammaParams>(params_);
  return g.a * g.b;
}

double ModelSpec::individual_variance() const noexcept {
  if (const auto* n = std::get_if<NormalParams>(&params_)) {
    return n->sigma_x * n->sigma_x;
  }
  const auto& g = std::get<GammaParams>(params_);
  return g.a * g.b * g.b;
}

double ModelSpec::measurement_error_variance() const noexcept {
  if (const auto* n = std::get_if<NormalParams>(&params_)) {
    return n->sigma_m * n->sigma_m;
  }
  const auto& g = std::get<GammaParams>(params_);
  return 2.0 * g.c * g.c;
}

double ModelSpec::pooling_error_variance() const noexcept {
  if (const auto* n = std::get_if<NormalParams>(&params_)) {
    return n->sigma_p * n->sigma_p;
  }
  const auto& g = std::get<GammaParams>(params_);
  return 2.0 * g.d * g.d;
}

Distribution pooled_distribution(const ModelSpec& model, int pool_size) {
  if (pool_size < 1) {
    throw ConfigError("pool size must be >= 1, got " + std::to_string(pool_size));
  }
  const double p = pool_size;
  if (model.family() == Family::kNormal) {
    const auto& n = model.as_normal();
    return NormalDist{n.mu_x, n.sigma_x * n.sigma_x / p};
  }
  const auto& g = model.as_gamma();
  return GammaDist{g.a * p, g.b / p};
}

ObservedComponentSpec ObservedComponentSpec::make(const ModelSpec& model,
                                                  int pool_size) {
  ObservedComponentSpec spec{model, pool_size, pool_size > 1 ? 1 : 0};
  spec.validate();
  return spec;
}

void ObservedComponentSpec::validate() const {
  if (pool_size < 1) {
    throw ConfigError("pool size must be >= 1, got " + std::to_string(pool_size));
  }
  if (gamma_flag != 0 && gamma_flag != 1) {
    throw ConfigError("gamma flag must be 0 or 1");
  }
  if ((pool_size == 1) != (gamma_flag == 0)) {
    throw ConfigError("gamma flag must be 0 for individual assays and 1 for pools "
                      "(pool_size=" + std::to_string(pool_size) +
                      ", gamma=" + std::to_string(gamma_flag) + ")");
  }
}

double observed_variance(const ObservedComponentSpec& spec) {
  const auto& m = spec.model;
  return m.individual_variance() / spec.pool_size +
         spec.gamma_flag * m.pooling_error_variance() +
         m.measurement_error_variance();
}

// ---------------------------------------------------------------------------
// Normal helpers

double normal_log_pdf(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + r * r / variance);
}

double normal_log_cdf(double x) {
  if (x == -std::numeric_limits<double>::infinity()) {
    return -std::numeric_limits<double>::infinity();
  }
  if (x > -35.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  // erfc underflows near here; switch to the asymptotic Mills-ratio series
  // (relative error below 1e-12 for x <= -35).
  const double x2 = x * x;
  const double inv = 1.0 / x2;
  const double series =
      1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log(series);
}

// ---------------------------------------------------------------------------
// Laplace kernels

double laplace_pdf(double x, double scale) {
  return std::exp(-std::abs(x) / scale) / (2.0 * scale);
}

double laplace_cdf(double x, double scale) {
  return x < 0.0 ? 0.5 * std::exp(x / scale) : 1.0 - 0.5 * std::exp(-x / scale);
}

double laplace_sum_pdf(double x, double c, double d) {
  const detail::ErrorKernel kernel(c, d);
  return kernel.pdf(x);
}

double laplace_sum_cdf(double x, double c, double d) {
  const detail::ErrorKernel kernel(c, d);
  return kernel.cdf(x);
}

// ---------------------------------------------------------------------------
// Observed component densities

namespace {

detail::ErrorKernel gamma_kernel(const ObservedComponentSpec& spec) {
  const auto& g = spec.model.as_gamma();
  return detail::ErrorKernel(g.c, spec.gamma_flag == 1 ? g.d : 0.0);
}

void require_finite(double z) {
  if (!std::isfinite(z)) {
    throw ConfigError("observed density evaluated at non-finite z");
  }
}

}  // namespace

double observed_pdf(const ObservedComponentSpec& spec, double z,
                    ConvolutionMethod method) {
  require_finite(z);
  if (spec.model.family() == Family::kNormal) {
    const auto& n = spec.model.as_normal();
    return std::exp(normal_log_pdf(z, n.mu_x, observed_variance(spec)));
  }
  const auto dist = std::get<GammaDist>(pooled_distribution(spec.model, spec.pool_size));
  const auto kernel = gamma_kernel(spec);
  return method == ConvolutionMethod::kClosedForm
             ? detail::gamma_convolved_pdf(dist.shape, dist.scale, kernel, z)
             : detail::gamma_convolved_pdf_quadrature(dist.shape, dist.scale, kernel, z);
}

double observed_cdf(const ObservedComponentSpec& spec, double z,
                    ConvolutionMethod method) {
  if (std::isnan(z)) throw ConfigError("observed CDF evaluated at NaN");
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (spec.model.family() == Family::kNormal) {
    const auto& n = spec.model.as_normal();
    const double sd = std::sqrt(observed_variance(spec));
    return 0.5 * std::erfc(-(z - n.mu_x) / (sd * std::numbers::sqrt2));
  }
  const auto dist = std::get<GammaDist>(pooled_distribution(spec.model, spec.pool_size));
  const auto kernel = gamma_kernel(spec);
  return method == ConvolutionMethod::kClosedForm
             ? detail::gamma_convolved_cdf(dist.shape, dist.scale, kernel, z)
             : detail::gamma_convolved_cdf_quadrature(dist.shape, dist.scale, kernel, z);
}

double observed_log_pdf(const ObservedComponentSpec& spec, double z) {
  require_finite(z);
  if (spec.model.family() == Family::kNormal) {
    return normal_log_pdf(z, spec.model.as_normal().mu_x, observed_variance(spec));
  }
  return std::log(observed_pdf(spec, z));
}

double observed_log_cdf(const ObservedComponentSpec& spec, double z) {
  if (spec.model.family() == Family::kNormal) {
    if (std::isnan(z)) throw ConfigError("observed CDF evaluated at NaN");
    const double sd = std::sqrt(observed_variance(spec));
    return normal_log_cdf((z - spec.model.as_normal().mu_x) / sd);
  }
  return std::log(observed_cdf(spec, z));
}

}  // namespace hybridpool
