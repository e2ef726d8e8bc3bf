#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace hybridpool {

enum class Family { kNormal, kGamma };

std::string_view to_string(Family family);
/// Accepts "normal" or "gamma" (case-sensitive).
Family parse_family(std::string_view name);

/// Every model has exactly four parameters. Normal: mu_x, sigma_x, sigma_m,
/// sigma_p. Gamma: a (shape), b (scale), c, d (Laplace scales of the
/// measurement and pooling errors).
inline constexpr std::size_t kParamCount = 4;
using ParamVector = std::array<double, kParamCount>;
using ParamMask = std::array<bool, kParamCount>;
/// Ordered (parameter name, value) pairs.
using NamedValues = std::vector<std::pair<std::string, double>>;

const std::array<std::string_view, kParamCount>& parameter_names(Family family);
/// Index of a parameter by name within its family; throws ConfigError.
std::size_t parameter_index(Family family, std::string_view name);

struct NormalParams {
  double mu_x = 0.0;
  double sigma_x = 1.0;
  double sigma_m = 0.0;
  double sigma_p = 0.0;
};

struct GammaParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
  double d = 0.0;
};

/// Biomarker plus additive-error model. Construction validates the
/// positivity constraints, so a ModelSpec in hand is always usable.
class ModelSpec {
 public:
  static ModelSpec normal(double mu_x, double sigma_x, double sigma_m = 0.0,
                          double sigma_p = 0.0);
  static ModelSpec gamma(double a, double b, double c = 0.0, double d = 0.0);
  static ModelSpec from_params(Family family, const ParamVector& values);

  Family family() const noexcept;
  ParamVector params() const noexcept;
  /// Same family, new parameter values (validated).
  ModelSpec with_params(const ParamVector& values) const;

  const NormalParams& as_normal() const;
  const GammaParams& as_gamma() const;

  /// Moments of one individual specimen value.
  double individual_mean() const noexcept;
  double individual_variance() const noexcept;
  double measurement_error_variance() const noexcept;
  double pooling_error_variance() const noexcept;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

 private:
  explicit ModelSpec(std::variant<NormalParams, GammaParams> params)
      : params_(params) {}
  std::variant<NormalParams, GammaParams> params_;
};

struct NormalDist {
  double mean;
  double variance;
};

struct GammaDist {
  double shape;
  double scale;
};

using Distribution = std::variant<NormalDist, GammaDist>;

/// Error-free distribution of the arithmetic mean of p specimens:
/// Normal(mu_x, sigma_x^2 / p) or Gamma(a p, b / p).
Distribution pooled_distribution(const ModelSpec& model, int pool_size);

/// One assay type: pool size and whether pooling error applies. The flag
/// must be 0 for individual assays and 1 for pools.
struct ObservedComponentSpec {
  ModelSpec model;
  int pool_size = 1;
  int gamma_flag = 0;

  static ObservedComponentSpec make(const ModelSpec& model, int pool_size);
  void validate() const;
};

enum class ConvolutionMethod {
  kClosedForm,  // incomplete-gamma / Poisson-series evaluation
  kQuadrature,  // adaptive Gauss-Kronrod over the Gamma support
};

/// Density of Z = X^(p) + gamma e^(p) + e^(m) at z.
double observed_pdf(const ObservedComponentSpec& spec, double z,
                    ConvolutionMethod method = ConvolutionMethod::kClosedForm);
/// P(Z <= z).
double observed_cdf(const ObservedComponentSpec& spec, double z,
                    ConvolutionMethod method = ConvolutionMethod::kClosedForm);
/// log observed_pdf, computed in log space where the family allows it.
double observed_log_pdf(const ObservedComponentSpec& spec, double z);
/// log observed_cdf; -inf at z = -inf.
double observed_log_cdf(const ObservedComponentSpec& spec, double z);

/// Variance of the observed value Z for this component.
double observed_variance(const ObservedComponentSpec& spec);

// Laplace(scale) has density exp(-|x|/scale) / (2 scale). The sum of two
// independent Laplace variables has a closed-form density; scales of 0 are
// allowed and reduce to a single Laplace (or a point mass when both vanish).
double laplace_pdf(double x, double scale);
double laplace_cdf(double x, double scale);
double laplace_sum_pdf(double x, double c, double d);
double laplace_sum_cdf(double x, double c, double d);

// Standard normal helpers, accurate deep into the lower tail.
double normal_log_cdf(double x);
double normal_log_pdf(double x, double mean, double variance);

}  // namespace hybridpool
