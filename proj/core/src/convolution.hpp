#pragma once

// Gamma density convolved with zero, one, or two independent Laplace errors.

namespace hybridpool::detail {

/// Distribution of e = e1 + e2 with e1 ~ Laplace(c), e2 ~ Laplace(d). Zero
/// scales drop out; with both zero the kernel is a point mass at 0.
class ErrorKernel {
 public:
  enum class Kind { kNone, kSingle, kSumDistinct, kSumEqual };

  ErrorKernel(double c, double d);

  Kind kind() const noexcept { return kind_; }
  double first_scale() const noexcept { return s1_; }
  double second_scale() const noexcept { return s2_; }
  double max_scale() const noexcept;
  double variance() const noexcept;

  double pdf(double x) const;
  double cdf(double x) const;

 private:
  Kind kind_;
  double s1_ = 0.0;
  double s2_ = 0.0;
};

double gamma_convolved_pdf(double shape, double scale, const ErrorKernel& kernel,
                           double z);
double gamma_convolved_cdf(double shape, double scale, const ErrorKernel& kernel,
                           double z);

/// Reference route: adaptive Gauss-Kronrod over [0, q] where q is the
/// 1 - 1e-12 quantile of the Gamma, relative tolerance 1e-8. Throws
/// NumericalError when the error estimate misses tolerance.
double gamma_convolved_pdf_quadrature(double shape, double scale,
                                      const ErrorKernel& kernel, double z);
double gamma_convolved_cdf_quadrature(double shape, double scale,
                                      const ErrorKernel& kernel, double z);

/// sum_j Poisson(j; mean) / (shape + j), the regularised Kummer integral
/// used by the lower tail when the Gamma scale exceeds the Laplace scale.
double poisson_reciprocal_mean(double shape, double mean);

}  // namespace hybridpool::detail
