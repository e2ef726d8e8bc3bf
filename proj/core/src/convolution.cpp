#include "convolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "hybridpool/error.hpp"

namespace hybridpool::detail {
namespace {

using FastPolicy = boost::math::policies::policy<
    boost::math::policies::promote_double<false>,
    boost::math::policies::underflow_error<boost::math::policies::ignore_error>>;

constexpr double kEqualScaleTolerance = 1e-8;
constexpr double kQuadratureTolerance = 1e-8;
constexpr double kTailProbability = 1e-12;

double gamma_p(double k, double x) { return boost::math::gamma_p(k, x, FastPolicy()); }
double gamma_q(double k, double x) { return boost::math::gamma_q(k, x, FastPolicy()); }

// log Q(k, x) by Lentz's continued fraction; only used when Q underflows,
// which implies x >> k where the fraction converges in a few terms.
double log_gamma_q_fraction(double k, double x) {
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - k;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - k);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return -x + k * std::log(x) - std::lgamma(k) + std::log(h);
}

double log_gamma_q(double k, double x) {
  const double q = gamma_q(k, x);
  if (q > 1e-280) return std::log(q);
  return log_gamma_q_fraction(k, x);
}

// log P(k, x) by the power series; used when P underflows (x << k).
double log_gamma_p(double k, double x) {
  const double p = gamma_p(k, x);
  if (p > 1e-280) return std::log(p);
  double term = 1.0;
  double sum = 1.0;
  for (int j = 1; j < 10000; ++j) {
    term *= x / (k + j);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return k * std::log(x) - x - std::lgamma(k + 1.0) + std::log(sum);
}

// Up_k(z) = int_{max(z,0)}^inf g_k(y) exp(-(y - z)/s) dy, g_k = Gamma(k, theta).
double upper_term(double k, double theta, double s, double z) {
  const double shift = -k * std::log1p(theta / s);
  if (z <= 0.0) return std::exp(z / s + shift);
  const double rate = 1.0 / theta + 1.0 / s;
  return std::exp(z / s + shift + log_gamma_q(k, rate * z));
}

// Lo_k(z) = int_0^z g_k(y) exp(-(z - y)/s) dy.
double lower_term(double k, double theta, double s, double z) {
  if (z <= 0.0) return 0.0;
  const double r = 1.0 / theta - 1.0 / s;
  if (r > 0.0) {
    const double ratio = theta * r;  // 1 - theta/s, in (0, 1)
    return std::exp(-z / s - k * std::log(ratio) + log_gamma_p(k, r * z));
  }
  const double x = -r * z;
  const double log_prefix = -z / theta + k * std::log(z / theta) - std::lgamma(k);
  return std::exp(log_prefix) * poisson_reciprocal_mean(k, x);
}

struct Tails {
  double lo;
  double up;
};

Tails tails(double k, double theta, double s, double z) {
  return {lower_term(k, theta, s, z), upper_term(k, theta, s, z)};
}

double gamma_pdf(double k, double theta, double z) {
  if (z <= 0.0) return 0.0;
  return boost::math::gamma_p_derivative(k, z / theta, FastPolicy()) / theta;
}

double gamma_cdf(double k, double theta, double z) {
  if (z <= 0.0) return 0.0;
  return gamma_p(k, z / theta);
}

double single_laplace_pdf(double k, double theta, double s, double z) {
  const auto t = tails(k, theta, s, z);
  return (t.lo + t.up) / (2.0 * s);
}

double single_laplace_cdf(double k, double theta, double s, double z) {
  const auto t = tails(k, theta, s, z);
  return gamma_cdf(k, theta, z) - 0.5 * t.lo + 0.5 * t.up;
}

double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

double poisson_reciprocal_mean(double shape, double mean) {
  if (mean <= 0.0) return 1.0 / shape;
  const double mode = std::floor(mean);
  const double pmf_mode = std::exp(-mean + mode * std::log(mean) - std::lgamma(mode + 1.0));
  double sum = pmf_mode / (shape + mode);
  double pmf = pmf_mode;
  for (double j = mode + 1.0;; j += 1.0) {
    pmf *= mean / j;
    const double term = pmf / (shape + j);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  pmf = pmf_mode;
  for (double j = mode; j >= 1.0; j -= 1.0) {
    pmf *= j / mean;
    const double term = pmf / (shape + j - 1.0);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

ErrorKernel::ErrorKernel(double c, double d) {
  if (!(c >= 0.0) || !(d >= 0.0) || !std::isfinite(c) || !std::isfinite(d)) {
    throw ConfigError("Laplace scales must be finite and non-negative");
  }
  if (c == 0.0 && d == 0.0) {
    kind_ = Kind::kNone;
  } else if (c == 0.0 || d == 0.0) {
    kind_ = Kind::kSingle;
    s1_ = std::max(c, d);
  } else if (std::abs(c - d) <= kEqualScaleTolerance * std::max(c, d)) {
    kind_ = Kind::kSumEqual;
    s1_ = s2_ = 0.5 * (c + d);
  } else {
    kind_ = Kind::kSumDistinct;
    s1_ = c;
    s2_ = d;
  }
}

double ErrorKernel::max_scale() const noexcept { return std::max(s1_, s2_); }

double ErrorKernel::variance() const noexcept {
  return 2.0 * s1_ * s1_ + 2.0 * s2_ * s2_;
}

double ErrorKernel::pdf(double x) const {
  const double ax = std::abs(x);
  switch (kind_) {
    case Kind::kNone:
      return 0.0;
    case Kind::kSingle:
      return std::exp(-ax / s1_) / (2.0 * s1_);
    case Kind::kSumEqual:
      return (s1_ + ax) * std::exp(-ax / s1_) / (4.0 * s1_ * s1_);
    case Kind::kSumDistinct:
      return (s1_ * std::exp(-ax / s1_) - s2_ * std::exp(-ax / s2_)) /
             (2.0 * (s1_ * s1_ - s2_ * s2_));
  }
  return 0.0;
}

double ErrorKernel::cdf(double x) const {
  // Lower-tail mass at -|x|; the upper half follows by symmetry.
  const double ax = std::abs(x);
  double tail = 0.0;
  switch (kind_) {
    case Kind::kNone:
      return x < 0.0 ? 0.0 : 1.0;
    case Kind::kSingle:
      tail = 0.5 * std::exp(-ax / s1_);
      break;
    case Kind::kSumEqual:
      tail = (2.0 * s1_ + ax) * std::exp(-ax / s1_) / (4.0 * s1_);
      break;
    case Kind::kSumDistinct: {
      const double c2 = s1_ * s1_;
      const double d2 = s2_ * s2_;
      tail = 0.5 * (c2 * std::exp(-ax / s1_) - d2 * std::exp(-ax / s2_)) / (c2 - d2);
      break;
    }
  }
  return x < 0.0 ? tail : 1.0 - tail;
}

double gamma_convolved_pdf(double k, double theta, const ErrorKernel& kernel,
                           double z) {
  double value = 0.0;
  switch (kernel.kind()) {
    case ErrorKernel::Kind::kNone:
      value = gamma_pdf(k, theta, z);
      break;
    case ErrorKernel::Kind::kSingle:
      value = single_laplace_pdf(k, theta, kernel.first_scale(), z);
      break;
    case ErrorKernel::Kind::kSumDistinct: {
      const double c = kernel.first_scale();
      const double d = kernel.second_scale();
      value = (c * c * single_laplace_pdf(k, theta, c, z) -
               d * d * single_laplace_pdf(k, theta, d, z)) /
              (c * c - d * d);
      break;
    }
    case ErrorKernel::Kind::kSumEqual: {
      // y g_k(y) = k theta g_{k+1}(y) turns the |z - y| factor into tails
      // of the next shape.
      const double s = kernel.first_scale();
      const auto t0 = tails(k, theta, s, z);
      const auto t1 = tails(k + 1.0, theta, s, z);
      const double kt = k * theta;
      value = (s * (t0.lo + t0.up) + z * (t0.lo - t0.up) - kt * (t1.lo - t1.up)) /
              (4.0 * s * s);
      break;
    }
  }
  return std::max(value, 0.0);
}

double gamma_convolved_cdf(double k, double theta, const ErrorKernel& kernel,
                           double z) {
  switch (kernel.kind()) {
    case ErrorKernel::Kind::kNone:
      return gamma_cdf(k, theta, z);
    case ErrorKernel::Kind::kSingle:
      return clamp_probability(single_laplace_cdf(k, theta, kernel.first_scale(), z));
    case ErrorKernel::Kind::kSumDistinct: {
      const double c = kernel.first_scale();
      const double d = kernel.second_scale();
      return clamp_probability((c * c * single_laplace_cdf(k, theta, c, z) -
                                d * d * single_laplace_cdf(k, theta, d, z)) /
                               (c * c - d * d));
    }
    case ErrorKernel::Kind::kSumEqual: {
      const double s = kernel.first_scale();
      const auto t0 = tails(k, theta, s, z);
      const auto t1 = tails(k + 1.0, theta, s, z);
      const double kt = k * theta;
      const double lower = (2.0 * s + z) * t0.lo - kt * t1.lo;
      const double upper = (2.0 * s - z) * t0.up + kt * t1.up;
      return clamp_probability(gamma_cdf(k, theta, z) + (upper - lower) / (4.0 * s));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Quadrature route

namespace {

template <class Integrand>
double integrate_gamma_support(double k, double theta, const ErrorKernel& kernel,
                               double z, Integrand&& integrand) {
  const double width = kernel.max_scale();
  // Far in the right tail the kernel near y = z outweighs the Gamma mass
  // beyond its extreme quantile, so the range must reach past z.
  const double upper =
      std::max(boost::math::gamma_q_inv(k, kTailProbability) * theta, z + 30.0 * width);
  const double mean = k * theta;
  const double sd = std::sqrt(k) * theta;

  std::vector<double> cuts = {0.0, upper, mean, mean - 8.0 * sd, mean + 8.0 * sd};
  if (width > 0.0) {
    for (double m : {-30.0, -5.0, 0.0, 5.0, 30.0}) cuts.push_back(z + m * width);
  } else {
    cuts.push_back(z);
  }
  std::erase_if(cuts, [&](double x) { return !(x >= 0.0 && x <= upper); });
  std::sort(cuts.begin(), cuts.end());
  // Slivers a few ulps wide (cuts that coincide up to rounding) spoil the
  // error estimate without adding anything.
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) {
                           return b - a <= 64.0 * std::numeric_limits<double>::epsilon() *
                                               std::max(1.0, std::abs(b));
                         }),
             cuts.end());

  double total = 0.0;
  double total_error = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    double error = 0.0;
    double piece = 0.0;
    if (a == 0.0) {
      // The Gamma density (or one of its derivatives) is singular at the
      // origin unless k is an integer; tanh-sinh copes with both.
      boost::math::quadrature::tanh_sinh<double> ts;
      double l1 = 0.0;
      piece = ts.integrate(integrand, a, b, kQuadratureTolerance, &error, &l1);
    } else {
      piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
          integrand, a, b, 15, kQuadratureTolerance, &error);
    }
    total += piece;
    total_error += error;
  }
  if (total_error > std::max(kQuadratureTolerance * std::abs(total), 1e-14) * 10.0) {
    std::ostringstream os;
    os << "quadrature did not converge: shape=" << k << " scale=" << theta
       << " z=" << z << " estimate=" << total << " error=" << total_error;
    throw NumericalError(os.str());
  }
  return total;
}

}  // namespace

double gamma_convolved_pdf_quadrature(double k, double theta,
                                      const ErrorKernel& kernel, double z) {
  if (kernel.kind() == ErrorKernel::Kind::kNone) return gamma_pdf(k, theta, z);
  auto integrand = [&](double y) {
    return gamma_pdf(k, theta, y) * kernel.pdf(z - y);
  };
  return std::max(integrate_gamma_support(k, theta, kernel, z, integrand), 0.0);
}

double gamma_convolved_cdf_quadrature(double k, double theta,
                                      const ErrorKernel& kernel, double z) {
  if (kernel.kind() == ErrorKernel::Kind::kNone) return gamma_cdf(k, theta, z);
  auto integrand = [&](double y) {
    return gamma_pdf(k, theta, y) * kernel.cdf(z - y);
  };
  return clamp_probability(integrate_gamma_support(k, theta, kernel, z, integrand));
}

}  // namespace hybridpool::detail
