#include "hybridpool/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hybridpool/error.hpp"
#include "hybridpool/optimizer.hpp"

namespace hybridpool {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGradientTolerance = 1e-4;
constexpr double kCoordinateStep = 1e-4;

bool log_scaled(Family family, std::size_t index) {
  return !(family == Family::kNormal && index == 0);
}

// Maps optimisation coordinates (free parameters only, log scale where the
// parameter is positive) to a model and back.
class Coordinates {
 public:
  Coordinates(Family family, const ModelSpec& base, const ParamMask& free)
      : family_(family), base_(base.params()) {
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (free[i]) index_.push_back(i);
    }
  }

  std::size_t size() const noexcept { return index_.size(); }

  std::vector<double> encode(const ModelSpec& model) const {
    const auto v = model.params();
    std::vector<double> x(index_.size());
    for (std::size_t k = 0; k < index_.size(); ++k) {
      const std::size_t i = index_[k];
      x[k] = log_scaled(family_, i) ? std::log(v[i]) : v[i];
    }
    return x;
  }

  ModelSpec decode(std::span<const double> x) const {
    ParamVector v = base_;
    for (std::size_t k = 0; k < index_.size(); ++k) {
      const std::size_t i = index_[k];
      v[i] = log_scaled(family_, i) ? std::exp(x[k]) : x[k];
    }
    return ModelSpec::from_params(family_, v);
  }

 private:
  Family family_;
  ParamVector base_;
  std::vector<std::size_t> index_;
};

struct WeightedMoments {
  double mean = 0.0;
  double individual_variance = 0.0;
  bool has_variance = false;
};

// Pools per-group means and variances on the individual-specimen scale.
// `error_variance(gamma_flag)` is subtracted from each group's variance
// before scaling up by the pool size.
template <class ErrorVariance>
WeightedMoments pooled_moments(const CensoredLikelihood& likelihood,
                               ErrorVariance&& error_variance) {
  WeightedMoments out;
  double mean_weight = 0.0;
  double var_weight = 0.0;
  double var_sum = 0.0;
  const bool impute = std::isfinite(likelihood.llod());
  for (const auto& g : likelihood.groups()) {
    std::vector<double> values = g.values;
    if (impute) values.insert(values.end(), static_cast<std::size_t>(g.censored), likelihood.llod());
    if (values.empty()) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    out.mean += mean * static_cast<double>(values.size());
    mean_weight += static_cast<double>(values.size());
    if (values.size() >= 2) {
      const double var = sample_variance(values);
      const double individual = g.pool_size * (var - error_variance(g.gamma_flag));
      const double weight = static_cast<double>(values.size() - 1);
      var_sum += weight * individual;
      var_weight += weight;
    }
  }
  if (mean_weight > 0.0) out.mean /= mean_weight;
  if (var_weight > 0.0 && var_sum > 0.0) {
    out.individual_variance = var_sum / var_weight;
    out.has_variance = true;
  }
  return out;
}

double finite_objective(const std::function<double(std::span<const double>)>& f,
                        const std::vector<double>& x) {
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

Eigen::VectorXd coordinate_gradient(
    const std::function<double(std::span<const double>)>& f, const std::vector<double>& x) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = kCoordinateStep * std::max(1.0, std::abs(x[i]));
    auto up = x;
    auto down = x;
    up[i] += h;
    down[i] -= h;
    g[static_cast<Eigen::Index>(i)] =
        (finite_objective(f, up) - finite_objective(f, down)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd coordinate_hessian(
    const std::function<double(std::span<const double>)>& f, const std::vector<double>& x,
    double center) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd h(n, n);
  std::vector<double> step(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    step[i] = kCoordinateStep * std::max(1.0, std::abs(x[i]));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x;
    auto down = x;
    up[i] += step[i];
    down[i] -= step[i];
    const auto a = static_cast<Eigen::Index>(i);
    h(a, a) = (finite_objective(f, up) - 2.0 * center + finite_objective(f, down)) /
              (step[i] * step[i]);
    for (std::size_t j = 0; j < i; ++j) {
      auto shifted = [&](double si, double sj) {
        auto v = x;
        v[i] += si * step[i];
        v[j] += sj * step[j];
        return finite_objective(f, v);
      };
      const double value =
          (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) /
          (4.0 * step[i] * step[j]);
      const auto b = static_cast<Eigen::Index>(j);
      h(a, b) = value;
      h(b, a) = value;
    }
  }
  return h;
}

}  // namespace

ParamMask default_free_mask(Family) { return {true, true, false, false}; }

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw ConfigError("sample variance needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<std::pair<std::string, double>> FitResult::standard_errors() const {
  std::vector<std::pair<std::string, double>> out;
  if (!covariance) return out;
  const auto& names = parameter_names(estimates.family());
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!free[i]) continue;
    out.emplace_back(std::string(names[i]), std::sqrt(std::max(0.0, (*covariance)(k, k))));
    ++k;
  }
  return out;
}

ModelSpec moment_initial_values(Family family, const CensoredLikelihood& likelihood,
                                const ModelSpec& fixed, const ParamMask& free) {
  ParamVector v = fixed.params();
  if (family == Family::kNormal) {
    const double em = free[2] ? 0.0 : v[2] * v[2];
    const double ep = free[3] ? 0.0 : v[3] * v[3];
    const auto m = pooled_moments(likelihood, [&](int gamma) { return em + gamma * ep; });
    double sd = m.has_variance ? std::sqrt(m.individual_variance) : 1.0;
    if (!(sd > 0.0)) sd = 1.0;
    if (free[0]) v[0] = m.mean;
    if (free[1]) v[1] = sd;
    if (free[2]) v[2] = 0.3 * v[1];
    if (free[3]) v[3] = 0.3 * v[1];
  } else {
    const double em = free[2] ? 0.0 : 2.0 * v[2] * v[2];
    const double ep = free[3] ? 0.0 : 2.0 * v[3] * v[3];
    const auto m = pooled_moments(likelihood, [&](int gamma) { return em + gamma * ep; });
    double mean = m.mean > 0.0 ? m.mean : 1.0;
    double var = m.has_variance ? m.individual_variance : mean * mean;
    var = std::max(var, 1e-4 * mean * mean);
    if (free[0]) v[0] = mean * mean / var;
    if (free[1]) v[1] = var / mean;
    if (free[2]) v[2] = 0.1 * std::sqrt(var);
    if (free[3]) v[3] = 0.1 * std::sqrt(var);
  }
  return ModelSpec::from_params(family, v);
}

FitResult fit_mle(Family family, const Dataset& data, const FitOptions& options) {
  return fit_mle(family, CensoredLikelihood(data), options);
}

FitResult fit_mle(Family family, const CensoredLikelihood& likelihood,
                  const FitOptions& options) {
  if (likelihood.family() && *likelihood.family() != family) {
    throw ConfigError("fit family does not match dataset family");
  }
  if (likelihood.numeric_count() == 0) {
    throw ConfigError("all observations are censored; nothing to fit");
  }
  const ParamMask free = options.free.value_or(default_free_mask(family));
  const ModelSpec fixed = options.init.value_or(
      family == Family::kNormal ? ModelSpec::normal(0.0, 1.0) : ModelSpec::gamma(1.0, 1.0));
  if (fixed.family() != family) throw ConfigError("initial values have the wrong family");

  ModelSpec start = moment_initial_values(family, likelihood, fixed, free);
  if (options.init) {
    // Explicit initial values win for the free parameters too, as long as
    // they sit strictly inside the parameter space.
    ParamVector v = start.params();
    const ParamVector given = options.init->params();
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (free[i] && (!log_scaled(family, i) || given[i] > 0.0)) v[i] = given[i];
    }
    start = ModelSpec::from_params(family, v);
  }

  const Coordinates coords(family, start, free);
  const double n_obs =
      static_cast<double>(likelihood.numeric_count() + likelihood.censored_count());
  const std::function<double(std::span<const double>)> objective =
      [&](std::span<const double> x) {
        try {
          const double ll = likelihood(coords.decode(x));
          return std::isfinite(ll) ? -ll / n_obs : kInf;
        } catch (const ConfigError&) {
          return kInf;
        }
      };

  FitResult result;
  result.free = free;
  if (coords.size() == 0) {
    result.estimates = start;
    result.loglik = likelihood(start);
    result.converged = std::isfinite(result.loglik);
    return result;
  }

  std::vector<double> x0 = coords.encode(start);
  std::vector<double> steps;
  const double location_step = family == Family::kNormal ? 0.5 * start.params()[1] : 0.0;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (free[i]) steps.push_back(log_scaled(family, i) ? 0.2 : location_step);
  }

  NelderMeadOptions nm;
  nm.max_evaluations = options.max_evaluations;
  nm.value_tolerance = 1e-10;
  nm.point_tolerance = 1e-6;
  const auto first = nelder_mead_minimize(objective, x0, steps, nm);

  std::mt19937_64 rng(options.restart_seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::vector<double> restart = first.point;
  std::vector<double> restart_steps = steps;
  for (std::size_t k = 0; k < restart.size(); ++k) {
    restart_steps[k] *= 0.5 + 0.25 * (jitter(rng) + 1.0);
    restart[k] += 0.1 * steps[k] * jitter(rng);
  }
  const auto second = nelder_mead_minimize(objective, restart, restart_steps, nm);
  const auto& best = second.value <= first.value ? second : first;

  result.evaluations = first.evaluations + second.evaluations;
  result.iterations = first.iterations + second.iterations;
  std::vector<double> x = best.point;
  double fx = best.value;

  // Newton polish on the optimisation coordinates.
  Eigen::VectorXd grad = coordinate_gradient(objective, x);
  for (int iter = 0; iter < 10 && std::isfinite(fx); ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10) break;
    const Eigen::MatrixXd hess = coordinate_hessian(objective, x, fx);
    const Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd delta = llt.solve(-grad);
    bool accepted = false;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      std::vector<double> trial = x;
      for (std::size_t k = 0; k < x.size(); ++k) {
        trial[k] += t * delta[static_cast<Eigen::Index>(k)];
      }
      const double ft = finite_objective(objective, trial);
      if (ft <= fx + 1e-4 * t * grad.dot(delta)) {
        x = std::move(trial);
        fx = ft;
        accepted = true;
        break;
      }
    }
    ++result.iterations;
    if (!accepted) break;
    grad = coordinate_gradient(objective, x);
  }

  result.estimates = coords.decode(x);
  result.loglik = likelihood(result.estimates);
  result.scaled_gradient_norm = grad.lpNorm<Eigen::Infinity>();
  result.converged = std::isfinite(result.loglik) && (first.converged || second.converged) &&
                     result.scaled_gradient_norm <= kGradientTolerance;
  if (!result.converged) {
    result.message = std::isfinite(result.loglik)
                         ? "optimizer stopped with scaled gradient norm " +
                               std::to_string(result.scaled_gradient_norm)
                         : "log-likelihood is not finite at the estimate";
  }

  if (options.compute_covariance && std::isfinite(result.loglik)) {
    try {
      const Eigen::MatrixXd info = -numeric_hessian(likelihood, result.estimates, free);
      const Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() == Eigen::Success) {
        result.covariance =
            llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
      } else if (result.message.empty()) {
        result.message = "observed information is not positive definite";
      }
    } catch (const NumericalError& e) {
      if (result.message.empty()) result.message = e.what();
    }
  }
  return result;
}

ErrorVarianceEstimate error_variances_from_sample_variances(double var_individual_diff,
                                                            double var_pooled_diff) {
  ErrorVarianceEstimate out;
  out.var_individual_diff = var_individual_diff;
  out.var_pooled_diff = var_pooled_diff;
  out.var_m = var_individual_diff / 2.0;
  out.var_p = (var_pooled_diff - var_individual_diff) / 2.0;
  if (out.var_p < 0.0) {
    out.var_p = 0.0;
    out.var_p_floored = true;
  }
  return out;
}

ErrorVarianceEstimate replicate_error_variances(const ReplicatePairSet& pairs) {
  if (pairs.individual_diffs.size() < 2 || pairs.pooled_diffs.size() < 2) {
    throw ConfigError("replicate error estimation needs at least 2 individual and 2 "
                      "pooled replicate differences");
  }
  return error_variances_from_sample_variances(sample_variance(pairs.individual_diffs),
                                               sample_variance(pairs.pooled_diffs));
}

LaplaceScaleFit fit_laplace_scale(std::span<const double> diffs) {
  if (diffs.size() < 2) throw ConfigError("Laplace scale fit needs at least 2 values");
  LaplaceScaleFit fit;
  fit.location = median(std::vector<double>(diffs.begin(), diffs.end()));
  double total = 0.0;
  for (double v : diffs) total += std::abs(v - fit.location);
  fit.diff_scale = total / static_cast<double>(diffs.size());
  fit.component_scale = fit.diff_scale / std::sqrt(2.0);
  return fit;
}

}  // namespace hybridpool
