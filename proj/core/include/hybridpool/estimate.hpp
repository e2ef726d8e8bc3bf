#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridpool/likelihood.hpp"
#include "hybridpool/model.hpp"

namespace hybridpool {

/// Default free parameters: location and biomarker scale for the normal
/// family (mu_x, sigma_x), shape and scale for the gamma family (a, b). The
/// error scales stay at their initial values unless freed explicitly.
ParamMask default_free_mask(Family family);

struct FitOptions {
  /// Starting point; missing free parameters come from method of moments
  /// and fixed parameters are taken from here (zero errors when absent).
  std::optional<ModelSpec> init;
  std::optional<ParamMask> free;
  /// Seeds the jitter of the restarted simplex.
  std::uint64_t restart_seed = 0x9e3779b97f4a7c15ULL;
  int max_evaluations = 4000;
  bool compute_covariance = true;
};

struct FitResult {
  ModelSpec estimates = ModelSpec::normal(0.0, 1.0);
  ParamMask free{};
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  /// Max-norm of the gradient of loglik / (number of observations) with
  /// respect to the optimisation coordinates (log scale for positive
  /// parameters).
  double scaled_gradient_norm = 0.0;
  /// Inverse observed information over the free parameters, when the
  /// negative Hessian is positive definite.
  std::optional<Eigen::MatrixXd> covariance;
  std::string message;

  /// Standard errors of the free parameters in family order.
  std::vector<std::pair<std::string, double>> standard_errors() const;
};

/// Censored maximum likelihood by simplex search on log-transformed scale
/// parameters, one jittered restart, then Newton polishing. Throws
/// ConfigError if no observation is uncensored; non-convergence is reported
/// through FitResult::converged.
FitResult fit_mle(Family family, const Dataset& data, const FitOptions& options = {});
FitResult fit_mle(Family family, const CensoredLikelihood& likelihood,
                  const FitOptions& options = {});

/// Method-of-moments starting values with censored observations imputed at
/// the LLOD. Parameters not in `free` are copied from `fixed`.
ModelSpec moment_initial_values(Family family, const CensoredLikelihood& likelihood,
                                const ModelSpec& fixed, const ParamMask& free);

struct ReplicatePairSet {
  std::vector<double> individual_diffs;
  std::vector<double> pooled_diffs;
};

struct ErrorVarianceEstimate {
  double var_individual_diff = 0.0;
  double var_pooled_diff = 0.0;
  double var_m = 0.0;
  double var_p = 0.0;
  /// Set when Var(pooled diff) < Var(individual diff) and var_p was floored.
  bool var_p_floored = false;
};

/// Var(e_m) = Var(dZ1) / 2 and Var(e_p) = (Var(dZp) - Var(dZ1)) / 2 from
/// sample variances (n - 1 denominator).
ErrorVarianceEstimate replicate_error_variances(const ReplicatePairSet& pairs);
/// The same formulas applied to given sample variances.
ErrorVarianceEstimate error_variances_from_sample_variances(double var_individual_diff,
                                                            double var_pooled_diff);

struct LaplaceScaleFit {
  double location = 0.0;
  /// Laplace MLE scale of the differences: mean |x - median|.
  double diff_scale = 0.0;
  /// diff_scale / sqrt(2): the Laplace scale of one error term with half the
  /// variance of the difference.
  double component_scale = 0.0;
};

LaplaceScaleFit fit_laplace_scale(std::span<const double> diffs);

double sample_variance(std::span<const double> values);
double median(std::vector<double> values);

}  // namespace hybridpool
