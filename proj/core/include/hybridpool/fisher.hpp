#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridpool/design.hpp"
#include "hybridpool/model.hpp"

namespace hybridpool {

/// Parameters the information matrix is taken over when none are given:
/// mu_x and sigma_x always, and each error scale that is non-zero.
ParamMask information_free_mask(const ModelSpec& model);

/// Expected information of one observation of this component under
/// censoring at `llod`, as E[s s^T] with s the per-observation score
/// (central differences of log f and log F). The observed-region
/// expectation is adaptive Gauss-Kronrod with relative tolerance 1e-7.
/// Normal family only.
Eigen::MatrixXd observation_information(const ObservedComponentSpec& component,
                                        double llod, const ParamMask& free);

/// The same quantity as -E[Hessian of the log term], with Hessians by
/// central differences. Kept as an independent route for cross-checks.
Eigen::MatrixXd observation_information_from_hessian(
    const ObservedComponentSpec& component, double llod, const ParamMask& free);

/// Sum over groups of assay_count x observation_information. No singularity
/// check.
Eigen::MatrixXd design_information(const ModelSpec& model, const DesignSpec& design,
                                   double llod, const ParamMask& free);

/// design_information, rejecting matrices that are indefinite or whose
/// condition number exceeds 1e12 (NumericalError with the diagnostic).
Eigen::MatrixXd expected_information(const ModelSpec& model, const DesignSpec& design,
                                     double llod, const ParamMask& free);
Eigen::MatrixXd expected_information(const ModelSpec& model, const DesignSpec& design,
                                     double llod);

/// Diagonal of the inverse expected information, keyed by parameter name.
NamedValues asymptotic_variances(const ModelSpec& model, const DesignSpec& design,
                                 double llod, const ParamMask& free);
NamedValues asymptotic_variances(const ModelSpec& model, const DesignSpec& design,
                                 double llod);

struct ThreeAssayExtras {
  double beta = 0.0;
  int second_pool_size = 2;
};

struct SweepRow {
  double alpha = 0.0;
  DesignSpec design;
  /// n * Var(theta_hat) per free parameter.
  NamedValues scaled_variances;
  /// Empirical sweeps only: mean estimate minus truth.
  NamedValues bias;
  /// Empirical sweeps only: replications whose fit failed.
  int failures = 0;
};

struct SweepResult {
  double llod = 0.0;
  std::vector<std::string> parameters;
  std::vector<SweepRow> rows;
};

/// One row per alpha (ascending), two-assay designs unless `extras` is
/// given. Rows are evaluated concurrently on `threads` workers.
SweepResult sweep_alpha(const ModelSpec& model, int total_specimens, int total_assays,
                        double llod, const std::vector<double>& alphas,
                        const std::optional<ThreeAssayExtras>& extras,
                        const std::optional<ParamMask>& free = std::nullopt,
                        int threads = 1);

}  // namespace hybridpool
