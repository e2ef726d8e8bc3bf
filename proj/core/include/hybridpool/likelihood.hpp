#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hybridpool/design.hpp"
#include "hybridpool/model.hpp"

namespace hybridpool {

/// One measurement. An empty value means the assay read below the LLOD.
struct AssayObservation {
  int assay_id = 0;
  int group_index = 0;
  int replicate_index = 1;
  std::optional<double> value;

  bool censored() const noexcept { return !value.has_value(); }
};

struct Dataset {
  /// -inf disables censoring.
  double llod = 0.0;
  DesignSpec design;
  std::vector<AssayObservation> observations;
  /// Family the data were generated under or declared as, when known.
  std::optional<Family> family;

  /// Checks per-group observation counts, replicate indices and that every
  /// numeric value is >= llod. Throws ConfigError.
  void validate() const;
  std::size_t censored_count() const noexcept;
};

/// Per-group summary the likelihood works from: uncensored values of the
/// first replicate and a count of censored ones. Replicate 2 is ignored.
class CensoredLikelihood {
 public:
  explicit CensoredLikelihood(const Dataset& data);

  /// Sum of log observed_pdf over numeric values plus count * log
  /// observed_cdf(llod) per group. Returns -inf when any term has no support.
  double operator()(const ModelSpec& model) const;

  std::size_t numeric_count() const noexcept;
  std::size_t censored_count() const noexcept;
  double llod() const noexcept { return llod_; }
  std::optional<Family> family() const noexcept { return family_; }

  struct Group {
    int pool_size;
    int gamma_flag;
    std::vector<double> values;
    int censored;
  };
  const std::vector<Group>& groups() const noexcept { return groups_; }

 private:
  double llod_;
  std::optional<Family> family_;
  std::vector<Group> groups_;
};

double log_likelihood(const ModelSpec& model, const Dataset& data);

/// Central differences on the natural parameter scale with step
/// h = max(1e-5, 1e-5 |theta|), over the parameters flagged in `free`
/// (in family order). Throws NumericalError naming the parameter whose
/// stencil leaves the support.
Eigen::VectorXd numeric_gradient(const ModelSpec& model, const Dataset& data,
                                 const ParamMask& free = {true, true, true, true});
/// Symmetric by construction (mirrored entries averaged).
Eigen::MatrixXd numeric_hessian(const ModelSpec& model, const Dataset& data,
                                const ParamMask& free = {true, true, true, true});

/// Same derivatives on an arbitrary objective, used by the estimator.
Eigen::VectorXd numeric_gradient(const CensoredLikelihood& likelihood,
                                 const ModelSpec& model, const ParamMask& free);
Eigen::MatrixXd numeric_hessian(const CensoredLikelihood& likelihood,
                                const ModelSpec& model, const ParamMask& free);

/// Pairwise (cascade) summation; the reduction tree depends only on size.
double pairwise_sum(std::span<const double> terms);

}  // namespace hybridpool
