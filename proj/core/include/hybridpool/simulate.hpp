#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridpool/design.hpp"
#include "hybridpool/estimate.hpp"
#include "hybridpool/fisher.hpp"
#include "hybridpool/likelihood.hpp"
#include "hybridpool/model.hpp"

namespace hybridpool {

/// Seed for replication `index`: a splitmix64 mix of the base seed and the
/// index, so a replication's stream never depends on scheduling.
std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t index);

/// How the pooling error behaves across replicate measurements of one pool.
enum class PoolingErrorMode {
  kIndependent,  // fresh e^(p) per replicate
  kShared,       // one e^(p) per pool, common to its replicates
};

struct GeneratedDataset {
  Dataset data;
  /// Specimen indices (into the N draws) behind each assay, by assay id - 1.
  std::vector<std::vector<int>> membership;
  /// Error-free specimen values, length N.
  std::vector<double> specimens;
};

/// Draws N specimens, assigns them to assays in design order (individual
/// assays first, then each pooled group), averages within pools, adds the
/// errors and censors below `llod`. Deterministic in `seed`.
GeneratedDataset generate_dataset_detailed(
    const ModelSpec& model, const DesignSpec& design, double llod, std::uint64_t seed,
    PoolingErrorMode mode = PoolingErrorMode::kIndependent);
Dataset generate_dataset(const ModelSpec& model, const DesignSpec& design, double llod,
                         std::uint64_t seed,
                         PoolingErrorMode mode = PoolingErrorMode::kIndependent);

struct SimConfig {
  ModelSpec model = ModelSpec::normal(0.0, 1.0);
  DesignSpec design;
  double llod = -std::numeric_limits<double>::infinity();
  int replications = 1000;
  std::uint64_t base_seed = 1;

  void validate() const;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  /// Sample variance (n - 1 denominator) over converged fits.
  double variance = 0.0;
};

struct McResult {
  std::vector<ParameterSummary> parameters;
  int replications = 0;
  int failure_count = 0;
};

/// Fits every replication with fit_mle (free parameters from `free`, or the
/// family default; fixed ones held at the truth) and summarises the
/// converged fits. More than 20% failures raises NumericalError.
McResult monte_carlo_variance(const SimConfig& config,
                              const std::optional<ParamMask>& free = std::nullopt,
                              int threads = 1);

/// Runs monte_carlo_variance over a two-assay alpha grid, one row per alpha,
/// with n * Var and bias per free parameter.
SweepResult monte_carlo_sweep(const ModelSpec& model, int total_specimens, int total_assays,
                              double llod, const std::vector<double>& alphas,
                              int replications, std::uint64_t base_seed,
                              const std::optional<ParamMask>& free = std::nullopt,
                              int threads = 1);

/// Within-assay differences of duplicate measurements: `individual_count`
/// unpooled assays and `pooled_count` pools of size `pool_size`.
ReplicatePairSet generate_replicate_pairs(
    const ModelSpec& model, int individual_count, int pooled_count, int pool_size,
    std::uint64_t seed, PoolingErrorMode mode = PoolingErrorMode::kIndependent);

struct PoolOfPools {
  std::vector<double> values;
  /// An odd input left its last element unpaired.
  bool dropped_last = false;
};

/// Averages consecutive pairs: (v0 + v1) / 2, (v2 + v3) / 2, ...
PoolOfPools pool_of_pools(std::span<const double> values);

enum class ResampleMode {
  kWithReplacement,  // N draws with replacement
  kPermutation,      // N values without replacement (needs at least N raw values)
};

/// Resampling evaluation of two-assay designs from raw individual values.
/// Replication r draws N values with replacement using
/// replication_seed(seed, r) (the same draws for every alpha), pools them
/// per design, censors at `llod` and fits a normal model for mu_x and
/// sigma_x. Rows carry n * Var, bias against the raw sample mean and
/// standard deviation, and the failure count.
SweepResult bootstrap_design_eval(std::span<const double> raw_values, int total_specimens,
                                  int total_assays, const std::vector<double>& alphas,
                                  double llod, int replications, std::uint64_t seed,
                                  int threads = 1,
                                  ResampleMode mode = ResampleMode::kWithReplacement);

/// `count` normal draws rescaled to exactly the given sample mean and
/// standard deviation (n - 1 denominator).
std::vector<double> surrogate_normal_sample(int count, double mean, double sd,
                                            std::uint64_t seed);

}  // namespace hybridpool
