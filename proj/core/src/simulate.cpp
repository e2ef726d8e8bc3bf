#include "hybridpool/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "hybridpool/error.hpp"
#include "hybridpool/parallel.hpp"

namespace hybridpool {
namespace {

constexpr double kMaxFailureFraction = 0.2;

using Engine = std::mt19937_64;

// Draws the additive errors of one family. Zero scales draw nothing, so a
// model without errors consumes no extra randomness.
class ErrorSampler {
 public:
  explicit ErrorSampler(const ModelSpec& model) : family_(model.family()) {
    const auto v = model.params();
    measurement_ = v[2];
    pooling_ = v[3];
  }

  double measurement(Engine& rng) const { return draw(measurement_, rng); }
  double pooling(Engine& rng) const { return draw(pooling_, rng); }

 private:
  double draw(double scale, Engine& rng) const {
    if (scale <= 0.0) return 0.0;
    if (family_ == Family::kNormal) return std::normal_distribution<double>(0.0, scale)(rng);
    const double magnitude = std::exponential_distribution<double>(1.0)(rng);
    return (rng() & 1U) ? scale * magnitude : -scale * magnitude;
  }

  Family family_;
  double measurement_;
  double pooling_;
};

double draw_specimen(const ModelSpec& model, Engine& rng) {
  if (model.family() == Family::kNormal) {
    const auto& p = model.as_normal();
    return std::normal_distribution<double>(p.mu_x, p.sigma_x)(rng);
  }
  const auto& p = model.as_gamma();
  return std::gamma_distribution<double>(p.a, p.b)(rng);
}

std::optional<double> censor(double value, double llod) {
  if (value < llod) return std::nullopt;
  return value;
}

// Builds the observations of a design from specimen values already drawn.
GeneratedDataset assemble(const ModelSpec& model, const DesignSpec& design, double llod,
                          std::vector<double> specimens, Engine& rng,
                          PoolingErrorMode mode) {
  const ErrorSampler errors(model);
  GeneratedDataset out;
  out.data.llod = llod;
  out.data.design = design;
  out.data.family = model.family();
  out.membership.reserve(static_cast<std::size_t>(design.total_assays));

  int next = 0;
  int assay_id = 0;
  for (std::size_t g = 0; g < design.groups.size(); ++g) {
    const GroupSpec& group = design.groups[g];
    for (int k = 0; k < group.assay_count; ++k) {
      ++assay_id;
      std::vector<int> members(static_cast<std::size_t>(group.pool_size));
      std::iota(members.begin(), members.end(), next);
      double sum = 0.0;
      for (int idx : members) sum += specimens[static_cast<std::size_t>(idx)];
      next += group.pool_size;
      const double pooled = sum / group.pool_size;

      const double shared_pooling =
          (group.gamma_flag && mode == PoolingErrorMode::kShared) ? errors.pooling(rng) : 0.0;
      for (int r = 1; r <= group.replicates; ++r) {
        double value = pooled;
        if (group.gamma_flag) {
          value += mode == PoolingErrorMode::kShared ? shared_pooling : errors.pooling(rng);
        }
        value += errors.measurement(rng);
        out.data.observations.push_back(
            {assay_id, static_cast<int>(g), r, censor(value, llod)});
      }
      out.membership.push_back(std::move(members));
    }
  }
  out.specimens = std::move(specimens);
  return out;
}

std::vector<ParameterSummary> summarise(const std::vector<std::optional<ParamVector>>& fits,
                                        const ModelSpec& truth, const ParamMask& free) {
  std::vector<ParameterSummary> out;
  const auto names = parameter_names(truth.family());
  const auto true_values = truth.params();
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!free[i]) continue;
    std::vector<double> values;
    for (const auto& f : fits) {
      if (f) values.push_back((*f)[i]);
    }
    ParameterSummary s;
    s.name = std::string(names[i]);
    s.truth = true_values[i];
    if (!values.empty()) {
      s.mean = pairwise_sum(values) / static_cast<double>(values.size());
      s.bias = s.mean - s.truth;
      s.variance = values.size() > 1 ? sample_variance(values) : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

void check_failures(int failures, int replications, const std::string& context) {
  if (failures > kMaxFailureFraction * replications) {
    std::ostringstream os;
    os << failures << " of " << replications << " fits failed (" << context
       << "); more than 20% failures makes the variance estimate unreliable";
    throw NumericalError(os.str());
  }
}

SweepRow row_from_summary(double alpha, DesignSpec design, const McResult& mc,
                          int total_assays) {
  SweepRow row;
  row.alpha = alpha;
  row.design = std::move(design);
  row.failures = mc.failure_count;
  for (const auto& p : mc.parameters) {
    row.scaled_variances.emplace_back(p.name, total_assays * p.variance);
    row.bias.emplace_back(p.name, p.bias);
  }
  return row;
}

}  // namespace

std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(base_seed) ^ index);
}

GeneratedDataset generate_dataset_detailed(const ModelSpec& model, const DesignSpec& design,
                                           double llod, std::uint64_t seed,
                                           PoolingErrorMode mode) {
  design.validate();
  if (std::isnan(llod)) throw ConfigError("llod is NaN");
  Engine rng(seed);
  std::vector<double> specimens(static_cast<std::size_t>(design.total_specimens));
  for (double& x : specimens) x = draw_specimen(model, rng);
  return assemble(model, design, llod, std::move(specimens), rng, mode);
}

Dataset generate_dataset(const ModelSpec& model, const DesignSpec& design, double llod,
                         std::uint64_t seed, PoolingErrorMode mode) {
  return generate_dataset_detailed(model, design, llod, seed, mode).data;
}

void SimConfig::validate() const {
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (std::isnan(llod)) throw ConfigError("llod is NaN");
  design.validate();
}

McResult monte_carlo_variance(const SimConfig& config, const std::optional<ParamMask>& free,
                              int threads) {
  config.validate();
  const Family family = config.model.family();
  const ParamMask mask = free.value_or(default_free_mask(family));
  const auto count = static_cast<std::size_t>(config.replications);
  std::vector<std::optional<ParamVector>> fits(count);

  parallel_for(count, threads, [&](std::size_t i) {
    const std::uint64_t seed = replication_seed(config.base_seed, i);
    const Dataset data = generate_dataset(config.model, config.design, config.llod, seed);
    try {
      const CensoredLikelihood likelihood(data);
      FitOptions options;
      options.init = moment_initial_values(family, likelihood, config.model, mask);
      options.free = mask;
      options.compute_covariance = false;
      const FitResult fit = fit_mle(family, likelihood, options);
      if (fit.converged) fits[i] = fit.estimates.params();
    } catch (const std::exception&) {
      // Counted as a failure below.
    }
  });

  McResult result;
  result.replications = config.replications;
  result.failure_count = static_cast<int>(
      std::count_if(fits.begin(), fits.end(), [](const auto& f) { return !f.has_value(); }));
  std::ostringstream context;
  context << "alpha " << config.design.alpha() << ", llod " << config.llod;
  check_failures(result.failure_count, config.replications, context.str());
  result.parameters = summarise(fits, config.model, mask);
  return result;
}

SweepResult monte_carlo_sweep(const ModelSpec& model, int total_specimens, int total_assays,
                              double llod, const std::vector<double>& alphas,
                              int replications, std::uint64_t base_seed,
                              const std::optional<ParamMask>& free, int threads) {
  if (alphas.empty()) throw ConfigError("alpha grid is empty");
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("alpha grid contains duplicates");
  }
  const ParamMask mask = free.value_or(default_free_mask(model.family()));

  SweepResult result;
  result.llod = llod;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (mask[i]) result.parameters.emplace_back(parameter_names(model.family())[i]);
  }
  for (double alpha : sorted) {
    SimConfig config;
    config.model = model;
    config.design = two_assay_design(total_specimens, total_assays, alpha);
    config.llod = llod;
    config.replications = replications;
    config.base_seed = base_seed;
    const McResult mc = monte_carlo_variance(config, mask, threads);
    result.rows.push_back(row_from_summary(alpha, config.design, mc, total_assays));
  }
  return result;
}

ReplicatePairSet generate_replicate_pairs(const ModelSpec& model, int individual_count,
                                          int pooled_count, int pool_size,
                                          std::uint64_t seed, PoolingErrorMode mode) {
  if (individual_count < 0 || pooled_count < 0) {
    throw ConfigError("replicate pair counts must be non-negative");
  }
  if (pooled_count > 0 && pool_size < 2) throw ConfigError("pool size must be at least 2");
  Engine rng(seed);
  const ErrorSampler errors(model);
  ReplicatePairSet out;
  out.individual_diffs.reserve(static_cast<std::size_t>(individual_count));
  out.pooled_diffs.reserve(static_cast<std::size_t>(pooled_count));
  // The specimen value is common to both measurements and cancels.
  for (int i = 0; i < individual_count; ++i) {
    const double first = errors.measurement(rng);
    const double second = errors.measurement(rng);
    out.individual_diffs.push_back(first - second);
  }
  for (int i = 0; i < pooled_count; ++i) {
    double first = errors.measurement(rng);
    double second = errors.measurement(rng);
    if (mode == PoolingErrorMode::kIndependent) {
      first += errors.pooling(rng);
      second += errors.pooling(rng);
    }
    out.pooled_diffs.push_back(first - second);
  }
  return out;
}

PoolOfPools pool_of_pools(std::span<const double> values) {
  PoolOfPools out;
  out.dropped_last = values.size() % 2 == 1;
  out.values.reserve(values.size() / 2);
  for (std::size_t i = 0; i + 1 < values.size(); i += 2) {
    out.values.push_back(0.5 * (values[i] + values[i + 1]));
  }
  return out;
}

SweepResult bootstrap_design_eval(std::span<const double> raw_values, int total_specimens,
                                  int total_assays, const std::vector<double>& alphas,
                                  double llod, int replications, std::uint64_t seed,
                                  int threads, ResampleMode mode) {
  if (raw_values.empty()) throw ConfigError("no raw values to resample");
  if (mode == ResampleMode::kPermutation &&
      raw_values.size() < static_cast<std::size_t>(total_specimens)) {
    throw ConfigError("permutation resampling needs at least N raw values");
  }
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (alphas.empty()) throw ConfigError("alpha grid is empty");
  if (std::isnan(llod)) throw ConfigError("llod is NaN");
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("alpha grid contains duplicates");
  }
  std::vector<DesignSpec> designs;
  for (double alpha : sorted) {
    designs.push_back(two_assay_design(total_specimens, total_assays, alpha));
  }

  const double raw_mean =
      pairwise_sum(raw_values) / static_cast<double>(raw_values.size());
  const double raw_sd = raw_values.size() > 1 ? std::sqrt(sample_variance(raw_values)) : 0.0;
  if (!(raw_sd > 0.0)) throw ConfigError("raw values have no spread");
  // Error-free reference: the bootstrap pools exact values.
  const ModelSpec reference = ModelSpec::normal(raw_mean, raw_sd);
  const ParamMask mask = default_free_mask(Family::kNormal);

  const auto reps = static_cast<std::size_t>(replications);
  std::vector<std::optional<ParamVector>> fits(designs.size() * reps);
  parallel_for(fits.size(), threads, [&](std::size_t job) {
    const std::size_t d = job / reps;
    const std::size_t r = job % reps;
    Engine rng(replication_seed(seed, r));
    std::vector<double> specimens(static_cast<std::size_t>(total_specimens));
    if (mode == ResampleMode::kWithReplacement) {
      std::uniform_int_distribution<std::size_t> pick(0, raw_values.size() - 1);
      for (double& x : specimens) x = raw_values[pick(rng)];
    } else {
      std::vector<double> shuffled(raw_values.begin(), raw_values.end());
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::copy_n(shuffled.begin(), specimens.size(), specimens.begin());
    }
    const Dataset data =
        assemble(reference, designs[d], llod, std::move(specimens), rng,
                 PoolingErrorMode::kIndependent)
            .data;
    try {
      FitOptions options;
      options.free = mask;
      options.compute_covariance = false;
      const FitResult fit = fit_mle(Family::kNormal, data, options);
      if (fit.converged) fits[job] = fit.estimates.params();
    } catch (const std::exception&) {
    }
  });

  SweepResult result;
  result.llod = llod;
  result.parameters = {"mu_x", "sigma_x"};
  for (std::size_t d = 0; d < designs.size(); ++d) {
    const std::vector<std::optional<ParamVector>> slice(
        fits.begin() + static_cast<std::ptrdiff_t>(d * reps),
        fits.begin() + static_cast<std::ptrdiff_t>((d + 1) * reps));
    McResult mc;
    mc.replications = replications;
    mc.failure_count = static_cast<int>(
        std::count_if(slice.begin(), slice.end(), [](const auto& f) { return !f.has_value(); }));
    if (mc.failure_count == replications) {
      std::ostringstream os;
      os << "every bootstrap fit failed at alpha " << sorted[d] << ", llod " << llod;
      throw NumericalError(os.str());
    }
    mc.parameters = summarise(slice, reference, mask);
    result.rows.push_back(row_from_summary(sorted[d], designs[d], mc, total_assays));
  }
  return result;
}

std::vector<double> surrogate_normal_sample(int count, double mean, double sd,
                                            std::uint64_t seed) {
  if (count < 2) throw ConfigError("surrogate sample needs at least 2 values");
  if (!(sd > 0.0)) throw ConfigError("surrogate standard deviation must be positive");
  Engine rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(static_cast<std::size_t>(count));
  for (double& v : values) v = normal(rng);
  const double m = pairwise_sum(values) / count;
  const double s = std::sqrt(sample_variance(values));
  for (double& v : values) v = mean + sd * (v - m) / s;
  return values;
}

}  // namespace hybridpool
