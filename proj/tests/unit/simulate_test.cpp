#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "hybridpool/error.hpp"
#include "hybridpool/simulate.hpp"

namespace hp = hybridpool;

namespace {

constexpr double kNoLimit = -std::numeric_limits<double>::infinity();

std::vector<double> group_values(const hp::Dataset& data, int group) {
  std::vector<double> out;
  for (const auto& obs : data.observations) {
    if (obs.group_index == group && obs.value) out.push_back(*obs.value);
  }
  return out;
}

}  // namespace

TEST(GenerateDataset, PooledValuesAreExactMeansWithoutErrors) {
  const auto design = hp::two_assay_design(1000, 100, 0.5);
  const auto gen = hp::generate_dataset_detailed(hp::ModelSpec::normal(3, 2), design, kNoLimit, 4);
  ASSERT_EQ(gen.data.observations.size(), 100u);
  for (std::size_t a = 0; a < gen.membership.size(); ++a) {
    double sum = 0.0;
    for (int idx : gen.membership[a]) sum += gen.specimens[static_cast<std::size_t>(idx)];
    EXPECT_EQ(*gen.data.observations[a].value,
              sum / static_cast<double>(gen.membership[a].size()));
  }
}

TEST(GenerateDataset, SpecimensAreDisjointAcrossAssays) {
  const auto design = hp::three_assay_design(1000, 100, 0.3, 0.4, 5);
  const auto gen =
      hp::generate_dataset_detailed(hp::ModelSpec::normal(0, 1, 0.3, 0.4), design, 0.0, 6);
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& members : gen.membership) {
    seen.insert(members.begin(), members.end());
    total += members.size();
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(static_cast<int>(total), design.specimens_used());
}

TEST(GenerateDataset, PooledVarianceFollowsPoolSize) {
  const hp::DesignSpec design{1000000, 100000, {{10, 1, 100000, 1}}, {}};
  const auto data = hp::generate_dataset(hp::ModelSpec::normal(0, 1), design, kNoLimit, 10);
  const auto values = group_values(data, 0);
  const double var = hp::sample_variance(values);
  EXPECT_NEAR(var, 0.1, 3 * 0.1 * std::sqrt(2.0 / values.size()));
}

TEST(GenerateDataset, GammaCensoredFractionOfIndividuals) {
  const hp::DesignSpec design{100000, 100000, {{1, 0, 100000, 1}}, {}};
  const auto data = hp::generate_dataset(hp::ModelSpec::gamma(1.5, 0.1), design, 0.15, 12);
  const double fraction = static_cast<double>(data.censored_count()) / 100000;
  EXPECT_NEAR(fraction, 0.61, 0.01);
}

TEST(GenerateDataset, CensoringIsConsistent) {
  const auto design = hp::two_assay_design(1000, 100, 0.4);
  const auto data = hp::generate_dataset(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), design, 0.1, 1);
  std::size_t numeric = 0;
  for (const auto& obs : data.observations) {
    if (obs.value) {
      EXPECT_GE(*obs.value, 0.1);
      ++numeric;
    }
  }
  EXPECT_EQ(numeric + data.censored_count(), data.observations.size());
  EXPECT_NO_THROW(data.validate());
}

TEST(GenerateDataset, DeterministicInSeed) {
  const auto design = hp::two_assay_design(1000, 100, 0.4);
  const auto model = hp::ModelSpec::normal(0, 1, 0.3, 0.4);
  const auto a = hp::generate_dataset(model, design, 0.0, 77);
  const auto b = hp::generate_dataset(model, design, 0.0, 77);
  const auto c = hp::generate_dataset(model, design, 0.0, 78);
  ASSERT_EQ(a.observations.size(), b.observations.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.observations.size(); ++i) {
    EXPECT_EQ(a.observations[i].value, b.observations[i].value);
    differs |= a.observations[i].value != c.observations[i].value;
  }
  EXPECT_TRUE(differs);
}

TEST(ReplicationSeed, DistinctStreams) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t base : {0ULL, 1ULL, 2ULL}) {
    for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(hp::replication_seed(base, i));
  }
  EXPECT_EQ(seeds.size(), 3000u);
  EXPECT_EQ(hp::replication_seed(5, 9), hp::replication_seed(5, 9));
}

TEST(MonteCarlo, NoErrorVarianceOfMeanIsSigmaSquaredOverN) {
  hp::SimConfig config;
  config.model = hp::ModelSpec::normal(0, 2);
  config.design = hp::two_assay_design(1000, 100, 0.5);
  config.llod = kNoLimit;
  config.replications = 1000;
  const auto mc = hp::monte_carlo_variance(config);
  EXPECT_EQ(mc.failure_count, 0);
  EXPECT_NEAR(mc.parameters[0].variance / (4.0 / 1000), 1.0, 0.15);
}

TEST(MonteCarlo, BitIdenticalAcrossThreadCounts) {
  hp::SimConfig config;
  config.model = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  config.design = hp::two_assay_design(1000, 100, 0.6);
  config.llod = 0.05;
  config.replications = 24;
  config.base_seed = 99;
  const auto one = hp::monte_carlo_variance(config, std::nullopt, 1);
  const auto four = hp::monte_carlo_variance(config, std::nullopt, 4);
  ASSERT_EQ(one.parameters.size(), four.parameters.size());
  for (std::size_t i = 0; i < one.parameters.size(); ++i) {
    EXPECT_EQ(one.parameters[i].mean, four.parameters[i].mean);
    EXPECT_EQ(one.parameters[i].variance, four.parameters[i].variance);
  }
  EXPECT_EQ(one.failure_count, four.failure_count);
}

TEST(MonteCarlo, TooManyFailuresIsAnError) {
  hp::SimConfig config;
  config.model = hp::ModelSpec::normal(0, 1);
  config.design = hp::two_assay_design(1000, 100, 0.99);
  config.llod = 4.0;
  config.replications = 20;
  EXPECT_THROW(hp::monte_carlo_variance(config), hp::NumericalError);
}

TEST(MonteCarlo, GammaVarianceFallsTowardsOnePool) {
  const auto sweep = hp::monte_carlo_sweep(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 1000, 100,
                                           0.02, {0.0, 0.99}, 200, 5);
  ASSERT_EQ(sweep.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(std::isfinite(sweep.rows[1].scaled_variances[i].second));
    EXPECT_LT(sweep.rows[1].scaled_variances[i].second, sweep.rows[0].scaled_variances[i].second);
  }
}

TEST(ReplicatePairs, NoMeasurementErrorGivesZeroDiffs) {
  const auto pairs = hp::generate_replicate_pairs(hp::ModelSpec::gamma(1.5, 0.1), 50, 0, 2, 1);
  for (double d : pairs.individual_diffs) EXPECT_EQ(d, 0.0);
}

TEST(ReplicatePairs, DifferenceVariances) {
  const auto model = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  const auto pairs = hp::generate_replicate_pairs(model, 100000, 100000, 2, 3);
  const double n = 100000;
  EXPECT_NEAR(hp::sample_variance(pairs.individual_diffs), 0.0016, 3 * 0.0016 * std::sqrt(5.0 / n));
  EXPECT_NEAR(hp::sample_variance(pairs.pooled_diffs), 0.0052, 3 * 0.0052 * std::sqrt(5.0 / n));
  const auto shared =
      hp::generate_replicate_pairs(model, 0, 100000, 2, 3, hp::PoolingErrorMode::kShared);
  EXPECT_NEAR(hp::sample_variance(shared.pooled_diffs), 0.0016, 3 * 0.0016 * std::sqrt(5.0 / n));
}

TEST(PoolOfPools, AveragesConsecutivePairs) {
  const std::vector<double> two{1.0, 3.0};
  EXPECT_EQ(hp::pool_of_pools(two).values, std::vector<double>{2.0});
  const std::vector<double> four{1.0, 2.0, 4.0, 9.0};
  const auto once = hp::pool_of_pools(four);
  const auto twice = hp::pool_of_pools(once.values);
  ASSERT_EQ(twice.values.size(), 1u);
  EXPECT_DOUBLE_EQ(twice.values[0], 4.0);
  const std::vector<double> odd{1.0, 2.0, 3.0};
  const auto dropped = hp::pool_of_pools(odd);
  EXPECT_TRUE(dropped.dropped_last);
  EXPECT_EQ(dropped.values.size(), 1u);
}

TEST(PoolOfPools, ErrorVarianceHalves) {
  // A nearly constant biomarker isolates the error terms.
  const auto model = hp::ModelSpec::normal(0, 1e-9, 0.3, 0.4);
  const hp::DesignSpec design{400000, 200000, {{2, 1, 200000, 1}}, {}};
  const auto values = group_values(hp::generate_dataset(model, design, kNoLimit, 15), 0);
  const auto composite = hp::pool_of_pools(values);
  const double expected = 0.5 * (0.16 + 0.09);
  EXPECT_NEAR(hp::sample_variance(composite.values), expected,
              3 * expected * std::sqrt(2.0 / composite.values.size()));
}

TEST(Bootstrap, FlatWithoutCensoringAndThreadIndependent) {
  const auto raw = hp::surrogate_normal_sample(40, 205.53, 42.29, 1);
  const std::vector<double> alphas{0.0, 0.5, 0.75, 0.95};
  const auto one = hp::bootstrap_design_eval(raw, 40, 20, alphas, 0.0, 300, 8, 1);
  const auto three = hp::bootstrap_design_eval(raw, 40, 20, alphas, 0.0, 300, 8, 3);
  const double first = one.rows[0].scaled_variances[0].second;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    EXPECT_NEAR(one.rows[i].scaled_variances[0].second, first, 1e-6 * first);
    EXPECT_EQ(one.rows[i].scaled_variances[0].second, three.rows[i].scaled_variances[0].second);
    EXPECT_EQ(one.rows[i].failures, 0);
  }
}

TEST(Bootstrap, PermutationNeedsEnoughRawValues) {
  const std::vector<double> raw{1.0, 2.0, 3.0};
  EXPECT_THROW(hp::bootstrap_design_eval(raw, 40, 20, {0.5}, 0.0, 10, 1, 1,
                                         hp::ResampleMode::kPermutation),
               hp::ConfigError);
  EXPECT_THROW(hp::bootstrap_design_eval(raw, 40, 20, {}, 0.0, 10, 1), hp::ConfigError);
}

TEST(Surrogate, ExactSummaryStatistics) {
  const auto v = hp::surrogate_normal_sample(40, 205.53, 42.29, 3);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 40;
  EXPECT_NEAR(mean, 205.53, 1e-10);
  EXPECT_NEAR(std::sqrt(hp::sample_variance(v)), 42.29, 1e-10);
}
