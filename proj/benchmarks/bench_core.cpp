#include <benchmark/benchmark.h>

#include "hybridpool/design.hpp"
#include "hybridpool/estimate.hpp"
#include "hybridpool/fisher.hpp"
#include "hybridpool/likelihood.hpp"
#include "hybridpool/model.hpp"
#include "hybridpool/simulate.hpp"

namespace hp = hybridpool;

namespace {

void BM_GammaObservedPdf(benchmark::State& state) {
  const auto spec = hp::ObservedComponentSpec::make(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03),
                                                    static_cast<int>(state.range(0)));
  double z = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hp::observed_pdf(spec, 0.05 + z));
    z = z > 0.2 ? 0.0 : z + 1e-3;
  }
}
BENCHMARK(BM_GammaObservedPdf)->Arg(1)->Arg(10);

void BM_GammaObservedPdfQuadrature(benchmark::State& state) {
  const auto spec =
      hp::ObservedComponentSpec::make(hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hp::observed_pdf(spec, 0.12, hp::ConvolutionMethod::kQuadrature));
  }
}
BENCHMARK(BM_GammaObservedPdfQuadrature);

void BM_CensoredLogLikelihood(benchmark::State& state) {
  const auto family = state.range(0) == 0 ? hp::ModelSpec::normal(0, 1, 0.3, 0.4)
                                          : hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  const double llod = state.range(0) == 0 ? 0.0 : 0.05;
  const auto data =
      hp::generate_dataset(family, hp::two_assay_design(1000, 100, 0.5), llod, 1);
  const hp::CensoredLikelihood likelihood(data);
  for (auto _ : state) benchmark::DoNotOptimize(likelihood(family));
}
BENCHMARK(BM_CensoredLogLikelihood)->Arg(0)->Arg(1);

void BM_GammaFit(benchmark::State& state) {
  const auto model = hp::ModelSpec::gamma(1.5, 0.1, 0.02, 0.03);
  const auto data = hp::generate_dataset(model, hp::two_assay_design(1000, 100, 0.5), 0.05, 1);
  hp::FitOptions options;
  options.init = model;
  options.compute_covariance = false;
  for (auto _ : state) benchmark::DoNotOptimize(hp::fit_mle(hp::Family::kGamma, data, options));
}
BENCHMARK(BM_GammaFit)->Unit(benchmark::kMillisecond);

void BM_ExpectedInformation(benchmark::State& state) {
  const auto model = hp::ModelSpec::normal(0, 1, 0.3, 0.4);
  const auto design = hp::three_assay_design(1000, 100, 0.3, 0.4, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hp::expected_information(model, design, 0.0, hp::ParamMask{true, true, true, true}));
  }
}
BENCHMARK(BM_ExpectedInformation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
