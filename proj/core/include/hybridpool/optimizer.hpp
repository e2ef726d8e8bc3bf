#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hybridpool {

struct NelderMeadOptions {
  int max_evaluations = 4000;
  /// Stop when the simplex values span at most this much ...
  double value_tolerance = 1e-11;
  /// ... and every vertex lies within this distance of the best, per axis.
  double point_tolerance = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> point;
  double value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

/// Downhill simplex minimisation (reflection 1, expansion 2, contraction
/// 1/2, shrink 1/2). Non-finite objective values are treated as +inf, so the
/// objective may signal infeasible points that way. `steps` sets the initial
/// simplex edge along each axis.
NelderMeadResult nelder_mead_minimize(
    const std::function<double(std::span<const double>)>& objective,
    std::span<const double> start, std::span<const double> steps,
    const NelderMeadOptions& options = {});

}  // namespace hybridpool
