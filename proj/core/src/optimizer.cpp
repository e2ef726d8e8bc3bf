#include "hybridpool/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hybridpool/error.hpp"

namespace hybridpool {

NelderMeadResult nelder_mead_minimize(
    const std::function<double(std::span<const double>)>& objective,
    std::span<const double> start, std::span<const double> steps,
    const NelderMeadOptions& options) {
  const std::size_t dim = start.size();
  if (steps.size() != dim) throw ConfigError("simplex steps must match start size");

  NelderMeadResult result;
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(dim + 1,
                                           std::vector<double>(start.begin(), start.end()));
  for (std::size_t i = 0; i < dim; ++i) simplex[i + 1][i] += steps[i];
  std::vector<double> values(dim + 1);
  for (std::size_t i = 0; i <= dim; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim);
  std::vector<double> trial(dim);
  std::vector<double> trial2(dim);

  auto point_along = [&](double t, std::vector<double>& out) {
    // centroid + t (centroid - worst)
    const auto& worst = simplex[order[dim]];
    for (std::size_t j = 0; j < dim; ++j) {
      out[j] = centroid[j] + t * (centroid[j] - worst[j]);
    }
  };

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order[0];
    const std::size_t worst = order[dim];
    const std::size_t second_worst = order[dim > 0 ? dim - 1 : 0];

    double spread = 0.0;
    for (std::size_t i = 0; i <= dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        spread = std::max(spread, std::abs(simplex[i][j] - simplex[best][j]));
      }
    }
    if (std::isfinite(values[worst]) &&
        values[worst] - values[best] <= options.value_tolerance &&
        spread <= options.point_tolerance) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= options.max_evaluations) break;
    ++result.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& v = simplex[order[k]];
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += v[j] / dim;
    }

    point_along(1.0, trial);
    const double reflected = eval(trial);
    if (reflected < values[best]) {
      point_along(2.0, trial2);
      const double expanded = eval(trial2);
      if (expanded < reflected) {
        simplex[worst] = trial2;
        values[worst] = expanded;
      } else {
        simplex[worst] = trial;
        values[worst] = reflected;
      }
      continue;
    }
    if (reflected < values[second_worst]) {
      simplex[worst] = trial;
      values[worst] = reflected;
      continue;
    }
    // Outside contraction when the reflection beat the worst, inside otherwise.
    const bool outside = reflected < values[worst];
    point_along(outside ? 0.5 : -0.5, trial2);
    const double contracted = eval(trial2);
    if (contracted < (outside ? reflected : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = contracted;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      }
      values[i] = eval(simplex[i]);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  const auto best_index = static_cast<std::size_t>(best_it - values.begin());
  result.point = simplex[best_index];
  result.value = values[best_index];
  return result;
}

}  // namespace hybridpool
