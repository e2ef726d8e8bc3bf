#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hybridpool::detail {

/// Writes the integrand vector at x into the output span.
using VectorIntegrand = std::function<void(double x, std::span<double> out)>;

/// Adaptive Gauss-Kronrod (7/15) for vector-valued integrands. An interval is
/// accepted when the Kronrod/Gauss difference is within
/// max(rel_tol * |K|_inf, abs_tol) in every component, or at max_depth.
std::vector<double> integrate_vector(const VectorIntegrand& f, double a, double b,
                                     std::size_t dim, double rel_tol, double abs_tol,
                                     int max_depth = 30);

}  // namespace hybridpool::detail
