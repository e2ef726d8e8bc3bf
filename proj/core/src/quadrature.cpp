#include "quadrature.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hybridpool::detail {
namespace {

using Kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
using Gauss = boost::math::quadrature::gauss<double, 7>;

struct Workspace {
  const VectorIntegrand& f;
  std::size_t dim;
  double rel_tol;
  double abs_tol;
  std::vector<double> value;
};

void accumulate(Workspace& ws, double a, double b, int depth,
                std::vector<double>& result) {
  const auto& nodes = Kronrod::abscissa();
  const auto& kweights = Kronrod::weights();
  const auto& gweights = Gauss::weights();
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);

  std::vector<double> kron(ws.dim, 0.0);
  std::vector<double> gauss(ws.dim, 0.0);
  // Kronrod abscissae run from the centre outward; the even-indexed ones are
  // the 7-point Gauss nodes, so each integrand value serves both rules.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int sides = nodes[i] == 0.0 ? 1 : 2;
    for (int side = 0; side < sides; ++side) {
      const double x = center + (side == 0 ? 1.0 : -1.0) * half * nodes[i];
      ws.f(x, ws.value);
      for (std::size_t j = 0; j < ws.dim; ++j) {
        kron[j] += kweights[i] * ws.value[j];
        if (i % 2 == 0) gauss[j] += gweights[i / 2] * ws.value[j];
      }
    }
  }

  double scale = 0.0;
  double error = 0.0;
  for (std::size_t j = 0; j < ws.dim; ++j) {
    kron[j] *= half;
    gauss[j] *= half;
    scale = std::max(scale, std::abs(kron[j]));
    error = std::max(error, std::abs(kron[j] - gauss[j]));
  }
  if (depth <= 0 || error <= std::max(ws.rel_tol * scale, ws.abs_tol)) {
    for (std::size_t j = 0; j < ws.dim; ++j) result[j] += kron[j];
    return;
  }
  accumulate(ws, a, center, depth - 1, result);
  accumulate(ws, center, b, depth - 1, result);
}

}  // namespace

std::vector<double> integrate_vector(const VectorIntegrand& f, double a, double b,
                                     std::size_t dim, double rel_tol, double abs_tol,
                                     int max_depth) {
  std::vector<double> result(dim, 0.0);
  if (!(b > a)) return result;
  Workspace ws{f, dim, rel_tol, abs_tol, std::vector<double>(dim)};
  accumulate(ws, a, b, max_depth, result);
  return result;
}

}  // namespace hybridpool::detail
