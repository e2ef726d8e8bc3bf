#include "hybridpool/likelihood.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hybridpool/error.hpp"

namespace hybridpool {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double step_for(double theta) { return std::max(1e-5, 1e-5 * std::abs(theta)); }

std::vector<std::size_t> free_indices(const ParamMask& free) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < free.size(); ++i) {
    if (free[i]) idx.push_back(i);
  }
  return idx;
}

// Objective at a perturbed parameter vector; a perturbation that leaves the
// parameter space or the support is reported against the parameter moved.
double evaluate(const CensoredLikelihood& likelihood, const ModelSpec& model,
                const ParamVector& values, std::size_t moved) {
  double value = kNegInf;
  try {
    value = likelihood(model.with_params(values));
  } catch (const ConfigError&) {
    value = std::numeric_limits<double>::quiet_NaN();
  }
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "log-likelihood not finite in the finite-difference stencil of "
       << parameter_names(model.family())[moved] << " (value "
       << values[moved] << ")";
    throw NumericalError(os.str());
  }
  return value;
}

}  // namespace

double pairwise_sum(std::span<const double> terms) {
  if (terms.size() <= 8) {
    double sum = 0.0;
    for (double t : terms) sum += t;
    return sum;
  }
  const std::size_t half = terms.size() / 2;
  return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

void Dataset::validate() const {
  design.validate();
  if (std::isnan(llod)) throw ConfigError("llod is NaN");
  std::vector<long> seen(design.groups.size(), 0);
  for (const auto& obs : observations) {
    if (obs.group_index < 0 ||
        obs.group_index >= static_cast<int>(design.groups.size())) {
      throw ConfigError("assay " + std::to_string(obs.assay_id) +
                        " references unknown group " + std::to_string(obs.group_index));
    }
    const auto& group = design.groups[obs.group_index];
    if (obs.replicate_index < 1 || obs.replicate_index > group.replicates) {
      throw ConfigError("assay " + std::to_string(obs.assay_id) + " has replicate " +
                        std::to_string(obs.replicate_index) + " but group allows " +
                        std::to_string(group.replicates));
    }
    if (obs.value) {
      if (!std::isfinite(*obs.value)) {
        throw ConfigError("assay " + std::to_string(obs.assay_id) +
                          " has a non-finite value");
      }
      if (*obs.value < llod) {
        std::ostringstream os;
        os << "assay " << obs.assay_id << " value " << *obs.value
           << " is below the LLOD " << llod << " but not censored";
        throw ConfigError(os.str());
      }
    }
    ++seen[obs.group_index];
  }
  for (std::size_t g = 0; g < design.groups.size(); ++g) {
    const long expected = static_cast<long>(design.groups[g].assay_count) *
                          design.groups[g].replicates;
    if (seen[g] != expected) {
      throw ConfigError("group " + std::to_string(g) + " has " +
                        std::to_string(seen[g]) + " observations, expected " +
                        std::to_string(expected));
    }
  }
}

std::size_t Dataset::censored_count() const noexcept {
  std::size_t count = 0;
  for (const auto& obs : observations) count += obs.censored() ? 1 : 0;
  return count;
}

CensoredLikelihood::CensoredLikelihood(const Dataset& data)
    : llod_(data.llod), family_(data.family) {
  for (const auto& g : data.design.groups) {
    groups_.push_back(Group{g.pool_size, g.gamma_flag, {}, 0});
  }
  for (const auto& obs : data.observations) {
    if (obs.group_index < 0 || obs.group_index >= static_cast<int>(groups_.size())) {
      throw ConfigError("observation references unknown group " +
                        std::to_string(obs.group_index));
    }
    if (obs.replicate_index != 1) continue;
    auto& group = groups_[obs.group_index];
    if (obs.value) {
      group.values.push_back(*obs.value);
    } else {
      ++group.censored;
    }
  }
  if (numeric_count() + censored_count() == 0) {
    throw ConfigError("dataset has no observations");
  }
}

std::size_t CensoredLikelihood::numeric_count() const noexcept {
  std::size_t count = 0;
  for (const auto& g : groups_) count += g.values.size();
  return count;
}

std::size_t CensoredLikelihood::censored_count() const noexcept {
  std::size_t count = 0;
  for (const auto& g : groups_) count += static_cast<std::size_t>(g.censored);
  return count;
}

double CensoredLikelihood::operator()(const ModelSpec& model) const {
  if (family_ && *family_ != model.family()) {
    throw ConfigError("model family " + std::string(to_string(model.family())) +
                      " does not match dataset family " +
                      std::string(to_string(*family_)));
  }
  std::vector<double> terms;
  terms.reserve(numeric_count() + groups_.size());
  for (const auto& g : groups_) {
    if (g.values.empty() && g.censored == 0) continue;
    const ObservedComponentSpec spec{model, g.pool_size, g.gamma_flag};
    for (double z : g.values) terms.push_back(observed_log_pdf(spec, z));
    if (g.censored > 0) terms.push_back(g.censored * observed_log_cdf(spec, llod_));
  }
  for (double t : terms) {
    if (std::isnan(t) || t == kNegInf) return kNegInf;
  }
  return pairwise_sum(terms);
}

double log_likelihood(const ModelSpec& model, const Dataset& data) {
  return CensoredLikelihood(data)(model);
}

Eigen::VectorXd numeric_gradient(const CensoredLikelihood& likelihood,
                                 const ModelSpec& model, const ParamMask& free) {
  const auto idx = free_indices(free);
  const ParamVector base = model.params();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const std::size_t i = idx[a];
    const double h = step_for(base[i]);
    ParamVector up = base;
    ParamVector down = base;
    up[i] += h;
    down[i] -= h;
    grad[static_cast<Eigen::Index>(a)] =
        (evaluate(likelihood, model, up, i) - evaluate(likelihood, model, down, i)) /
        (2.0 * h);
  }
  return grad;
}

Eigen::MatrixXd numeric_hessian(const CensoredLikelihood& likelihood,
                                const ModelSpec& model, const ParamMask& free) {
  const auto idx = free_indices(free);
  const auto dim = static_cast<Eigen::Index>(idx.size());
  const ParamVector base = model.params();
  const double center = evaluate(likelihood, model, base, idx.empty() ? 0 : idx[0]);
  Eigen::MatrixXd hess(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const std::size_t i = idx[static_cast<std::size_t>(a)];
    const double hi = step_for(base[i]);
    ParamVector up = base;
    ParamVector down = base;
    up[i] += hi;
    down[i] -= hi;
    hess(a, a) = (evaluate(likelihood, model, up, i) - 2.0 * center +
                  evaluate(likelihood, model, down, i)) /
                 (hi * hi);
    for (Eigen::Index b = 0; b < a; ++b) {
      const std::size_t j = idx[static_cast<std::size_t>(b)];
      const double hj = step_for(base[j]);
      auto shifted = [&](double si, double sj) {
        ParamVector v = base;
        v[i] += si * hi;
        v[j] += sj * hj;
        return evaluate(likelihood, model, v, i);
      };
      const double value = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) +
                            shifted(-1, -1)) /
                           (4.0 * hi * hj);
      hess(a, b) = value;
      hess(b, a) = value;
    }
  }
  return hess;
}

Eigen::VectorXd numeric_gradient(const ModelSpec& model, const Dataset& data,
                                 const ParamMask& free) {
  return numeric_gradient(CensoredLikelihood(data), model, free);
}

Eigen::MatrixXd numeric_hessian(const ModelSpec& model, const Dataset& data,
                                const ParamMask& free) {
  return numeric_hessian(CensoredLikelihood(data), model, free);
}

}  // namespace hybridpool
