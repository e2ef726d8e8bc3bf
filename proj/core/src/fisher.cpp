#include "hybridpool/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hybridpool/error.hpp"
#include "hybridpool/parallel.hpp"
#include "quadrature.hpp"

namespace hybridpool {
namespace {

constexpr double kRelativeTolerance = 1e-7;
constexpr double kStepFraction = 1e-4;
constexpr double kTailWidth = 12.0;  // observed-region cutoff in standard deviations
constexpr double kMaxCondition = 1e12;

std::vector<std::size_t> free_indices(const ParamMask& free) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < free.size(); ++i) {
    if (free[i]) idx.push_back(i);
  }
  if (idx.empty()) throw ConfigError("information requested over no parameters");
  return idx;
}

void require_normal(const ModelSpec& model) {
  if (model.family() != Family::kNormal) {
    throw ConfigError("expected information is available for the normal family only; "
                      "use Monte Carlo evaluation for the gamma family");
  }
}

// Finite-difference derivatives of one log term (log f(z) or log F(llod))
// with respect to the free parameters.
class LogTermDerivatives {
 public:
  LogTermDerivatives(const ObservedComponentSpec& component, const ParamMask& free)
      : component_(component), index_(free_indices(free)), base_(component.model.params()) {
    const double scale = std::sqrt(component.model.individual_variance());
    for (std::size_t i : index_) {
      step_.push_back(kStepFraction * std::max(std::abs(base_[i]), scale));
    }
  }

  std::size_t size() const noexcept { return index_.size(); }

  template <class Term>
  void gradient(const Term& term, std::span<double> out) const {
    for (std::size_t a = 0; a < index_.size(); ++a) {
      out[a] = (term(shifted(a, 1.0)) - term(shifted(a, -1.0))) / (2.0 * step_[a]);
    }
  }

  template <class Term>
  Eigen::MatrixXd hessian(const Term& term) const {
    const auto n = static_cast<Eigen::Index>(index_.size());
    Eigen::MatrixXd h(n, n);
    const double center = term(component_);
    for (std::size_t a = 0; a < index_.size(); ++a) {
      const auto ia = static_cast<Eigen::Index>(a);
      h(ia, ia) = (term(shifted(a, 1.0)) - 2.0 * center + term(shifted(a, -1.0))) /
                  (step_[a] * step_[a]);
      for (std::size_t b = 0; b < a; ++b) {
        const double v = (term(shifted2(a, 1.0, b, 1.0)) - term(shifted2(a, 1.0, b, -1.0)) -
                          term(shifted2(a, -1.0, b, 1.0)) + term(shifted2(a, -1.0, b, -1.0))) /
                         (4.0 * step_[a] * step_[b]);
        const auto ib = static_cast<Eigen::Index>(b);
        h(ia, ib) = v;
        h(ib, ia) = v;
      }
    }
    return h;
  }

 private:
  ObservedComponentSpec with(ParamVector v) const {
    ObservedComponentSpec c = component_;
    c.model = component_.model.with_params(v);
    return c;
  }
  ObservedComponentSpec shifted(std::size_t a, double sign) const {
    ParamVector v = base_;
    v[index_[a]] += sign * step_[a];
    return with(v);
  }
  ObservedComponentSpec shifted2(std::size_t a, double sa, std::size_t b, double sb) const {
    ParamVector v = base_;
    v[index_[a]] += sa * step_[a];
    v[index_[b]] += sb * step_[b];
    return with(v);
  }

  ObservedComponentSpec component_;
  std::vector<std::size_t> index_;
  ParamVector base_;
  std::vector<double> step_;
};

struct ObservedRange {
  double lower;
  double upper;
};

std::optional<ObservedRange> observed_range(const ObservedComponentSpec& component,
                                            double llod) {
  const double mean = component.model.individual_mean();
  const double sd = std::sqrt(observed_variance(component));
  const double upper = mean + kTailWidth * sd;
  const double lower = std::max(llod, mean - kTailWidth * sd);
  if (!(upper > lower)) return std::nullopt;
  return ObservedRange{lower, upper};
}

void check_steps_feasible(const ObservedComponentSpec& component, const ParamMask& free) {
  const auto v = component.model.params();
  for (std::size_t i = 1; i < kParamCount; ++i) {
    if (free[i] && v[i] <= 0.0) {
      throw ConfigError("information over " +
                        std::string(parameter_names(component.model.family())[i]) +
                        " requires a positive value (it is " + std::to_string(v[i]) + ")");
    }
  }
}

Eigen::MatrixXd unpack_symmetric(const std::vector<double>& packed, std::size_t n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b <= a; ++b, ++k) {
      m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = packed[k];
      m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = packed[k];
    }
  }
  return m;
}

NamedValues named_diagonal(const Eigen::MatrixXd& m, Family family, const ParamMask& free,
                           double factor) {
  NamedValues out;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!free[i]) continue;
    out.emplace_back(std::string(parameter_names(family)[i]), factor * m(k, k));
    ++k;
  }
  return out;
}

}  // namespace

ParamMask information_free_mask(const ModelSpec& model) {
  const auto v = model.params();
  return {true, true, v[2] > 0.0, v[3] > 0.0};
}

Eigen::MatrixXd observation_information(const ObservedComponentSpec& component,
                                        double llod, const ParamMask& free) {
  require_normal(component.model);
  component.validate();
  check_steps_feasible(component, free);
  const LogTermDerivatives derivs(component, free);
  const std::size_t n = derivs.size();
  const std::size_t packed = n * (n + 1) / 2;
  std::vector<double> total(packed, 0.0);
  std::vector<double> score(n);

  if (llod > -std::numeric_limits<double>::infinity()) {
    const double mass = observed_cdf(component, llod);
    if (mass > 0.0) {
      derivs.gradient([&](const ObservedComponentSpec& c) { return observed_log_cdf(c, llod); },
                      score);
      std::size_t k = 0;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b <= a; ++b, ++k) total[k] += mass * score[a] * score[b];
      }
    }
  }

  if (const auto range = observed_range(component, llod)) {
    std::vector<double> local(n);
    const detail::VectorIntegrand integrand = [&](double z, std::span<double> out) {
      const double density = observed_pdf(component, z);
      derivs.gradient([&](const ObservedComponentSpec& c) { return observed_log_pdf(c, z); },
                      local);
      std::size_t k = 0;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b <= a; ++b, ++k) out[k] = density * local[a] * local[b];
      }
    };
    const auto part = detail::integrate_vector(integrand, range->lower, range->upper, packed,
                                               kRelativeTolerance, 1e-14);
    for (std::size_t k = 0; k < packed; ++k) total[k] += part[k];
  }
  return unpack_symmetric(total, n);
}

Eigen::MatrixXd observation_information_from_hessian(
    const ObservedComponentSpec& component, double llod, const ParamMask& free) {
  require_normal(component.model);
  component.validate();
  check_steps_feasible(component, free);
  const LogTermDerivatives derivs(component, free);
  const std::size_t n = derivs.size();
  const std::size_t packed = n * (n + 1) / 2;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n));
  if (std::isfinite(llod)) {
    const double mass = observed_cdf(component, llod);
    if (mass > 0.0) {
      total -= mass * derivs.hessian(
                          [&](const ObservedComponentSpec& c) { return observed_log_cdf(c, llod); });
    }
  }
  if (const auto range = observed_range(component, llod)) {
    const detail::VectorIntegrand integrand = [&](double z, std::span<double> out) {
      const double density = observed_pdf(component, z);
      const Eigen::MatrixXd h =
          derivs.hessian([&](const ObservedComponentSpec& c) { return observed_log_pdf(c, z); });
      std::size_t k = 0;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b <= a; ++b, ++k) {
          out[k] = -density * h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
      }
    };
    const auto part = detail::integrate_vector(integrand, range->lower, range->upper, packed,
                                               kRelativeTolerance, 1e-14);
    total += unpack_symmetric(part, n);
  }
  return total;
}

Eigen::MatrixXd design_information(const ModelSpec& model, const DesignSpec& design,
                                   double llod, const ParamMask& free) {
  require_normal(model);
  const auto n = static_cast<Eigen::Index>(free_indices(free).size());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  for (const auto& g : design.groups) {
    if (g.assay_count == 0) continue;
    const ObservedComponentSpec component{model, g.pool_size, g.gamma_flag};
    info += g.assay_count * observation_information(component, llod, free);
  }
  return info;
}

Eigen::MatrixXd expected_information(const ModelSpec& model, const DesignSpec& design,
                                     double llod, const ParamMask& free) {
  const Eigen::MatrixXd info = design_information(model, design, llod, free);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(largest > 0.0) || smallest <= 0.0 || largest / smallest > kMaxCondition) {
    std::ostringstream os;
    os << "expected information is singular or indefinite (eigenvalues " << smallest
       << " .. " << largest << ", condition number "
       << (smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity())
       << "); the free parameters are not identifiable under this design";
    throw NumericalError(os.str());
  }
  return info;
}

Eigen::MatrixXd expected_information(const ModelSpec& model, const DesignSpec& design,
                                     double llod) {
  return expected_information(model, design, llod, information_free_mask(model));
}

NamedValues asymptotic_variances(const ModelSpec& model, const DesignSpec& design,
                                 double llod, const ParamMask& free) {
  const Eigen::MatrixXd info = expected_information(model, design, llod, free);
  const Eigen::MatrixXd inverse =
      info.ldlt().solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  return named_diagonal(inverse, model.family(), free, 1.0);
}

NamedValues asymptotic_variances(const ModelSpec& model, const DesignSpec& design,
                                 double llod) {
  return asymptotic_variances(model, design, llod, information_free_mask(model));
}

SweepResult sweep_alpha(const ModelSpec& model, int total_specimens, int total_assays,
                        double llod, const std::vector<double>& alphas,
                        const std::optional<ThreeAssayExtras>& extras,
                        const std::optional<ParamMask>& free, int threads) {
  require_normal(model);
  if (alphas.empty()) throw ConfigError("alpha grid is empty");
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("alpha grid contains duplicates");
  }
  const ParamMask mask = free.value_or(information_free_mask(model));

  SweepResult result;
  result.llod = llod;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (mask[i]) result.parameters.emplace_back(parameter_names(model.family())[i]);
  }
  result.rows.resize(sorted.size());
  parallel_for(sorted.size(), threads, [&](std::size_t i) {
    SweepRow& row = result.rows[i];
    row.alpha = sorted[i];
    row.design = extras ? three_assay_design(total_specimens, total_assays, sorted[i],
                                             extras->beta, extras->second_pool_size)
                        : two_assay_design(total_specimens, total_assays, sorted[i]);
    auto variances = asymptotic_variances(model, row.design, llod, mask);
    for (auto& [name, value] : variances) value *= total_assays;
    row.scaled_variances = std::move(variances);
  });
  return result;
}

}  // namespace hybridpool
