#include "hybridpool/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "hybridpool/error.hpp"
#include "json_support.hpp"

namespace hybridpool {
namespace {

constexpr double kSnapEpsilon = 1e-9;

[[noreturn]] void fail(const std::string& message) { throw ConfigError(message); }

void check_sizes(int total_specimens, int total_assays) {
  if (total_assays < 1 || total_assays > total_specimens) {
    std::ostringstream os;
    os << "design requires 1 <= n <= N (N=" << total_specimens
       << ", n=" << total_assays << ")";
    fail(os.str());
  }
}

// Rounds a requested fraction of n to an assay count, recording any snap.
int snap_count(double fraction, int total_assays, const char* name,
               std::vector<std::string>& notes) {
  if (!std::isfinite(fraction) || fraction < 0.0 || fraction >= 1.0) {
    std::ostringstream os;
    os << name << " must lie in [0, 1), got " << fraction;
    fail(os.str());
  }
  const double exact = fraction * total_assays;
  const auto count = static_cast<int>(integer_round(exact));
  if (std::abs(exact - count) > kSnapEpsilon) {
    std::ostringstream os;
    os << name << " snapped from " << fraction << " to "
       << static_cast<double>(count) / total_assays << " (" << count << " of "
       << total_assays << " assays)";
    notes.push_back(os.str());
  }
  return count;
}

// Pool size for `pools` pools sharing `specimens` specimens: rounded, or
// floored when rounding up would need more specimens than exist.
int pool_size_for(int specimens, int pools, std::vector<std::string>* notes) {
  const double exact = static_cast<double>(specimens) / pools;
  auto size = static_cast<int>(integer_round(exact));
  if (static_cast<long>(size) * pools > specimens) {
    const int floored = specimens / pools;
    if (notes != nullptr) {
      std::ostringstream os;
      os << "pool size " << exact << " rounds to " << size << ", which needs "
         << static_cast<long>(size) * pools << " of " << specimens
         << " available specimens; using " << floored;
      notes->push_back(os.str());
    }
    size = floored;
  }
  return size;
}

void note_unused(DesignSpec& design) {
  if (const int unused = design.unused_specimens(); unused > 0) {
    design.notes.push_back(std::to_string(unused) + " of " +
                           std::to_string(design.total_specimens) +
                           " specimens unused after rounding");
  }
}

struct Candidate {
  int individuals;
  bool zero_waste;
};

std::vector<double> select_grid(std::vector<Candidate> candidates, int count,
                                int total_assays) {
  if (count < 2) fail("alpha grid needs count >= 2");
  if (candidates.empty()) fail("no feasible alpha: every design degenerates (p < 2)");

  const int lo = candidates.front().individuals;
  const int hi = candidates.back().individuals;
  std::set<int> chosen = {lo, hi};
  std::vector<int> preferred;
  std::vector<int> others;
  for (const auto& c : candidates) {
    (c.zero_waste ? preferred : others).push_back(c.individuals);
  }

  auto fill_from = [&](const std::vector<int>& pool) {
    // Greedy: nearest unused candidate to each evenly spaced target.
    for (int i = 1; i + 1 < count && static_cast<int>(chosen.size()) < count; ++i) {
      const double target = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
      int best = -1;
      double best_distance = 0.0;
      for (int k : pool) {
        if (chosen.contains(k)) continue;
        const double distance = std::abs(k - target);
        if (best < 0 || distance < best_distance) {
          best = k;
          best_distance = distance;
        }
      }
      if (best >= 0) chosen.insert(best);
    }
  };
  fill_from(preferred);
  // A second pass fills any slots the greedy targets left open.
  for (int k : preferred) {
    if (static_cast<int>(chosen.size()) >= count) break;
    chosen.insert(k);
  }
  fill_from(others);
  for (int k : others) {
    if (static_cast<int>(chosen.size()) >= count) break;
    chosen.insert(k);
  }

  std::vector<double> alphas;
  alphas.reserve(chosen.size());
  for (int k : chosen) alphas.push_back(static_cast<double>(k) / total_assays);
  return alphas;
}

}  // namespace

long integer_round(double x) { return std::lround(x); }

int DesignSpec::specimens_used() const noexcept {
  long used = 0;
  for (const auto& g : groups) used += static_cast<long>(g.assay_count) * g.pool_size;
  return static_cast<int>(used);
}

int DesignSpec::individual_assays() const noexcept {
  int count = 0;
  for (const auto& g : groups) {
    if (g.pool_size == 1) count += g.assay_count;
  }
  return count;
}

double DesignSpec::alpha() const noexcept {
  return total_assays > 0 ? static_cast<double>(individual_assays()) / total_assays
                          : 0.0;
}

int DesignSpec::largest_pool() const noexcept {
  int largest = 1;
  for (const auto& g : groups) {
    if (g.assay_count > 0) largest = std::max(largest, g.pool_size);
  }
  return largest;
}

void DesignSpec::validate() const {
  check_sizes(total_specimens, total_assays);
  if (groups.empty()) fail("design has no groups");
  long assays = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    const std::string where = "group " + std::to_string(i) + ": ";
    if (g.pool_size < 1) fail(where + "pool_size must be >= 1");
    if (g.assay_count < 0) fail(where + "count must be >= 0");
    if (g.replicates != 1 && g.replicates != 2) fail(where + "replicates must be 1 or 2");
    if (g.gamma_flag != (g.pool_size > 1 ? 1 : 0)) {
      fail(where + "gamma must be 0 for individual assays and 1 for pools");
    }
    assays += g.assay_count;
  }
  if (assays != total_assays) {
    fail("group counts sum to " + std::to_string(assays) + " but n = " +
         std::to_string(total_assays));
  }
  if (specimens_used() > total_specimens) {
    fail("design uses " + std::to_string(specimens_used()) + " specimens but N = " +
         std::to_string(total_specimens));
  }
}

DesignSpec two_assay_design(int total_specimens, int total_assays, double alpha) {
  check_sizes(total_specimens, total_assays);
  DesignSpec design{total_specimens, total_assays, {}, {}};
  const int individuals = snap_count(alpha, total_assays, "alpha", design.notes);
  const int pools = total_assays - individuals;
  if (pools < 1) fail("alpha leaves no pooled assays");
  const int remaining = total_specimens - individuals;
  const int p = pool_size_for(remaining, pools, &design.notes);
  if (p < 2) {
    std::ostringstream os;
    os << "infeasible two-assay design (N=" << total_specimens
       << ", n=" << total_assays << ", alpha=" << alpha << "): pool size " << p
       << " < 2, pooling degenerates";
    fail(os.str());
  }
  design.groups = {GroupSpec{1, 0, individuals, 1}, GroupSpec{p, 1, pools, 1}};
  note_unused(design);
  design.validate();
  return design;
}

DesignSpec three_assay_design(int total_specimens, int total_assays, double alpha,
                              double beta, int second_pool_size) {
  check_sizes(total_specimens, total_assays);
  DesignSpec design{total_specimens, total_assays, {}, {}};
  const int second = snap_count(beta, total_assays, "beta", design.notes);
  if (second == 0) {
    auto reduced = two_assay_design(total_specimens, total_assays, alpha);
    reduced.notes.insert(reduced.notes.begin(),
                         "beta n rounds to 0: three-assay design reduces to two-assay");
    return reduced;
  }
  if (second_pool_size < 2) fail("second pool size p2 must be >= 2");
  const int individuals = snap_count(alpha, total_assays, "alpha", design.notes);
  const int first = total_assays - individuals - second;
  if (first < 1) fail("alpha + beta leaves no assays for the first pooled group");
  const long remaining = static_cast<long>(total_specimens) - individuals -
                         static_cast<long>(second) * second_pool_size;
  if (remaining < 2L * first) {
    std::ostringstream os;
    os << "infeasible three-assay design (N=" << total_specimens
       << ", n=" << total_assays << ", alpha=" << alpha << ", beta=" << beta
       << ", p2=" << second_pool_size << "): only " << remaining
       << " specimens left for " << first << " pools";
    fail(os.str());
  }
  const int p1 = pool_size_for(static_cast<int>(remaining), first, &design.notes);
  if (p1 == second_pool_size) {
    fail("p1 = p2 = " + std::to_string(p1) +
         ": three-assay design degenerates to two-assay");
  }
  design.groups = {GroupSpec{1, 0, individuals, 1}, GroupSpec{p1, 1, first, 1},
                   GroupSpec{second_pool_size, 1, second, 1}};
  note_unused(design);
  design.validate();
  return design;
}

DesignSpec one_pool_design(int total_specimens, int total_assays) {
  if (total_assays < 2 || total_specimens <= total_assays) {
    std::ostringstream os;
    os << "one-pool design requires N > n >= 2 (N=" << total_specimens
       << ", n=" << total_assays << ")";
    fail(os.str());
  }
  DesignSpec design{total_specimens,
                    total_assays,
                    {GroupSpec{1, 0, total_assays - 1, 1},
                     GroupSpec{total_specimens - total_assays + 1, 1, 1, 1}},
                    {}};
  design.validate();
  return design;
}

std::vector<double> alpha_grid(int total_specimens, int total_assays, int count) {
  check_sizes(total_specimens, total_assays);
  std::vector<Candidate> candidates;
  for (int k = 0; k < total_assays; ++k) {
    const int pools = total_assays - k;
    const int remaining = total_specimens - k;
    if (pool_size_for(remaining, pools, nullptr) < 2) continue;
    candidates.push_back({k, remaining % pools == 0});
  }
  return select_grid(std::move(candidates), count, total_assays);
}

std::vector<double> alpha_grid(int total_specimens, int total_assays, int count,
                               double beta, int second_pool_size) {
  check_sizes(total_specimens, total_assays);
  const auto second = static_cast<int>(integer_round(beta * total_assays));
  if (second == 0) return alpha_grid(total_specimens, total_assays, count);
  std::vector<Candidate> candidates;
  for (int k = 0; k + second < total_assays; ++k) {
    const int pools = total_assays - k - second;
    const long remaining = static_cast<long>(total_specimens) - k -
                           static_cast<long>(second) * second_pool_size;
    if (remaining < 2L * pools) continue;
    const int p1 = pool_size_for(static_cast<int>(remaining), pools, nullptr);
    if (p1 < 2 || p1 == second_pool_size) continue;
    candidates.push_back({k, remaining % pools == 0});
  }
  return select_grid(std::move(candidates), count, total_assays);
}

namespace detail {

nlohmann::json design_to_json_value(const DesignSpec& design) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : design.groups) {
    groups.push_back({{"pool_size", g.pool_size},
                      {"gamma", g.gamma_flag},
                      {"count", g.assay_count},
                      {"replicates", g.replicates}});
  }
  nlohmann::json out = {
      {"N", design.total_specimens}, {"n", design.total_assays}, {"groups", groups}};
  if (!design.notes.empty()) out["notes"] = design.notes;
  return out;
}

DesignSpec design_from_json_value(const nlohmann::json& value) {
  try {
    DesignSpec design;
    design.total_specimens = value.at("N").get<int>();
    design.total_assays = value.at("n").get<int>();
    for (const auto& g : value.at("groups")) {
      GroupSpec group;
      group.pool_size = g.at("pool_size").get<int>();
      group.gamma_flag = g.at("gamma").get<int>();
      group.assay_count = g.at("count").get<int>();
      group.replicates = g.value("replicates", 1);
      design.groups.push_back(group);
    }
    design.validate();
    return design;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed design JSON: ") + e.what());
  }
}

}  // namespace detail

std::string design_to_json(const DesignSpec& design) {
  return detail::design_to_json_value(design).dump();
}

DesignSpec design_from_json(std::string_view text) {
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed design JSON: ") + e.what());
  }
  return detail::design_from_json_value(value);
}

}  // namespace hybridpool
