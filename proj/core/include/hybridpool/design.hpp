#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hybridpool {

/// One homogeneous block of assays: `assay_count` assays, each on a pool of
/// `pool_size` specimens, each measured `replicates` times.
struct GroupSpec {
  int pool_size = 1;
  int gamma_flag = 0;
  int assay_count = 0;
  int replicates = 1;

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

/// A hybrid assay plan over `total_specimens` (N) specimens and
/// `total_assays` (n) assays.
struct DesignSpec {
  int total_specimens = 0;
  int total_assays = 0;
  std::vector<GroupSpec> groups;
  /// Human-readable remarks from construction (alpha snapping, rounding
  /// fallbacks, unused specimens). Not part of equality.
  std::vector<std::string> notes;

  int specimens_used() const noexcept;
  int unused_specimens() const noexcept { return total_specimens - specimens_used(); }
  int individual_assays() const noexcept;
  /// Realized fraction of individual assays.
  double alpha() const noexcept;
  int largest_pool() const noexcept;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;

  friend bool operator==(const DesignSpec& lhs, const DesignSpec& rhs) {
    return lhs.total_specimens == rhs.total_specimens &&
           lhs.total_assays == rhs.total_assays && lhs.groups == rhs.groups;
  }
};

/// Integer round, half away from zero.
long integer_round(double x);

/// [alpha n] individual assays plus n - [alpha n] pools of size
/// p = [(N - alpha n) / ((1 - alpha) n)]. When the rounded pool size would
/// need more than N specimens it falls back to the floor. Always returns two
/// groups (individual first), possibly with a zero count.
DesignSpec two_assay_design(int total_specimens, int total_assays, double alpha);

/// Individual group, pools of size p1, and [beta n] pools of size p2 with
/// p1 = [(N - alpha n - beta n p2) / ((1 - alpha - beta) n)]. Reduces to
/// two_assay_design when [beta n] = 0.
DesignSpec three_assay_design(int total_specimens, int total_assays, double alpha,
                              double beta, int second_pool_size);

/// n - 1 individual assays plus one pool of the remaining N - n + 1 specimens.
DesignSpec one_pool_design(int total_specimens, int total_assays);

/// Ascending feasible alpha values from 0 to the one-pool alpha (both
/// included). Designs that use every specimen are preferred; the rest of
/// the grid is filled nearest to evenly spaced targets.
std::vector<double> alpha_grid(int total_specimens, int total_assays, int count);
/// Same for the three-assay family with fixed beta and p2; the top end is
/// the three-assay one-pool alpha 1 - beta - 1/n.
std::vector<double> alpha_grid(int total_specimens, int total_assays, int count,
                               double beta, int second_pool_size);

/// {"N":int,"n":int,"groups":[{"pool_size":int,"gamma":0|1,"count":int,
///  "replicates":int}]}; "notes" is emitted when non-empty and ignored on read.
std::string design_to_json(const DesignSpec& design);
DesignSpec design_from_json(std::string_view text);

}  // namespace hybridpool
