// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lags/channel.hpp"

namespace lags {

/// Ragged per-drone, per-group array: `v[k][i]`.
using Ragged = std::vector<std::vector<double>>;

inline constexpr int kInstanceSchemaVersion = 1;
inline constexpr double kBitsPerMbit = 1e6;
/// load <= capacity * (1 + kFeasibilityRelTol) counts as satisfied.
inline constexpr double kFeasibilityRelTol = 1e-9;

/// One draw of the group-selection / power-control problem.
struct ProblemInstance {
  std::string id;
  Ragged utilities;             // pi[k][i] >= 0
  Ragged volumes;               // Q[k][i] > 0, bits
  double time_budget = 50.0;    // T, s
  double power_budget = 0.1;    // P_sum, W
  double noise_power = 1e-13;   // sigma^2, W
  double bandwidth = 3e6;       // B, Hz
  ChannelRealization channel;

  int num_drones() const { return static_cast<int>(utilities.size()); }
  int groups(int k) const { return static_cast<int>(utilities[k].size()); }
  int total_groups() const;
  std::vector<int> groups_per_drone() const;
  const Eigen::MatrixXd& gains() const { return channel.composite_gains; }

  /// Throws DomainError when the invariants do not hold.
  void validate() const;
};

/// Decision variables: selection x (ragged, in [0,1]) and powers p (W).
struct Allocation {
  Ragged selection;
  Eigen::VectorXd powers;
};

struct FeasibilityReport {
  Eigen::VectorXd load_bits;
  Eigen::VectorXd capacity_bits;
  std::vector<bool> violated;
  bool power_budget_violated = false;
  bool box_violated = false;
  std::optional<double> spectral_radius;
  std::optional<Eigen::VectorXd> min_power;

  int violation_count() const;
  bool feasible() const { return violation_count() == 0 && !power_budget_violated && !box_violated; }
};

/// Result of the SINR-target power-control analysis for a fixed selection.
struct PowerControlResult {
  bool feasible = false;        // rate targets reachable within the power budget
  bool sinr_feasible = false;   // rate targets reachable with unbounded power (rho(A) < 1)
  double spectral_radius = 0.0;
  Eigen::VectorXd powers;       // p*, componentwise-minimal; empty when !sinr_feasible
  Eigen::VectorXd target_sinr;
};

double objective(const ProblemInstance& inst, const Allocation& alloc);
double objective(const ProblemInstance& inst, const Ragged& selection);

/// Per-drone load/capacity comparison plus power-budget and box checks. Never throws on infeasibility.
FeasibilityReport check_constraints(const ProblemInstance& inst, const Allocation& alloc);

/// Fraction of (drone, instance) pairs whose load exceeds capacity.
double violation_rate(std::span<const FeasibilityReport> reports);

/// x >= threshold -> 1, else 0.
Ragged binarize(const Ragged& selection, double threshold = 0.5);
Ragged zeros_like(const Ragged& shape);
Eigen::VectorXd drone_loads(const ProblemInstance& inst, const Ragged& selection);

/// Minimal power vector meeting every per-drone rate requirement of `selection`.
PowerControlResult min_power_for_selection(const ProblemInstance& inst, const Ragged& selection);

/// Same analysis from per-drone loads in bits.
PowerControlResult min_power_for_loads(const Eigen::MatrixXd& gains, const Eigen::VectorXd& load_bits,
                                       double time_budget, double bandwidth, double noise_power,
                                       double power_budget);

/// Perron root of a nonnegative square matrix by shifted power iteration.
double spectral_radius_nonnegative(const Eigen::MatrixXd& a, int max_iterations = 200, double tol = 1e-10);

nlohmann::json to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::json& j);
ProblemInstance load_instance(const std::string& path);
void save_instance(const ProblemInstance& inst, const std::string& path);

nlohmann::json ragged_to_json(const Ragged& r);
Ragged ragged_from_json(const nlohmann::json& j);

}  // namespace lags
