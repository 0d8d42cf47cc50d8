// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lags/problem.hpp"

namespace lags {

struct SolverResult {
  Allocation allocation;  // binary selection
  double objective = 0.0;
  bool feasible = false;
  std::string solver_name;
  double wall_time = 0.0;  // s
};

nlohmann::json to_json(const SolverResult& r);

inline constexpr int kMaxEnumeratedGroups = 24;

/// Exact optimum by enumerating all 2^I selections. Each selection is checked
/// with min_power_for_selection; ties go to fewer selected groups, then the
/// lexicographically smallest x. `jobs` splits the enumeration with a
/// deterministic reduction.
SolverResult brute_force_oracle(const ProblemInstance& inst, int jobs = 1);

struct RepairOptions {
  double threshold = 0.5;
  /// Replace the predicted powers by the minimal powers of the repaired selection.
  bool reoptimize_power = false;
};

/// Thresholds x, keeps the predicted powers, then drops the lowest-utility
/// selected group of a violating drone until every load fits its capacity.
SolverResult threshold_and_repair(const ProblemInstance& inst, const Allocation& relaxed,
                                  const RepairOptions& opts = {});

inline constexpr int kDefaultGreedyBudget = 5;

/// Top-`budget` groups by utility (ties: smaller volume), shrunk from the
/// lowest utility until the minimal-power solution fits the power budget.
SolverResult gw2_greedy(const ProblemInstance& inst, int budget = kDefaultGreedyBudget);

struct SumRateOptions {
  int starts = 20;
  int iterations = 500;
  std::uint64_t seed = 0;
};

/// Sum-rate power allocation by multi-start projected gradient ascent.
Eigen::VectorXd max_sum_rate_powers(const ProblemInstance& inst, const SumRateOptions& opts = {});

/// Sum-rate powers, then per drone first-fit packing of groups by descending volume.
SolverResult gw1_sumrate(const ProblemInstance& inst, const SumRateOptions& opts = {});

/// Exact optimum over all-or-nothing drone selections (2^K cases).
SolverResult drone_granularity(const ProblemInstance& inst);

/// Default payload budget for channel_blind: K * T * B * this many bit/s/Hz.
inline constexpr double kBlindNominalSpectralEfficiency = 4.0;
double default_blind_budget_bits(const ProblemInstance& inst);

/// Utility-ordered selection up to `budget_bits` total volume with uniform
/// powers, followed by the repair drop loop.
SolverResult channel_blind(const ProblemInstance& inst, double budget_bits);

/// Allocation with every group selected set to the flattened (k, i) order of `mask`.
Ragged selection_from_mask(const ProblemInstance& inst, std::uint64_t mask);

}  // namespace lags
