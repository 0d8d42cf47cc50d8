// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lags/channel.hpp"
#include "lags/kv_config.hpp"
#include "lags/problem.hpp"

namespace lags {

/// Synthetic group utilities and volumes, used when no scored image manifest
/// is supplied. pi ~ LogNormal(log(median), sigma_log); Q = n_images * bits_per_image
/// with n_images uniform in [images_per_group_min, images_per_group_max].
struct SyntheticUtilityModel {
  double median = 1.0;
  double sigma_log = 1.0;
  int images_per_group_min = 5;
  int images_per_group_max = 15;
  double bits_per_image = 40e6;
};

/// Scored utilities and volumes for a fixed group layout (from score-manifest).
struct UtilityFragment {
  Ragged utilities;
  Ragged volumes;
};

nlohmann::json to_json(const UtilityFragment& frag);
UtilityFragment fragment_from_json(const nlohmann::json& j);

struct ScenarioConfig {
  DeploymentConfig deployment;
  std::vector<int> groups_per_drone = {3, 3, 3};
  double time_budget = 50.0;
  double power_budget = 0.1;
  SyntheticUtilityModel utility;
  std::optional<UtilityFragment> fragment;

  void validate() const;

  /// K = 3, I_k = 3, N = 8, IRC receiver.
  static ScenarioConfig desk();
  /// K = 5, I_k = 4, N = 64.
  static ScenarioConfig paper();

  static ScenarioConfig from_config(const KeyValueConfig& cfg);
  static ScenarioConfig from_config(const KeyValueConfig& cfg, ScenarioConfig base);
};

/// Draws one instance from `rng`.
ProblemInstance generate_instance(const ScenarioConfig& scenario, Rng& rng, std::string id = {});

/// Instance `index` of the dataset identified by `seed`; random access and
/// independent of how many other instances are drawn.
ProblemInstance generate_indexed(const ScenarioConfig& scenario, std::uint64_t seed, std::uint64_t index);

std::vector<ProblemInstance> generate_dataset(const ScenarioConfig& scenario, std::uint64_t seed, std::size_t count,
                                              std::uint64_t first_index = 0);

}  // namespace lags
