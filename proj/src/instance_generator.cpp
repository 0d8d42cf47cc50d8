// SPDX-License-Identifier: Apache-2.0
#include "lags/instance_generator.hpp"

#include <cmath>

#include "lags/error.hpp"

namespace lags {

nlohmann::json to_json(const UtilityFragment& frag) {
  return {{"schema_version", kInstanceSchemaVersion},
          {"kind", "utility_fragment"},
          {"utilities", ragged_to_json(frag.utilities)},
          {"volumes_bits", ragged_to_json(frag.volumes)}};
}

UtilityFragment fragment_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "utility_fragment") throw DataError("not a utility fragment");
    UtilityFragment f{ragged_from_json(j.at("utilities")), ragged_from_json(j.at("volumes_bits"))};
    if (f.utilities.size() != f.volumes.size()) throw DataError("fragment utilities/volumes drone count differ");
    for (std::size_t k = 0; k < f.utilities.size(); ++k) {
      if (f.utilities[k].size() != f.volumes[k].size()) throw DataError("fragment group counts differ");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed utility fragment: ") + e.what());
  }
}

void ScenarioConfig::validate() const {
  deployment.validate();
  if (static_cast<int>(groups_per_drone.size()) != deployment.num_drones) {
    throw ConfigError("groups_per_drone has " + std::to_string(groups_per_drone.size()) + " entries for " +
                      std::to_string(deployment.num_drones) + " drones");
  }
  for (int g : groups_per_drone) {
    if (g < 1) throw ConfigError("every drone needs at least one group");
  }
  if (!(time_budget > 0.0) || !(power_budget > 0.0)) throw ConfigError("time and power budgets must be positive");
  if (!(utility.median > 0.0) || !(utility.sigma_log >= 0.0)) throw ConfigError("bad utility distribution");
  if (utility.images_per_group_min < 1 || utility.images_per_group_max < utility.images_per_group_min) {
    throw ConfigError("bad images_per_group range");
  }
  if (!(utility.bits_per_image > 0.0)) throw ConfigError("bits_per_image must be positive");
  if (fragment) {
    if (fragment->utilities.size() != groups_per_drone.size()) throw ConfigError("fragment drone count mismatch");
    for (std::size_t k = 0; k < groups_per_drone.size(); ++k) {
      if (static_cast<int>(fragment->utilities[k].size()) != groups_per_drone[k]) {
        throw ConfigError("fragment group count mismatch at drone " + std::to_string(k));
      }
    }
  }
}

ScenarioConfig ScenarioConfig::desk() {
  ScenarioConfig s;
  s.deployment.num_antennas = 8;
  s.deployment.num_drones = 3;
  s.deployment.receiver = Receiver::IRC;
  s.groups_per_drone = {3, 3, 3};
  return s;
}

ScenarioConfig ScenarioConfig::paper() {
  ScenarioConfig s;
  s.deployment.num_antennas = 64;
  s.deployment.num_drones = 5;
  s.groups_per_drone = {4, 4, 4, 4, 4};
  return s;
}

ScenarioConfig ScenarioConfig::from_config(const KeyValueConfig& cfg) { return from_config(cfg, desk()); }

ScenarioConfig ScenarioConfig::from_config(const KeyValueConfig& cfg, ScenarioConfig base) {
  if (auto preset = cfg.get_string("preset")) {
    if (*preset == "paper") {
      base = paper();
    } else if (*preset == "desk") {
      base = desk();
    } else {
      throw ConfigError("unknown preset '" + *preset + "' (expected desk or paper)");
    }
  }
  base.deployment = DeploymentConfig::from_config(cfg, base.deployment);
  if (auto v = cfg.get_int_list("groups_per_drone")) {
    base.groups_per_drone.assign(v->begin(), v->end());
    if (base.groups_per_drone.size() == 1) {
      base.groups_per_drone.assign(base.deployment.num_drones, base.groups_per_drone.front());
    }
  } else if (static_cast<int>(base.groups_per_drone.size()) != base.deployment.num_drones) {
    const int per = base.groups_per_drone.empty() ? 1 : base.groups_per_drone.front();
    base.groups_per_drone.assign(base.deployment.num_drones, per);
  }
  if (auto v = cfg.get_double("time_budget")) base.time_budget = *v;
  if (auto v = cfg.get_power("power_budget")) base.power_budget = *v;
  if (auto v = cfg.get_double("utility_median")) base.utility.median = *v;
  if (auto v = cfg.get_double("utility_sigma_log")) base.utility.sigma_log = *v;
  if (auto v = cfg.get_int("images_per_group_min")) base.utility.images_per_group_min = static_cast<int>(*v);
  if (auto v = cfg.get_int("images_per_group_max")) base.utility.images_per_group_max = static_cast<int>(*v);
  if (auto v = cfg.get_double("bits_per_image")) base.utility.bits_per_image = *v;
  base.validate();
  return base;
}

ProblemInstance generate_instance(const ScenarioConfig& scenario, Rng& rng, std::string id) {
  scenario.validate();
  ProblemInstance inst;
  inst.id = std::move(id);
  inst.time_budget = scenario.time_budget;
  inst.power_budget = scenario.power_budget;
  inst.noise_power = scenario.deployment.noise_power;
  inst.bandwidth = scenario.deployment.bandwidth;
  Rng channel_rng = rng.split(1);
  Rng utility_rng = rng.split(2);
  inst.channel = draw_channels(scenario.deployment, channel_rng);
  if (scenario.fragment) {
    inst.utilities = scenario.fragment->utilities;
    inst.volumes = scenario.fragment->volumes;
  } else {
    const auto& u = scenario.utility;
    const double mu = std::log(u.median);
    const auto span = static_cast<std::uint64_t>(u.images_per_group_max - u.images_per_group_min + 1);
    for (int groups : scenario.groups_per_drone) {
      std::vector<double> pi(groups);
      std::vector<double> q(groups);
      for (int i = 0; i < groups; ++i) {
        pi[i] = std::exp(mu + u.sigma_log * utility_rng.normal());
        q[i] = static_cast<double>(u.images_per_group_min + static_cast<int>(utility_rng.below(span))) *
               u.bits_per_image;
      }
      inst.utilities.push_back(std::move(pi));
      inst.volumes.push_back(std::move(q));
    }
  }
  inst.validate();
  return inst;
}

ProblemInstance generate_indexed(const ScenarioConfig& scenario, std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng(seed).split(index);
  return generate_instance(scenario, rng, "inst-" + std::to_string(index));
}

std::vector<ProblemInstance> generate_dataset(const ScenarioConfig& scenario, std::uint64_t seed, std::size_t count,
                                              std::uint64_t first_index) {
  std::vector<ProblemInstance> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) out.push_back(generate_indexed(scenario, seed, first_index + n));
  return out;
}

}  // namespace lags
