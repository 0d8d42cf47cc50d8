// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "lags/error.hpp"
#include "lags/hgnn.hpp"
#include "lags/instance_generator.hpp"

using namespace lags;

namespace {

HgnnConfig small_config() {
  HgnnConfig cfg;
  cfg.hidden_dims = {6, 8, 5};
  return cfg;
}

ScenarioConfig scenario(int K, std::vector<int> groups) {
  ScenarioConfig sc = ScenarioConfig::desk();
  sc.deployment.num_drones = K;
  sc.groups_per_drone = std::move(groups);
  return sc;
}

// Reorders drones by `perm` and the groups of each drone by `group_perm[k]`
// (indices refer to the original drone).
ProblemInstance permute(const ProblemInstance& inst, const std::vector<int>& perm,
                        const std::vector<std::vector<int>>& group_perm) {
  ProblemInstance out = inst;
  const int K = inst.num_drones();
  auto& H = out.channel.composite_gains;
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) H(a, b) = inst.channel.composite_gains(perm[a], perm[b]);
    out.channel.channel_vectors[a] = inst.channel.channel_vectors[perm[a]];
    out.channel.drone_positions[a] = inst.channel.drone_positions[perm[a]];
    out.utilities[a].clear();
    out.volumes[a].clear();
    for (int i : group_perm[perm[a]]) {
      out.utilities[a].push_back(inst.utilities[perm[a]][i]);
      out.volumes[a].push_back(inst.volumes[perm[a]][i]);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("parameter count does not depend on the instance size") {
  GwHgnn model(small_config(), 1);
  const auto n = model.parameter_count();
  Rng rng(2);
  for (int K : {1, 2, 5}) {
    const auto inst = generate_instance(scenario(K, std::vector<int>(K, 1 + K % 3)), rng);
    ad::Tape tape(false);
    const auto out = model.forward(tape, GraphBatch::build(inst, model.config()));
    CHECK(out.powers.rows() == K);
    CHECK(model.parameter_count() == n);
  }
}

TEST_CASE("outputs are equivariant under drone and group permutations") {
  GwHgnn model(small_config(), 3);
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = generate_instance(scenario(3, {2, 3, 1}), rng);
    std::vector<int> perm = {0, 1, 2};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<int>> gp(3);
    for (int k = 0; k < 3; ++k) {
      gp[k].resize(inst.groups(k));
      std::iota(gp[k].begin(), gp[k].end(), 0);
      std::shuffle(gp[k].begin(), gp[k].end(), rng);
    }
    const Allocation a = model.infer(inst);
    const Allocation b = model.infer(permute(inst, perm, gp));
    for (int k = 0; k < 3; ++k) {
      worst = std::max(worst, std::abs(b.powers[k] - a.powers[perm[k]]));
      for (int i = 0; i < inst.groups(perm[k]); ++i) {
        worst = std::max(worst, std::abs(b.selection[k][i] - a.selection[perm[k]][gp[perm[k]][i]]));
      }
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("powers exhaust the budget and selections stay inside the unit interval") {
  GwHgnn model(HgnnConfig{}, 5);
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto inst = generate_instance(ScenarioConfig::desk(), rng);
    const Allocation a = model.infer(inst);
    CHECK(a.powers.sum() == doctest::Approx(inst.power_budget).epsilon(1e-12));
    CHECK((a.powers.array() >= 0.0).all());
    for (const auto& row : a.selection) {
      for (double x : row) {
        CHECK(x > 0.0);
        CHECK(x < 1.0);
      }
    }
  }
}

TEST_CASE("a single drone receives the whole power budget") {
  GwHgnn model(small_config(), 7);
  Rng rng(8);
  const auto inst = generate_instance(scenario(1, {4}), rng);
  const Allocation a = model.infer(inst);
  CHECK(a.powers[0] == doctest::Approx(inst.power_budget).epsilon(1e-12));
}

TEST_CASE("batched forward equals per-instance forward") {
  GwHgnn model(small_config(), 9);
  Rng rng(10);
  std::vector<ProblemInstance> insts;
  insts.push_back(generate_instance(scenario(2, {1, 3}), rng));
  insts.push_back(generate_instance(scenario(3, {2, 2, 2}), rng));
  insts.push_back(generate_instance(scenario(1, {2}), rng));
  std::vector<const ProblemInstance*> ptrs;
  for (auto& i : insts) ptrs.push_back(&i);
  const auto batch = GraphBatch::build(ptrs, model.config());
  ad::Tape tape(false);
  const auto out = model.forward(tape, batch);
  const auto split = split_allocations(batch, out.powers.value(), out.selection.value());
  REQUIRE(split.size() == insts.size());
  for (std::size_t n = 0; n < insts.size(); ++n) {
    const Allocation single = model.infer(insts[n]);
    CHECK((split[n].powers - single.powers).cwiseAbs().maxCoeff() <= 1e-12);
    for (int k = 0; k < insts[n].num_drones(); ++k) {
      for (int i = 0; i < insts[n].groups(k); ++i) {
        CHECK(std::abs(split[n].selection[k][i] - single.selection[k][i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("checkpoints restore identical outputs and a stable architecture hash") {
  GwHgnn model(small_config(), 11);
  const auto text = model.to_json().dump();
  GwHgnn back = GwHgnn::from_json(nlohmann::json::parse(text));
  Rng rng(12);
  const auto inst = generate_instance(ScenarioConfig::desk(), rng);
  const Allocation a = model.infer(inst), b = back.infer(inst);
  CHECK((a.powers - b.powers).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.selection == b.selection);
  CHECK(model.config().hash() == back.config().hash());
  HgnnConfig other = small_config();
  other.hidden_dims.back() = 7;
  CHECK(other.hash() != small_config().hash());
  CHECK(GwHgnn(small_config(), 11).to_json() == model.to_json());
}

TEST_CASE("invalid architectures are rejected") {
  HgnnConfig cfg;
  cfg.hidden_dims = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.hidden_dims = {4, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
