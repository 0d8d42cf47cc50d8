// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "lags/error.hpp"
#include "lags/instance_generator.hpp"
#include "lags/problem.hpp"

using namespace lags;
using testing::instance_from_gains;

namespace {

// Distributed power-control fixed point p <- A p + b run for a fixed number of steps.
}  // namespace

TEST_CASE("objective sums selected utilities") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2) * 1e-9;
  const auto inst = instance_from_gains(H, {{1.0, 2.5}, {0.25}}, {{1e6, 1e6}, {1e6}});
  CHECK(objective(inst, Ragged{{1, 0}, {1}}) == doctest::Approx(1.25));
  CHECK(objective(inst, Ragged{{0.5, 1}, {0}}) == doctest::Approx(3.0));
}

TEST_CASE("single-drone minimal power has the closed form") {
  const double g = 2e-9, noise = 1e-13, T = 50, B = 3e6;
  Eigen::MatrixXd H(1, 1);
  H << g;
  const double load = 600e6;
  const auto inst = instance_from_gains(H, {{1.0}}, {{load}}, T, 0.1, noise, B);
  const auto pc = min_power_for_selection(inst, {{1.0}});
  const double gamma = std::exp2(load / (T * B)) - 1.0;
  REQUIRE(pc.feasible);
  CHECK(testing::close_rel(pc.powers[0], gamma * noise / g, 1e-12));
  CHECK(pc.spectral_radius == 0.0);
  // At exactly p* the capacity equals the load.
  const FeasibilityReport rep = check_constraints(inst, Allocation{{{1.0}}, pc.powers});
  CHECK(rep.feasible());
  CHECK(testing::close_rel(rep.capacity_bits[0], load, 1e-10));
}

TEST_CASE("minimal power matches the fixed-point iteration") {
  Rng rng(41);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd H(3, 3);
    for (int k = 0; k < 3; ++k) {
      for (int j = 0; j < 3; ++j) H(k, j) = (k == j ? 1.0 : 0.2) * rng.uniform(0.1, 1.0) * 1e-9;
    }
    Eigen::VectorXd loads(3);
    for (int k = 0; k < 3; ++k) loads[k] = rng.uniform(0.0, 400e6);
    const auto pc = min_power_for_loads(H, loads, 50, 3e6, 1e-13, 1e9);
    Eigen::VectorXd gamma(3);
    for (int k = 0; k < 3; ++k) gamma[k] = std::exp2(loads[k] / 150e6) - 1.0;
    const auto fp = testing::fixed_point_iteration(H, gamma, 1e-13);
    CHECK(fp.converged == pc.sinr_feasible);
    if (pc.sinr_feasible && fp.converged) {
      for (int k = 0; k < 3; ++k) CHECK(testing::close_rel(pc.powers[k], fp.powers[k], 1e-8, 1e-30));
      CHECK(pc.spectral_radius < 1.0);
      ++checked;
    } else {
      CHECK(pc.spectral_radius >= 1.0 - 1e-9);
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("mutual interference beyond the Perron bound is infeasible") {
  Eigen::MatrixXd H(2, 2);
  H << 1e-9, 1e-9, 1e-9, 1e-9;
  // gamma = 1 on both drones gives rho(A) = 1 exactly.
  const auto pc = min_power_for_loads(H, Eigen::Vector2d(150e6, 150e6), 50, 3e6, 1e-13, 1.0);
  CHECK_FALSE(pc.sinr_feasible);
  CHECK_FALSE(pc.feasible);
  const auto ok = min_power_for_loads(H, Eigen::Vector2d(100e6, 100e6), 50, 3e6, 1e-13, 1.0);
  CHECK(ok.sinr_feasible);
}

TEST_CASE("power budget limits feasibility separately from the spectral condition") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2) * 1e-12;
  const auto pc = min_power_for_loads(H, Eigen::Vector2d(1500e6, 0.0), 50, 3e6, 1e-13, 0.1);
  CHECK(pc.sinr_feasible);
  CHECK_FALSE(pc.feasible);
  CHECK(pc.powers[1] == 0.0);
}

TEST_CASE("spectral radius agrees with a dense eigen-solver") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = rng.uniform(0.0, 1.0);
    const double expect = A.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(testing::close_rel(spectral_radius_nonnegative(A), expect, 1e-8));
  }
}

TEST_CASE("constraint report flags load, power and box violations") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2) * 1e-9;
  const auto inst = instance_from_gains(H, {{1.0, 1.0}, {1.0}}, {{5e9, 1e6}, {1e6}});
  auto rep = check_constraints(inst, Allocation{{{1, 1}, {1}}, Eigen::Vector2d(0.05, 0.05)});
  CHECK(rep.violated == std::vector<bool>{true, false});
  CHECK(rep.violation_count() == 1);
  CHECK_FALSE(rep.feasible());
  rep = check_constraints(inst, Allocation{{{0, 1}, {1}}, Eigen::Vector2d(0.06, 0.05)});
  CHECK(rep.power_budget_violated);
  rep = check_constraints(inst, Allocation{{{0, 1.5}, {1}}, Eigen::Vector2d(0.05, 0.05)});
  CHECK(rep.box_violated);
  rep = check_constraints(inst, Allocation{{{0, 0}, {0}}, Eigen::Vector2d(0.0, 0.0)});
  CHECK(rep.feasible());
}

TEST_CASE("violation rate counts drone-instance pairs") {
  std::vector<FeasibilityReport> reps(2);
  reps[0].violated = {true, false, false};
  reps[1].violated = {true, true, false};
  CHECK(violation_rate(reps) == doctest::Approx(0.5));
  CHECK(violation_rate(std::span<const FeasibilityReport>{}) == 0.0);
}

TEST_CASE("binarize uses an inclusive threshold") {
  CHECK(binarize({{0.2, 0.5, 0.7}}, 0.5) == Ragged{{0, 1, 1}});
}

TEST_CASE("instances round-trip through JSON files") {
  const auto inst = generate_indexed(ScenarioConfig::desk(), 7, 3);
  const auto path = std::filesystem::temp_directory_path() / "lags_problem_roundtrip.json";
  save_instance(inst, path.string());
  const auto back = load_instance(path.string());
  CHECK(back.id == inst.id);
  CHECK(back.utilities == inst.utilities);
  CHECK(back.volumes == inst.volumes);
  CHECK(back.gains() == inst.gains());
  CHECK(back.time_budget == inst.time_budget);
  std::filesystem::remove(path);

  auto j = to_json(inst);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(instance_from_json(j), DataError);
  j = to_json(inst);
  j["utilities"][0][0] = -1.0;
  CHECK_THROWS_AS(instance_from_json(j), DataError);
  CHECK_THROWS_AS(load_instance("/nonexistent/x.json"), IoError);
}
