// SPDX-License-Identifier: Apache-2.0
#include "lags/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lags/error.hpp"

namespace lags {

int ProblemInstance::total_groups() const {
  int total = 0;
  for (const auto& u : utilities) total += static_cast<int>(u.size());
  return total;
}

std::vector<int> ProblemInstance::groups_per_drone() const {
  std::vector<int> out;
  for (const auto& u : utilities) out.push_back(static_cast<int>(u.size()));
  return out;
}

void ProblemInstance::validate() const {
  const int K = num_drones();
  if (K < 1) throw DomainError("instance has no drones");
  if (static_cast<int>(volumes.size()) != K) throw DomainError("utilities and volumes disagree on drone count");
  for (int k = 0; k < K; ++k) {
    if (utilities[k].empty()) throw DomainError("drone " + std::to_string(k) + " has no groups");
    if (utilities[k].size() != volumes[k].size()) {
      throw DomainError("drone " + std::to_string(k) + ": utilities and volumes differ in length");
    }
    for (std::size_t i = 0; i < utilities[k].size(); ++i) {
      if (!(utilities[k][i] >= 0.0) || !std::isfinite(utilities[k][i])) {
        throw DomainError("utility (" + std::to_string(k) + "," + std::to_string(i) + ") must be finite and >= 0");
      }
      if (!(volumes[k][i] > 0.0) || !std::isfinite(volumes[k][i])) {
        throw DomainError("volume (" + std::to_string(k) + "," + std::to_string(i) + ") must be finite and > 0");
      }
    }
  }
  if (!(time_budget > 0.0) || !(power_budget > 0.0) || !(bandwidth > 0.0) || !(noise_power > 0.0)) {
    throw DomainError("time, power, bandwidth and noise budgets must be positive");
  }
  const auto& H = channel.composite_gains;
  if (H.rows() != K || H.cols() != K) throw DomainError("composite gain matrix does not match drone count");
  if (!H.allFinite() || (H.array() < 0.0).any()) throw DomainError("composite gains must be finite and >= 0");
}

int FeasibilityReport::violation_count() const {
  return static_cast<int>(std::count(violated.begin(), violated.end(), true));
}

namespace {

void check_shape(const ProblemInstance& inst, const Ragged& selection) {
  if (static_cast<int>(selection.size()) != inst.num_drones()) {
    throw DomainError("selection has " + std::to_string(selection.size()) + " drones, instance has " +
                      std::to_string(inst.num_drones()));
  }
  for (int k = 0; k < inst.num_drones(); ++k) {
    if (static_cast<int>(selection[k].size()) != inst.groups(k)) {
      throw DomainError("selection shape mismatch at drone " + std::to_string(k));
    }
  }
}

}  // namespace

double objective(const ProblemInstance& inst, const Ragged& selection) {
  check_shape(inst, selection);
  double total = 0.0;
  for (int k = 0; k < inst.num_drones(); ++k) {
    for (int i = 0; i < inst.groups(k); ++i) total += selection[k][i] * inst.utilities[k][i];
  }
  return total;
}

double objective(const ProblemInstance& inst, const Allocation& alloc) { return objective(inst, alloc.selection); }

Eigen::VectorXd drone_loads(const ProblemInstance& inst, const Ragged& selection) {
  check_shape(inst, selection);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(inst.num_drones());
  for (int k = 0; k < inst.num_drones(); ++k) {
    for (int i = 0; i < inst.groups(k); ++i) load[k] += selection[k][i] * inst.volumes[k][i];
  }
  return load;
}

FeasibilityReport check_constraints(const ProblemInstance& inst, const Allocation& alloc) {
  const int K = inst.num_drones();
  if (alloc.powers.size() != K) throw DomainError("power vector length does not match drone count");
  FeasibilityReport rep;
  rep.load_bits = drone_loads(inst, alloc.selection);
  for (const auto& row : alloc.selection) {
    for (double x : row) {
      if (!(x >= 0.0 && x <= 1.0)) rep.box_violated = true;
    }
  }
  Eigen::VectorXd p = alloc.powers;
  for (int k = 0; k < K; ++k) {
    if (!(p[k] >= 0.0)) {
      rep.box_violated = true;
      p[k] = 0.0;
    }
  }
  rep.power_budget_violated = p.sum() > inst.power_budget * (1.0 + kFeasibilityRelTol);
  rep.capacity_bits = inst.time_budget * compute_rates(inst.gains(), p, inst.noise_power, inst.bandwidth);
  rep.violated.resize(K);
  for (int k = 0; k < K; ++k) {
    rep.violated[k] = rep.load_bits[k] > rep.capacity_bits[k] * (1.0 + kFeasibilityRelTol);
  }
  return rep;
}

double violation_rate(std::span<const FeasibilityReport> reports) {
  std::size_t pairs = 0;
  std::size_t violated = 0;
  for (const auto& r : reports) {
    pairs += r.violated.size();
    violated += static_cast<std::size_t>(r.violation_count());
  }
  return pairs == 0 ? 0.0 : static_cast<double>(violated) / static_cast<double>(pairs);
}

Ragged binarize(const Ragged& selection, double threshold) {
  Ragged out = selection;
  for (auto& row : out) {
    for (double& x : row) x = x >= threshold ? 1.0 : 0.0;
  }
  return out;
}

Ragged zeros_like(const Ragged& shape) {
  Ragged out = shape;
  for (auto& row : out) std::fill(row.begin(), row.end(), 0.0);
  return out;
}

double spectral_radius_nonnegative(const Eigen::MatrixXd& a, int max_iterations, double tol) {
  const auto n = a.rows();
  if (n == 0) return 0.0;
  // Iterate on A + I: same Perron vector, aperiodic, and every iterate stays positive.
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  double lower = 0.0;
  double upper = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd y = a * x + x;
    lower = std::numeric_limits<double>::infinity();
    upper = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] / x[i];
      lower = std::min(lower, r);
      upper = std::max(upper, r);
    }
    x = y / y.maxCoeff();
    if (upper - lower <= tol * upper) break;
  }
  return 0.5 * (lower + upper) - 1.0;
}

PowerControlResult min_power_for_loads(const Eigen::MatrixXd& gains, const Eigen::VectorXd& load_bits,
                                       double time_budget, double bandwidth, double noise_power,
                                       double power_budget) {
  const auto K = gains.rows();
  PowerControlResult res;
  res.target_sinr = Eigen::VectorXd::Zero(K);
  std::vector<Eigen::Index> active;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (load_bits[k] > 0.0) {
      active.push_back(k);
      res.target_sinr[k] = std::exp2(load_bits[k] / (time_budget * bandwidth)) - 1.0;
    }
  }
  if (active.empty()) {
    res.feasible = res.sinr_feasible = true;
    res.powers = Eigen::VectorXd::Zero(K);
    return res;
  }
  const auto n = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto k = active[r];
    const double gamma = res.target_sinr[k];
    const double direct = gains(k, k);
    if (!(direct > 0.0) || !std::isfinite(gamma)) {
      res.spectral_radius = std::numeric_limits<double>::infinity();
      return res;
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c != r) A(r, c) = gamma * gains(k, active[c]) / direct;
    }
    b[r] = gamma * noise_power / direct;
  }
  res.spectral_radius = spectral_radius_nonnegative(A);
  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) - A;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  const Eigen::VectorXd p = lu.solve(b);
  // (I - A) p = b with b > 0 has a positive solution iff I - A is a nonsingular
  // M-matrix, i.e. iff rho(A) < 1; the sign test is exact where the power
  // iteration estimate is not.
  bool positive = p.allFinite();
  for (Eigen::Index r = 0; positive && r < n; ++r) positive = p[r] > 0.0;
  if (!positive) return res;
  res.sinr_feasible = true;
  res.powers = Eigen::VectorXd::Zero(K);
  for (Eigen::Index r = 0; r < n; ++r) res.powers[active[r]] = p[r];
  res.feasible = res.powers.sum() <= power_budget * (1.0 + kFeasibilityRelTol);
  return res;
}

PowerControlResult min_power_for_selection(const ProblemInstance& inst, const Ragged& selection) {
  return min_power_for_loads(inst.gains(), drone_loads(inst, selection), inst.time_budget, inst.bandwidth,
                             inst.noise_power, inst.power_budget);
}

nlohmann::json ragged_to_json(const Ragged& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : r) j.push_back(row);
  return j;
}

Ragged ragged_from_json(const nlohmann::json& j) {
  Ragged r;
  for (const auto& row : j) r.push_back(row.get<std::vector<double>>());
  return r;
}

nlohmann::json to_json(const ProblemInstance& inst) {
  nlohmann::json j;
  j["schema_version"] = kInstanceSchemaVersion;
  j["id"] = inst.id;
  j["time_budget_s"] = inst.time_budget;
  j["power_budget_w"] = inst.power_budget;
  j["noise_power_w"] = inst.noise_power;
  j["bandwidth_hz"] = inst.bandwidth;
  j["groups_per_drone"] = inst.groups_per_drone();
  j["utilities"] = ragged_to_json(inst.utilities);
  j["volumes_bits"] = ragged_to_json(inst.volumes);
  j["channel"] = to_json(inst.channel);
  return j;
}

ProblemInstance instance_from_json(const nlohmann::json& j) {
  ProblemInstance inst;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kInstanceSchemaVersion) {
      throw DataError("unsupported instance schema_version " + std::to_string(version));
    }
    inst.id = j.value("id", std::string{});
    inst.time_budget = j.at("time_budget_s").get<double>();
    inst.power_budget = j.at("power_budget_w").get<double>();
    inst.noise_power = j.at("noise_power_w").get<double>();
    inst.bandwidth = j.at("bandwidth_hz").get<double>();
    inst.utilities = ragged_from_json(j.at("utilities"));
    inst.volumes = ragged_from_json(j.at("volumes_bits"));
    inst.channel = channel_from_json(j.at("channel"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed problem instance: ") + e.what());
  }
  try {
    inst.validate();
  } catch (const DomainError& e) {
    throw DataError(std::string("invalid problem instance: ") + e.what());
  }
  return inst;
}

ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read instance file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  }
  return instance_from_json(j);
}

void save_instance(const ProblemInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write instance file '" + path + "'");
  out << to_json(inst).dump(1) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace lags
