// SPDX-License-Identifier: Apache-2.0
#include "lags/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "lags/error.hpp"
#include "lags/parallel.hpp"
#include "lags/rng.hpp"

namespace lags {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SolverResult finish(const ProblemInstance& inst, Ragged selection, Eigen::VectorXd powers, std::string name,
                    Clock::time_point start) {
  SolverResult r;
  r.allocation.selection = std::move(selection);
  r.allocation.powers = std::move(powers);
  r.objective = objective(inst, r.allocation);
  r.feasible = check_constraints(inst, r.allocation).feasible();
  r.solver_name = std::move(name);
  r.wall_time = seconds_since(start);
  return r;
}

struct GroupRef {
  int drone;
  int group;
};

std::vector<GroupRef> flatten(const ProblemInstance& inst) {
  std::vector<GroupRef> out;
  for (int k = 0; k < inst.num_drones(); ++k) {
    for (int i = 0; i < inst.groups(k); ++i) out.push_back({k, i});
  }
  return out;
}

// Utility descending, then smaller volume, then flattened order.
std::vector<GroupRef> by_utility(const ProblemInstance& inst) {
  auto groups = flatten(inst);
  std::stable_sort(groups.begin(), groups.end(), [&](const GroupRef& a, const GroupRef& b) {
    const double pa = inst.utilities[a.drone][a.group];
    const double pb = inst.utilities[b.drone][b.group];
    if (pa != pb) return pa > pb;
    return inst.volumes[a.drone][a.group] < inst.volumes[b.drone][b.group];
  });
  return groups;
}

Eigen::VectorXd min_powers_or_zero(const PowerControlResult& pc, int K) {
  return pc.feasible ? pc.powers : Eigen::VectorXd::Zero(K);
}

struct Candidate {
  double objective = -1.0;
  int count = 0;
  std::uint64_t mask = 0;
  bool valid = false;
};

// Higher objective, then fewer groups, then lexicographically smaller x
// (the first differing flattened position is 0 in the winner).
bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.count != b.count) return a.count < b.count;
  const std::uint64_t diff = a.mask ^ b.mask;
  if (diff == 0) return false;
  const std::uint64_t lowest = diff & (~diff + 1);
  return (a.mask & lowest) == 0;
}

// Exhaustive search over `masks` where bit b of a mask selects block b.
// `expand` turns a block mask into the flattened group mask.
template <class Expand>
Candidate enumerate(const ProblemInstance& inst, std::uint64_t num_masks, int jobs, Expand expand) {
  const int K = inst.num_drones();
  std::vector<int> offset(K + 1, 0);
  for (int k = 0; k < K; ++k) offset[k + 1] = offset[k] + inst.groups(k);
  // Per-drone tables of load and utility for every subset of that drone's groups.
  std::vector<std::vector<double>> load_table(K), utility_table(K);
  for (int k = 0; k < K; ++k) {
    const std::size_t n = std::size_t{1} << inst.groups(k);
    load_table[k].assign(n, 0.0);
    utility_table[k].assign(n, 0.0);
    for (std::size_t s = 1; s < n; ++s) {
      const int i = std::countr_zero(s);
      const std::size_t rest = s & (s - 1);
      load_table[k][s] = load_table[k][rest] + inst.volumes[k][i];
      utility_table[k][s] = utility_table[k][rest] + inst.utilities[k][i];
    }
  }
  const int chunks = std::max(1, jobs);
  std::vector<Candidate> best(chunks);
  parallel_for(static_cast<std::size_t>(chunks), jobs, [&](std::size_t c) {
    const std::uint64_t lo = num_masks * c / chunks;
    const std::uint64_t hi = num_masks * (c + 1) / chunks;
    Eigen::VectorXd loads(K);
    Candidate local;
    for (std::uint64_t block = lo; block < hi; ++block) {
      const std::uint64_t mask = expand(block);
      Candidate cand;
      cand.mask = mask;
      cand.count = std::popcount(mask);
      cand.objective = 0.0;
      for (int k = 0; k < K; ++k) {
        const std::uint64_t sub = (mask >> offset[k]) & ((std::uint64_t{1} << inst.groups(k)) - 1);
        loads[k] = load_table[k][sub];
        cand.objective += utility_table[k][sub];
      }
      const auto pc = min_power_for_loads(inst.gains(), loads, inst.time_budget, inst.bandwidth, inst.noise_power,
                                          inst.power_budget);
      cand.valid = pc.feasible;
      if (better(cand, local)) local = cand;
    }
    best[c] = local;
  });
  Candidate overall;
  for (const auto& c : best) {
    if (better(c, overall)) overall = c;
  }
  return overall;
}

}  // namespace

nlohmann::json to_json(const SolverResult& r) {
  nlohmann::json j;
  j["solver"] = r.solver_name;
  j["objective"] = r.objective;
  j["feasible"] = r.feasible;
  j["wall_time_s"] = r.wall_time;
  j["selection"] = ragged_to_json(r.allocation.selection);
  j["powers_w"] = std::vector<double>(r.allocation.powers.data(), r.allocation.powers.data() + r.allocation.powers.size());
  return j;
}

Ragged selection_from_mask(const ProblemInstance& inst, std::uint64_t mask) {
  Ragged x = zeros_like(inst.utilities);
  int bit = 0;
  for (int k = 0; k < inst.num_drones(); ++k) {
    for (int i = 0; i < inst.groups(k); ++i, ++bit) x[k][i] = (mask >> bit) & 1U ? 1.0 : 0.0;
  }
  return x;
}

SolverResult brute_force_oracle(const ProblemInstance& inst, int jobs) {
  const auto start = Clock::now();
  inst.validate();
  const int total = inst.total_groups();
  if (total > kMaxEnumeratedGroups) {
    throw SizeError("brute-force oracle refuses " + std::to_string(total) + " groups (limit " +
                    std::to_string(kMaxEnumeratedGroups) + ")");
  }
  const Candidate best = enumerate(inst, std::uint64_t{1} << total, jobs, [](std::uint64_t m) { return m; });
  Ragged x = selection_from_mask(inst, best.mask);
  const auto pc = min_power_for_selection(inst, x);
  return finish(inst, std::move(x), min_powers_or_zero(pc, inst.num_drones()), "oracle", start);
}

SolverResult drone_granularity(const ProblemInstance& inst) {
  const auto start = Clock::now();
  inst.validate();
  const int K = inst.num_drones();
  if (K > kMaxEnumeratedGroups) {
    throw SizeError("drone-granularity search refuses " + std::to_string(K) + " drones");
  }
  if (inst.total_groups() > 64) throw SizeError("drone-granularity search supports at most 64 groups");
  std::vector<std::uint64_t> block(K);
  int offset = 0;
  for (int k = 0; k < K; ++k) {
    block[k] = ((std::uint64_t{1} << inst.groups(k)) - 1) << offset;
    offset += inst.groups(k);
  }
  const Candidate best = enumerate(inst, std::uint64_t{1} << K, 1, [&](std::uint64_t drones) {
    std::uint64_t m = 0;
    for (int k = 0; k < K; ++k) {
      if ((drones >> k) & 1U) m |= block[k];
    }
    return m;
  });
  Ragged x = selection_from_mask(inst, best.mask);
  const auto pc = min_power_for_selection(inst, x);
  return finish(inst, std::move(x), min_powers_or_zero(pc, K), "stt", start);
}

namespace {

// Drops the lowest-utility selected group of each violating drone until its
// load fits the capacity implied by the fixed powers.
void repair_in_place(const ProblemInstance& inst, Ragged& x, const Eigen::VectorXd& powers) {
  const Eigen::VectorXd capacity =
      inst.time_budget * compute_rates(inst.gains(), powers, inst.noise_power, inst.bandwidth);
  for (int k = 0; k < inst.num_drones(); ++k) {
    std::vector<int> order(inst.groups(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (inst.utilities[k][a] != inst.utilities[k][b]) return inst.utilities[k][a] < inst.utilities[k][b];
      return inst.volumes[k][a] > inst.volumes[k][b];
    });
    double load = 0.0;
    for (int i = 0; i < inst.groups(k); ++i) load += x[k][i] * inst.volumes[k][i];
    for (int i : order) {
      if (load <= capacity[k] * (1.0 + kFeasibilityRelTol)) break;
      if (x[k][i] == 0.0) continue;
      x[k][i] = 0.0;
      load -= inst.volumes[k][i];
    }
    if (load > capacity[k] * (1.0 + kFeasibilityRelTol)) std::fill(x[k].begin(), x[k].end(), 0.0);
  }
}

}  // namespace

SolverResult threshold_and_repair(const ProblemInstance& inst, const Allocation& relaxed, const RepairOptions& opts) {
  const auto start = Clock::now();
  const int K = inst.num_drones();
  if (relaxed.powers.size() != K) throw DomainError("relaxed allocation has the wrong number of powers");
  Eigen::VectorXd powers = relaxed.powers.cwiseMax(0.0);
  if (powers.sum() > inst.power_budget) powers *= inst.power_budget / powers.sum();
  Ragged x = binarize(relaxed.selection, opts.threshold);
  repair_in_place(inst, x, powers);
  if (opts.reoptimize_power) {
    const auto pc = min_power_for_selection(inst, x);
    if (pc.feasible) powers = pc.powers;
  }
  return finish(inst, std::move(x), std::move(powers), "repair", start);
}

SolverResult gw2_greedy(const ProblemInstance& inst, int budget) {
  const auto start = Clock::now();
  if (budget < 0) throw DomainError("greedy budget must be nonnegative");
  const auto order = by_utility(inst);
  std::vector<GroupRef> chosen(order.begin(), order.begin() + std::min<std::size_t>(order.size(), budget));
  Ragged x = zeros_like(inst.utilities);
  for (const auto& g : chosen) x[g.drone][g.group] = 1.0;
  auto pc = min_power_for_selection(inst, x);
  while (!pc.feasible && !chosen.empty()) {
    x[chosen.back().drone][chosen.back().group] = 0.0;
    chosen.pop_back();
    pc = min_power_for_selection(inst, x);
  }
  return finish(inst, std::move(x), min_powers_or_zero(pc, inst.num_drones()), "gw2", start);
}

namespace {

double sum_log_rate(const Eigen::MatrixXd& H, const Eigen::VectorXd& p, double noise) {
  double total = 0.0;
  for (int k = 0; k < p.size(); ++k) total += std::log2(1.0 + sinr(H, p, noise, k));
  return total;
}

Eigen::VectorXd sum_log_rate_gradient(const Eigen::MatrixXd& H, const Eigen::VectorXd& p, double noise) {
  const auto K = p.size();
  Eigen::VectorXd interference(K), total(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    interference[k] = noise;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (j != k) interference[k] += H(k, j) * p[j];
    }
    total[k] = interference[k] + H(k, k) * p[k];
  }
  Eigen::VectorXd grad(K);
  for (Eigen::Index m = 0; m < K; ++m) {
    double g = H(m, m) / total[m];
    for (Eigen::Index k = 0; k < K; ++k) {
      if (k != m) g += H(k, m) * (1.0 / total[k] - 1.0 / interference[k]);
    }
    grad[m] = g / std::numbers::ln2;
  }
  return grad;
}

// Euclidean projection onto {p >= 0, sum p <= budget}.
Eigen::VectorXd project_budget(Eigen::VectorXd p, double budget) {
  p = p.cwiseMax(0.0);
  if (p.sum() <= budget) return p;
  std::vector<double> u(p.data(), p.data() + p.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - budget) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (p.array() - theta).cwiseMax(0.0).matrix();
}

}  // namespace

Eigen::VectorXd max_sum_rate_powers(const ProblemInstance& inst, const SumRateOptions& opts) {
  const int K = inst.num_drones();
  const auto& H = inst.gains();
  const double budget = inst.power_budget;
  Rng rng(opts.seed);
  Eigen::VectorXd best = Eigen::VectorXd::Constant(K, budget / K);
  double best_value = sum_log_rate(H, best, inst.noise_power);
  for (int s = 0; s < std::max(1, opts.starts); ++s) {
    Eigen::VectorXd p(K);
    if (s == 0) {
      p.setConstant(budget / K);
    } else {
      for (int k = 0; k < K; ++k) p[k] = -std::log(1.0 - rng.uniform());  // Dirichlet(1) on the budget simplex
      p *= budget / p.sum();
    }
    double value = sum_log_rate(H, p, inst.noise_power);
    double step = budget * budget;
    for (int it = 0; it < opts.iterations; ++it) {
      const Eigen::VectorXd g = sum_log_rate_gradient(H, p, inst.noise_power);
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Eigen::VectorXd cand = project_budget(p + step * g, budget);
        const double cv = sum_log_rate(H, cand, inst.noise_power);
        if (cv >= value + 1e-4 * g.dot(cand - p)) {
          moved = (cand - p).norm() > 1e-15 * budget;
          p = cand;
          value = cv;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      step *= 2.0;
    }
    if (value > best_value) {
      best_value = value;
      best = p;
    }
  }
  return best;
}

SolverResult gw1_sumrate(const ProblemInstance& inst, const SumRateOptions& opts) {
  const auto start = Clock::now();
  inst.validate();
  const Eigen::VectorXd powers = max_sum_rate_powers(inst, opts);
  const Eigen::VectorXd capacity =
      inst.time_budget * compute_rates(inst.gains(), powers, inst.noise_power, inst.bandwidth);
  Ragged x = zeros_like(inst.utilities);
  for (int k = 0; k < inst.num_drones(); ++k) {
    std::vector<int> order(inst.groups(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return inst.volumes[k][a] > inst.volumes[k][b]; });
    double load = 0.0;
    for (int i : order) {
      if (load + inst.volumes[k][i] <= capacity[k] * (1.0 + kFeasibilityRelTol)) {
        x[k][i] = 1.0;
        load += inst.volumes[k][i];
      }
    }
  }
  return finish(inst, std::move(x), powers, "gw1", start);
}

double default_blind_budget_bits(const ProblemInstance& inst) {
  return inst.num_drones() * inst.time_budget * inst.bandwidth * kBlindNominalSpectralEfficiency;
}

SolverResult channel_blind(const ProblemInstance& inst, double budget_bits) {
  const auto start = Clock::now();
  if (!(budget_bits >= 0.0)) throw DomainError("channel-blind budget must be nonnegative");
  Ragged x = zeros_like(inst.utilities);
  double total = 0.0;
  for (const auto& g : by_utility(inst)) {
    const double q = inst.volumes[g.drone][g.group];
    if (total + q > budget_bits) break;
    x[g.drone][g.group] = 1.0;
    total += q;
  }
  const Eigen::VectorXd powers = Eigen::VectorXd::Constant(inst.num_drones(), inst.power_budget / inst.num_drones());
  repair_in_place(inst, x, powers);
  return finish(inst, std::move(x), powers, "blind", start);
}

}  // namespace lags
