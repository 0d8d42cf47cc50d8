// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "lags/gs_utility.hpp"
#include "lags/hgnn.hpp"
#include "lags/instance_generator.hpp"
#include "lags/solvers.hpp"
#include "lags/trainer.hpp"

using namespace lags;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o, double seconds) {
  std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- gradients

Outcome gradient_fidelity() {
  ScenarioConfig sc = ScenarioConfig::desk();
  sc.deployment.num_drones = 2;
  sc.deployment.num_antennas = 4;
  sc.groups_per_drone = {2, 2};
  const auto insts = generate_dataset(sc, 5, 2);
  // Six message-passing layers as in the full model, at reduced width so that
  // every parameter can be perturbed within the time limit.
  HgnnConfig hc;
  hc.hidden_dims = {4, 5, 6, 5, 4, 3};
  GwHgnn model(hc, 3);
  const std::vector<double> mu = {0.01, 0.02};
  const std::vector<const ProblemInstance*> ptrs{&insts[0], &insts[1]};
  const auto batch = GraphBatch::build(ptrs, hc);

  auto loss_value = [&] {
    ad::Tape t(false);
    const auto o = model.forward(t, batch);
    return lagrangian_loss(t, batch, o.powers, o.selection, mu, 0.1).loss.item();
  };
  model.parameters().zero_grad();
  {
    ad::Tape t;
    const auto o = model.forward(t, batch);
    t.backward(lagrangian_loss(t, batch, o.powers, o.selection, mu, 0.1).loss);
  }
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t total = 0, bad = 0;
  auto& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& T = ps[i];
    for (Eigen::Index j = 0; j < T.size(); ++j) {
      const double g = T.has_grad() ? T.grad().data()[j] : 0.0;
      const double orig = T.value().data()[j];
      T.value().data()[j] = orig + h;
      const double up = loss_value();
      T.value().data()[j] = orig - h;
      const double down = loss_value();
      T.value().data()[j] = orig;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
      worst = std::max(worst, rel);
      ++total;
      if (rel > 1e-4) ++bad;
    }
  }
  return {bad == 0, fmt("%zu/%zu parameters within 1e-4, worst relative error %.2e", total - bad, total, worst)};
}

// -------------------------------------------------------------- equivariance

ProblemInstance permute(const ProblemInstance& inst, const std::vector<int>& perm,
                        const std::vector<std::vector<int>>& group_perm) {
  ProblemInstance out = inst;
  const int K = inst.num_drones();
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) out.channel.composite_gains(a, b) = inst.channel.composite_gains(perm[a], perm[b]);
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

Outcome equivariance() {
  GwHgnn model(HgnnConfig{}, 21);
  Rng rng(22);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ScenarioConfig sc = ScenarioConfig::desk();
    const int K = 2 + static_cast<int>(rng.below(3));
    sc.deployment.num_drones = K;
    sc.groups_per_drone.clear();
    for (int k = 0; k < K; ++k) sc.groups_per_drone.push_back(1 + static_cast<int>(rng.below(4)));
    const auto inst = generate_instance(sc, rng);
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<int>> gp(K);
    for (int k = 0; k < K; ++k) {
      gp[k].resize(inst.groups(k));
      std::iota(gp[k].begin(), gp[k].end(), 0);
      std::shuffle(gp[k].begin(), gp[k].end(), rng);
    }
    const Allocation a = model.infer(inst);
    const Allocation b = model.infer(permute(inst, perm, gp));
    for (int k = 0; k < K; ++k) {
      worst = std::max(worst, std::abs(b.powers[k] - a.powers[perm[k]]));
      for (int i = 0; i < inst.groups(perm[k]); ++i) {
        worst = std::max(worst, std::abs(b.selection[k][i] - a.selection[perm[k]][gp[perm[k]][i]]));
      }
    }
  }
  return {worst <= 1e-9, fmt("max abs deviation %.2e over 100 instances", worst)};
}

// -------------------------------------------------------------- power oracle

Outcome power_oracle() {
  Rng rng(31);
  // Alternate receivers and inflate the volumes so that both verdicts occur.
  ScenarioConfig irc = ScenarioConfig::desk();
  ScenarioConfig mrc = irc;
  mrc.deployment.receiver = Receiver::MRC;
  int feasible_checked = 0, infeasible_checked = 0, mismatched = 0;
  double worst = 0.0;
  std::uint64_t index = 0;
  while (feasible_checked < 500 && index < 100000) {
    auto inst = generate_indexed(index % 2 ? mrc : irc, 32, index);
    ++index;
    const double inflate = std::pow(10.0, rng.uniform(0.0, 1.0));
    for (auto& row : inst.volumes) {
      for (double& q : row) q *= inflate;
    }
    const std::uint64_t mask = rng.below(std::uint64_t{1} << inst.total_groups());
    const Ragged x = selection_from_mask(inst, mask);
    const auto pc = min_power_for_selection(inst, x);
    const Eigen::VectorXd load = drone_loads(inst, x);
    Eigen::VectorXd gamma(inst.num_drones());
    for (int k = 0; k < inst.num_drones(); ++k) {
      gamma[k] = std::exp2(load[k] / (inst.time_budget * inst.bandwidth)) - 1.0;
    }
    const auto fp = testing::fixed_point_iteration(inst.gains(), gamma, inst.noise_power);
    if (pc.sinr_feasible != fp.converged) {
      ++mismatched;
      continue;
    }
    if (!pc.sinr_feasible) {
      ++infeasible_checked;
      continue;
    }
    for (int k = 0; k < inst.num_drones(); ++k) {
      if (fp.powers[k] == 0.0 && pc.powers[k] == 0.0) continue;
      worst = std::max(worst, std::abs(pc.powers[k] - fp.powers[k]) / std::abs(fp.powers[k]));
    }
    ++feasible_checked;
  }
  const bool ok = feasible_checked == 500 && mismatched == 0 && worst <= 1e-8;
  return {ok, fmt("%d feasible selections, worst relative error %.2e; %d infeasible agreed, %d verdict mismatches",
                  feasible_checked, worst, infeasible_checked, mismatched)};
}

// ------------------------------------------------------- training + baselines

struct Trained {
  GwHgnn model;
  EpochRecord last;
  double seconds = 0.0;
  int epochs = 0;
};

Trained train_desk() {
  const ScenarioConfig sc = ScenarioConfig::desk();
  TrainConfig tc = TrainConfig::desk();
  tc.seed = 1;
  const auto validation = generate_dataset(sc, 777, static_cast<std::size_t>(tc.validation_size));
  GeneratorSource source(sc);
  const auto start = Clock::now();
  Trainer trainer(tc, GwHgnn(HgnnConfig{}, 1), source, validation);
  trainer.set_validation_jobs(1);
  EpochRecord last;
  trainer.train([&](const EpochRecord& r) {
    last = r;
    std::printf("  epoch %2d loss %9.3f val %.3f pre-repair violations %.3f\n", r.epoch, r.train_loss,
                r.validation.objective_repaired, r.validation.violation_rate);
    std::fflush(stdout);
  });
  return {trainer.model(), last, seconds_since(start), tc.epochs};
}

Outcome oracle_dominance(GwHgnn& model) {
  const auto data = generate_dataset(ScenarioConfig::desk(), 41, 200);
  int below = 0, infeasible = 0;
  for (const auto& inst : data) {
    const auto best = brute_force_oracle(inst);
    if (!best.feasible) ++infeasible;
    const SolverResult others[] = {gw1_sumrate(inst), gw2_greedy(inst), drone_granularity(inst),
                                   channel_blind(inst, default_blind_budget_bits(inst)),
                                   threshold_and_repair(inst, model.infer(inst))};
    for (const auto& r : others) {
      if (!r.feasible) ++infeasible;
      if (r.objective > best.objective * (1.0 + 1e-12)) ++below;
    }
  }
  return {below == 0 && infeasible == 0,
          fmt("200 instances, %d baseline wins over the oracle, %d infeasible outputs", below, infeasible)};
}

Outcome policy_quality(GwHgnn& model, const Trained& t) {
  const auto test = generate_dataset(ScenarioConfig::desk(), 999, 100);
  double oracle = 0, policy = 0, gw1 = 0, blind = 0;
  for (const auto& inst : test) {
    oracle += brute_force_oracle(inst).objective;
    policy += threshold_and_repair(inst, model.infer(inst)).objective;
    gw1 += gw1_sumrate(inst).objective;
    blind += channel_blind(inst, default_blind_budget_bits(inst)).objective;
  }
  const double ratio = policy / oracle;
  const bool ok = t.seconds <= 900.0 && ratio >= 0.8 && policy > gw1 && policy > blind;
  return {ok, fmt("policy %.3f = %.1f%% of oracle %.3f; gw1 %.3f, channel-blind %.3f; trained %d epochs in %.0f s",
                  policy / 100, 100 * ratio, oracle / 100, gw1 / 100, blind / 100, t.epochs, t.seconds)};
}

Outcome constraint_behaviour(const Trained& t) {
  const auto& v = t.last.validation;
  return {v.violation_rate < 0.05 && v.repaired_violation_rate == 0.0,
          fmt("final pre-repair violation rate %.3f, post-repair %.3f", v.violation_rate, v.repaired_violation_rate)};
}

// ------------------------------------------------------------------- latency

Outcome latency() {
  const ScenarioConfig sc = ScenarioConfig::paper();
  const auto inst = generate_indexed(sc, 51, 0);
  GwHgnn model(HgnnConfig{}, 52);
  auto once = [&] {
    const auto t = Clock::now();
    const auto r = threshold_and_repair(inst, model.infer(inst));
    (void)r;
    return seconds_since(t);
  };
  for (int i = 0; i < 10; ++i) once();
  std::vector<double> times;
  for (int i = 0; i < 100; ++i) times.push_back(once());
  std::nth_element(times.begin(), times.begin() + 50, times.end());
  const double median = times[50];
  const auto t = Clock::now();
  brute_force_oracle(inst, 1);
  const double oracle = seconds_since(t);
  const double speedup = oracle / median;
  return {median < 0.010 && speedup >= 100.0,
          fmt("median %.3f ms at K=5, 20 groups, N=64; oracle %.2f s, speedup %.0fx", 1e3 * median, oracle, speedup)};
}

// ------------------------------------------------------------------- GS loss

Outcome gs_unit() {
  Rng rng(61);
  double worst_loss = 0.0, worst_ssim = 0.0;
  for (int n = 0; n < 10; ++n) {
    Image img(24 + 3 * n, 20 + 2 * n, n % 2 ? 3 : 1);
    for (double& v : img.pixels) v = rng.uniform();
    worst_loss = std::max(worst_loss, std::abs(gs_loss(img, img)));
    worst_ssim = std::max(worst_ssim, std::abs(ssim(img, img) - 1.0));
  }
  double worst_mix = 0.0;
  const double c1 = kSsimK1 * kSsimK1;
  for (double a : {0.0, 0.25, 0.7}) {
    for (double b : {0.1, 1.0}) {
      const Image ia(16, 16, 1, a), ib(16, 16, 1, b);
      const double s = (2 * a * b + c1) / (a * a + b * b + c1);
      const double expected = 0.8 * std::abs(a - b) + 0.2 * (1.0 - s);
      worst_mix = std::max(worst_mix, std::abs(gs_loss(ia, ib) - expected));
    }
  }
  return {worst_loss <= 1e-12 && worst_ssim <= 1e-12 && worst_mix <= 1e-12,
          fmt("|gs_loss(v,v)| <= %.1e, |ssim(v,v)-1| <= %.1e, constant-image mixture error %.1e", worst_loss, worst_ssim,
              worst_mix)};
}

// --------------------------------------------------------- far-drone fixture

Outcome far_drone() {
  Eigen::MatrixXd H(2, 2);
  H << 1e-8, 0.0, 0.0, 1e-11;
  const auto inst =
      testing::instance_from_gains(H, {{1.0, 1.0}, {5.0, 5.0}}, {{100e6, 100e6}, {400e6, 400e6}});
  const auto oracle = brute_force_oracle(inst);
  const auto stt = drone_granularity(inst);
  return {oracle.objective > stt.objective, fmt("groupwise %.2f vs drone granularity %.2f", oracle.objective,
                                                stt.objective)};
}

template <class Fn>
void run(int id, const char* title, Fn&& fn) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, title, o, seconds_since(start));
}

}  // namespace

int main() {
  run(1, "gradient fidelity", gradient_fidelity);
  run(2, "permutation equivariance", equivariance);
  run(3, "power-control oracle", power_oracle);

  std::printf("  training the desk preset...\n");
  std::fflush(stdout);
  Trained trained{GwHgnn(HgnnConfig{}, 0), {}, 0.0, 0};
  bool trained_ok = true;
  std::string train_error;
  try {
    trained = train_desk();
  } catch (const std::exception& e) {
    trained_ok = false;
    train_error = e.what();
  }
  auto needs_training = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!trained_ok) return {false, "training failed: " + train_error};
      return fn();
    };
  };
  run(4, "oracle dominance", needs_training([&] { return oracle_dominance(trained.model); }));
  run(5, "learned-policy quality", needs_training([&] { return policy_quality(trained.model, trained); }));
  run(6, "constraint behaviour", needs_training([&] { return constraint_behaviour(trained); }));
  run(7, "inference latency", latency);
  run(8, "gs loss", gs_unit);
  run(9, "groupwise vs drone granularity", far_drone);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
