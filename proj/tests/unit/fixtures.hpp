// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "lags/problem.hpp"

namespace lags::testing {

/// Instance built directly from a composite gain matrix; channel vectors are
/// left empty because only the gains enter the problem.
inline ProblemInstance instance_from_gains(const Eigen::MatrixXd& gains, Ragged utilities, Ragged volumes,
                                           double time_budget = 50.0, double power_budget = 0.1,
                                           double noise_power = 1e-13, double bandwidth = 3e6) {
  ProblemInstance inst;
  inst.id = "fixture";
  inst.utilities = std::move(utilities);
  inst.volumes = std::move(volumes);
  inst.time_budget = time_budget;
  inst.power_budget = power_budget;
  inst.noise_power = noise_power;
  inst.bandwidth = bandwidth;
  inst.channel.composite_gains = gains;
  inst.channel.receiver = Receiver::MRC;
  const auto K = gains.rows();
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(1);
    h[0] = std::sqrt(gains(k, k));
    inst.channel.channel_vectors.push_back(h);
  }
  return inst;
}

/// Bits that a drone can move in `time_budget` at the given SINR.
inline double bits_at_sinr(double sinr, double time_budget = 50.0, double bandwidth = 3e6) {
  return time_budget * bandwidth * std::log2(1.0 + sinr);
}

/// Outcome of iterating p <- D (H_off p + n) from p = 0, with D = diag(gamma / H_kk).
struct FixedPointResult {
  bool converged = false;
  double contraction = 0.0;  // ratio of the last two increments
  Eigen::VectorXd powers;    // last iterate plus the geometric tail estimate
};

/// The iterates increase monotonically; their increments shrink by the
/// Perron root of D H_off, so the last increment ratio tells convergence from
/// divergence and gives the remaining geometric tail.
inline FixedPointResult fixed_point_iteration(const Eigen::MatrixXd& H, const Eigen::VectorXd& gamma, double noise,
                                              int steps = 10000) {
  const auto K = H.rows();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(K);
  double prev_step = 0.0, step = 0.0;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(K);
  for (int s = 0; s < steps; ++s) {
    Eigen::VectorXd next(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      double interference = noise;
      for (Eigen::Index j = 0; j < K; ++j) {
        if (j != k) interference += H(k, j) * p[j];
      }
      next[k] = gamma[k] * interference / H(k, k);
    }
    delta = next - p;
    prev_step = step;
    step = delta.norm();
    p = next;
    if (!p.allFinite() || step == 0.0) break;
  }
  FixedPointResult r;
  r.contraction = prev_step > 0.0 ? step / prev_step : 0.0;
  r.converged = p.allFinite() && r.contraction < 1.0 - 1e-12;
  r.powers = p;
  if (r.converged && step > 0.0) r.powers += delta * (r.contraction / (1.0 - r.contraction));
  return r;
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

}  // namespace lags::testing
