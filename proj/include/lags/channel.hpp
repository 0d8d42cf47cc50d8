// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lags/kv_config.hpp"
#include "lags/rng.hpp"

namespace lags {

enum class Receiver { MRC, IRC };

std::string to_string(Receiver r);
Receiver receiver_from_string(const std::string& s);

/// Planar deployment and propagation constants. All fields are linear SI
/// units; dB inputs are converted when loading from a config file.
struct DeploymentConfig {
  int num_antennas = 8;
  int num_drones = 3;
  double area_side = 500.0;      // m, drones uniform in [-side/2, side/2]^2, server at origin
  double path_loss_ref = 1e-3;   // h0, -30 dB
  double extra_loss = 1e-2;      // omega, -20 dB
  double path_loss_exp = 2.0;    // alpha
  double rician_k = 10.0;        // 10 dB
  double noise_power = 1e-13;    // W, -100 dBm
  double bandwidth = 3e6;        // Hz
  double altitude = 0.0;         // m, 0 keeps distances planar
  double min_distance = 1.0;     // m
  Receiver receiver = Receiver::MRC;
  std::uint64_t rng_seed = 0;

  void validate() const;

  /// Overrides fields of `base` with the keys present in `cfg`.
  static DeploymentConfig from_config(const KeyValueConfig& cfg);
  static DeploymentConfig from_config(const KeyValueConfig& cfg, DeploymentConfig base);
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// One channel draw. `composite_gains(k, j) = |w_k^H h_j|^2` with unit-norm w_k.
struct ChannelRealization {
  std::vector<Point2> drone_positions;
  std::vector<Eigen::VectorXcd> channel_vectors;
  Receiver receiver = Receiver::MRC;
  Eigen::MatrixXd composite_gains;

  int num_drones() const { return static_cast<int>(channel_vectors.size()); }
};

/// Uniform linear array steering vector [1, e^{-j pi sin t}, ...].
Eigen::VectorXcd los_steering_vector(int num_antennas, double theta);

/// Rician channel of one drone at `distance` metres and arrival angle `theta`.
Eigen::VectorXcd rician_channel(const DeploymentConfig& cfg, double distance, double theta, Rng& rng);

/// Draws positions and channels for every drone and derives the composite gains
/// for `cfg.receiver`. Deterministic in `cfg.rng_seed`.
ChannelRealization draw_channels(const DeploymentConfig& cfg);
ChannelRealization draw_channels(const DeploymentConfig& cfg, Rng& rng);

Eigen::VectorXcd mrc_receiver(const std::vector<Eigen::VectorXcd>& h, int k);

/// Unit-norm w_k proportional to R_k^{-1} h_k, R_k = sum_{j!=k} h_j h_j^H + noise I.
Eigen::VectorXcd irc_receiver(const std::vector<Eigen::VectorXcd>& h, int k, double noise_power);

Eigen::MatrixXd composite_gains(const std::vector<Eigen::VectorXcd>& h, Receiver receiver, double noise_power);

/// Builds a realization from given channel vectors (positions left empty
/// unless supplied).
ChannelRealization make_realization(std::vector<Eigen::VectorXcd> h, Receiver receiver, double noise_power,
                                    std::vector<Point2> positions = {});

/// SINR of drone k under gains H and powers p.
double sinr(const Eigen::MatrixXd& gains, const Eigen::VectorXd& p, double noise_power, int k);

/// R_k = B log2(1 + SINR_k) in bit/s.
Eigen::VectorXd compute_rates(const Eigen::MatrixXd& gains, const Eigen::VectorXd& p, double noise_power,
                              double bandwidth);
Eigen::VectorXd compute_rates(const ChannelRealization& real, const Eigen::VectorXd& p, double noise_power,
                              double bandwidth);

nlohmann::json to_json(const ChannelRealization& real);
ChannelRealization channel_from_json(const nlohmann::json& j);

}  // namespace lags
