// SPDX-License-Identifier: Apache-2.0
#include "lags/channel.hpp"

#include <cmath>
#include <numbers>

#include "lags/error.hpp"

namespace lags {

std::string to_string(Receiver r) { return r == Receiver::MRC ? "MRC" : "IRC"; }

Receiver receiver_from_string(const std::string& s) {
  if (s == "MRC" || s == "mrc") return Receiver::MRC;
  if (s == "IRC" || s == "irc") return Receiver::IRC;
  throw ConfigError("unknown receiver '" + s + "' (expected mrc or irc)");
}

void DeploymentConfig::validate() const {
  if (num_antennas < 1) throw ConfigError("num_antennas must be >= 1");
  if (num_drones < 1) throw ConfigError("num_drones must be >= 1");
  if (!(area_side > 0.0)) throw ConfigError("area_side must be positive");
  if (!(path_loss_ref > 0.0)) throw ConfigError("path_loss_ref must be positive");
  if (!(extra_loss > 0.0)) throw ConfigError("extra_loss must be positive");
  if (!(path_loss_exp >= 0.0)) throw ConfigError("path_loss_exp must be nonnegative");
  if (!(rician_k > 0.0)) throw ConfigError("rician_k must be positive");
  if (!(noise_power > 0.0)) throw ConfigError("noise_power must be positive");
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  if (!(min_distance > 0.0)) throw ConfigError("min_distance must be positive");
  if (!(altitude >= 0.0)) throw ConfigError("altitude must be nonnegative");
}

DeploymentConfig DeploymentConfig::from_config(const KeyValueConfig& cfg) { return from_config(cfg, DeploymentConfig{}); }

DeploymentConfig DeploymentConfig::from_config(const KeyValueConfig& cfg, DeploymentConfig base) {
  if (auto v = cfg.get_int("num_antennas")) base.num_antennas = static_cast<int>(*v);
  if (auto v = cfg.get_int("num_drones")) base.num_drones = static_cast<int>(*v);
  if (auto v = cfg.get_double("area_side")) base.area_side = *v;
  if (auto v = cfg.get_ratio("path_loss_ref")) base.path_loss_ref = *v;
  if (auto v = cfg.get_ratio("extra_loss")) base.extra_loss = *v;
  if (auto v = cfg.get_double("path_loss_exp")) base.path_loss_exp = *v;
  if (auto v = cfg.get_ratio("rician_k")) base.rician_k = *v;
  if (auto v = cfg.get_power("noise_power")) base.noise_power = *v;
  if (auto v = cfg.get_double("bandwidth")) base.bandwidth = *v;
  if (auto v = cfg.get_double("altitude")) base.altitude = *v;
  if (auto v = cfg.get_double("min_distance")) base.min_distance = *v;
  if (auto v = cfg.get_string("receiver")) base.receiver = receiver_from_string(*v);
  if (auto v = cfg.get_int("seed")) base.rng_seed = static_cast<std::uint64_t>(*v);
  base.validate();
  return base;
}

Eigen::VectorXcd los_steering_vector(int num_antennas, double theta) {
  Eigen::VectorXcd v(num_antennas);
  const double phase = -std::numbers::pi * std::sin(theta);
  for (int n = 0; n < num_antennas; ++n) v[n] = std::polar(1.0, phase * n);
  return v;
}

Eigen::VectorXcd rician_channel(const DeploymentConfig& cfg, double distance, double theta, Rng& rng) {
  const double d = std::max(distance, cfg.min_distance);
  const double large_scale = std::sqrt(cfg.path_loss_ref * cfg.extra_loss * std::pow(d, -cfg.path_loss_exp));
  const double los_w = std::sqrt(cfg.rician_k / (cfg.rician_k + 1.0));
  const double nlos_w = std::sqrt(1.0 / (cfg.rician_k + 1.0));
  Eigen::VectorXcd h = los_w * los_steering_vector(cfg.num_antennas, theta);
  // CN(0, 1): real and imaginary parts each N(0, 1/2).
  for (int n = 0; n < cfg.num_antennas; ++n) {
    const double re = rng.normal();
    const double im = rng.normal();
    h[n] += nlos_w * std::complex<double>(re, im) * std::sqrt(0.5);
  }
  return large_scale * h;
}

ChannelRealization draw_channels(const DeploymentConfig& cfg) {
  Rng rng(cfg.rng_seed);
  return draw_channels(cfg, rng);
}

ChannelRealization draw_channels(const DeploymentConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Point2> positions;
  std::vector<Eigen::VectorXcd> channels;
  positions.reserve(cfg.num_drones);
  channels.reserve(cfg.num_drones);
  const double half = cfg.area_side / 2.0;
  for (int k = 0; k < cfg.num_drones; ++k) {
    Point2 pos{rng.uniform(-half, half), rng.uniform(-half, half)};
    const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double dist = std::sqrt(pos.x * pos.x + pos.y * pos.y + cfg.altitude * cfg.altitude);
    channels.push_back(rician_channel(cfg, dist, theta, rng));
    positions.push_back(pos);
  }
  return make_realization(std::move(channels), cfg.receiver, cfg.noise_power, std::move(positions));
}

Eigen::VectorXcd mrc_receiver(const std::vector<Eigen::VectorXcd>& h, int k) {
  if (k < 0 || k >= static_cast<int>(h.size())) throw DomainError("drone index out of range");
  const double norm = h[k].norm();
  if (!(norm > 0.0)) throw DegenerateChannelError("drone " + std::to_string(k) + " has a zero channel vector");
  return h[k] / norm;
}

Eigen::VectorXcd irc_receiver(const std::vector<Eigen::VectorXcd>& h, int k, double noise_power) {
  if (k < 0 || k >= static_cast<int>(h.size())) throw DomainError("drone index out of range");
  if (!(noise_power > 0.0)) throw DomainError("IRC needs a positive noise power");
  const auto n = h[k].size();
  Eigen::MatrixXcd cov = noise_power * Eigen::MatrixXcd::Identity(n, n);
  for (int j = 0; j < static_cast<int>(h.size()); ++j) {
    if (j != k) cov.noalias() += h[j] * h[j].adjoint();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw NumericalError("IRC covariance of drone " + std::to_string(k) + " is ill-conditioned (cond = " +
                         std::to_string(hi / lo) + ")");
  }
  Eigen::LLT<Eigen::MatrixXcd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("Cholesky factorization of the IRC covariance failed for drone " + std::to_string(k));
  }
  Eigen::VectorXcd w = llt.solve(h[k]);
  const double norm = w.norm();
  if (!(norm > 0.0)) throw DegenerateChannelError("drone " + std::to_string(k) + " has a zero channel vector");
  return w / norm;
}

Eigen::MatrixXd composite_gains(const std::vector<Eigen::VectorXcd>& h, Receiver receiver, double noise_power) {
  const int K = static_cast<int>(h.size());
  Eigen::MatrixXd gains(K, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd w = receiver == Receiver::MRC ? mrc_receiver(h, k) : irc_receiver(h, k, noise_power);
    for (int j = 0; j < K; ++j) gains(k, j) = std::norm(w.dot(h[j]));
    // |h_k^H h_k|^2 / ||h_k||^2 == ||h_k||^2; use the exact form.
    if (receiver == Receiver::MRC) gains(k, k) = h[k].squaredNorm();
  }
  return gains;
}

ChannelRealization make_realization(std::vector<Eigen::VectorXcd> h, Receiver receiver, double noise_power,
                                    std::vector<Point2> positions) {
  ChannelRealization real;
  real.composite_gains = composite_gains(h, receiver, noise_power);
  real.channel_vectors = std::move(h);
  real.receiver = receiver;
  real.drone_positions = std::move(positions);
  return real;
}

double sinr(const Eigen::MatrixXd& gains, const Eigen::VectorXd& p, double noise_power, int k) {
  double interference = noise_power;
  for (int j = 0; j < gains.cols(); ++j) {
    if (j != k) interference += gains(k, j) * p[j];
  }
  return gains(k, k) * p[k] / interference;
}

Eigen::VectorXd compute_rates(const Eigen::MatrixXd& gains, const Eigen::VectorXd& p, double noise_power,
                              double bandwidth) {
  if (gains.rows() != gains.cols() || gains.rows() != p.size()) {
    throw DomainError("gain matrix and power vector sizes differ");
  }
  for (int k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0)) throw DomainError("negative transmit power for drone " + std::to_string(k));
  }
  Eigen::VectorXd rates(p.size());
  for (int k = 0; k < p.size(); ++k) rates[k] = bandwidth * std::log2(1.0 + sinr(gains, p, noise_power, k));
  return rates;
}

Eigen::VectorXd compute_rates(const ChannelRealization& real, const Eigen::VectorXd& p, double noise_power,
                              double bandwidth) {
  return compute_rates(real.composite_gains, p, noise_power, bandwidth);
}

nlohmann::json to_json(const ChannelRealization& real) {
  nlohmann::json j;
  j["receiver"] = to_string(real.receiver);
  auto& pos = j["drone_positions"] = nlohmann::json::array();
  for (const auto& p : real.drone_positions) pos.push_back({p.x, p.y});
  auto& vecs = j["channel_vectors"] = nlohmann::json::array();
  for (const auto& h : real.channel_vectors) {
    nlohmann::json v = nlohmann::json::array();
    for (int n = 0; n < h.size(); ++n) v.push_back({h[n].real(), h[n].imag()});
    vecs.push_back(std::move(v));
  }
  auto& gains = j["composite_gains"] = nlohmann::json::array();
  for (int k = 0; k < real.composite_gains.rows(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (int m = 0; m < real.composite_gains.cols(); ++m) row.push_back(real.composite_gains(k, m));
    gains.push_back(std::move(row));
  }
  return j;
}

ChannelRealization channel_from_json(const nlohmann::json& j) {
  try {
    ChannelRealization real;
    real.receiver = receiver_from_string(j.at("receiver").get<std::string>());
    for (const auto& p : j.at("drone_positions")) real.drone_positions.push_back({p.at(0), p.at(1)});
    for (const auto& v : j.at("channel_vectors")) {
      Eigen::VectorXcd h(v.size());
      for (std::size_t n = 0; n < v.size(); ++n) h[n] = {v[n].at(0).get<double>(), v[n].at(1).get<double>()};
      real.channel_vectors.push_back(std::move(h));
    }
    const auto& g = j.at("composite_gains");
    const int K = static_cast<int>(g.size());
    real.composite_gains.resize(K, K);
    for (int k = 0; k < K; ++k) {
      if (static_cast<int>(g[k].size()) != K) throw DataError("composite_gains is not square");
      for (int m = 0; m < K; ++m) real.composite_gains(k, m) = g[k][m].get<double>();
    }
    if (!real.channel_vectors.empty() && static_cast<int>(real.channel_vectors.size()) != K) {
      throw DataError("channel_vectors and composite_gains disagree on the number of drones");
    }
    return real;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed channel realization: ") + e.what());
  }
}

}  // namespace lags
