// SPDX-License-Identifier: Apache-2.0
#include "lags/hgnn.hpp"

#include <cmath>

#include "lags/error.hpp"
#include "lags/hash.hpp"

namespace lags {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void HgnnConfig::validate() const {
  if (hidden_dims.empty()) throw ConfigError("HGNN needs at least one message-passing layer");
  for (int d : hidden_dims) {
    if (d < 1) throw ConfigError("HGNN hidden widths must be positive");
  }
  if (!(gain_log_scale > 0.0) || !(utility_scale > 0.0) || !(volume_scale > 0.0) || !(gain_floor > 0.0)) {
    throw ConfigError("HGNN normalisation scales must be positive");
  }
}

nlohmann::json HgnnConfig::to_json() const {
  return {{"hidden_dims", hidden_dims},     {"gain_log_mean", gain_log_mean}, {"gain_log_scale", gain_log_scale},
          {"utility_scale", utility_scale}, {"volume_scale", volume_scale},   {"gain_floor", gain_floor}, {"power_bias_init", power_bias_init}};
}

HgnnConfig HgnnConfig::from_json(const nlohmann::json& j) {
  HgnnConfig c;
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.gain_log_mean = j.at("gain_log_mean").get<double>();
  c.gain_log_scale = j.at("gain_log_scale").get<double>();
  c.utility_scale = j.at("utility_scale").get<double>();
  c.volume_scale = j.at("volume_scale").get<double>();
  c.gain_floor = j.value("gain_floor", 1e-30);
  c.power_bias_init = j.value("power_bias_init", 0.0);
  c.validate();
  return c;
}

std::string HgnnConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

namespace {

double normalise_gain(const HgnnConfig& cfg, double h) {
  return (std::log10(std::max(h, cfg.gain_floor)) - cfg.gain_log_mean) / cfg.gain_log_scale;
}

}  // namespace

GraphBatch GraphBatch::build(const ProblemInstance& inst, const HgnnConfig& cfg) {
  const ProblemInstance* p = &inst;
  return build(std::span<const ProblemInstance* const>(&p, 1), cfg);
}

GraphBatch GraphBatch::build(std::span<const ProblemInstance* const> instances, const HgnnConfig& cfg) {
  GraphBatch b;
  b.num_instances = static_cast<int>(instances.size());
  int edges = 0;
  for (const auto* inst : instances) {
    const int K = inst->num_drones();
    b.num_drones += K;
    b.num_groups += inst->total_groups();
    edges += K * (K - 1);
  }
  b.drone_features.resize(b.num_drones, 1);
  b.group_features.resize(b.num_groups, 2);
  b.edge_features.resize(edges, 1);
  int drone_row = 0;
  int group_row = 0;
  int edge_row = 0;
  for (int n = 0; n < b.num_instances; ++n) {
    const ProblemInstance& inst = *instances[n];
    const auto& H = inst.gains();
    const int K = inst.num_drones();
    if (H.rows() != K || H.cols() != K) throw DomainError("instance gain matrix does not match its drone count");
    if (!H.allFinite()) throw DomainError("non-finite composite gain in instance '" + inst.id + "'");
    b.drone_offset.push_back(drone_row);
    b.group_offset.push_back(group_row);
    const int base = drone_row;
    for (int k = 0; k < K; ++k, ++drone_row) {
      const int groups = inst.groups(k);
      b.drone_instance.push_back(n);
      b.drone_local.push_back(k);
      b.drone_inv_groups.push_back(1.0 / groups);
      b.drone_inv_neighbours.push_back(K > 1 ? 1.0 / (K - 1) : 0.0);
      b.direct_gain.push_back(H(k, k));
      b.noise_power.push_back(inst.noise_power);
      b.capacity_scale.push_back(inst.time_budget * inst.bandwidth / kBitsPerMbit);
      b.power_budget.push_back(inst.power_budget);
      b.drone_features(drone_row, 0) = normalise_gain(cfg, H(k, k));
      for (int i = 0; i < groups; ++i, ++group_row) {
        const double pi = inst.utilities[k][i];
        const double q = inst.volumes[k][i];
        if (!std::isfinite(pi) || !std::isfinite(q)) throw DomainError("non-finite utility or volume");
        b.group_drone.push_back(drone_row);
        b.group_inv_groups.push_back(1.0 / groups);
        b.utilities.push_back(pi);
        b.volumes_mbit.push_back(q / kBitsPerMbit);
        b.group_features(group_row, 0) = std::log1p(pi / cfg.utility_scale);
        b.group_features(group_row, 1) = std::log1p(q / cfg.volume_scale);
      }
      for (int m = 0; m < K; ++m) {
        if (m == k) continue;
        b.edge_dst.push_back(base + k);
        b.edge_src.push_back(base + m);
        b.edge_gain.push_back(H(k, m));
        b.edge_features(edge_row++, 0) = normalise_gain(cfg, H(k, m));
      }
    }
  }
  b.drone_offset.push_back(drone_row);
  b.group_offset.push_back(group_row);
  return b;
}

GwHgnn::GwHgnn(HgnnConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const int d0 = cfg_.input_width();
  add_linear("enc.drone", 1, d0, rng);
  add_linear("enc.group", 2, d0, rng);
  add_linear("enc.edge", 1, d0, rng);
  for (int l = 0; l < cfg_.num_layers(); ++l) {
    const int in = cfg_.layer_input_width(l);
    const int out = cfg_.hidden_dims[l];
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    add_linear(p + "edge_proj", d0, in, rng);
    add_mlp(p + "U1", in, out, rng);
    add_mlp(p + "U2", in, out, rng);
    add_mlp(p + "U3", in, out, rng);
    add_mlp(p + "G1", in, out, rng);
    add_mlp(p + "G2", in, out, rng);
    add_mlp(p + "G3", 2 * in, out, rng);
  }
  add_linear("head.power", cfg_.output_width(), 1, rng);
  params_.at("head.power.b").value().setConstant(cfg_.power_bias_init);
  add_linear("head.select", cfg_.output_width(), 1, rng);
}

void GwHgnn::add_linear(const std::string& name, int in, int out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  params_.add(name + ".W", std::move(w));
  params_.add(name + ".b", Matrix::Zero(1, out));
}

void GwHgnn::add_mlp(const std::string& name, int in, int out, Rng& rng) {
  add_linear(name + ".0", in, out, rng);
  add_linear(name + ".1", out, out, rng);
}

Var GwHgnn::linear(Tape& tape, const std::string& name, const Var& x) {
  return ad::add_bias(ad::matmul(x, tape.leaf(params_.at(name + ".W"))), tape.leaf(params_.at(name + ".b")));
}

Var GwHgnn::mlp(Tape& tape, const std::string& name, const Var& x) {
  return linear(tape, name + ".1", ad::relu(linear(tape, name + ".0", x)));
}

HgnnFeatures GwHgnn::encode(Tape& tape, const GraphBatch& batch) {
  HgnnFeatures f;
  f.drone = linear(tape, "enc.drone", tape.constant(batch.drone_features));
  f.group = linear(tape, "enc.group", tape.constant(batch.group_features));
  f.edge = linear(tape, "enc.edge", tape.constant(batch.edge_features));
  return f;
}

HgnnFeatures GwHgnn::message_pass(Tape& tape, const GraphBatch& batch, const HgnnFeatures& in, int layer) {
  if (layer < 1 || layer > cfg_.num_layers()) throw DomainError("message-passing layer index out of range");
  const std::string p = "layer" + std::to_string(layer) + ".";

  // Group update: self term, mean over the other groups of the same drone, owning drone.
  const Var u2 = mlp(tape, p + "U2", in.group);
  const Var per_drone = ad::segment_sum(u2, batch.group_drone, batch.num_drones);
  const Var others = ad::sub(ad::gather_rows(per_drone, batch.group_drone), u2);
  const Var u3 = mlp(tape, p + "U3", in.drone);
  Var group = ad::add(mlp(tape, p + "U1", in.group), ad::scale_rows(others, batch.group_inv_groups));
  group = ad::add(group, ad::gather_rows(u3, batch.group_drone));

  // Drone update: self term, mean over own groups, mean over neighbouring drones with edge features.
  const Var g2 = mlp(tape, p + "G2", in.group);
  Var drone = ad::add(mlp(tape, p + "G1", in.drone),
                      ad::scale_rows(ad::segment_sum(g2, batch.group_drone, batch.num_drones), batch.drone_inv_groups));
  HgnnFeatures out;
  out.edge = in.edge;
  if (batch.num_edges() > 0) {
    const Var edge = linear(tape, p + "edge_proj", in.edge);
    const Var msg = mlp(tape, p + "G3", ad::concat(ad::gather_rows(in.drone, batch.edge_src), edge));
    drone = ad::add(drone, ad::scale_rows(ad::segment_sum(msg, batch.edge_dst, batch.num_drones),
                                          batch.drone_inv_neighbours));
  }
  out.drone = drone;
  out.group = group;
  return out;
}

HgnnOutput GwHgnn::decode(Tape& tape, const GraphBatch& batch, const HgnnFeatures& last) {
  HgnnOutput out;
  const Var raw = ad::relu(linear(tape, "head.power", last.drone));
  const Var unit = ad::l1_normalize(raw, batch.drone_instance, batch.num_instances, 1.0, 1e-12, &out.power_fallback);
  out.powers = ad::scale_rows(unit, batch.power_budget);
  out.selection = ad::sigmoid(linear(tape, "head.select", last.group));
  out.drone_features = last.drone;
  out.group_features = last.group;
  return out;
}

HgnnOutput GwHgnn::forward(Tape& tape, const GraphBatch& batch) {
  HgnnFeatures f = encode(tape, batch);
  for (int l = 1; l <= cfg_.num_layers(); ++l) f = message_pass(tape, batch, f, l);
  return decode(tape, batch, f);
}

Allocation GwHgnn::infer(const ProblemInstance& inst) {
  const GraphBatch batch = GraphBatch::build(inst, cfg_);
  Tape tape(false);
  const HgnnOutput out = forward(tape, batch);
  return split_allocations(batch, out.powers.value(), out.selection.value()).front();
}

std::vector<Allocation> split_allocations(const GraphBatch& batch, const Matrix& powers, const Matrix& selection) {
  std::vector<Allocation> out(batch.num_instances);
  for (int n = 0; n < batch.num_instances; ++n) {
    const int d0 = batch.drone_offset[n];
    const int d1 = batch.drone_offset[n + 1];
    auto& a = out[n];
    a.powers.resize(d1 - d0);
    for (int r = d0; r < d1; ++r) a.powers[r - d0] = powers(r, 0);
    a.selection.resize(d1 - d0);
  }
  for (int g = 0; g < batch.num_groups; ++g) {
    const int d = batch.group_drone[g];
    const int n = batch.drone_instance[d];
    out[n].selection[batch.drone_local[d]].push_back(selection(g, 0));
  }
  return out;
}

nlohmann::json GwHgnn::to_json() const {
  return {{"format", "lags-hgnn"}, {"version", 1}, {"config", cfg_.to_json()}, {"tensors", params_.to_json()}};
}

GwHgnn GwHgnn::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "lags-hgnn" || j.at("version").get<int>() != 1) {
      throw DataError("not a version-1 HGNN checkpoint");
    }
    GwHgnn model(HgnnConfig::from_json(j.at("config")));
    model.params_.load_json(j.at("tensors"));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed HGNN checkpoint: ") + e.what());
  }
}

}  // namespace lags
