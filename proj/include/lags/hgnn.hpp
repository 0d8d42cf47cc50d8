// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lags/problem.hpp"
#include "lags/tensor.hpp"

namespace lags {

/// Architecture of the groupwise heterogeneous GNN. Layer l maps width
/// d_{l-1} to d_l = hidden_dims[l-1]; the encoders emit d_0 = hidden_dims[0].
struct HgnnConfig {
  std::vector<int> hidden_dims = {32, 64, 128, 256, 128, 64};
  // Fixed input normalisation: gains as (log10 H - mean) / scale,
  // utilities as log1p(pi / utility_scale), volumes as log1p(Q / volume_scale).
  double gain_log_mean = -10.0;
  double gain_log_scale = 3.0;
  double utility_scale = 1.0;
  double volume_scale = 1e6;
  // Smallest composite gain fed to log10 (an exact zero is clipped here).
  double gain_floor = 1e-30;
  // Initial bias of the power head, keeping its ReLU active at the start.
  double power_bias_init = 4.0;

  int num_layers() const { return static_cast<int>(hidden_dims.size()); }
  int input_width() const { return hidden_dims.front(); }
  int layer_input_width(int layer) const { return layer == 0 ? hidden_dims.front() : hidden_dims[layer - 1]; }
  int output_width() const { return hidden_dims.back(); }
  void validate() const;

  nlohmann::json to_json() const;
  static HgnnConfig from_json(const nlohmann::json& j);
  /// Short hex digest of the architecture and normalisation constants.
  std::string hash() const;
};

/// Several instances laid out as one disjoint graph: drones, groups and
/// directed drone-to-drone edges of all instances stacked row-wise.
struct GraphBatch {
  int num_instances = 0;
  int num_drones = 0;
  int num_groups = 0;
  std::vector<int> drone_offset;        // first drone row of each instance (+ end)
  std::vector<int> group_offset;        // first group row of each instance (+ end)
  std::vector<int> drone_instance;      // instance of each drone row
  std::vector<int> drone_local;         // k within its instance
  std::vector<int> group_drone;         // owning drone row of each group row
  std::vector<double> drone_inv_groups; // 1 / I_k per drone row
  std::vector<double> group_inv_groups; // 1 / I_k per group row
  std::vector<double> drone_inv_neighbours;  // 1 / (K - 1), 0 when K = 1
  std::vector<int> edge_dst;            // edge (k, m): message from m into k
  std::vector<int> edge_src;

  // Raw problem data in SI units.
  std::vector<double> direct_gain;      // H_kk per drone row
  std::vector<double> edge_gain;        // H_km per edge
  std::vector<double> noise_power;      // per drone row
  std::vector<double> capacity_scale;   // T * B / 1e6 per drone row (Mbit per log2 unit)
  std::vector<double> power_budget;     // per drone row
  std::vector<double> utilities;        // per group row
  std::vector<double> volumes_mbit;     // per group row

  // Normalised encoder inputs.
  ad::Matrix drone_features;   // num_drones x 1
  ad::Matrix group_features;   // num_groups x 2
  ad::Matrix edge_features;    // num_edges x 1

  int num_edges() const { return static_cast<int>(edge_dst.size()); }

  static GraphBatch build(std::span<const ProblemInstance* const> instances, const HgnnConfig& cfg);
  static GraphBatch build(const ProblemInstance& inst, const HgnnConfig& cfg);
};

/// Differentiable outputs of one forward pass.
struct HgnnOutput {
  ad::Var powers;      // num_drones x 1, each instance sums to its P_sum
  ad::Var selection;   // num_groups x 1, in (0, 1)
  ad::Var drone_features;
  ad::Var group_features;
  std::vector<bool> power_fallback;  // per instance: raw powers all zero
};

/// Layer-wise intermediate features, exposed for testing the building blocks.
struct HgnnFeatures {
  ad::Var drone;
  ad::Var group;
  ad::Var edge;
};

class GwHgnn {
 public:
  explicit GwHgnn(HgnnConfig cfg = {}, std::uint64_t seed = 0);

  const HgnnConfig& config() const { return cfg_; }
  ad::ParameterStore& parameters() { return params_; }
  const ad::ParameterStore& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  HgnnFeatures encode(ad::Tape& tape, const GraphBatch& batch);
  HgnnFeatures message_pass(ad::Tape& tape, const GraphBatch& batch, const HgnnFeatures& in, int layer);
  HgnnOutput decode(ad::Tape& tape, const GraphBatch& batch, const HgnnFeatures& last);
  HgnnOutput forward(ad::Tape& tape, const GraphBatch& batch);

  /// Relaxed allocation (x in (0,1), sum p = P_sum) for one instance.
  Allocation infer(const ProblemInstance& inst);

  nlohmann::json to_json() const;
  static GwHgnn from_json(const nlohmann::json& j);

 private:
  ad::Var linear(ad::Tape& tape, const std::string& name, const ad::Var& x);
  ad::Var mlp(ad::Tape& tape, const std::string& name, const ad::Var& x);
  void add_linear(const std::string& name, int in, int out, Rng& rng);
  void add_mlp(const std::string& name, int in, int out, Rng& rng);

  HgnnConfig cfg_;
  ad::ParameterStore params_;
};

/// Splits batched outputs back into one relaxed Allocation per instance.
std::vector<Allocation> split_allocations(const GraphBatch& batch, const ad::Matrix& powers,
                                          const ad::Matrix& selection);

}  // namespace lags
