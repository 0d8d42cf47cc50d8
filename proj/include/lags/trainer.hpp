// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lags/hgnn.hpp"
#include "lags/instance_generator.hpp"
#include "lags/kv_config.hpp"
#include "lags/problem.hpp"
#include "lags/rng.hpp"
#include "lags/tensor.hpp"

namespace lags {

struct TrainConfig {
  int epochs = 200;
  int steps_per_epoch = 400;  // 51200 / batch_size
  int batch_size = 128;
  double learning_rate = 1e-4;
  double psi = 0.1;
  double tau = 1e-3;
  std::uint64_t seed = 0;
  int validation_size = 1024;
  double threshold = 0.5;
  // Initial value of every multiplier.
  double initial_multiplier = 0.0;

  static TrainConfig paper();
  static TrainConfig desk();
  static TrainConfig from_config(const KeyValueConfig& cfg);
  static TrainConfig from_config(const KeyValueConfig& cfg, TrainConfig base);
  void validate() const;
  nlohmann::json to_json() const;
};

/// One multiplier per drone index, kept nonnegative.
struct DualState {
  std::vector<double> mu;
};

/// Differentiable pieces of the Lagrangian for a batch, each already averaged
/// over the instances of the batch.
struct LagrangianTerms {
  ad::Var loss;
  ad::Var utility;      // mean of sum x * pi
  ad::Var penalty;      // mean of sum mu_k * slack_k
  ad::Var regularizer;  // mean of sum ln(x) ln(1 - x), unscaled by psi
  /// Load minus capacity in Mbit, num_instances x K.
  Eigen::MatrixXd slack;
};

inline constexpr double kSelectionClamp = 1e-6;

/// Requires every instance of the batch to have exactly mu.size() drones.
LagrangianTerms lagrangian_loss(ad::Tape& tape, const GraphBatch& batch, const ad::Var& powers,
                                const ad::Var& selection, const std::vector<double>& mu, double psi);

/// mu_k <- max(0, mu_k + tau * mean over rows of slack(:, k)).
void update_multipliers(DualState& state, const Eigen::MatrixXd& slack, double tau);

struct ValidationMetrics {
  double objective_repaired = 0.0;     // mean over instances
  double objective_thresholded = 0.0;  // mean before repair, infeasible rows included
  double violation_rate = 0.0;         // thresholded, before repair
  double repaired_violation_rate = 0.0;
  int power_fallbacks = 0;
};

ValidationMetrics evaluate_policy(GwHgnn& model, std::span<const ProblemInstance> instances, double threshold = 0.5,
                                  int jobs = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  ValidationMetrics validation;
  std::vector<double> mu;
  double wall_time = 0.0;
};

inline constexpr int kHistoryCsvVersion = 1;
std::string history_csv_header(int num_drones);
std::string history_csv_row(const EpochRecord& rec);

/// Supplies training batches. `sample` must be a pure function of the rng.
class InstanceSource {
 public:
  virtual ~InstanceSource() = default;
  virtual std::vector<ProblemInstance> sample(Rng& rng, int count) = 0;
  virtual int num_drones() const = 0;
};

/// Draws fresh synthetic instances.
class GeneratorSource : public InstanceSource {
 public:
  explicit GeneratorSource(ScenarioConfig scenario) : scenario_(std::move(scenario)) {}
  std::vector<ProblemInstance> sample(Rng& rng, int count) override;
  int num_drones() const override { return scenario_.deployment.num_drones; }

 private:
  ScenarioConfig scenario_;
};

/// Samples uniformly with replacement from a fixed pool.
class PoolSource : public InstanceSource {
 public:
  explicit PoolSource(std::vector<ProblemInstance> pool);
  std::vector<ProblemInstance> sample(Rng& rng, int count) override;
  int num_drones() const override;

 private:
  std::vector<ProblemInstance> pool_;
};

/// Everything needed to continue training exactly where it stopped.
struct TrainerCheckpoint {
  nlohmann::json model;
  ad::AdamState adam;
  DualState dual;
  int epochs_done = 0;
  TrainConfig config;

  nlohmann::json to_json() const;
  static TrainerCheckpoint from_json(const nlohmann::json& j);
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, GwHgnn model, InstanceSource& source, std::vector<ProblemInstance> validation);
  static Trainer resume(const TrainerCheckpoint& ckpt, InstanceSource& source, std::vector<ProblemInstance> validation);

  /// Runs one epoch of steps followed by validation.
  EpochRecord run_epoch();
  /// Runs the remaining epochs; `on_epoch` sees each record as it completes.
  std::vector<EpochRecord> train(const std::function<void(const EpochRecord&)>& on_epoch = {});
  /// One gradient step plus multiplier update; returns the batch loss.
  double step(const std::vector<ProblemInstance>& batch);

  TrainerCheckpoint checkpoint() const;
  GwHgnn& model() { return model_; }
  const DualState& dual() const { return dual_; }
  int epochs_done() const { return epochs_done_; }
  const TrainConfig& config() const { return cfg_; }
  void set_validation_jobs(int jobs) { validation_jobs_ = jobs; }

 private:
  TrainConfig cfg_;
  GwHgnn model_;
  InstanceSource* source_;
  std::vector<ProblemInstance> validation_;
  ad::AdamState adam_;
  DualState dual_;
  int epochs_done_ = 0;
  int validation_jobs_ = 1;
};

}  // namespace lags
