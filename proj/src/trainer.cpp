// SPDX-License-Identifier: Apache-2.0
#include "lags/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "lags/error.hpp"
#include "lags/parallel.hpp"
#include "lags/solvers.hpp"

namespace lags {

using ad::Matrix;
using ad::Tape;
using ad::Var;

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 20;
  c.steps_per_epoch = 100;
  c.batch_size = 64;
  c.validation_size = 256;
  c.learning_rate = 1e-5;
  c.tau = 1e-5;
  c.initial_multiplier = 3e-3;
  return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) { return from_config(cfg, desk()); }

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg, TrainConfig base) {
  if (auto preset = cfg.get_string("preset")) {
    if (*preset == "paper") {
      base = paper();
    } else if (*preset == "desk") {
      base = desk();
    } else {
      throw ConfigError("unknown preset '" + *preset + "' (expected desk or paper)");
    }
  }
  if (auto v = cfg.get_int("epochs")) base.epochs = static_cast<int>(*v);
  if (auto v = cfg.get_int("batch_size")) base.batch_size = static_cast<int>(*v);
  if (auto v = cfg.get_int("steps_per_epoch")) base.steps_per_epoch = static_cast<int>(*v);
  if (auto v = cfg.get_double("learning_rate")) base.learning_rate = *v;
  if (auto v = cfg.get_double("psi")) base.psi = *v;
  if (auto v = cfg.get_double("tau")) base.tau = *v;
  if (auto v = cfg.get_int("seed")) base.seed = static_cast<std::uint64_t>(*v);
  if (auto v = cfg.get_int("validation_size")) base.validation_size = static_cast<int>(*v);
  if (auto v = cfg.get_double("threshold")) base.threshold = *v;
  if (auto v = cfg.get_double("initial_multiplier")) base.initial_multiplier = *v;
  base.validate();
  return base;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (steps_per_epoch <= 0) throw ConfigError("steps_per_epoch must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (validation_size < 0) throw ConfigError("validation_size must be nonnegative");
  auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) throw ConfigError(std::string(name) + " must be positive and finite");
  };
  positive(learning_rate, "learning_rate");
  positive(tau, "tau");
  if (!std::isfinite(psi) || psi < 0.0) throw ConfigError("psi must be nonnegative and finite");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!std::isfinite(initial_multiplier) || initial_multiplier < 0.0) {
    throw ConfigError("initial_multiplier must be nonnegative");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"steps_per_epoch", steps_per_epoch},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"psi", psi},
          {"tau", tau},
          {"seed", seed},
          {"validation_size", validation_size},
          {"threshold", threshold},
          {"initial_multiplier", initial_multiplier}};
}

namespace {

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.psi = j.at("psi").get<double>();
  c.tau = j.at("tau").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validation_size = j.at("validation_size").get<int>();
  c.threshold = j.at("threshold").get<double>();
  c.initial_multiplier = j.value("initial_multiplier", 0.0);
  c.validate();
  return c;
}

}  // namespace

LagrangianTerms lagrangian_loss(Tape& tape, const GraphBatch& batch, const Var& powers, const Var& selection,
                                const std::vector<double>& mu, double psi) {
  const int K = static_cast<int>(mu.size());
  for (int n = 0; n < batch.num_instances; ++n) {
    if (batch.drone_offset[n + 1] - batch.drone_offset[n] != K) {
      throw DomainError("multiplier vector length does not match the number of drones");
    }
  }
  const double inv_batch = 1.0 / batch.num_instances;

  // Rates from the relaxed powers, interference summed over incoming edges.
  const Var received = segment_sum(scale_rows(gather_rows(powers, batch.edge_src), batch.edge_gain), batch.edge_dst,
                                   batch.num_drones);
  const Var noise = tape.constant(Eigen::Map<const Matrix>(batch.noise_power.data(), batch.num_drones, 1));
  const Var signal = scale_rows(powers, batch.direct_gain);
  const Var sinr = divide(signal, add(received, noise));
  const Var capacity = scale_rows(log2(affine(sinr, 1.0, 1.0)), batch.capacity_scale);
  const Var load = segment_sum(scale_rows(selection, batch.volumes_mbit), batch.group_drone, batch.num_drones);
  const Var slack = sub(load, capacity);

  std::vector<double> mu_rows(batch.num_drones);
  for (int d = 0; d < batch.num_drones; ++d) mu_rows[d] = mu[batch.drone_local[d]] * inv_batch;
  const Var penalty = sum(scale_rows(slack, mu_rows));

  std::vector<double> utility_rows(batch.utilities);
  for (double& u : utility_rows) u *= inv_batch;
  const Var utility = sum(scale_rows(selection, utility_rows));

  const Var x = clamp(selection, kSelectionClamp, 1.0 - kSelectionClamp);
  const Var reg = scale(sum(multiply(natural_log(x), natural_log(affine(x, -1.0, 1.0)))), inv_batch);

  LagrangianTerms out;
  out.utility = utility;
  out.penalty = penalty;
  out.regularizer = reg;
  out.loss = add(sub(penalty, utility), scale(reg, psi));
  out.slack.resize(batch.num_instances, K);
  const Matrix& s = slack.value();
  for (int d = 0; d < batch.num_drones; ++d) out.slack(batch.drone_instance[d], batch.drone_local[d]) = s(d, 0);
  return out;
}

void update_multipliers(DualState& state, const Eigen::MatrixXd& slack, double tau) {
  if (slack.cols() != static_cast<Eigen::Index>(state.mu.size())) {
    throw DomainError("slack width does not match the number of multipliers");
  }
  if (slack.rows() == 0) return;
  const Eigen::VectorXd mean = slack.colwise().mean();
  for (std::size_t k = 0; k < state.mu.size(); ++k) state.mu[k] = std::max(0.0, state.mu[k] + tau * mean[k]);
}

ValidationMetrics evaluate_policy(GwHgnn& model, std::span<const ProblemInstance> instances, double threshold,
                                  int jobs) {
  ValidationMetrics m;
  if (instances.empty()) return m;
  const std::size_t n = instances.size();
  std::vector<double> repaired(n), thresholded(n);
  std::vector<FeasibilityReport> pre(n), post(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& inst = instances[i];
    const Allocation relaxed = model.infer(inst);
    Allocation hard{binarize(relaxed.selection, threshold), relaxed.powers};
    thresholded[i] = objective(inst, hard);
    pre[i] = check_constraints(inst, hard);
    const SolverResult r = threshold_and_repair(inst, relaxed, RepairOptions{threshold, false});
    repaired[i] = r.objective;
    post[i] = check_constraints(inst, r.allocation);
  });
  for (std::size_t i = 0; i < n; ++i) {
    m.objective_repaired += repaired[i] / n;
    m.objective_thresholded += thresholded[i] / n;
  }
  m.violation_rate = violation_rate(pre);
  m.repaired_violation_rate = violation_rate(post);
  return m;
}

std::string history_csv_header(int num_drones) {
  std::string h = "epoch,train_loss,val_objective,val_objective_pre_repair,violation_rate,post_repair_violation_rate";
  for (int k = 0; k < num_drones; ++k) h += ",mu_" + std::to_string(k);
  return h;
}

std::string history_csv_row(const EpochRecord& rec) {
  std::ostringstream os;
  os.precision(17);
  os << rec.epoch << ',' << rec.train_loss << ',' << rec.validation.objective_repaired << ','
     << rec.validation.objective_thresholded << ',' << rec.validation.violation_rate << ','
     << rec.validation.repaired_violation_rate;
  for (double m : rec.mu) os << ',' << m;
  return os.str();
}

std::vector<ProblemInstance> GeneratorSource::sample(Rng& rng, int count) {
  std::vector<ProblemInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng child = rng.split(static_cast<std::uint64_t>(i));
    out.push_back(generate_instance(scenario_, child, "train-" + std::to_string(i)));
  }
  return out;
}

PoolSource::PoolSource(std::vector<ProblemInstance> pool) : pool_(std::move(pool)) {
  if (pool_.empty()) throw DataError("training pool is empty");
  for (const auto& p : pool_) {
    if (p.num_drones() != pool_.front().num_drones()) throw DataError("training pool mixes drone counts");
  }
}

std::vector<ProblemInstance> PoolSource::sample(Rng& rng, int count) {
  std::vector<ProblemInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(pool_[rng.below(pool_.size())]);
  return out;
}

int PoolSource::num_drones() const { return pool_.front().num_drones(); }

nlohmann::json TrainerCheckpoint::to_json() const {
  return {{"format", "lags-trainer"},
          {"version", 1},
          {"model", model},
          {"adam", adam.to_json()},
          {"mu", dual.mu},
          {"epochs_done", epochs_done},
          {"train_config", config.to_json()}};
}

TrainerCheckpoint TrainerCheckpoint::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lags-trainer") throw DataError("not a trainer checkpoint");
  if (j.value("version", 0) != 1) throw DataError("unsupported trainer checkpoint version");
  TrainerCheckpoint c;
  c.model = j.at("model");
  c.adam = ad::AdamState::from_json(j.at("adam"));
  c.dual.mu = j.at("mu").get<std::vector<double>>();
  c.epochs_done = j.at("epochs_done").get<int>();
  c.config = train_config_from_json(j.at("train_config"));
  return c;
}

Trainer::Trainer(TrainConfig cfg, GwHgnn model, InstanceSource& source, std::vector<ProblemInstance> validation)
    : cfg_(std::move(cfg)), model_(std::move(model)), source_(&source), validation_(std::move(validation)) {
  cfg_.validate();
  dual_.mu.assign(source.num_drones(), cfg_.initial_multiplier);
}

Trainer Trainer::resume(const TrainerCheckpoint& ckpt, InstanceSource& source,
                        std::vector<ProblemInstance> validation) {
  Trainer t(ckpt.config, GwHgnn::from_json(ckpt.model), source, std::move(validation));
  if (ckpt.dual.mu.size() != t.dual_.mu.size()) throw DataError("checkpoint multipliers do not match the drone count");
  t.adam_ = ckpt.adam;
  t.dual_ = ckpt.dual;
  t.epochs_done_ = ckpt.epochs_done;
  return t;
}

double Trainer::step(const std::vector<ProblemInstance>& batch_instances) {
  std::vector<const ProblemInstance*> ptrs;
  ptrs.reserve(batch_instances.size());
  for (const auto& p : batch_instances) ptrs.push_back(&p);
  const GraphBatch batch = GraphBatch::build(ptrs, model_.config());
  Tape tape;
  const HgnnOutput out = model_.forward(tape, batch);
  const LagrangianTerms terms = lagrangian_loss(tape, batch, out.powers, out.selection, dual_.mu, cfg_.psi);
  const double loss = terms.loss.item();
  if (!std::isfinite(loss)) {
    throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epochs_done_) +
                         " (Adam step " + std::to_string(adam_.step) + ")");
  }
  model_.parameters().zero_grad();
  tape.backward(terms.loss);
  ad::AdamOptions opts;
  opts.learning_rate = cfg_.learning_rate;
  ad::adam_step(model_.parameters(), adam_, opts);
  update_multipliers(dual_, terms.slack, cfg_.tau);
  return loss;
}

EpochRecord Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  Rng epoch_rng = Rng(cfg_.seed).split(static_cast<std::uint64_t>(epochs_done_));
  double total = 0.0;
  for (int s = 0; s < cfg_.steps_per_epoch; ++s) {
    Rng step_rng = epoch_rng.split(static_cast<std::uint64_t>(s));
    total += step(source_->sample(step_rng, cfg_.batch_size));
  }
  EpochRecord rec;
  rec.epoch = epochs_done_ + 1;
  rec.train_loss = total / cfg_.steps_per_epoch;
  rec.validation = evaluate_policy(model_, validation_, cfg_.threshold, validation_jobs_);
  rec.mu = dual_.mu;
  ++epochs_done_;
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<EpochRecord> Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> history;
  while (epochs_done_ < cfg_.epochs) {
    history.push_back(run_epoch());
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

TrainerCheckpoint Trainer::checkpoint() const {
  TrainerCheckpoint c;
  c.model = model_.to_json();
  c.adam = adam_;
  c.dual = dual_;
  c.epochs_done = epochs_done_;
  c.config = cfg_;
  return c;
}

}  // namespace lags
