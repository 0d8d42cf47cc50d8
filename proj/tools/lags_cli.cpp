// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lags/error.hpp"
#include "lags/gs_utility.hpp"
#include "lags/hash.hpp"
#include "lags/hgnn.hpp"
#include "lags/instance_generator.hpp"
#include "lags/kv_config.hpp"
#include "lags/parallel.hpp"
#include "lags/solvers.hpp"
#include "lags/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lags;

namespace {

constexpr int kBenchCsvVersion = 1;
constexpr const char* kToolVersion = "0.1.0";

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
  std::string out;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance record written next to every command's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, const GlobalOptions& g, const KeyValueConfig& cfg)
      : command_(std::move(command)), started_(utc_now()) {
    j_["command"] = command_;
    j_["tool_version"] = kToolVersion;
    j_["seed"] = g.seed;
    j_["jobs"] = g.jobs;
    j_["config_path"] = g.config_path;
    j_["config"] = cfg.entries();
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
  }

  void input(const fs::path& p) { j_["inputs"][p.string()] = file_content_hash(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }

  void write(const fs::path& path) {
    for (const auto& p : outputs_) j_["outputs"][p.string()] = file_content_hash(p);
    j_["started_at"] = started_;
    j_["finished_at"] = utc_now();
    write_text(path, j_.dump(2) + "\n");
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  }

 private:
  std::string command_;
  std::string started_;
  json j_;
  std::vector<fs::path> outputs_;
};

KeyValueConfig load_config(GlobalOptions& g) {
  if (g.config_path.empty()) {
    if (const char* env = std::getenv("LAGS_CONFIG"); env && *env) g.config_path = env;
  }
  KeyValueConfig cfg;
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path)) throw ConfigError("config file '" + g.config_path + "' does not exist");
    cfg = KeyValueConfig::load(g.config_path);
  }
  if (!g.seed_given) {
    if (auto s = cfg.get_int("seed")) g.seed = static_cast<std::uint64_t>(*s);
  }
  return cfg;
}

fs::path require_out(const GlobalOptions& g, const char* what) {
  if (g.out.empty()) throw ConfigError(std::string("--out is required: ") + what);
  return g.out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

HgnnConfig hgnn_config(const KeyValueConfig& cfg) {
  HgnnConfig h;
  if (auto dims = cfg.get_int_list("hidden_dims")) h.hidden_dims.assign(dims->begin(), dims->end());
  if (auto v = cfg.get_double("power_bias_init")) h.power_bias_init = *v;
  h.validate();
  return h;
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("instance_", 0) == 0 && e.path().extension() == ".json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<ProblemInstance> load_dataset(const fs::path& dir, RunManifest* manifest) {
  std::vector<ProblemInstance> out;
  for (const auto& f : dataset_files(dir)) {
    out.push_back(load_instance(f.string()));
    if (manifest) manifest->input(f);
  }
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

/// Accepts a trainer checkpoint or a bare model file.
GwHgnn load_model(const fs::path& path) {
  const json j = read_json(path);
  try {
    if (j.value("format", std::string{}) == "lags-trainer") return GwHgnn::from_json(j.at("model"));
    return GwHgnn::from_json(j);
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "' is not a model checkpoint: " + e.what());
  }
}

// ------------------------------------------------------------------ generate

void cmd_generate(GlobalOptions g, long long count, const std::string& fragment_path) {
  const KeyValueConfig cfg = load_config(g);
  if (count < 0) throw ConfigError("--count must be nonnegative");
  const fs::path out = require_out(g, "dataset directory");
  ScenarioConfig sc = ScenarioConfig::from_config(cfg);
  RunManifest manifest("generate", g, cfg);
  if (!fragment_path.empty()) {
    sc.fragment = fragment_from_json(read_json(fragment_path));
    sc.validate();
    manifest.input(fragment_path);
  }
  ensure_dir(out);
  std::vector<std::string> texts(static_cast<std::size_t>(count));
  parallel_for(texts.size(), g.jobs, [&](std::size_t i) {
    ProblemInstance inst = generate_indexed(sc, g.seed, i);
    char id[32];
    std::snprintf(id, sizeof id, "instance_%06zu", i);
    inst.id = id;
    texts[i] = to_json(inst).dump(1) + "\n";
  });
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "instance_%06zu.json", i);
    RunManifest::write_text(out / name, texts[i]);
    manifest.output(out / name);
  }
  manifest.set("count", count);
  manifest.write(out / "run_manifest.json");
  std::cout << "wrote " << count << " instances to " << out.string() << "\n";
}

// --------------------------------------------------------------------- train

void cmd_train(GlobalOptions g, const std::string& dataset, const std::string& resume_path) {
  const KeyValueConfig cfg = load_config(g);
  const fs::path out = require_out(g, "training output directory");
  const ScenarioConfig sc = ScenarioConfig::from_config(cfg);
  TrainConfig tc = TrainConfig::from_config(cfg);
  tc.seed = g.seed;
  RunManifest manifest("train", g, cfg);

  std::unique_ptr<InstanceSource> source;
  if (!dataset.empty()) {
    source = std::make_unique<PoolSource>(load_dataset(dataset, &manifest));
  } else {
    source = std::make_unique<GeneratorSource>(sc);
  }
  // Validation instances come from a stream disjoint from training draws.
  const auto validation =
      generate_dataset(sc, Rng::mix(g.seed ^ 0x76616c6964ULL), static_cast<std::size_t>(tc.validation_size));

  std::optional<Trainer> trainer;
  if (!resume_path.empty()) {
    manifest.input(resume_path);
    trainer.emplace(Trainer::resume(TrainerCheckpoint::from_json(read_json(resume_path)), *source, validation));
  } else {
    trainer.emplace(tc, GwHgnn(hgnn_config(cfg), g.seed), *source, validation);
  }
  trainer->set_validation_jobs(g.jobs);
  ensure_dir(out);
  const fs::path history = out / "history.csv";
  std::ofstream csv(history, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot write '" + history.string() + "'");
  if (resume_path.empty()) csv << history_csv_header(source->num_drones()) << "\n";
  trainer->train([&](const EpochRecord& r) {
    csv << history_csv_row(r) << "\n" << std::flush;
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val " << r.validation.objective_repaired
              << " violations " << r.validation.violation_rate << "\n";
  });
  csv.close();
  const fs::path ckpt = out / "checkpoint.json";
  RunManifest::write_text(ckpt, trainer->checkpoint().to_json().dump() + "\n");
  manifest.output(ckpt);
  manifest.output(history);
  manifest.set("history_csv_version", kHistoryCsvVersion);
  manifest.set("train_config", trainer->config().to_json());
  manifest.write(out / "run_manifest.json");
  std::cout << "checkpoint written to " << ckpt.string() << "\n";
}

// --------------------------------------------------------------------- solve

const std::vector<std::string> kSolvers = {"oracle", "stt", "gw1", "gw2", "blind", "hgnn"};

bool g_reoptimize_power = false;

SolverResult run_solver(const std::string& name, const ProblemInstance& inst, GwHgnn* model, std::uint64_t seed) {
  if (name == "oracle") return brute_force_oracle(inst);
  if (name == "stt") return drone_granularity(inst);
  if (name == "gw1") return gw1_sumrate(inst, SumRateOptions{20, 500, seed});
  if (name == "gw2") return gw2_greedy(inst);
  if (name == "blind") return channel_blind(inst, default_blind_budget_bits(inst));
  if (name == "hgnn") {
    const auto start = std::chrono::steady_clock::now();
    SolverResult r = threshold_and_repair(inst, model->infer(inst), RepairOptions{0.5, g_reoptimize_power});
    r.solver_name = "hgnn";
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }
  throw ConfigError("unknown solver '" + name + "'");
}

void cmd_solve(GlobalOptions g, const std::string& instance_path, const std::string& solver,
               const std::string& checkpoint) {
  const KeyValueConfig cfg = load_config(g);
  RunManifest manifest("solve", g, cfg);
  std::optional<GwHgnn> model;
  if (solver == "hgnn") {
    if (checkpoint.empty()) throw ConfigError("solver hgnn needs --checkpoint");
    model.emplace(load_model(checkpoint));
    manifest.input(checkpoint);
  }
  const ProblemInstance inst = load_instance(instance_path);
  manifest.input(instance_path);
  const SolverResult r = run_solver(solver, inst, model ? &*model : nullptr, g.seed);
  json j = to_json(r);
  j["instance_id"] = inst.id;
  if (g.out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  const fs::path out = g.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  RunManifest::write_text(out, j.dump(2) + "\n");
  manifest.output(out);
  manifest.write(out.string() + ".manifest.json");
}

// --------------------------------------------------------------------- bench

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void cmd_bench(GlobalOptions g, const std::string& dataset, const std::string& solver_list,
               const std::string& checkpoint) {
  const KeyValueConfig cfg = load_config(g);
  const fs::path out = require_out(g, "benchmark output directory");
  const auto solvers = split_list(solver_list);
  if (solvers.empty()) throw ConfigError("--solvers lists no solver");
  for (const auto& s : solvers) {
    if (std::find(kSolvers.begin(), kSolvers.end(), s) == kSolvers.end()) {
      throw ConfigError("unknown solver '" + s + "'");
    }
  }
  const bool wants_hgnn = std::find(solvers.begin(), solvers.end(), "hgnn") != solvers.end();
  if (wants_hgnn && checkpoint.empty()) throw ConfigError("solver hgnn needs --checkpoint");
  RunManifest manifest("bench", g, cfg);
  std::optional<GwHgnn> model;
  if (wants_hgnn) {
    model.emplace(load_model(checkpoint));
    manifest.input(checkpoint);
  }
  auto instances = load_dataset(dataset, &manifest);
  std::sort(instances.begin(), instances.end(),
            [](const ProblemInstance& a, const ProblemInstance& b) { return a.id < b.id; });

  // The model's forward pass is read-only, but each thread gets its own copy
  // so that no tape state is ever shared.
  std::vector<std::vector<SolverResult>> results(instances.size());
  parallel_for(instances.size(), g.jobs, [&](std::size_t i) {
    std::optional<GwHgnn> local;
    if (model) local.emplace(*model);
    for (const auto& s : solvers) results[i].push_back(run_solver(s, instances[i], local ? &*local : nullptr, g.seed));
  });

  ensure_dir(out);
  const fs::path csv_path = out / "bench.csv";
  std::ostringstream csv;
  csv.precision(17);
  csv << "instance_id,solver,objective,feasible,wall_time_s\n";
  json summary = json::object();
  for (std::size_t s = 0; s < solvers.size(); ++s) {
    double sum = 0, sum_sq = 0, time = 0;
    int feasible = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& r = results[i][s];
      sum += r.objective;
      sum_sq += r.objective * r.objective;
      time += r.wall_time;
      feasible += r.feasible ? 1 : 0;
    }
    const double n = std::max<double>(1.0, static_cast<double>(instances.size()));
    const double mean = sum / n;
    summary[solvers[s]] = {{"mean_objective", mean},
                           {"std_objective", std::sqrt(std::max(0.0, sum_sq / n - mean * mean))},
                           {"feasible", feasible},
                           {"mean_wall_time_s", time / n}};
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (const auto& r : results[i]) {
      csv << instances[i].id << ',' << r.solver_name << ',' << r.objective << ',' << (r.feasible ? 1 : 0) << ','
          << r.wall_time << "\n";
    }
  }
  RunManifest::write_text(csv_path, csv.str());
  manifest.output(csv_path);

  json report = {{"bench_csv_version", kBenchCsvVersion}, {"instances", instances.size()}, {"solvers", summary}};
  if (wants_hgnn && !instances.empty()) {
    // Single-threaded, warm cache: 10 untimed runs, then the median of 100.
    const auto& inst = instances.front();
    auto once = [&] {
      const auto t = std::chrono::steady_clock::now();
      const auto r = threshold_and_repair(inst, model->infer(inst));
      (void)r;
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    };
    for (int i = 0; i < 10; ++i) once();
    std::vector<double> times;
    for (int i = 0; i < 100; ++i) times.push_back(once());
    std::sort(times.begin(), times.end());
    report["hgnn_latency"] = {{"instance_id", inst.id},
                              {"warmup_runs", 10},
                              {"timed_runs", 100},
                              {"median_s", 0.5 * (times[49] + times[50])},
                              {"min_s", times.front()},
                              {"max_s", times.back()}};
  }
  const fs::path summary_path = out / "summary.json";
  RunManifest::write_text(summary_path, report.dump(2) + "\n");
  manifest.output(summary_path);
  manifest.write(out / "run_manifest.json");
  std::cout << report.dump(2) << "\n";
}

// ------------------------------------------------------------ score-manifest

void cmd_score_manifest(GlobalOptions g, const std::string& manifest_path, double lambda, bool per_pair_mean) {
  const KeyValueConfig cfg = load_config(g);
  RunManifest manifest("score-manifest", g, cfg);
  const GroupManifest m = load_manifest(manifest_path);
  manifest.input(manifest_path);
  UtilityOptions opts;
  opts.lambda = lambda;
  opts.normalize_by_count = per_pair_mean;
  opts.jobs = g.jobs;
  const UtilityFragment frag = score_manifest(m, opts);
  const std::string text = to_json(frag).dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  const fs::path out = g.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  RunManifest::write_text(out, text);
  manifest.output(out);
  manifest.write(out.string() + ".manifest.json");
}

// ----------------------------------------------------------------- hgnn-info

void cmd_hgnn_info(GlobalOptions g, const std::string& checkpoint) {
  const KeyValueConfig cfg = load_config(g);
  GwHgnn model = checkpoint.empty() ? GwHgnn(hgnn_config(cfg), g.seed) : load_model(checkpoint);
  json j;
  j["config"] = model.config().to_json();
  j["architecture_hash"] = model.config().hash();
  j["parameter_count"] = model.parameter_count();
  json tensors = json::array();
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& t = model.parameters()[i];
    tensors.push_back({{"name", model.parameters().names()[i]}, {"shape", {t.rows(), t.cols()}}});
  }
  j["tensors"] = tensors;
  std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Groupwise image scheduling and power control for drone Gaussian splatting uplinks", "lags"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value configuration file (default: $LAGS_CONFIG)");
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output path (file or directory, per command)");

  long long count = 0;
  std::string fragment, dataset, resume, instance, solver, checkpoint, solvers = "oracle,stt,gw1,gw2,blind",
                                                                        manifest_path;
  double lambda = kDefaultGsLambda;
  bool per_pair_mean = false;

  auto* gen = app.add_subcommand("generate", "write synthetic problem instances");
  gen->add_option("--count", count, "number of instances")->required();
  gen->add_option("--fragment", fragment, "utility/volume fragment from score-manifest");

  auto* train = app.add_subcommand("train", "train the GW-HGNN policy with Lagrangian dual learning");
  train->add_option("--dataset", dataset, "instance directory to sample from (default: fresh draws)");
  train->add_option("--resume", resume, "trainer checkpoint to continue from");

  auto* solve = app.add_subcommand("solve", "solve one instance");
  solve->add_option("--instance", instance, "instance JSON")->required();
  solve->add_option("--solver", solver, "oracle | stt | gw1 | gw2 | blind | hgnn")->required();
  solve->add_option("--checkpoint", checkpoint, "model or trainer checkpoint for hgnn");
  solve->add_flag("--reoptimize-power", g_reoptimize_power, "hgnn: replace predicted powers by minimal powers");

  auto* bench = app.add_subcommand("bench", "compare solvers over a dataset");
  bench->add_option("--dataset", dataset, "instance directory")->required();
  bench->add_option("--solvers", solvers, "comma-separated solver names");
  bench->add_option("--checkpoint", checkpoint, "model or trainer checkpoint for hgnn");
  bench->add_flag("--reoptimize-power", g_reoptimize_power, "hgnn: replace predicted powers by minimal powers");

  auto* score = app.add_subcommand("score-manifest", "compute group utilities from rendered/truth image pairs");
  score->add_option("--manifest", manifest_path, "group manifest JSON")->required();
  score->add_option("--lambda", lambda, "SSIM weight in the GS loss")->check(CLI::Range(0.0, 1.0));
  score->add_flag("--mean", per_pair_mean, "average instead of summing over a group's pairs");

  auto* info = app.add_subcommand("hgnn-info", "print architecture, parameter count and hash");
  info->add_option("--checkpoint", checkpoint, "model or trainer checkpoint (default: fresh model)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*gen) cmd_generate(g, count, fragment);
    if (*train) cmd_train(g, dataset, resume);
    if (*solve) cmd_solve(g, instance, solver, checkpoint);
    if (*bench) cmd_bench(g, dataset, solvers, checkpoint);
    if (*score) cmd_score_manifest(g, manifest_path, lambda, per_pair_mean);
    if (*info) cmd_hgnn_info(g, checkpoint);
  } catch (const lags::Error& e) {
    std::cerr << "lags: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "lags: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
