// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lags/error.hpp"
#include "lags/gs_utility.hpp"
#include "lags/hgnn.hpp"
#include "lags/instance_generator.hpp"
#include "lags/solvers.hpp"
#include "lags/trainer.hpp"

namespace py = pybind11;
using namespace lags;

namespace {

ScenarioConfig scenario_from(const std::string& config_text) {
  return ScenarioConfig::from_config(KeyValueConfig::parse(config_text, "<python>"));
}

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DomainError("images must be (H, W) or (H, W, C) arrays");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(w, h, c);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

std::string result_json(const SolverResult& r) { return to_json(r).dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of lags_sched";

  auto base = py::register_exception<Error>(m, "LagsError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<ProblemInstance>(m, "ProblemInstance")
      .def_static("from_json", [](const std::string& s) { return instance_from_json(nlohmann::json::parse(s)); })
      .def("to_json", [](const ProblemInstance& p) { return to_json(p).dump(); })
      .def_readonly("id", &ProblemInstance::id)
      .def_readonly("utilities", &ProblemInstance::utilities)
      .def_readonly("volumes", &ProblemInstance::volumes)
      .def_readonly("time_budget", &ProblemInstance::time_budget)
      .def_readonly("power_budget", &ProblemInstance::power_budget)
      .def_property_readonly("num_drones", &ProblemInstance::num_drones)
      .def_property_readonly("total_groups", &ProblemInstance::total_groups)
      .def_property_readonly("gains", [](const ProblemInstance& p) { return p.gains(); });

  m.def("generate_instance",
        [](std::uint64_t seed, std::uint64_t index, const std::string& config) {
          return generate_indexed(scenario_from(config), seed, index);
        },
        py::arg("seed") = 0, py::arg("index") = 0, py::arg("config") = "",
        "Instance `index` of the dataset for `seed`; `config` holds key = value overrides.");

  m.def("objective", [](const ProblemInstance& p, const Ragged& x) { return objective(p, x); });
  m.def(
      "check_constraints",
      [](const ProblemInstance& p, const Ragged& x, const Eigen::VectorXd& powers) {
        const auto r = check_constraints(p, Allocation{x, powers});
        py::dict d;
        d["feasible"] = r.feasible();
        d["violated"] = r.violated;
        d["load_bits"] = r.load_bits;
        d["capacity_bits"] = r.capacity_bits;
        d["power_budget_violated"] = r.power_budget_violated;
        return d;
      },
      py::arg("instance"), py::arg("selection"), py::arg("powers"));
  m.def("min_power_for_selection", [](const ProblemInstance& p, const Ragged& x) {
    const auto r = min_power_for_selection(p, x);
    py::dict d;
    d["feasible"] = r.feasible;
    d["sinr_feasible"] = r.sinr_feasible;
    d["spectral_radius"] = r.spectral_radius;
    d["powers"] = r.powers;
    return d;
  });

  m.def("brute_force_oracle", [](const ProblemInstance& p, int jobs) { return result_json(brute_force_oracle(p, jobs)); },
        py::arg("instance"), py::arg("jobs") = 1);
  m.def("drone_granularity", [](const ProblemInstance& p) { return result_json(drone_granularity(p)); });
  m.def("gw1_sumrate", [](const ProblemInstance& p) { return result_json(gw1_sumrate(p)); });
  m.def("gw2_greedy", [](const ProblemInstance& p, int budget) { return result_json(gw2_greedy(p, budget)); },
        py::arg("instance"), py::arg("budget") = kDefaultGreedyBudget);
  m.def("channel_blind", [](const ProblemInstance& p) {
    return result_json(channel_blind(p, default_blind_budget_bits(p)));
  });
  m.def(
      "threshold_and_repair",
      [](const ProblemInstance& p, const Ragged& x, const Eigen::VectorXd& powers, double threshold) {
        return result_json(threshold_and_repair(p, Allocation{x, powers}, RepairOptions{threshold, false}));
      },
      py::arg("instance"), py::arg("selection"), py::arg("powers"), py::arg("threshold") = 0.5);

  m.def("ssim", [](py::array a, py::array b) { return ssim(image_from_array(a), image_from_array(b)); });
  m.def(
      "gs_loss",
      [](py::array rendered, py::array truth, double lambda) {
        return gs_loss(image_from_array(rendered), image_from_array(truth), lambda);
      },
      py::arg("rendered"), py::arg("truth"), py::arg("lam") = kDefaultGsLambda);

  py::class_<GwHgnn>(m, "GwHgnn")
      .def(py::init([](std::vector<int> hidden_dims, std::uint64_t seed) {
             HgnnConfig cfg;
             if (!hidden_dims.empty()) cfg.hidden_dims = std::move(hidden_dims);
             cfg.validate();
             return GwHgnn(cfg, seed);
           }),
           py::arg("hidden_dims") = std::vector<int>{}, py::arg("seed") = 0)
      .def_static("from_json",
                  [](const std::string& s) {
                    const auto j = nlohmann::json::parse(s);
                    if (j.value("format", std::string{}) == "lags-trainer") return GwHgnn::from_json(j.at("model"));
                    return GwHgnn::from_json(j);
                  })
      .def("to_json", [](const GwHgnn& g) { return g.to_json().dump(); })
      .def_property_readonly("parameter_count", &GwHgnn::parameter_count)
      .def_property_readonly("architecture_hash", [](const GwHgnn& g) { return g.config().hash(); })
      .def("infer", [](GwHgnn& g, const ProblemInstance& p) {
        const Allocation a = g.infer(p);
        return py::make_tuple(a.selection, a.powers);
      });

  m.def(
      "train",
      [](const std::string& config, std::uint64_t seed, int epochs) {
        const auto kv = KeyValueConfig::parse(config, "<python>");
        const ScenarioConfig sc = ScenarioConfig::from_config(kv);
        TrainConfig tc = TrainConfig::from_config(kv);
        tc.seed = seed;
        if (epochs >= 0) tc.epochs = epochs;
        GeneratorSource source(sc);
        const auto validation = generate_dataset(sc, Rng::mix(seed ^ 0x76616c6964ULL),
                                                 static_cast<std::size_t>(tc.validation_size));
        HgnnConfig hc;
        if (auto dims = kv.get_int_list("hidden_dims")) hc.hidden_dims.assign(dims->begin(), dims->end());
        Trainer trainer(tc, GwHgnn(hc, seed), source, validation);
        std::vector<std::string> rows;
        {
          py::gil_scoped_release release;
          trainer.train([&](const EpochRecord& r) { rows.push_back(history_csv_row(r)); });
        }
        return py::make_tuple(trainer.model(), history_csv_header(source.num_drones()), rows);
      },
      py::arg("config") = "", py::arg("seed") = 0, py::arg("epochs") = -1,
      "Trains on fresh synthetic draws; returns (model, csv_header, csv_rows).");
}
