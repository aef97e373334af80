// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "mdal/asp_model.hpp"
#include "mdal/cli.hpp"
#include "mdal/data_io.hpp"
#include "mdal/engine.hpp"
#include "mdal/errors.hpp"
#include "mdal/nn.hpp"
#include "mdal/strategies.hpp"

namespace py = pybind11;
using json = nlohmann::json;

namespace {

py::array_t<double> to_numpy(const mdal::Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) view(i, j) = m(i, j);
  }
  return out;
}

mdal::Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw mdal::ShapeError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return mdal::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw mdal::ValidationError(e.what());
  }
}

// Python-facing handle: the model plus the config it was built from.
class PyModel {
 public:
  PyModel(std::size_t input_dim, std::vector<std::size_t> num_classes, std::size_t shared_hidden,
          std::size_t private_hidden, std::uint64_t seed)
      : model_(make(input_dim, std::move(num_classes), shared_hidden, private_hidden, seed)) {}

  std::vector<double> forward(const std::vector<double>& x, std::size_t k) const {
    return model_.forward(x, k);
  }
  std::vector<double> forward_perturbed(const std::vector<double>& x, std::size_t k,
                                        const std::vector<double>& delta) const {
    return model_.forward_perturbed(x, k, delta);
  }
  std::vector<double> gradient_embedding(const std::vector<double>& x, std::size_t k) const {
    return model_.gradient_embedding(x, k);
  }
  std::vector<double> penultimate_features(const std::vector<double>& x, std::size_t k) const {
    return model_.penultimate_features(x, k);
  }
  double perturbation_score(const std::vector<double>& x, std::size_t k, double sigma,
                            std::size_t samples, std::uint64_t seed) const {
    mdal::RngStream rng(seed, "perturbation");
    return mdal::perturbation_score(model_, x, k, sigma, samples, rng);
  }
  std::size_t shared_dim() const { return model_.shared_dim(); }

 private:
  static mdal::AspMtlModel make(std::size_t input_dim, std::vector<std::size_t> num_classes,
                                std::size_t shared_hidden, std::size_t private_hidden,
                                std::uint64_t seed) {
    mdal::ModelConfig c;
    c.input_dim = input_dim;
    c.num_classes = std::move(num_classes);
    c.shared_hidden = shared_hidden;
    c.private_hidden = private_hidden;
    mdal::RngStream rng(seed, "init");
    return mdal::AspMtlModel(c, rng);
  }

  mdal::AspMtlModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-domain active learning benchmark engine";
  m.attr("__version__") = mdal::kVersion;

  // pybind11 tries translators newest first, so the base class goes in first
  auto& base = py::register_exception<mdal::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<mdal::ValidationError>(m, "ValidationError", base);
  py::register_exception<mdal::ShapeError>(m, "ShapeError", base);

  m.def("strategy_names", &mdal::strategy_names);

  m.def("kl_divergence", [](const std::vector<double>& p, const std::vector<double>& q) {
    return mdal::kl_divergence(p, q);
  }, py::arg("p"), py::arg("q"));

  m.def("allocate_budget",
        [](const std::vector<std::size_t>& counts, std::size_t budget,
           const std::vector<std::size_t>& capacity) {
          return mdal::allocate_budget(counts, budget, capacity);
        },
        py::arg("counts"), py::arg("budget"), py::arg("capacity") = std::vector<std::size_t>{});

  m.def("kmeans",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points,
           std::size_t k, std::uint64_t seed) {
          mdal::RngStream rng(seed, "kmeans");
          const auto res = mdal::kmeans(from_numpy(points), k, rng);
          py::dict out;
          out["assignment"] = res.assignment;
          out["centers"] = to_numpy(res.centers);
          out["sse"] = res.sse;
          out["sse_trace"] = res.sse_trace;
          return out;
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def("compute_aulc",
        [](const std::vector<std::size_t>& labeled, const std::vector<double>& accuracy) {
          if (labeled.size() != accuracy.size()) {
            throw mdal::ValidationError("labeled and accuracy lengths differ");
          }
          mdal::LearningCurve curve;
          for (std::size_t i = 0; i < labeled.size(); ++i) {
            mdal::RoundRecord r;
            r.labeled_total = labeled[i];
            r.macro_accuracy = accuracy[i];
            curve.push_back(r);
          }
          return mdal::compute_aulc(curve);
        },
        py::arg("labeled"), py::arg("accuracy"));

  m.def("generate_synthetic",
        [](const std::string& spec_json) {
          const json doc = parse_json(spec_json);
          const auto cfg = mdal::experiment_config_from_json({{"dataset", {{"synthetic", doc}}}});
          py::list out;
          for (const auto& d : mdal::generate_synthetic(*cfg.dataset.synthetic)) {
            out.append(py::make_tuple(to_numpy(d.features), d.labels));
          }
          return out;
        },
        py::arg("spec_json"), "Returns [(features, labels)] per domain.");

  m.def("run_experiment",
        [](const std::string& config_json, const std::string& strategy, std::uint64_t seed) {
          const auto cfg = mdal::experiment_config_from_json(parse_json(config_json));
          const auto data = mdal::prepare_data(cfg.dataset);
          mdal::RunResult run;
          {
            py::gil_scoped_release release;
            run = mdal::run_experiment(cfg, data, mdal::parse_strategy(strategy), seed);
          }
          py::list rounds;
          for (const auto& r : run.records) {
            py::dict d;
            d["round"] = r.round;
            d["labeled_total"] = r.labeled_total;
            d["labeled_frac"] = r.labeled_frac;
            d["accuracy"] = r.accuracy;
            d["acc_macro"] = r.macro_accuracy;
            d["select_seconds"] = r.select_seconds;
            d["train_seconds"] = r.train_seconds;
            rounds.append(d);
          }
          py::dict out;
          out["strategy"] = run.strategy;
          out["seed"] = run.seed;
          out["rounds"] = rounds;
          out["aulc"] = run.records.empty() ? py::object(py::none())
                                             : py::object(py::float_(mdal::compute_aulc(run.records)));
          out["error"] = run.error ? py::object(py::str(*run.error)) : py::object(py::none());
          return out;
        },
        py::arg("config_json"), py::arg("strategy"), py::arg("seed") = 0);

  m.def("cli_main",
        [](const std::vector<std::string>& args) {
          std::vector<std::string> argv_store{"mdalbench"};
          argv_store.insert(argv_store.end(), args.begin(), args.end());
          std::vector<char*> argv;
          for (auto& s : argv_store) argv.push_back(s.data());
          return mdal::cli::main(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs the mdalbench CLI in-process and returns its exit code.");

  py::class_<PyModel>(m, "AspModel")
      .def(py::init<std::size_t, std::vector<std::size_t>, std::size_t, std::size_t, std::uint64_t>(),
           py::arg("input_dim"), py::arg("num_classes"), py::arg("shared_hidden") = 64,
           py::arg("private_hidden") = 64, py::arg("seed") = 0)
      .def("forward", &PyModel::forward, py::arg("x"), py::arg("domain"))
      .def("forward_perturbed", &PyModel::forward_perturbed, py::arg("x"), py::arg("domain"),
           py::arg("delta"))
      .def("gradient_embedding", &PyModel::gradient_embedding, py::arg("x"), py::arg("domain"))
      .def("penultimate_features", &PyModel::penultimate_features, py::arg("x"), py::arg("domain"))
      .def("perturbation_score", &PyModel::perturbation_score, py::arg("x"), py::arg("domain"),
           py::arg("sigma") = 0.01, py::arg("samples") = 20, py::arg("seed") = 0)
      .def_property_readonly("shared_dim", &PyModel::shared_dim);
}
