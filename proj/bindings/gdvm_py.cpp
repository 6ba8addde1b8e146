// Python bindings for the core operations: dataset generators, the model
// (train/predict/encode/checkpoint), the KL/reparameterization primitives and
// the evaluation metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "gdvm/checkpoint.hpp"
#include "gdvm/config.hpp"
#include "gdvm/idx.hpp"
#include "gdvm/metrics.hpp"
#include "gdvm/model.hpp"
#include "gdvm/rng.hpp"
#include "gdvm/runner.hpp"

namespace py = pybind11;
using namespace gdvm;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  Shape shape(static_cast<std::size_t>(arr.ndim()));
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
    shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arr.shape(i));
  }
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array tensor_to_array(const Tensor& t) {
  if (t.empty()) return py::array_t<double>(0);
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.values().begin(), t.values().end(), arr.mutable_data());
  return arr;
}

RunConfig config_from_json_str(const std::string& text) {
  try {
    return parse_run_config(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

// Model handle carrying the training defaults of the config it was built from.
struct PyModel {
  GdvmModel model;
  TrainConfig defaults;

  static PyModel build(const std::string& config_json, std::uint64_t seed) {
    const RunConfig cfg = config_from_json_str(config_json);
    PyModel pm{GdvmModel::build(model_spec_from_config(cfg), seed),
               TrainConfig{cfg.epochs, cfg.batch_size, cfg.optimizer, cfg.dropout, seed}};
    return pm;
  }

  py::dict train_on(const Dataset& data, std::uint64_t seed) {
    TrainConfig tc = defaults;
    tc.seed = seed;
    const TrainTrace trace = gdvm::train(model, data, tc);
    py::dict out;
    out["epoch_loss"] = trace.epoch_loss;
    out["epoch_task_loss"] = trace.epoch_task_loss;
    out["epoch_kl"] = trace.epoch_kl;
    out["clamp_events"] = trace.clamp_events;
    return out;
  }

  py::dict predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
    const Prediction p = predict_deterministic(model, tensor_from_array(x));
    py::dict out;
    out["scores"] = tensor_to_array(p.scores);
    out["labels"] = p.labels;
    out["multihot"] = tensor_to_array(p.multihot);
    return out;
  }

  py::dict predict_mc_n(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                        std::size_t n_samples, std::uint64_t seed) {
    auto rng = seeded_stream(seed, "py.predict_mc");
    const Prediction p = gdvm::predict_mc(model, tensor_from_array(x), n_samples, rng);
    py::dict out;
    out["scores"] = tensor_to_array(p.scores);
    out["labels"] = p.labels;
    out["multihot"] = tensor_to_array(p.multihot);
    return out;
  }

  py::tuple encode_batch(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
    ForwardCtx ctx;
    const EncodeResult enc = model.encode(tensor_from_array(x), ctx);
    return py::make_tuple(tensor_to_array(enc.mu),
                          enc.logvar ? py::object(tensor_to_array(*enc.logvar))
                                     : py::object(py::none()));
  }
};

}  // namespace

PYBIND11_MODULE(_gdvm, m) {
  m.doc() = "Variational classifier engine: generators, model, metrics";

  py::register_exception<ConfigError>(m, "GdvmConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "GdvmDataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "GdvmFormatError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "GdvmDimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "GdvmNumericError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("features", [](const Dataset& d) { return tensor_to_array(d.features); })
      .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
      .def_property_readonly("multihot", [](const Dataset& d) { return tensor_to_array(d.multihot); })
      .def_property_readonly("semantic", [](const Dataset& d) { return tensor_to_array(d.semantic); })
      .def_property_readonly("seen_prototypes",
                             [](const Dataset& d) { return tensor_to_array(d.seen_prototypes); })
      .def_property_readonly("unseen_prototypes",
                             [](const Dataset& d) { return tensor_to_array(d.unseen_prototypes); })
      .def_property_readonly("provenance", [](const Dataset& d) { return d.provenance; })
      .def("__len__", &Dataset::size);

  m.def("gen_blobs", &gen_blobs, py::arg("seed"), py::arg("n_classes"), py::arg("n_per_class"),
        py::arg("dim"), py::arg("spread"));
  m.def("gen_multilabel", &gen_multilabel, py::arg("seed"), py::arg("n_labels"),
        py::arg("n_samples"), py::arg("dim"), py::arg("overlap"),
        py::arg("positive_rate") = 0.25);
  m.def(
      "gen_zeroshot",
      [](std::uint64_t seed, std::size_t n_seen, std::size_t n_unseen, std::size_t attr_dim,
         std::size_t n_per_class, double noise, std::size_t feature_dim) {
        const ZeroShotData zs =
            gen_zeroshot(seed, n_seen, n_unseen, attr_dim, n_per_class, noise, feature_dim);
        return py::make_tuple(zs.train, zs.test);
      },
      py::arg("seed"), py::arg("n_seen"), py::arg("n_unseen"), py::arg("attr_dim"),
      py::arg("n_per_class"), py::arg("noise"), py::arg("feature_dim") = 0);
  m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"));
  m.def("subsample", &subsample, py::arg("dataset"), py::arg("n"), py::arg("seed"),
        py::arg("stratified") = true);
  m.def(
      "split",
      [](const Dataset& ds, double validation_fraction, double test_fraction,
         std::uint64_t seed, bool stratified) {
        const Split s = split(ds, SplitSpec{validation_fraction, test_fraction, seed, stratified});
        return py::make_tuple(s.train, s.validation, s.test);
      },
      py::arg("dataset"), py::arg("validation_fraction") = 0.2, py::arg("test_fraction") = 0.0,
      py::arg("seed") = 0, py::arg("stratified") = true);
  m.def("export_csv", &export_csv, py::arg("dataset"), py::arg("path"));

  m.def(
      "kl_closed_form",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mu,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& logvar) {
        return kl_to_standard_normal(tensor_from_array(mu), tensor_from_array(logvar)).item();
      },
      py::arg("mu"), py::arg("logvar"));
  m.def(
      "reparameterize",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mu,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& logvar,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& eps) {
        return tensor_to_array(
            reparameterize(tensor_from_array(mu), tensor_from_array(logvar), tensor_from_array(eps)));
      },
      py::arg("mu"), py::arg("logvar"), py::arg("eps"));

  m.def(
      "micro_macro_f1",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& truth) {
        const auto [micro, macro] = micro_macro_f1(tensor_from_array(pred), tensor_from_array(truth));
        return py::make_tuple(micro, macro);
      },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "zero_shot_top1",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& prototypes,
         const std::vector<int>& truth) {
        return zero_shot_top1(tensor_from_array(pred), tensor_from_array(prototypes), truth);
      },
      py::arg("pred"), py::arg("prototypes"), py::arg("truth"));
  m.def(
      "latent_separation",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& embeddings,
         const std::vector<int>& labels) {
        return latent_separation(tensor_from_array(embeddings), labels);
      },
      py::arg("embeddings"), py::arg("labels"));

  py::class_<PyModel>(m, "Model")
      .def_static("build", &PyModel::build, py::arg("config_json"), py::arg("seed"))
      .def_static("load",
                  [](const std::string& path) {
                    return PyModel{load_checkpoint(path), TrainConfig{}};
                  },
                  py::arg("path"))
      .def("save", [](const PyModel& pm, const std::string& path) { save_checkpoint(path, pm.model); },
           py::arg("path"))
      .def("train", &PyModel::train_on, py::arg("dataset"), py::arg("seed"))
      .def("predict", &PyModel::predict, py::arg("x"))
      .def("predict_mc", &PyModel::predict_mc_n, py::arg("x"), py::arg("n_samples"),
           py::arg("seed"))
      .def("encode", &PyModel::encode_batch, py::arg("x"))
      .def_property_readonly("latent_dim", [](const PyModel& pm) { return pm.model.latent_dim(); })
      .def_property_readonly("variant",
                             [](const PyModel& pm) { return variant_name(pm.model.variant().tag); })
      .def_property_readonly(
          "parameters", [](PyModel& pm) {
            py::dict out;
            for (const auto& [name, t] : pm.model.params()) out[name.c_str()] = tensor_to_array(t);
            return out;
          });

  m.def(
      "run_training",
      [](const std::string& config_json) {
        const RunConfig cfg = config_from_json_str(config_json);
        return run_training(cfg).aggregate.dump();
      },
      py::arg("config_json"),
      "Full multi-seed training command; returns the aggregate report as a JSON string");
}
