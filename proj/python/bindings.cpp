#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "stripnet/adam.hpp"
#include "stripnet/checkpoint.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/gradcheck.hpp"
#include "stripnet/half.hpp"
#include "stripnet/loss.hpp"
#include "stripnet/nifti.hpp"
#include "stripnet/npy.hpp"
#include "stripnet/phantom.hpp"
#include "stripnet/pipeline.hpp"
#include "stripnet/run_config.hpp"
#include "stripnet/train.hpp"
#include "stripnet/unet.hpp"
#include "stripnet/znorm.hpp"

namespace py = pybind11;
using namespace stripnet;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Volume3D to_volume(const F64Array& a) {
  if (a.ndim() != 3) throw py::value_error("expected a 3-D array (d, h, w)");
  const auto d = static_cast<std::size_t>(a.shape(0)), h = static_cast<std::size_t>(a.shape(1)),
             w = static_cast<std::size_t>(a.shape(2));
  return Volume3D(d, h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array from_volume(const Volume3D& v) {
  F64Array out({v.d, v.h, v.w});
  std::memcpy(out.mutable_data(), v.data.data(), v.data.size() * sizeof(double));
  return out;
}

F64Array from_vector(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  F64Array out(shape);
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
  return out;
}

std::vector<double> flat(const F64Array& a) { return {a.data(), a.data() + a.size()}; }

Tensor<float> to_batch(const F32Array& a) {
  if (a.ndim() == 3) {
    return Tensor<float>({static_cast<std::size_t>(a.shape(0)), 1, static_cast<std::size_t>(a.shape(1)),
                          static_cast<std::size_t>(a.shape(2))},
                         std::vector<float>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() == 4) {
    return Tensor<float>({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                          static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))},
                         std::vector<float>(a.data(), a.data() + a.size()));
  }
  throw py::value_error("expected images of shape (n, h, w) or (n, 1, h, w)");
}

UNetConfig make_config(std::size_t base_filters, std::size_t depth, std::size_t bottleneck_filters, std::size_t height,
                       std::size_t width) {
  UNetConfig c;
  c.base_filters = base_filters;
  c.depth = depth;
  c.bottleneck_filters = bottleneck_filters;
  c.height = height;
  c.width = width;
  return c;
}

struct PyUNet {
  UNetModel<float> model;
  AdamState<float> adam;
  AdamConfig adam_config;

  explicit PyUNet(UNetModel<float> m) : model(std::move(m)), adam(make_adam_state<float>(model.parameters())) {}
};

RunConfig run_config(const std::string& text, const std::map<std::string, py::object>& overrides) {
  RunConfig cfg = parse_run_config(text);
  for (const auto& [key, value] : overrides) set_config_value(cfg, key, py::str(value).cast<std::string>());
  validate(cfg);
  return cfg;
}

py::dict metrics_dict(const SegmentationMetrics& m) {
  py::dict d;
  d["bce"] = m.bce;
  d["accuracy"] = m.accuracy;
  d["dice"] = m.dice;
  return d;
}

}  // namespace

PYBIND11_MODULE(_stripnet, m) {
  m.doc() = "Skull stripping with 2D U-Nets (vanilla, residual and dense variants).";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_IOError);
  static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const ContractViolation& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.attr("ARCHITECTURES") = py::make_tuple("vanilla", "residual", "dense");
  py::dict published;
  published["vanilla"] = 7'759'521;
  published["residual"] = 9'895'073;
  published["dense"] = kPublishedDenseParams;
  m.attr("PUBLISHED_PARAMETERS") = published;

  m.def(
      "analytic_parameter_count",
      [](const std::string& arch, std::size_t base_filters, std::size_t depth, std::size_t bottleneck_filters) {
        const UNetConfig c = make_config(base_filters, depth, bottleneck_filters, std::size_t{1} << depth,
                                         std::size_t{1} << depth);
        return analytic_parameter_count(build_graph(parse_architecture(arch), c));
      },
      py::arg("arch"), py::arg("base_filters") = 32, py::arg("depth") = 4, py::arg("bottleneck_filters") = 0,
      "Trainable parameter count derived from the layer graph, without allocating weights.");

  py::class_<PyUNet>(m, "UNet")
      .def(py::init([](const std::string& arch, std::size_t base_filters, std::size_t depth,
                       std::size_t bottleneck_filters, std::size_t height, std::size_t width, std::uint64_t seed) {
             return PyUNet(UNetModel<float>(parse_architecture(arch),
                                            make_config(base_filters, depth, bottleneck_filters, height, width), seed));
           }),
           py::arg("arch") = "vanilla", py::arg("base_filters") = 32, py::arg("depth") = 4,
           py::arg("bottleneck_filters") = 0, py::arg("height") = 256, py::arg("width") = 256, py::arg("seed") = 0)
      .def_static(
          "load", [](const std::filesystem::path& path) { return PyUNet(load_checkpoint(path)); }, py::arg("path"))
      .def("save", [](const PyUNet& self, const std::filesystem::path& path) { save_checkpoint(self.model, path); })
      .def_property_readonly("architecture", [](const PyUNet& self) { return std::string(to_string(self.model.kind())); })
      .def_property_readonly("seed", [](const PyUNet& self) { return self.model.seed(); })
      .def_property_readonly("parameter_count", [](const PyUNet& self) { return count_parameters(self.model); })
      .def_property_readonly("updates", [](const PyUNet& self) { return self.adam.t; })
      .def("parameter_names",
           [](const PyUNet& self) {
             std::vector<std::string> names;
             for (const auto& p : self.model.parameters()) names.push_back(p.name);
             return names;
           })
      .def(
          "parameter",
          [](PyUNet& self, const std::string& name) {
            const Parameter<float>* p = self.model.find_parameter(name);
            if (!p) throw py::key_error(name);
            const Shape4 s = p->value.shape();
            py::array_t<float> out({s.n, s.c, s.h, s.w});
            std::memcpy(out.mutable_data(), p->value.storage().data(), p->value.numel() * sizeof(float));
            return out;
          },
          py::arg("name"))
      .def(
          "forward",
          [](PyUNet& self, const F32Array& images) {
            const Tensor<float> x = to_batch(images);
            Tensor<float> y;
            {
              py::gil_scoped_release release;
              y = self.model.forward(x);
            }
            const Shape4 s = y.shape();
            py::array_t<float> out({s.n, s.h, s.w});
            std::memcpy(out.mutable_data(), y.storage().data(), y.numel() * sizeof(float));
            return out;
          },
          py::arg("images"), "Brain probabilities for a batch of slices, shape (n, h, w).")
      .def(
          "fit_batch",
          [](PyUNet& self, const F32Array& images, const F32Array& masks, double learning_rate, std::size_t updates) {
            const Tensor<float> x = to_batch(images), y = to_batch(masks);
            self.adam_config.learning_rate = learning_rate;
            self.adam_config.validate();
            std::vector<std::pair<double, double>> trace;
            py::gil_scoped_release release;
            for (std::size_t i = 0; i < updates; ++i) {
              const StepResult r = train_step(self.model, self.adam, self.adam_config, x, y);
              trace.emplace_back(r.loss, r.accuracy);
            }
            return trace;
          },
          py::arg("images"), py::arg("masks"), py::arg("learning_rate") = 1e-5, py::arg("updates") = 1,
          "Adam updates on one batch; returns (bce, accuracy) measured before each update.");

  m.def(
      "znorm",
      [](const F64Array& volume, std::optional<F64Array> mask) {
        const Volume3D v = to_volume(volume);
        const ZNormResult r = mask ? znorm(v, to_volume(*mask)) : znorm(v);
        return py::make_tuple(from_volume(r.volume), r.stats.mean, r.stats.stddev);
      },
      py::arg("volume"), py::arg("mask") = py::none(),
      "(I - mean) / std with statistics over the mask, or over voxels > 0 without one.");

  m.def(
      "float_to_half_bits",
      [](const F64Array& a) {
        py::array_t<std::uint16_t> out(std::vector<py::ssize_t>(a.shape(), a.shape() + a.ndim()));
        for (py::ssize_t i = 0; i < a.size(); ++i) out.mutable_data()[i] = double_to_half_bits(a.data()[i]);
        return out;
      },
      py::arg("values"));
  m.def(
      "half_bits_to_float",
      [](const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a) {
        F64Array out(std::vector<py::ssize_t>(a.shape(), a.shape() + a.ndim()));
        for (py::ssize_t i = 0; i < a.size(); ++i) out.mutable_data()[i] = half_bits_to_double(a.data()[i]);
        return out;
      },
      py::arg("bits"));

  m.def(
      "read_nifti", [](const std::filesystem::path& path) { return from_volume(read_nifti(path)); }, py::arg("path"));
  m.def(
      "read_npy",
      [](const std::filesystem::path& path) {
        const NpyRecord r = load_npy(path);
        return from_vector(npy_to_doubles(r), std::vector<py::ssize_t>(r.shape.begin(), r.shape.end()));
      },
      py::arg("path"), "Reads a supported NPY file as float64.");
  m.def(
      "write_npy",
      [](const std::filesystem::path& path, const py::array& array) {
        const py::array a = py::array::ensure(array, py::array::c_style);
        const py::dtype dt = a.dtype();
        NpyRecord r;
        const char kind = dt.kind();
        const auto size = dt.itemsize();
        if (kind == 'f' && size == 8) r.dtype = Precision::F64;
        else if (kind == 'f' && size == 4) r.dtype = Precision::F32;
        else if (kind == 'f' && size == 2) r.dtype = Precision::F16;
        else if (kind == 'i' && size == 2) r.dtype = Precision::I16;
        else if (kind == 'i' && size == 1) r.dtype = Precision::I8;
        else if (kind == 'u' && size == 1) r.dtype = Precision::U8;
        else throw py::type_error("unsupported dtype for NPY output");
        r.shape.assign(a.shape(), a.shape() + a.ndim());
        const auto* bytes = static_cast<const std::uint8_t*>(a.data());
        r.data.assign(bytes, bytes + a.nbytes());
        save_npy(path, r);
      },
      py::arg("path"), py::arg("array"), "Writes f8, f4, f2, i2, i1 or u1 arrays byte-identically to numpy.save.");

  m.def(
      "bce_loss",
      [](const F64Array& prob, const F64Array& target) {
        return bce_loss(Tensor<double>({1, 1, 1, static_cast<std::size_t>(prob.size())}, flat(prob)),
                        Tensor<double>({1, 1, 1, static_cast<std::size_t>(target.size())}, flat(target)));
      },
      py::arg("prob"), py::arg("target"));
  m.def(
      "dice", [](const F64Array& pred, const F64Array& target) { return dice_coefficient(flat(pred), flat(target)); },
      py::arg("pred"), py::arg("target"));
  m.def(
      "effective_lr",
      [](std::uint64_t t, double learning_rate, double decay) {
        AdamConfig c;
        c.learning_rate = learning_rate;
        c.decay = decay;
        return effective_lr(t, c);
      },
      py::arg("t"), py::arg("learning_rate") = 1e-5, py::arg("decay") = 1.99e-7);
  m.def(
      "adam_scalar_step",
      [](double theta, double grad, double learning_rate) {
        AdamConfig c;
        c.learning_rate = learning_rate;
        c.decay = 0.0;
        std::vector<Parameter<double>> ps{{"theta", Tensor<double>({1, 1, 1, 1}, theta)}};
        ps[0].grad[0] = grad;
        auto state = make_adam_state<double>(ps);
        adam_step<double>(ps, state, c);
        return ps[0].value[0];
      },
      py::arg("theta"), py::arg("grad"), py::arg("learning_rate") = 1e-5, "One Adam update from a fresh state.");

  m.def(
      "phantom_slice",
      [](std::size_t h, std::size_t w, std::uint64_t seed) {
        const PhantomSlice s = make_phantom_slice(h, w, seed);
        const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)};
        return py::make_tuple(from_vector(s.image, shape), from_vector(s.mask, shape));
      },
      py::arg("h"), py::arg("w"), py::arg("seed") = 0);
  m.def(
      "phantom_scan",
      [](std::size_t d, std::size_t h, std::size_t w, std::uint64_t seed) {
        const ScanPair p = make_phantom_scan(d, h, w, seed);
        return py::make_tuple(from_volume(p.scan), from_volume(p.mask));
      },
      py::arg("d"), py::arg("h"), py::arg("w"), py::arg("seed") = 0);

  m.def(
      "skull_strip",
      [](const F64Array& prob, const F64Array& znormed, const F64Array& raw, double threshold) {
        const PredictionResult r = skull_strip(to_volume(prob), to_volume(znormed), to_volume(raw), threshold);
        return py::make_tuple(from_volume(r.mask), from_volume(r.stripped), from_volume(r.stripped_raw));
      },
      py::arg("prob"), py::arg("znormed"), py::arg("raw"), py::arg("threshold") = 0.5,
      "Returns (mask, mask * znormed, mask * raw) with mask = prob >= threshold.");

  m.def(
      "gradcheck",
      [](std::size_t seeds, std::uint64_t first_seed) {
        std::vector<GradcheckCase> cases;
        {
          py::gil_scoped_release release;
          cases = gradcheck_suite(first_seed, seeds);
        }
        py::list out;
        for (const auto& c : cases) {
          py::dict d;
          d["name"] = c.name;
          d["seed"] = c.seed;
          d["max_rel_err"] = c.report.max_rel_err;
          d["passed"] = c.report.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("seeds") = 20, py::arg("first_seed") = 0);

  const char* overrides_doc = "config is key = value text; overrides maps dotted keys to values.";
  m.def(
      "preprocess",
      [](const std::string& config, const std::map<std::string, py::object>& overrides) {
        std::ostringstream log;
        const PreprocessReport r = cmd_preprocess(run_config(config, overrides), log);
        return r.ids;
      },
      py::arg("config") = "", py::arg("overrides") = py::dict(), overrides_doc);
  m.def(
      "augment",
      [](const std::string& config, const std::map<std::string, py::object>& overrides) {
        std::ostringstream log;
        const AugmentReport r = cmd_augment(run_config(config, overrides), log);
        return py::make_tuple(r.inputs, r.outputs);
      },
      py::arg("config") = "", py::arg("overrides") = py::dict(), overrides_doc);
  m.def(
      "train",
      [](const std::string& config, const std::map<std::string, py::object>& overrides) {
        const RunConfig cfg = run_config(config, overrides);
        std::ostringstream log;
        TrainReport r;
        {
          py::gil_scoped_release release;
          r = cmd_train(cfg, log);
        }
        py::dict d;
        d["checkpoint"] = r.checkpoint;
        d["curves"] = r.curves;
        d["manifest"] = r.manifest;
        d["epochs"] = r.fit.records.size();
        d["updates"] = r.fit.updates;
        d["stopped_early"] = r.fit.stopped_early;
        d["val_groups"] = r.fit.split.val_groups;
        return d;
      },
      py::arg("config") = "", py::arg("overrides") = py::dict(), overrides_doc);
  m.def(
      "predict",
      [](const std::string& config, const std::map<std::string, py::object>& overrides) {
        const RunConfig cfg = run_config(config, overrides);
        std::ostringstream log;
        const PredictionResult r = cmd_predict(cfg, log);
        py::dict d;
        d["probability"] = from_volume(r.probability);
        d["mask"] = from_volume(r.mask);
        d["stripped"] = from_volume(r.stripped);
        d["stripped_raw"] = from_volume(r.stripped_raw);
        d["metrics"] = r.metrics ? py::object(metrics_dict(*r.metrics)) : py::object(py::none());
        return d;
      },
      py::arg("config") = "", py::arg("overrides") = py::dict(), overrides_doc);
}
