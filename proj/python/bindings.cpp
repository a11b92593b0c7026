// Python bindings for the core operations: phantom simulation, degradation,
// the restoration network, metrics, losses, and complexity accounting.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "litformer/complexity.hpp"
#include "litformer/gradcheck.hpp"
#include "litformer/trainer.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

lit::Volume volume_from_array(const FloatArray& arr, std::array<float, 3> spacing) {
  if (arr.ndim() != 3) throw lit::ShapeError("expected a (D, H, W) array");
  lit::Volume v;
  v.d = arr.shape(0);
  v.h = arr.shape(1);
  v.w = arr.shape(2);
  v.spacing = spacing;
  v.data.assign(arr.data(), arr.data() + arr.size());
  return v;
}

py::array_t<float> array_from_volume(const lit::Volume& v) {
  py::array_t<float> out({v.d, v.h, v.w});
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

std::vector<double> flat(const DoubleArray& arr) {
  return std::vector<double>(arr.data(), arr.data() + arr.size());
}

lit::ModelConfig config_from_kwargs(int base_channels, int levels, std::vector<int> heads_inplane,
                                    int heads_throughplane, double depth_scale, bool align_corners,
                                    bool attn_inplane, bool attn_throughplane, bool attn_bypass,
                                    const std::string& attn_fusion, const std::string& ffn_fusion,
                                    bool ffn_nonlinearity) {
  lit::ModelConfig cfg;
  cfg.base_channels = base_channels;
  cfg.levels = levels;
  if (!heads_inplane.empty()) cfg.heads_inplane = std::move(heads_inplane);
  cfg.heads_throughplane = heads_throughplane;
  cfg.depth_scale = depth_scale;
  cfg.align_corners = align_corners;
  cfg.attn.enable_inplane = attn_inplane;
  cfg.attn.enable_throughplane = attn_throughplane;
  cfg.attn.bypass = attn_bypass;
  cfg.attn.fusion = lit::fusion_from_string(attn_fusion);
  cfg.ffn.fusion = lit::fusion_from_string(ffn_fusion);
  cfg.ffn.nonlinearity = ffn_nonlinearity;
  cfg.validate();
  return cfg;
}

// Thin stateful wrapper exposing forward passes and checkpoints.
class PyModel {
 public:
  PyModel(lit::ModelConfig cfg, std::uint64_t seed) : model_(cfg, seed) {}

  static PyModel from_checkpoint(const std::string& path) {
    lit::KvConfig kv = lit::KvConfig::load(path + ".cfg");
    PyModel wrapper(lit::model_config_from(kv), 0);
    lit::restore_params(wrapper.model_, lit::read_checkpoint(path));
    return wrapper;
  }

  py::array_t<float> forward(const FloatArray& batch) const {
    if (batch.ndim() != 5 || batch.shape(1) != 1)
      throw lit::ShapeError("expected an (N, 1, D, H, W) array");
    lit::NoGradGuard ng;
    std::vector<float> data(batch.data(), batch.data() + batch.size());
    lit::Tensor<float> x = lit::Tensor<float>::from(
        {batch.shape(0), batch.shape(1), batch.shape(2), batch.shape(3), batch.shape(4)},
        std::move(data));
    lit::Tensor<float> y = model_.forward(x);
    py::array_t<float> out({y.extent(0), y.extent(1), y.extent(2), y.extent(3), y.extent(4)});
    std::copy(y.value().begin(), y.value().end(), out.mutable_data());
    return out;
  }

  // Full restoration of one HU volume: normalize, forward, denormalize.
  py::array_t<float> restore(const FloatArray& hu_volume) const {
    lit::Volume v = volume_from_array(hu_volume, {3.0f, 1.0f, 1.0f});
    return array_from_volume(lit::run_model(model_, v));
  }

  std::int64_t param_count() const { return model_.params().total_count(); }

  std::map<std::string, std::vector<std::int64_t>> param_shapes() const {
    std::map<std::string, std::vector<std::int64_t>> out;
    for (const auto& [name, t] : model_.params().items) out[name] = t.shape();
    return out;
  }

  void save(const std::string& path) const {
    lit::save_with_config<float>(path, model_, nullptr, nullptr);
  }

  const lit::LitFormer<float>& net() const { return model_; }

 private:
  lit::LitFormer<float> model_;
};

py::dict analyze_dict(const lit::ModelConfig& cfg, const std::vector<std::int64_t>& input_shape) {
  lit::LitFormer<float> full(cfg, 0);
  lit::LitFormer<float> unet(lit::unet_variant(cfg), 0);
  lit::Shape input(input_shape.begin(), input_shape.end());
  auto rep = lit::analyze_model(full, input, "lit-former");
  py::dict out;
  out["params"] = rep.total_params;
  out["params_no_attention"] = unet.params().total_count();
  out["macs"] = rep.total_macs;
  py::list layers;
  for (const auto& e : rep.layers) {
    py::dict layer;
    layer["path"] = e.path;
    layer["weight_params"] = e.weight_params;
    layer["bias_params"] = e.bias_params;
    layer["macs"] = e.macs;
    layers.append(layer);
  }
  out["layers"] = layers;
  return out;
}

}  // namespace

PYBIND11_MODULE(litformer, m) {
  m.doc() = "3D CT restoration: factorized in-plane/through-plane attention network";

  py::register_exception<lit::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<lit::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<lit::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<lit::FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<lit::ModelConfig>(m, "ModelConfig")
      .def(py::init(&config_from_kwargs), py::arg("base_channels") = 64, py::arg("levels") = 4,
           py::arg("heads_inplane") = std::vector<int>{1, 2, 4, 8},
           py::arg("heads_throughplane") = 2, py::arg("depth_scale") = 2.0,
           py::arg("align_corners") = true, py::arg("attn_inplane") = true,
           py::arg("attn_throughplane") = true, py::arg("attn_bypass") = false,
           py::arg("attn_fusion") = "parallel", py::arg("ffn_fusion") = "parallel",
           py::arg("ffn_nonlinearity") = true)
      .def_readonly("base_channels", &lit::ModelConfig::base_channels)
      .def_readonly("levels", &lit::ModelConfig::levels)
      .def_readonly("depth_scale", &lit::ModelConfig::depth_scale);

  py::class_<PyModel>(m, "Model")
      .def(py::init<lit::ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_static("from_checkpoint", &PyModel::from_checkpoint, py::arg("path"))
      .def("forward", &PyModel::forward, py::arg("batch"),
           "Run the network on a normalized (N, 1, D, H, W) batch.")
      .def("restore", &PyModel::restore, py::arg("hu_volume"),
           "Restore one (D, H, W) volume on the HU scale.")
      .def("param_count", &PyModel::param_count)
      .def("param_shapes", &PyModel::param_shapes)
      .def("save", &PyModel::save, py::arg("path"));

  m.def("make_phantom",
        [](std::uint64_t seed, std::int64_t d, std::int64_t h, std::int64_t w) {
          return array_from_volume(lit::make_phantom(seed, d, h, w));
        },
        py::arg("seed"), py::arg("d"), py::arg("h"), py::arg("w"));

  m.def("degrade",
        [](const FloatArray& hu, int depth_factor, double noise_sigma_hu, std::uint64_t seed) {
          lit::DegradeConfig cfg;
          cfg.depth_factor = depth_factor;
          cfg.noise_sigma_hu = noise_sigma_hu;
          cfg.seed = seed;
          return array_from_volume(lit::degrade(volume_from_array(hu, {1.5f, 1.0f, 1.0f}), cfg));
        },
        py::arg("hu_volume"), py::arg("depth_factor") = 2, py::arg("noise_sigma_hu") = 25.0,
        py::arg("seed") = 0);

  m.def("normalize",
        [](const FloatArray& hu) {
          py::array_t<float> out(std::vector<py::ssize_t>(hu.shape(), hu.shape() + hu.ndim()));
          lit::normalize_hu(hu.data(), out.mutable_data(), hu.size());
          return out;
        },
        py::arg("hu"), "Window [-1000, 2000] HU and rescale to [0, 1].");

  m.def("denormalize",
        [](const FloatArray& unit) {
          py::array_t<float> out(std::vector<py::ssize_t>(unit.shape(), unit.shape() + unit.ndim()));
          lit::denormalize_hu(unit.data(), out.mutable_data(), unit.size());
          return out;
        },
        py::arg("unit"));

  m.def("write_volume",
        [](const std::string& path, const FloatArray& hu, std::array<float, 3> spacing) {
          lit::write_volume(path, volume_from_array(hu, spacing));
        },
        py::arg("path"), py::arg("hu_volume"),
        py::arg("spacing") = std::array<float, 3>{1.5f, 1.0f, 1.0f});

  m.def("read_volume", [](const std::string& path) {
    lit::Volume v = lit::read_volume(path);
    return py::make_tuple(array_from_volume(v), v.spacing);
  });

  m.def("psnr", [](const DoubleArray& a, const DoubleArray& b) {
    return lit::psnr_volume(flat(a), flat(b));
  });
  m.def("rmse", [](const DoubleArray& a, const DoubleArray& b) {
    return lit::rmse_volume(flat(a), flat(b));
  });
  m.def("ssim2d", [](const DoubleArray& a, const DoubleArray& b) {
    if (a.ndim() != 2) throw lit::ShapeError("ssim2d expects (H, W) arrays");
    return lit::ssim_2d(flat(a), flat(b), a.shape(0), a.shape(1));
  });
  m.def("ssim3d", [](const DoubleArray& a, const DoubleArray& b) {
    if (a.ndim() != 3) throw lit::ShapeError("ssim3d expects (D, H, W) arrays");
    return lit::ssim_3d(flat(a), flat(b), a.shape(0), a.shape(1), a.shape(2));
  });

  m.def("charbonnier",
        [](const DoubleArray& pred, const DoubleArray& target, double eps) {
          if (pred.ndim() != 5) throw lit::ShapeError("losses expect (N, 1, D, H, W) arrays");
          lit::NoGradGuard ng;
          lit::Shape shape(pred.shape(), pred.shape() + 5);
          return lit::charbonnier_loss(lit::Tensor<double>::from(shape, flat(pred)),
                                       lit::Tensor<double>::from(shape, flat(target)), eps)
              .item();
        },
        py::arg("pred"), py::arg("target"), py::arg("eps") = 1e-3);

  m.def("ssim_loss", [](const DoubleArray& pred, const DoubleArray& target) {
    if (pred.ndim() != 5) throw lit::ShapeError("losses expect (N, 1, D, H, W) arrays");
    lit::NoGradGuard ng;
    lit::Shape shape(pred.shape(), pred.shape() + 5);
    return lit::ssim_loss(lit::Tensor<double>::from(shape, flat(pred)),
                          lit::Tensor<double>::from(shape, flat(target)))
        .item();
  });

  m.def("total_loss",
        [](const DoubleArray& pred, const DoubleArray& target, const std::string& mode,
           double lambda, double eps) {
          if (pred.ndim() != 5) throw lit::ShapeError("losses expect (N, 1, D, H, W) arrays");
          lit::NoGradGuard ng;
          lit::LossConfig cfg;
          cfg.mode = mode;
          cfg.lambda = lambda;
          cfg.epsilon = eps;
          lit::Shape shape(pred.shape(), pred.shape() + 5);
          return lit::total_loss(lit::Tensor<double>::from(shape, flat(pred)),
                                 lit::Tensor<double>::from(shape, flat(target)), cfg)
              .item();
        },
        py::arg("pred"), py::arg("target"), py::arg("mode") = "charbonnier_plus_ssim",
        py::arg("lambda_") = 2.0, py::arg("eps") = 1e-3);

  m.def("lr_at", &lit::lr_at, py::arg("step"), py::arg("total_steps"), py::arg("warmup_steps"),
        py::arg("lr_max") = 2e-4, py::arg("lr_min") = 1e-6);

  m.def("analyze", &analyze_dict, py::arg("config"), py::arg("input_shape"),
        "Analytic per-layer parameter and MAC accounting.");

  m.def("trilinear_baseline",
        [](const FloatArray& hu, double depth_scale, bool align_corners) {
          lit::Volume v = volume_from_array(hu, {3.0f, 1.0f, 1.0f});
          return array_from_volume(lit::trilinear_baseline(v, depth_scale, align_corners));
        },
        py::arg("hu_volume"), py::arg("depth_scale") = 2.0, py::arg("align_corners") = true);
}
