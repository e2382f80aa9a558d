#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "monet/app.hpp"
#include "monet/io.hpp"

namespace py = pybind11;
using namespace monet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor image_from_array(const Array& a, int n) {
  if (a.ndim() != 3 || a.shape(2) != 3)
    throw std::invalid_argument("expected an [H, W, 3] array, got ndim " + std::to_string(a.ndim()));
  Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), 3});
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  if (t.dim(0) != static_cast<std::size_t>(n) || t.dim(1) != static_cast<std::size_t>(n))
    t = resize_bilinear(t, n);
  return t;
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical duplicated-region detection (C++ core).";

  py::class_<ScaleConfig>(m, "ScaleConfig")
      .def(py::init([](int image_size, int top_scale, int min_scale, int top_channels) {
             ScaleConfig c{image_size, top_scale, min_scale, top_channels};
             c.validate();
             return c;
           }),
           py::arg("image_size") = 256, py::arg("top_scale") = 5, py::arg("min_scale") = 1,
           py::arg("top_channels") = 256)
      .def_static("desk", &ScaleConfig::desk)
      .def_readonly("image_size", &ScaleConfig::image_size)
      .def_readonly("top_scale", &ScaleConfig::top_scale)
      .def_readonly("min_scale", &ScaleConfig::min_scale)
      .def_readonly("top_channels", &ScaleConfig::top_channels)
      .def("grid_size", &ScaleConfig::grid_size)
      .def("patch_dim", &ScaleConfig::patch_dim)
      .def("channels", &ScaleConfig::channels)
      .def("__repr__", [](const ScaleConfig& c) { return "ScaleConfig(" + nlohmann::json(c).dump() + ")"; });

  m.def("naive_budget", &naive_budget, py::arg("cfg"), py::arg("scale"));
  m.def("ours_budget", &ours_budget, py::arg("cfg"), py::arg("scale"));
  m.def("budget_table_csv", [](const ScaleConfig& c) { return budget_table(c).to_csv(); }, py::arg("cfg"));

  m.def(
      "exact_overlap",
      [](const ScaleConfig& cfg, std::array<int, 4> src, std::array<int, 4> dst, int scale,
         std::pair<int, int> a, std::pair<int, int> b) {
        DuplicationCorrespondence corr{{src[0], src[1], src[2], src[3]}, {dst[0], dst[1], dst[2], dst[3]}};
        return exact_overlap(cfg, corr, {1, scale, a.first, a.second}, {2, scale, b.first, b.second});
      },
      py::arg("cfg"), py::arg("src"), py::arg("dst"), py::arg("scale"), py::arg("a"), py::arg("b"),
      "Pixels of image-1 patch a copied into image-2 patch b; rects are (x, y, w, h), patches (row, col).");

  m.def("margin_rank_loss", &margin_rank_loss, py::arg("x1"), py::arg("x2"), py::arg("m"));
  m.def("flexible_margin", &flexible_margin, py::arg("o_plus"), py::arg("o_minus"), py::arg("d"));
  m.def("flexible_margin_loss", &flexible_margin_loss, py::arg("x1"), py::arg("x2"), py::arg("o_plus"),
        py::arg("o_minus"), py::arg("d"));
  m.def(
      "mcc", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) { return mcc({tp, tn, fp, fn}); },
      py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

  m.def(
      "generate_template",
      [](const ScaleConfig& cfg, std::uint64_t seed, int min_region, int max_region) {
        Rng rng(seed);
        return to_py(template_to_json(generate_template(cfg, rng, min_region, max_region, "py")));
      },
      py::arg("cfg"), py::arg("seed"), py::arg("min_region"), py::arg("max_region"));

  m.def("desk_config", [] { return to_py(RunConfig::desk()); }, "Default run config as a dict.");

  py::class_<Model>(m, "Model")
      .def_static(
          "load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; }, py::arg("path"))
      .def_static(
          "untrained",
          [](const ScaleConfig& cfg, std::uint64_t seed, const std::string& mode) {
            ModelConfig mc;
            mc.scales = cfg;
            mc.init_seed = seed;
            mc.mode = ablation_from_string(mode);
            return Model(mc);
          },
          py::arg("cfg"), py::arg("seed") = 0, py::arg("mode") = "full")
      .def_property_readonly("scales", &Model::scales)
      .def(
          "detect",
          [](const Model& model, const Array& a, const Array& b) {
            const int n = model.scales().image_size;
            const Tensor t1 = image_from_array(a, n), t2 = image_from_array(b, n);
            PipelineOutput out;
            {
              py::gil_scoped_release release;
              out = run_pipeline(model, t1, t2);
            }
            py::dict maps;
            for (const auto& [s, map] : out.score_maps) maps[py::int_(s)] = to_array(map.as_tensor());
            py::dict ledger;
            for (const auto& [s, c] : out.ledger.counts()) ledger[py::int_(s)] = c;
            py::dict r;
            r["mask1"] = to_array(out.mask1);
            r["mask2"] = to_array(out.mask2);
            r["score_maps"] = maps;
            r["ledger"] = ledger;
            return r;
          },
          py::arg("image1"), py::arg("image2"),
          "Runs the hierarchical pipeline on two [H, W, 3] arrays in [0, 1].");
}
