#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ugan/error.hpp"
#include "ugan/evalsuite.hpp"
#include "ugan/image_io.hpp"
#include "ugan/infer.hpp"
#include "ugan/losses.hpp"
#include "ugan/pairgen.hpp"

namespace py = pybind11;
using namespace ugan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const FloatArray& array) {
  if (array.ndim() != 3 || array.shape(2) != 3) {
    throw DimensionError("expected an H x W x 3 array");
  }
  const auto h = static_cast<int>(array.shape(0));
  const auto w = static_cast<int>(array.shape(1));
  return ImageTensor(h, w, std::vector<float>(array.data(), array.data() + array.size()));
}

FloatArray to_array(const ImageTensor& image) {
  FloatArray out({image.height(), image.width(), ImageTensor::kChannels});
  std::copy(image.data().begin(), image.data().end(), out.mutable_data());
  return out;
}

eval::EdgeDistance parse_distance(const std::string& name) {
  if (name == "euclidean") return eval::EdgeDistance::kEuclidean;
  if (name == "count") return eval::EdgeDistance::kCount;
  throw ConfigError("distance must be euclidean or count, got " + name);
}

eval::PatchSpec whole_or(const ImageTensor& image, const std::optional<std::string>& patch) {
  if (patch) return eval::parse_patch(*patch);
  return {"all", 0, 0, image.height(), image.width()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Underwater image restoration: image I/O, distortion, metrics and inference";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def(
      "load_image",
      [](const std::filesystem::path& path, std::optional<std::pair<int, int>> size) {
        const auto image = size ? load_image(path, Size{size->first, size->second}) : load_image_native(path);
        return to_array(image);
      },
      py::arg("path"), py::arg("size") = py::none(),
      "Load an image as an H x W x 3 float32 array in [-1, 1], optionally resized to (height, width).");
  m.def(
      "save_image", [](const std::filesystem::path& path, const FloatArray& a) { save_image(path, to_image(a)); },
      py::arg("path"), py::arg("image"));

  m.def(
      "synthetic_scene",
      [](int height, int width, std::uint64_t seed) {
        return to_array(pairgen::synthetic_scene({height, width}, seed));
      },
      py::arg("height"), py::arg("width"), py::arg("seed"));
  m.def(
      "synth_distort",
      [](const FloatArray& clean, std::uint64_t seed, std::optional<std::string> params) {
        const auto p = params ? pairgen::parse_distortion_params(*params)
                              : pairgen::DistortionParams::underwater_preset();
        return to_array(pairgen::synth_distort(to_image(clean), p, seed));
      },
      py::arg("clean"), py::arg("seed") = 0, py::arg("params") = py::none(),
      "Apply the parametric distortion; params uses the key = value text format.");
  m.def("underwater_preset",
        [] { return pairgen::format_distortion_params(pairgen::DistortionParams::underwater_preset()); });

  m.def(
      "l1_loss",
      [](const FloatArray& clean, const FloatArray& predicted) {
        return losses::l1_loss(nets::to_batch({to_image(clean)}), nets::to_batch({to_image(predicted)}))
            .item<double>();
      },
      py::arg("clean"), py::arg("predicted"));
  m.def(
      "gdl",
      [](const FloatArray& clean, const FloatArray& predicted, int alpha) {
        return losses::gdl(nets::to_batch({to_image(clean)}), nets::to_batch({to_image(predicted)}), alpha)
            .item<double>();
      },
      py::arg("clean"), py::arg("predicted"), py::arg("alpha") = 1);
  m.def(
      "gdl_sum",
      [](const FloatArray& clean, const FloatArray& predicted, int alpha) {
        return losses::gdl_sum(to_image(clean), to_image(predicted), alpha);
      },
      py::arg("clean"), py::arg("predicted"), py::arg("alpha") = 1);

  m.def(
      "canny_edges",
      [](const FloatArray& image, double low, double high) {
        const auto edges = eval::canny_edges(to_image(image), {low, high});
        py::array_t<std::uint8_t> out({edges.height, edges.width});
        std::copy(edges.data.begin(), edges.data.end(), out.mutable_data());
        return out;
      },
      py::arg("image"), py::arg("low") = 0.1, py::arg("high") = 0.2);
  m.def(
      "edge_distance",
      [](const FloatArray& a, const FloatArray& b, double low, double high, const std::string& distance) {
        return eval::edge_distance(to_image(a), to_image(b), {low, high}, parse_distance(distance));
      },
      py::arg("a"), py::arg("b"), py::arg("low") = 0.1, py::arg("high") = 0.2,
      py::arg("distance") = "euclidean");
  m.def(
      "patch_stats",
      [](const FloatArray& image, std::optional<std::string> patch) {
        const auto img = to_image(image);
        const auto s = eval::patch_stats(img, whole_or(img, patch));
        return std::make_pair(s.mean, s.std);
      },
      py::arg("image"), py::arg("patch") = py::none(),
      "(mean, std) of the patch on [0, 1] intensities; patch is 'label:top,left,height,width'.");
  m.def(
      "patch_gdl",
      [](const FloatArray& original, const FloatArray& generated, std::optional<std::string> patch) {
        const auto a = to_image(original);
        return eval::patch_gdl(a, to_image(generated), whole_or(a, patch));
      },
      py::arg("original"), py::arg("generated"), py::arg("patch") = py::none());

  m.def(
      "export_generator",
      [](const std::filesystem::path& path, const std::string& preset, std::uint64_t seed, bool identity) {
        nets::GeneratorSpec spec;
        if (preset == "desk") {
          spec = nets::GeneratorSpec::desk();
        } else if (preset == "paper") {
          spec = nets::GeneratorSpec::paper();
        } else {
          throw ConfigError("preset must be desk or paper, got " + preset);
        }
        nets::UNetGenerator g(spec);
        nets::init_weights(*g, seed);
        if (identity) nets::apply_identity_preset(*g);
        infer::save_generator(path, g);
      },
      py::arg("path"), py::arg("preset") = "desk", py::arg("seed") = 0, py::arg("identity") = false,
      "Write an untrained generator checkpoint; identity=True gives the tanh pass-through weights.");

  py::class_<infer::LoadedGenerator>(m, "Generator")
      .def(py::init([](const std::filesystem::path& checkpoint) { return infer::load_generator(checkpoint); }),
           py::arg("checkpoint"))
      .def_property_readonly("image_size", [](const infer::LoadedGenerator& g) { return g.spec.image_size; })
      .def_readonly("iteration", &infer::LoadedGenerator::iteration)
      .def(
          "restore",
          [](infer::LoadedGenerator& g, const FloatArray& image) {
            return to_array(infer::restore_image(g, to_image(image)));
          },
          py::arg("image"))
      .def(
          "benchmark",
          [](infer::LoadedGenerator& g, int trials) {
            const auto r = infer::benchmark(g, trials, "auto");
            return py::dict(py::arg("mean_seconds_per_image") = r.mean_seconds_per_image,
                            py::arg("fps") = r.fps, py::arg("trials") = r.trials,
                            py::arg("image_size") = r.image_size, py::arg("device") = r.device);
          },
          py::arg("trials") = 10);
}
