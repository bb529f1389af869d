#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cellflow/diffusion.hpp"
#include "cellflow/error.hpp"
#include "cellflow/flow.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/patches.hpp"
#include "cellflow/stats.hpp"

namespace py = pybind11;
using namespace cellflow;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

RealGrid to_grid(const DoubleArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return RealGrid(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const RealGrid& g) {
  py::array_t<double> out({g.rows(), g.cols()});
  std::copy(g.values().begin(), g.values().end(), out.mutable_data());
  return out;
}

std::vector<annotation::Point> to_points(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw DimensionError("expected an (n, 2) array of points");
  std::vector<annotation::Point> pts;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts.push_back({a.at(i, 0), a.at(i, 1)});
  return pts;
}

py::array_t<float> tensor_array(const patches::PatchTensor& t) {
  const std::size_t n = t.size();
  py::array_t<float> out({t.frames(), n, n, patches::kChannels});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> flow_stack(const std::vector<flow::FlowField>& fields) {
  const std::size_t h = fields.empty() ? 0 : fields[0].u.rows();
  const std::size_t w = fields.empty() ? 0 : fields[0].u.cols();
  py::array_t<double> out({fields.size(), std::size_t{2}, h, w});
  double* p = out.mutable_data();
  for (const auto& f : fields) {
    p = std::copy(f.u.values().begin(), f.u.values().end(), p);
    p = std::copy(f.v.values().begin(), f.v.values().end(), p);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_cellflow, m) {
  m.doc() = "cellflow core bindings";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "compute_flow",
      [](const DoubleArray& current, const DoubleArray& next, double lambda, int iterations) {
        const flow::FlowParams params{lambda, iterations};
        const auto f = flow::compute_flow(GrayFrame(to_grid(current)), GrayFrame(to_grid(next)), params);
        return py::make_tuple(to_array(f.u), to_array(f.v));
      },
      py::arg("current"), py::arg("next"), py::arg("lam") = 1.0, py::arg("iterations") = 10,
      "Horn-Schunck flow between two frames with values in [0, 1]. Returns (u, v).");

  m.def(
      "patch_grid",
      [](std::size_t width, std::size_t height, std::size_t patch_size, double overlap,
         bool literal_step) {
        patches::PatchSpec spec;
        spec.patch_size = patch_size;
        spec.overlap = overlap;
        spec.literal_step = literal_step;
        spec.validate();
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& o : patches::patch_grid(width, height, spec)) out.emplace_back(o.x, o.y);
        return out;
      },
      py::arg("width"), py::arg("height"), py::arg("patch_size") = 128, py::arg("overlap") = 0.25,
      py::arg("literal_step") = false, "Patch origins (x, y), rows outermost.");

  m.def(
      "schedule",
      [](int steps, const std::string& kind) {
        const auto s = diffusion::make_schedule(steps, diffusion::parse_schedule_kind(kind));
        auto arr = [](std::span<const double> v) {
          return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
        };
        py::dict d;
        d["alpha"] = arr(s.alphas());
        d["sigma"] = arr(s.sigmas());
        d["log_snr"] = arr(s.log_snrs());
        return d;
      },
      py::arg("steps") = 1000, py::arg("kind") = "cosine");

  m.def(
      "sample_constant",
      [](double value, int steps, std::vector<std::size_t> shape, std::uint64_t seed) {
        diffusion::ConstantDenoiser d(value);
        Rng rng(seed);
        const auto x = diffusion::sample(d, diffusion::make_schedule(steps), shape, rng);
        py::array_t<double> out(shape);
        std::copy(x.values.begin(), x.values.end(), out.mutable_data());
        return out;
      },
      py::arg("value"), py::arg("steps"), py::arg("shape"), py::arg("seed") = 0,
      "Ancestral sampling with a denoiser that always predicts `value`.");

  m.def(
      "polygon_area",
      [](const DoubleArray& pts, double ppm) { return stats::polygon_area(to_points(pts), ppm); },
      py::arg("points"), py::arg("px_per_micron") = 1.0);
  m.def(
      "polygon_perimeter",
      [](const DoubleArray& pts, double ppm) { return stats::polygon_perimeter(to_points(pts), ppm); },
      py::arg("points"), py::arg("px_per_micron") = 1.0);

  m.def(
      "ttest",
      [](std::vector<double> a, std::vector<double> b, const std::string& variant) {
        const auto r = stats::two_sample_ttest(a, b, stats::parse_ttest_variant(variant));
        py::dict d;
        d["t"] = r.t_statistic;
        d["df"] = r.degrees_of_freedom;
        d["p"] = r.p_value;
        d["significant"] = r.significant;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("variant") = "welch");

  m.def(
      "read_cvid",
      [](const std::string& path) {
        const auto s = formats::read_cvid(path);
        py::dict meta;
        meta["culture"] = s.culture;
        meta["x"] = s.x;
        meta["y"] = s.y;
        meta["start_frame"] = s.start_frame;
        meta["frame_stride"] = s.frame_stride;
        return py::make_tuple(tensor_array(s.tensor), meta);
      },
      py::arg("path"), "Returns (tensor[K, N, N, 3], metadata).");

  m.def(
      "read_cflo", [](const std::string& path) { return flow_stack(formats::read_cflo(path)); },
      py::arg("path"), "Returns an array [pairs, 2, H, W] holding u then v.");
}
