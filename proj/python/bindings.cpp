#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "contramod/augment.hpp"
#include "contramod/cli.hpp"
#include "contramod/contrastive.hpp"
#include "contramod/dataio.hpp"
#include "contramod/eval.hpp"
#include "contramod/model.hpp"
#include "contramod/nn/checkpoint.hpp"
#include "contramod/pipeline.hpp"
#include "contramod/sigsyn.hpp"

namespace py = pybind11;
using namespace contramod;

namespace {

using FrameArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (N, 2, L) float32 array from frames.
FrameArray frames_to_array(std::span<const IQFrame> frames, std::size_t len) {
  FrameArray out({frames.size(), std::size_t{2}, len});
  auto* dst = out.mutable_data();
  for (const auto& f : frames) {
    if (f.length() != len) throw usage_error("frames differ in length");
    std::copy(f.values().begin(), f.values().end(), dst);
    dst += 2 * len;
  }
  return out;
}

std::vector<IQFrame> array_to_frames(const FrameArray& a) {
  if (a.ndim() == 2 && a.shape(0) == 2) {
    const auto* p = a.data();
    return {IQFrame(std::vector<float>(p, p + a.size()))};
  }
  if (a.ndim() != 3 || a.shape(1) != 2) throw usage_error("expected frames shaped (N, 2, L)");
  const auto n = static_cast<std::size_t>(a.shape(0));
  const auto len = static_cast<std::size_t>(a.shape(2));
  std::vector<IQFrame> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const float* p = a.data() + k * 2 * len;
    out.emplace_back(std::vector<float>(p, p + 2 * len));
  }
  return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<std::uint8_t> split_codes(const Dataset& d) {
  std::vector<std::uint8_t> out;
  for (auto s : d.splits) out.push_back(static_cast<std::uint8_t>(s));
  return out;
}

}  // namespace

PYBIND11_MODULE(_contramod, m) {
  m.doc() = "Contrastive pretraining toolkit for modulation classification";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "ContramodError", PyExc_RuntimeError);

  py::enum_<SplitTag>(m, "SplitTag")
      .value("NONE", SplitTag::None)
      .value("TRAIN", SplitTag::Train)
      .value("VAL", SplitTag::Val)
      .value("TEST", SplitTag::Test);

  m.def("scheme_names", [] {
    std::vector<std::string> out;
    for (auto s : kAllSchemes) out.emplace_back(scheme_name(s));
    return out;
  });
  m.def("scheme_code", [](const std::string& name) { return code(parse_scheme(name)); });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def("__len__", &Dataset::size)
      .def_readonly("frame_len", &Dataset::frame_len)
      .def_property_readonly("frames", [](const Dataset& d) { return frames_to_array(d.frames, d.frame_len); })
      .def_property_readonly("labels", [](const Dataset& d) { return to_array(d.labels); })
      .def_property_readonly("snrs_db", [](const Dataset& d) { return to_array(d.snrs_db); })
      .def_property_readonly("splits", [](const Dataset& d) { return to_array(split_codes(d)); })
      .def("indices", &Dataset::indices_with, py::arg("tag"))
      .def("subset", [](const Dataset& d, std::vector<std::size_t> idx) { return d.subset(idx); });

  m.def(
      "generate",
      [](std::vector<std::string> schemes, std::vector<int> snrs, std::size_t per_cell, std::uint64_t seed,
         std::size_t frame_len, std::size_t sps, const std::string& pulse, double gain, unsigned jobs) {
        SynthSpec spec;
        if (!schemes.empty()) {
          spec.schemes.clear();
          for (const auto& s : schemes) spec.schemes.push_back(parse_scheme(s));
        }
        if (!snrs.empty()) spec.snrs_db = std::move(snrs);
        spec.frames_per_cell = per_cell;
        spec.master_seed = seed;
        spec.frame_len = frame_len;
        spec.samples_per_symbol = sps;
        if (pulse != "rect" && pulse != "rrc") throw usage_error("pulse must be 'rect' or 'rrc'");
        spec.pulse = pulse == "rrc" ? PulseShape::RootRaisedCosine : PulseShape::Rect;
        spec.gain = gain;
        spec.jobs = jobs;
        py::gil_scoped_release release;
        return generate_dataset(spec);
      },
      py::arg("schemes") = std::vector<std::string>{}, py::arg("snrs") = std::vector<int>{},
      py::arg("per_cell") = 1000, py::arg("seed") = 0, py::arg("frame_len") = 128, py::arg("sps") = 8,
      py::arg("pulse") = "rect", py::arg("gain") = 1.0, py::arg("jobs") = 1);

  m.def("split", &split, py::arg("dataset"), py::arg("seed") = 0);
  m.def(
      "select",
      [](const Dataset& d, std::size_t n, std::optional<std::size_t> n_val, std::size_t u, std::uint64_t seed) {
        const auto s = select_subsets(d, {n, n_val, u, seed});
        py::dict out;
        out["labeled_train"] = s.labeled_train;
        out["labeled_val"] = s.labeled_val;
        out["unlabeled_train"] = s.unlabeled_train;
        out["pretrain_pool"] = s.pretrain_pool();
        return out;
      },
      py::arg("dataset"), py::arg("n"), py::arg("n_val") = py::none(), py::arg("u") = 0, py::arg("seed") = 0);
  m.def("load_iqd", &load_iqd, py::arg("path"));
  m.def("save_iqd", &save_iqd, py::arg("dataset"), py::arg("path"));
  m.def("iqd_file_size", &iqd_file_size, py::arg("frames"), py::arg("frame_len") = 128);

  m.def(
      "normalize", [](const FrameArray& a) {
        auto frames = array_to_frames(a);
        for (auto& f : frames) f = normalize(f);
        return frames_to_array(frames, frames.front().length());
      },
      py::arg("frames"));
  m.def(
      "rotate",
      [](const FrameArray& a, int quarter_turns) {
        auto frames = array_to_frames(a);
        const auto angle = static_cast<RotationAngle>(((quarter_turns % 4) + 4) % 4);
        for (auto& f : frames) f = rotate(f, angle);
        return frames_to_array(frames, frames.front().length());
      },
      py::arg("frames"), py::arg("quarter_turns"));

  m.def(
      "nt_xent",
      [](const nn::Mat<double>& z, double tau) {
        const auto r = nt_xent(ContrastiveBatch<double>{z, tau});
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("z"), py::arg("tau") = 0.5);

  py::class_<Model<float>>(m, "Model")
      .def_static(
          "create", [](std::uint64_t seed) { return Model<float>::create(ModelShape{}, seed); }, py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::filesystem::path& p, std::size_t input_len) {
            return Model<float>::from_params(nn::load_checkpoint(p), input_len);
          },
          py::arg("path"), py::arg("input_len") = 128)
      .def("save", [](const Model<float>& mdl, const std::filesystem::path& p) { nn::save_checkpoint(mdl.params(), p); })
      .def_property_readonly("has_classifier", &Model<float>::has_classifier)
      .def_property_readonly("num_parameters", [](const Model<float>& mdl) { return mdl.params().scalar_count(); })
      .def(
          "encode",
          [](const Model<float>& mdl, const FrameArray& a, unsigned jobs) {
            const auto frames = array_to_frames(a);
            std::vector<const IQFrame*> ptrs;
            for (const auto& f : frames) ptrs.push_back(&f);
            py::gil_scoped_release release;
            return encode_frames(mdl, std::span<const IQFrame* const>(ptrs), jobs);
          },
          py::arg("frames"), py::arg("jobs") = 1)
      .def(
          "predict",
          [](const Model<float>& mdl, const Dataset& d, std::vector<std::size_t> idx, unsigned jobs) {
            py::gil_scoped_release release;
            return predict(mdl, d, idx, jobs);
          },
          py::arg("dataset"), py::arg("indices"), py::arg("jobs") = 1);

  m.def(
      "pretrain",
      [](Model<float>& mdl, const FrameArray& pool, std::size_t epochs, std::size_t batch, double tau, double lr,
         std::uint64_t seed, unsigned jobs) {
        const auto frames = array_to_frames(pool);
        PretrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch = batch;
        cfg.tau = tau;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.jobs = jobs;
        py::gil_scoped_release release;
        std::vector<double> losses;
        for (const auto& e : pretrain(mdl, frames, cfg).history) losses.push_back(e.loss);
        return losses;
      },
      py::arg("model"), py::arg("pool"), py::arg("epochs") = 100, py::arg("batch") = 512, py::arg("tau") = 0.5,
      py::arg("lr") = 1e-4, py::arg("seed") = 0, py::arg("jobs") = 1);

  m.def(
      "evaluate",
      [](const std::vector<int>& labels, const std::vector<int>& preds, const std::vector<int>& snrs,
         std::size_t classes) { return report_to_json(evaluate_predictions(labels, preds, snrs, classes)); },
      py::arg("labels"), py::arg("predictions"), py::arg("snrs_db"), py::arg("num_classes") = 11);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
