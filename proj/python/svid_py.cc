// python/svid_py.cc

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "svid/cli.h"
#include "svid/corpus.h"
#include "svid/error.h"
#include "svid/features.h"
#include "svid/gmm.h"
#include "svid/harness.h"
#include "svid/normalize.h"
#include "svid/svm.h"

namespace py = pybind11;
using namespace svid;

namespace {

Waveform MakeWave(std::vector<double> samples, int rate) {
  Waveform w;
  w.samples = std::move(samples);
  w.sample_rate = rate;
  return w;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Speaker identification with GMM supervectors and SVMs";

  py::register_exception<Error>(m, "SvidError", PyExc_RuntimeError);

  py::class_<Waveform>(m, "Waveform")
      .def(py::init(&MakeWave), py::arg("samples"), py::arg("sample_rate"))
      .def_readwrite("samples", &Waveform::samples)
      .def_readwrite("sample_rate", &Waveform::sample_rate);

  py::class_<Utterance>(m, "Utterance")
      .def_readonly("speaker_id", &Utterance::speaker_id)
      .def_readonly("utterance_id", &Utterance::utterance_id)
      .def_readonly("wave", &Utterance::wave);

  m.def("read_wav", &ReadWav, py::arg("path"));
  m.def("write_wav", &WriteWav, py::arg("path"), py::arg("wave"));
  m.def(
      "synthesize_corpus",
      [](std::uint64_t seed, int n_speakers, int n_utterances, double duration_s, int sample_rate) {
        return SynthesizeCorpus({seed, n_speakers, n_utterances, duration_s, sample_rate}).utterances();
      },
      py::arg("seed") = 42, py::arg("n_speakers") = 14, py::arg("n_utterances") = 10,
      py::arg("duration_s") = 2.0, py::arg("sample_rate") = 16000);

  m.def(
      "frontend_dimension", [](const std::string& spec) { return FrontendSpec::Parse(spec).Dimension(); },
      py::arg("spec"));
  m.def(
      "frontend_label", [](const std::string& spec) { return FrontendSpec::Parse(spec).Label(); },
      py::arg("spec"));
  m.def(
      "extract",
      [](const std::string& spec, const Waveform& wave) {
        return AssembleFrontend(FrontendSpec::Parse(spec)).Extract(wave).values;
      },
      py::arg("spec"), py::arg("wave"));
  m.def(
      "levinson_durbin",
      [](const std::vector<double>& r, int order) {
        const LpcModel lpc = LevinsonDurbin(r, order);
        return py::make_tuple(lpc.coefficients, lpc.error, lpc.reflection);
      },
      py::arg("r"), py::arg("order"));
  m.def(
      "cms", [](const Matrix& x) { return Cms({x, "", 0.0, {}}).values; }, py::arg("x"));
  m.def(
      "cvn", [](const Matrix& x) { return Cvn({x, "", 0.0, {}}).values; }, py::arg("x"));
  m.def(
      "feature_warp", [](const Matrix& x, int window) { return FeatureWarp({x, "", 0.0, {}}, window).features.values; },
      py::arg("x"), py::arg("window") = 301);

  py::class_<GmmModel>(m, "GmmModel")
      .def_readonly("weights", &GmmModel::weights)
      .def_readonly("means", &GmmModel::means)
      .def_readonly("variances", &GmmModel::variances);
  m.def(
      "train_ubm",
      [](const Matrix& data, int k, int max_iters, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.num_components = k;
        cfg.max_iters = max_iters;
        cfg.seed = seed;
        const TrainResult r = TrainUbm(data, cfg);
        return py::make_tuple(r.model, r.ll_trace);
      },
      py::arg("data"), py::arg("mixtures") = 128, py::arg("max_iters") = 50, py::arg("seed") = 42);
  m.def("log_likelihood", &LogLikelihood, py::arg("model"), py::arg("frames"));
  m.def("map_adapt_means", &MapAdaptMeans, py::arg("ubm"), py::arg("frames"), py::arg("relevance") = 16.0);
  m.def(
      "supervector",
      [](const GmmModel& model, const GmmModel& ubm, bool kl) {
        return MakeSupervector(model, ubm, kl ? SupervectorScaling::kKl : SupervectorScaling::kPlain).values;
      },
      py::arg("model"), py::arg("ubm"), py::arg("kl") = false);

  py::class_<MulticlassSvm>(m, "MulticlassSvm")
      .def_readonly("classes", &MulticlassSvm::classes)
      .def("predict", [](const MulticlassSvm& svm, const Vector& x) {
        return svm.PredictLabel({x.data(), static_cast<std::size_t>(x.size())});
      });
  m.def(
      "train_multiclass",
      [](const Matrix& x, const std::vector<std::string>& labels, const std::string& kernel, double c,
         double sigma) { return TrainMulticlass(x, labels, {ParseKernel(kernel), sigma, false}, c); },
      py::arg("x"), py::arg("labels"), py::arg("kernel") = "linear", py::arg("c") = 1.0,
      py::arg("sigma") = 1.0);
  m.def(
      "kernel",
      [](const std::string& kind, const std::vector<double>& x, const std::vector<double>& v, double sigma) {
        return KernelEval({ParseKernel(kind), sigma, false}, x, v);
      },
      py::arg("kind"), py::arg("x"), py::arg("v"), py::arg("sigma") = 1.0);

  m.def(
      "identification_rate",
      [](const std::vector<std::string>& pred, const std::vector<std::string>& truth) {
        const auto r = IdentificationRate(pred, truth);
        return py::make_tuple(r.percent, r.correct, r.trials);
      },
      py::arg("predictions"), py::arg("truth"));
  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "svid");
    py::gil_scoped_release release;
    return RunCli(args);
  }, py::arg("args"));
}
