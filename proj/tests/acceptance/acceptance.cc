// Acceptance checks, one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-svid-binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.h"
#include "svid/corpus.h"
#include "svid/dsp.h"
#include "svid/error.h"
#include "svid/features.h"
#include "svid/gmm.h"
#include "svid/harness.h"
#include "svid/normalize.h"
#include "svid/svm.h"

using namespace svid;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

// body returns an empty string on success, otherwise the reason.
void Criterion(int n, const std::string& name, const std::function<std::string()>& body) {
  const auto t0 = Clock::now();
  std::string reason;
  try {
    reason = body();
  } catch (const std::exception& e) {
    reason = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!reason.empty()) ++failures;
  std::printf("%s %d %s (%.1f s)%s%s\n", reason.empty() ? "PASS" : "FAIL", n, name.c_str(), secs,
              reason.empty() ? "" : ": ", reason.c_str());
  std::fflush(stdout);
}

std::string Slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

ExperimentConfig DefaultConfig() {
  return ExperimentConfig::Load(fs::path(SVID_SOURCE_DIR) / "configs/default.cfg");
}

struct Pipeline {
  ExperimentConfig cfg;
  Corpus train;
  std::vector<FeatureMatrix> feats;
  Matrix pooled;
};

// MFCC features of the default training split, as the end-to-end run sees them.
const Pipeline& MfccPipeline() {
  static const Pipeline p = [] {
    Pipeline out;
    out.cfg = DefaultConfig();
    const Corpus corpus = SynthesizeCorpus(out.cfg.synth);
    out.train = SplitTrainTest(corpus, out.cfg.split, out.cfg.seed).first;
    const Frontend fe = AssembleFrontend(FrontendSpec::Parse("mfcc"), out.cfg.preprocess);
    Eigen::Index rows = 0;
    for (const auto& u : out.train.utterances()) {
      out.feats.push_back(fe.Extract(u.wave));
      rows += out.feats.back().values.rows();
    }
    out.pooled.resize(rows, 12);
    rows = 0;
    for (const auto& f : out.feats) {
      out.pooled.middleRows(rows, f.values.rows()) = f.values;
      rows += f.values.rows();
    }
    return out;
  }();
  return p;
}

std::string Fmt(const char* fmt, double a, double b = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "svid";

  Criterion(1, "front-end dimensions match the tables", [] {
    const std::vector<std::pair<std::string, int>> rows = {
        {"mfcc", 12},   {"mfcc,e", 13},  {"mfcc,d1", 24}, {"mfcc,d2", 36}, {"mfcc,d2,e", 39},
        {"plp", 13},    {"plp,d1", 26},  {"plp,d2", 39},  {"lpc", 13},     {"lpc,d1", 26},
        {"lpc,d2", 39}, {"mfcc,cms", 12}, {"plp,d2,rasta", 39}};
    SynthParams sp;
    sp.n_speakers = 2;
    sp.n_utterances = 1;
    sp.duration_s = 1.0;
    const Waveform w = SynthesizeCorpus(sp).utterances()[0].wave;
    const auto t0 = Clock::now();
    for (const auto& [spec, dim] : rows) {
      const auto fs = FrontendSpec::Parse(spec);
      const auto f = AssembleFrontend(fs).Extract(w);
      if (fs.Dimension() != dim || static_cast<int>(f.dim()) != dim) {
        return spec + " gives " + std::to_string(f.dim()) + ", expected " + std::to_string(dim);
      }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    return secs < 1.0 ? std::string() : Fmt("took %.2f s", secs);
  });

  Criterion(2, "identification rate arithmetic", [] {
    const std::vector<std::pair<int, double>> cases = {{28, 100.0}, {27, 96.43}, {26, 92.86},
                                                       {24, 85.71}, {15, 53.57}, {13, 46.43}};
    for (const auto& [k, pct] : cases) {
      std::vector<std::string> truth(28, "a"), pred(28, "a");
      for (int i = k; i < 28; ++i) pred[i] = "b";
      const double got = IdentificationRate(pred, truth).percent;
      if (std::abs(got - pct) > 0.01) return Fmt("%g/28 gave %.4f", k, got);
    }
    return std::string();
  });

  Criterion(3, "MFCC + linear end-to-end IR >= 90% within 10 minutes", [] {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = DefaultConfig();
    cfg.frontends = {FrontendSpec::Parse("mfcc")};
    std::erase_if(cfg.kernels, [](const KernelGrid& k) { return k.kind != KernelKind::kLinear; });
    const auto report = RunExperiment(cfg);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!report.failures.empty()) return report.failures[0].stage + ": " + report.failures[0].message;
    if (report.rows.size() != 1) return std::string("expected one result row");
    const auto& r = report.rows[0];
    std::printf("  MFCC linear: IR %.2f%% (%d/%d), C=%g, %.0f s\n", r.ir, r.correct, r.trials, r.c, secs);
    if (r.trials != 28) return Fmt("%g trials", r.trials);
    if (r.correct < 26) return Fmt("IR %.2f%% (%g/28)", r.ir, r.correct);
    return secs <= 600.0 ? std::string() : Fmt("took %.0f s", secs);
  });

  Criterion(4, "EM log-likelihood is monotone and K=1 is closed form", [] {
    const auto& p = MfccPipeline();
    const auto res = TrainUbm(p.pooled, p.cfg.gmm);
    for (std::size_t i = 1; i < res.ll_trace.size(); ++i) {
      const double prev = res.ll_trace[i - 1];
      if (res.ll_trace[i] < prev - 1e-8 * std::abs(prev)) {
        return Fmt("trace drops at step %g: %.12g", static_cast<double>(i), res.ll_trace[i]);
      }
    }
    TrainConfig one = p.cfg.gmm;
    one.num_components = 1;
    const auto k1 = TrainUbm(p.pooled, one);
    const Eigen::RowVectorXd mean = p.pooled.colwise().mean();
    const Eigen::RowVectorXd var = (p.pooled.rowwise() - mean).array().square().colwise().mean();
    const double dm = (k1.model.means.row(0) - mean).cwiseAbs().maxCoeff();
    const double dv = (k1.model.variances.row(0) - var).cwiseAbs().maxCoeff();
    if (dm > 1e-10 || dv > 1e-10) return Fmt("K=1 mean err %.3g, variance err %.3g", dm, dv);
    std::printf("  K=%d trace of %zu entries, final %.4f\n", res.model.num_components(),
                res.ll_trace.size(), res.ll_trace.back());
    return std::string();
  });

  Criterion(5, "MAP adaptation limits", [] {
    const auto& p = MfccPipeline();
    TrainConfig cfg = p.cfg.gmm;
    cfg.num_components = 16;
    cfg.max_iters = 10;
    const auto ubm = TrainUbm(p.pooled, cfg).model;
    const Matrix& x = p.feats[0].values;
    const double frozen = (MapAdaptMeans(ubm, x, 1e12).means - ubm.means).cwiseAbs().maxCoeff();
    if (frozen > 1e-6) return Fmt("r=1e12 moved means by %.3g", frozen);
    cfg.num_components = 1;
    const auto one = TrainUbm(p.pooled, cfg).model;
    const double t = static_cast<double>(x.rows());
    const Eigen::RowVectorXd expect =
        (t * x.colwise().mean() + 16.0 * one.means.row(0)) / (t + 16.0);
    const double err = (MapAdaptMeans(one, x, 16.0).means.row(0) - expect).cwiseAbs().maxCoeff();
    return err <= 1e-10 ? std::string() : Fmt("K=1 closed form error %.3g", err);
  });

  Criterion(6, "solver and Levinson-Durbin oracles", [] {
    Rng r(2024);
    for (int trial = 0; trial < 300; ++trial) {
      const int n = 2 + static_cast<int>(r.Index(3));
      Matrix x(n, 3);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = r.Normal();
        y[i] = i == 0 ? -1 : (i == 1 ? 1 : (r.Uniform() < 0.5 ? -1 : 1));
      }
      const double c = std::vector<double>{0.1, 1.0, 10.0, 100.0}[trial % 4];
      const KernelSpec spec =
          trial % 2 == 0 ? KernelSpec{} : KernelSpec{KernelKind::kRbf, r.Uniform(0.2, 5.0), false};
      const double oracle = testing::ExhaustiveDual(GramMatrix(spec, x), y, c);
      const double got = TrainBinary(x, y, spec, c).objective;
      if (std::abs(got - oracle) > 1e-3 * std::max(1.0, std::abs(oracle))) {
        return Fmt("dual objective %.6g vs oracle %.6g", got, oracle);
      }
    }
    const auto& p = MfccPipeline();
    const Waveform& w = p.train.utterances()[0].wave;
    for (int order = 1; order <= 20; ++order) {
      std::vector<double> frame(w.samples.begin() + 4000, w.samples.begin() + 4256);
      const auto rr = Autocorrelation(frame, order);
      const auto m = LevinsonDurbin(rr, order);
      Eigen::MatrixXd toeplitz(order, order);
      Eigen::VectorXd rhs(order);
      for (int i = 0; i < order; ++i) {
        rhs[i] = rr[i + 1];
        for (int j = 0; j < order; ++j) toeplitz(i, j) = rr[std::abs(i - j)];
      }
      const Eigen::VectorXd a = toeplitz.partialPivLu().solve(rhs);
      for (int i = 0; i < order; ++i) {
        if (std::abs(m.coefficients[i] - a[i]) > 1e-8 * std::max(1.0, std::abs(a[i]))) {
          return Fmt("order %g coefficient mismatch %.3g", order, m.coefficients[i] - a[i]);
        }
      }
    }
    return std::string();
  });

  Criterion(7, "normalizer exactness", [] {
    const auto& p = MfccPipeline();
    for (std::size_t u = 0; u < p.feats.size(); u += 7) {
      const auto& f = p.feats[u];
      const double m = Cms(f).values.colwise().mean().cwiseAbs().maxCoeff();
      if (m > 1e-10) return Fmt("CMS mean %.3g", m);
      const Matrix v = Cvn(f).values;
      for (int d = 0; d < v.cols(); ++d) {
        const double var = (v.col(d).array() - v.col(d).mean()).square().mean();
        if (std::abs(var - 1.0) > 1e-8) return Fmt("CVN variance %.12g", var);
      }
      const auto w = FeatureWarp(f, 301);
      std::set<double> allowed;
      for (int r = 1; r <= w.window; ++r) allowed.insert(NormalQuantile((r - 0.5) / w.window));
      for (Eigen::Index i = 0; i < w.features.values.size(); ++i) {
        if (!allowed.count(w.features.values.data()[i])) return std::string("warp value outside the quantile set");
      }
    }
    // Constant trajectories of real log critical-band energies: every band of
    // one speech frame held for 600 frames.
    const Waveform& wave = p.train.utterances()[0].wave;
    const FrameMatrix frames = PreprocessFrames(wave, p.cfg.preprocess);
    const BarkFilterbank bark(256, wave.sample_rate);
    const Eigen::Index mid = frames.frames.rows() / 2;
    std::vector<double> frame(frames.frames.cols());
    for (Eigen::Index j = 0; j < frames.frames.cols(); ++j) frame[j] = frames.frames(mid, j);
    const auto bands = bark.Apply(PowerSpectrum(frame, 256));
    Matrix constant(600, static_cast<Eigen::Index>(bands.size()));
    for (std::size_t b = 0; b < bands.size(); ++b) constant.col(b).setConstant(std::log(bands[b]));
    const Matrix out = RastaFilter(constant).values;
    const double tail = out.bottomRows(100).cwiseAbs().maxCoeff();
    return tail < 1e-3 ? std::string() : Fmt("RASTA residual %.3g after frame 500", tail);
  });

  Criterion(8, "kernel contracts", [] {
    Rng r(8);
    for (int trial = 0; trial < 20000; ++trial) {
      const int d = 1 + static_cast<int>(r.Index(64));
      std::vector<double> x(d), v(d), ax(d);
      const double a = r.Uniform(-10.0, 10.0);
      for (int j = 0; j < d; ++j) {
        x[j] = r.Normal();
        v[j] = r.Normal();
        ax[j] = a * x[j];
      }
      const KernelSpec lin;
      if (KernelEval(lin, x, v) != KernelEval(lin, v, x)) return std::string("linear asymmetric");
      if (std::abs(KernelEval(lin, ax, v) - a * KernelEval(lin, x, v)) > 1e-9 * (1.0 + std::abs(a) * d)) {
        return std::string("linear not homogeneous");
      }
      // sigma >= 1 keeps every exponent representable for unit-normal inputs.
      const KernelSpec rbf{KernelKind::kRbf, r.Uniform(1.0, 50.0), trial % 2 == 1};
      const double k = KernelEval(rbf, x, v);
      if (KernelEval(rbf, x, x) != 1.0) return std::string("rbf(x, x) != 1");
      if (!(k > 0.0 && k <= 1.0)) return Fmt("rbf out of range: %.3g", k);
      if (k != KernelEval(rbf, v, x)) return std::string("rbf asymmetric");
    }
    return std::string();
  });

  Criterion(9, "evaluate output is identical across runs and --jobs", [&cli] {
    const fs::path dir = fs::temp_directory_path() / "svid_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cfg = (fs::path(SVID_SOURCE_DIR) / "configs/smoke.cfg").string();
    auto run = [&](const std::string& jobs, const std::string& out) {
      const std::string cmd = "\"" + cli + "\" --seed 42 --jobs " + jobs + " evaluate --config \"" + cfg +
                              "\" --out \"" + (dir / out).string() + "\"";
      return std::system(cmd.c_str());
    };
    if (run("1", "a.csv") != 0 || run("4", "b.csv") != 0 || run("1", "c.csv") != 0) {
      return std::string("evaluate failed");
    }
    const std::string a = Slurp(dir / "a.csv");
    if (a.empty()) return std::string("empty CSV");
    if (a != Slurp(dir / "b.csv")) return std::string("--jobs 1 and --jobs 4 differ");
    if (a != Slurp(dir / "c.csv")) return std::string("repeated runs differ");
    return std::string();
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "OK" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
