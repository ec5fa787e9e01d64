// src/harness.cc

#include "svid/harness.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "svid/error.h"

namespace svid {

double RoundedRate(long long correct, long long trials) {
  if (trials <= 0) Fail(ErrorCode::kEmpty, "no trials");
  // round(10000 k / n) with halves away from zero, then / 100.
  const long long scaled = (20000LL * correct + trials) / (2LL * trials);
  return static_cast<double>(scaled) / 100.0;
}

IdentificationResult IdentificationRate(const std::vector<std::string>& predictions,
                                        const std::vector<std::string>& truth) {
  if (predictions.size() != truth.size()) {
    Fail(ErrorCode::kLengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                         std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) Fail(ErrorCode::kEmpty, "no trials");
  IdentificationResult r;
  r.trials = static_cast<int>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) r.correct += predictions[i] == truth[i] ? 1 : 0;
  r.percent = RoundedRate(r.correct, r.trials);
  return r;
}

const char* KernelName(KernelKind kind) { return kind == KernelKind::kRbf ? "rbf" : "linear"; }

KernelKind ParseKernel(std::string_view name) {
  if (name == "linear") return KernelKind::kLinear;
  if (name == "rbf") return KernelKind::kRbf;
  Fail(ErrorCode::kConfigError, "unknown kernel '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double ToDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  Fail(ErrorCode::kConfigError, "key '" + key + "' expects a number, got '" + v + "'");
}

long long ToInt(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  Fail(ErrorCode::kConfigError, "key '" + key + "' expects an integer, got '" + v + "'");
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  Fail(ErrorCode::kConfigError, "key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::Parse(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::map<std::string, std::string> grids;  // kernel -> grid text
  std::vector<std::string> kernel_names = {"linear"};
  int folds = 10;
  bool seed_set = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = Trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line == "[[frontend]]") {
      section = "frontend";
      cfg.frontends.emplace_back();
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') Fail(ErrorCode::kConfigError, where + "bad section header");
      section = line.substr(1, line.size() - 2);
      if (section != "corpus" && section != "split" && section != "preprocess" &&
          section != "gmm" && section != "svm") {
        Fail(ErrorCode::kConfigError, where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) Fail(ErrorCode::kConfigError, where + "expected key = value");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    auto unknown = [&] {
      Fail(ErrorCode::kConfigError, where + "unknown key '" + key + "' in [" + section + "]");
    };

    if (section.empty()) {
      if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(ToInt(key, value));
        seed_set = true;
      } else {
        unknown();
      }
    } else if (section == "corpus") {
      if (key == "path") cfg.corpus_dir = value;
      else if (key == "n_speakers") cfg.synth.n_speakers = static_cast<int>(ToInt(key, value));
      else if (key == "n_utterances") cfg.synth.n_utterances = static_cast<int>(ToInt(key, value));
      else if (key == "duration_s") cfg.synth.duration_s = ToDouble(key, value);
      else if (key == "sample_rate") cfg.synth.sample_rate = static_cast<int>(ToInt(key, value));
      else if (key == "articulation") cfg.synth.articulation = ToDouble(key, value);
      else unknown();
    } else if (section == "split") {
      if (key == "n_train") cfg.split.n_train = static_cast<int>(ToInt(key, value));
      else if (key == "n_test") cfg.split.n_test = static_cast<int>(ToInt(key, value));
      else unknown();
    } else if (section == "preprocess") {
      auto& p = cfg.preprocess;
      if (key == "pre_emphasis_alpha") p.pre_emphasis_alpha = ToDouble(key, value);
      else if (key == "frame_ms") p.frame_len_ms = ToDouble(key, value);
      else if (key == "shift_ms") p.frame_shift_ms = ToDouble(key, value);
      else if (key == "window_a") p.window_a = ToDouble(key, value);
      else if (key == "vad_floor_db") p.vad.relative_floor_db = ToDouble(key, value);
      else if (key == "vad_min_speech") p.vad.min_speech_frames = static_cast<int>(ToInt(key, value));
      else if (key == "vad_min_silence") p.vad.min_silence_frames = static_cast<int>(ToInt(key, value));
      else unknown();
    } else if (section == "gmm") {
      auto& g = cfg.gmm;
      if (key == "mixtures") g.num_components = static_cast<int>(ToInt(key, value));
      else if (key == "max_iters") g.max_iters = static_cast<int>(ToInt(key, value));
      else if (key == "rel_tol") g.rel_tol = ToDouble(key, value);
      else if (key == "variance_floor") g.variance_floor_factor = ToDouble(key, value);
      else if (key == "relevance") g.relevance = ToDouble(key, value);
      else if (key == "supervector") {
        if (value == "plain") cfg.scaling = SupervectorScaling::kPlain;
        else if (value == "kl") cfg.scaling = SupervectorScaling::kKl;
        else Fail(ErrorCode::kConfigError, where + "supervector must be plain or kl");
      } else {
        unknown();
      }
    } else if (section == "svm") {
      if (key == "kernels") {
        kernel_names.clear();
        std::istringstream ks(value);
        std::string k;
        while (std::getline(ks, k, ',')) kernel_names.push_back(Trim(k));
      } else if (key == "folds") {
        folds = static_cast<int>(ToInt(key, value));
      } else if (key == "linear_grid") {
        grids["linear"] = value;
      } else if (key == "rbf_grid") {
        grids["rbf"] = value;
      } else if (key == "rbf_conventional") {
        cfg.rbf_conventional = ToBool(key, value);
      } else {
        unknown();
      }
    } else if (section == "frontend") {
      if (key == "spec") cfg.frontends.back() = FrontendSpec::Parse(value);
      else unknown();
    }
  }

  for (const auto& name : kernel_names) {
    KernelGrid kg;
    kg.kind = ParseKernel(name);
    if (const auto it = grids.find(name); it != grids.end()) kg.grid = CvGrid::Parse(it->second);
    kg.grid.folds = folds;
    cfg.kernels.push_back(kg);
  }
  if (!seed_set) cfg.seed = 42;
  cfg.SetSeed(cfg.seed);
  cfg.Validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::Load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) Fail(ErrorCode::kIoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return Parse(ss.str());
}

void ExperimentConfig::SetSeed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  gmm.seed = s;
  for (auto& k : kernels) k.grid.seed = s;
}

void ExperimentConfig::Validate() const {
  if (frontends.empty()) Fail(ErrorCode::kConfigError, "no [[frontend]] entries");
  if (kernels.empty()) Fail(ErrorCode::kConfigError, "no kernels");
  for (const auto& f : frontends) f.Validate();
  for (const auto& k : kernels) {
    if (k.grid.c_values.empty()) Fail(ErrorCode::kEmptyGrid, "empty C grid");
    if (k.grid.folds < 2) Fail(ErrorCode::kConfigError, "folds must be >= 2");
  }
  preprocess.Validate();
  if (split.n_train < 1 || split.n_test < 1) Fail(ErrorCode::kConfigError, "split counts must be >= 1");
  if (gmm.num_components < 1) Fail(ErrorCode::kConfigError, "mixtures must be >= 1");
  if (!(gmm.relevance > 0.0)) Fail(ErrorCode::kConfigError, "relevance must be positive");
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct StageError {
  std::string stage;
  std::string message;
};

// Runs one front-end through every configured kernel. Kernel failures are
// recorded and the remaining kernels still run.
void RunFrontend(const ExperimentConfig& cfg, const FrontendSpec& spec, const Corpus& train,
                 const Corpus& test, int jobs, std::vector<ResultRow>& rows,
                 std::vector<StageError>& errors) {
  std::string stage = "extract";
  const std::string tag = spec.ToString();
  try {
    const Frontend fe = AssembleFrontend(spec, cfg.preprocess);
    auto extract = [&](const Corpus& c) {
      std::vector<FeatureMatrix> out;
      out.reserve(c.size());
      for (const auto& u : c.utterances()) {
        try {
          out.push_back(fe.Extract(u.wave));
        } catch (const Error& e) {
          Fail(e.code(), u.speaker_id + "/" + u.utterance_id + ": " + e.detail());
        }
      }
      return out;
    };
    const auto train_feats = extract(train);
    const auto test_feats = extract(test);

    stage = "ubm";
    Eigen::Index total = 0;
    for (const auto& f : train_feats) total += f.values.rows();
    Matrix pooled(total, spec.Dimension());
    Eigen::Index row = 0;
    for (const auto& f : train_feats) {
      pooled.middleRows(row, f.values.rows()) = f.values;
      row += f.values.rows();
    }
    TrainConfig gcfg = cfg.gmm;
    gcfg.jobs = jobs;
    const TrainResult ubm = TrainUbm(pooled, gcfg);
    spdlog::info("{}: UBM K={} after {} iterations, LL {:.4f}", tag, ubm.model.num_components(),
                 ubm.iterations, ubm.ll_trace.back());

    stage = "adapt";
    auto supervectors = [&](const std::vector<FeatureMatrix>& feats) {
      Matrix sv;
      for (std::size_t i = 0; i < feats.size(); ++i) {
        const GmmModel adapted = MapAdaptMeans(ubm.model, feats[i].values, cfg.gmm.relevance);
        const Supervector s = MakeSupervector(adapted, ubm.model, cfg.scaling);
        if (i == 0) sv.resize(static_cast<Eigen::Index>(feats.size()), s.values.size());
        sv.row(static_cast<Eigen::Index>(i)) = s.values.transpose();
      }
      return sv;
    };
    const Matrix x_train = supervectors(train_feats);
    const Matrix x_test = supervectors(test_feats);
    std::vector<std::string> y_train, y_test;
    for (const auto& u : train.utterances()) y_train.push_back(u.speaker_id);
    for (const auto& u : test.utterances()) y_test.push_back(u.speaker_id);

    for (const auto& kg : cfg.kernels) {
      const std::string kname = KernelName(kg.kind);
      std::string kstage = "cv:" + kname;
      try {
        const CvResult cv =
            CrossValidate(x_train, y_train, kg.grid, kg.kind, cfg.rbf_conventional, jobs);
        spdlog::info("{} {}: CV accuracy {:.4f} at C={} sigma={}", tag, kname, cv.best_accuracy,
                     cv.best_c, cv.best_sigma);
        kstage = "train:" + kname;
        KernelSpec kernel{kg.kind, kg.kind == KernelKind::kRbf ? cv.best_sigma : 1.0,
                          cfg.rbf_conventional};
        const MulticlassSvm svm = TrainMulticlass(x_train, y_train, kernel, cv.best_c);
        kstage = "predict:" + kname;
        std::vector<std::string> pred;
        for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
          const Vector v = x_test.row(i).transpose();
          pred.push_back(svm.PredictLabel({v.data(), static_cast<std::size_t>(v.size())}));
        }
        const IdentificationResult ir = IdentificationRate(pred, y_test);
        rows.push_back({spec.Label(), tag, spec.Dimension(), kg.kind, cv.best_c,
                        kg.kind == KernelKind::kRbf ? cv.best_sigma : 0.0, ir.percent, ir.correct,
                        ir.trials});
      } catch (const std::exception& e) {
        errors.push_back({kstage, e.what()});
      }
    }
  } catch (const std::exception& e) {
    errors.push_back({stage, e.what()});
  }
}

}  // namespace

ExperimentReport RunExperiment(const ExperimentConfig& cfg, const Corpus& corpus) {
  InitLogging();
  cfg.Validate();
  const auto [train, test] = SplitTrainTest(corpus, cfg.split, cfg.seed);
  const std::size_t n = cfg.frontends.size();
  std::vector<std::vector<ResultRow>> rows(n);
  std::vector<std::vector<StageError>> errors(n);
  const int jobs = std::max(1, cfg.jobs);
  const int outer = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(jobs)));
  const int inner = std::max(1, jobs / std::max(1, outer));
  ParallelFor(n, outer, [&](std::size_t i) {
    spdlog::info("front-end {}/{}: {}", i + 1, n, cfg.frontends[i].ToString());
    RunFrontend(cfg, cfg.frontends[i], train, test, inner, rows[i], errors[i]);
  });
  ExperimentReport report;
  for (std::size_t i = 0; i < n; ++i) {
    report.rows.insert(report.rows.end(), rows[i].begin(), rows[i].end());
    for (auto& e : errors[i]) {
      spdlog::error("{} [{}]: {}", cfg.frontends[i].ToString(), e.stage, e.message);
      report.failures.push_back({cfg.frontends[i].ToString(), e.stage, e.message});
    }
  }
  return report;
}

ExperimentReport RunExperiment(const ExperimentConfig& cfg) {
  const Corpus corpus =
      cfg.corpus_dir.empty() ? SynthesizeCorpus(cfg.synth) : LoadCorpusDir(cfg.corpus_dir);
  return RunExperiment(cfg, corpus);
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string Percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string FormatCsv(const std::vector<ResultRow>& rows) {
  if (rows.empty()) Fail(ErrorCode::kEmptyRows, "no result rows");
  std::string out = "feature,dim,kernel,C,sigma,ir,correct,trials\n";
  for (const auto& r : rows) {
    out += r.feature + "," + std::to_string(r.dim) + "," + KernelName(r.kernel) + "," + Num(r.c) +
           "," + (r.kernel == KernelKind::kRbf ? Num(r.sigma) : std::string()) + "," +
           Percent(r.ir) + "," + std::to_string(r.correct) + "," + std::to_string(r.trials) + "\n";
  }
  return out;
}

std::string FormatMarkdown(const std::vector<ResultRow>& rows) {
  if (rows.empty()) Fail(ErrorCode::kEmptyRows, "no result rows");
  struct Line {
    std::string feature;
    int dim;
    std::string linear = "-";
    std::string rbf = "-";
  };
  std::vector<Line> lines;
  std::map<std::string, std::size_t> index;  // canonical spec -> line
  for (const auto& r : rows) {
    auto [it, fresh] = index.emplace(r.frontend, lines.size());
    if (fresh) lines.push_back({r.feature, r.dim});
    Line& l = lines[it->second];
    (r.kernel == KernelKind::kRbf ? l.rbf : l.linear) = Percent(r.ir);
  }
  std::string out = "| Feature Type | Number | IR linear (%) | IR rbf (%) |\n|---|---:|---:|---:|\n";
  for (const auto& l : lines) {
    out += "| " + l.feature + " | " + std::to_string(l.dim) + " | " + l.linear + " | " + l.rbf + " |\n";
  }
  return out;
}

void EmitTable(const std::vector<ResultRow>& rows, TableFormat format,
               const std::filesystem::path& path) {
  const std::string text = format == TableFormat::kCsv ? FormatCsv(rows) : FormatMarkdown(rows);
  std::ofstream f(path, std::ios::binary);
  if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    Fail(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

void InitLogging() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_color_mt("svid");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("SVID_LOG");
    const std::string level = env ? env : "error";
    if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else spdlog::set_level(spdlog::level::err);
  });
}

}  // namespace svid
