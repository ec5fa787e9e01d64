// src/cli.cc

#include "svid/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "svid/corpus.h"
#include "svid/error.h"
#include "svid/features.h"
#include "svid/gmm.h"
#include "svid/harness.h"
#include "svid/svm.h"

namespace fs = std::filesystem;

namespace svid {
namespace {

struct Entry {
  std::string speaker;
  std::string utterance;
  fs::path path;
};

// <root>/<speaker>/<utt><ext>, sorted by (speaker, utterance).
std::vector<Entry> ListTree(const fs::path& root, const std::string& ext) {
  if (!fs::is_directory(root)) Fail(ErrorCode::kIoError, "not a directory: " + root.string());
  std::vector<Entry> out;
  for (const auto& spk : fs::directory_iterator(root)) {
    if (!spk.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(spk.path())) {
      if (f.is_regular_file() && f.path().extension() == ext) {
        out.push_back({spk.path().filename().string(), f.path().stem().string(), f.path()});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.speaker, a.utterance) < std::tie(b.speaker, b.utterance);
  });
  if (out.empty()) Fail(ErrorCode::kIoError, "no " + ext + " files under " + root.string());
  return out;
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    Fail(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotWav:
    case ErrorCode::kUnsupportedEncoding:
    case ErrorCode::kTruncated:
    case ErrorCode::kIoError:
    case ErrorCode::kFormatError:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args) {
  InitLogging();
  CLI::App app{"Speaker identification with GMM supervectors and SVMs", "svid"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 42;
  bool seed_given = false;
  int jobs = 1;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s; seed_given = true; },
         "Seed for every random stage (default 42)")
      ->expected(1);
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Write the synthetic formant corpus");
  SynthParams sp;
  fs::path synth_out;
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_option("--speakers", sp.n_speakers)->check(CLI::PositiveNumber);
  synth->add_option("--utterances", sp.n_utterances)->check(CLI::PositiveNumber);
  synth->add_option("--duration", sp.duration_s, "Seconds per utterance")->check(CLI::PositiveNumber);
  synth->add_option("--rate", sp.sample_rate, "Sample rate in Hz")->check(CLI::PositiveNumber);
  synth->add_option("--articulation", sp.articulation, "Relative formant excursion");

  // extract
  auto* extract = app.add_subcommand("extract", "Compute feature files for a corpus directory");
  std::string frontend_text = "mfcc";
  fs::path extract_in, extract_out;
  extract->add_option("--frontend", frontend_text, "Front-end spec, e.g. mfcc,d2,e")->required();
  extract->add_option("--in", extract_in, "Corpus directory")->required();
  extract->add_option("--out", extract_out, "Feature directory")->required();

  // train-ubm
  auto* train_ubm = app.add_subcommand("train-ubm", "Train a UBM on pooled feature files");
  TrainConfig tc;
  fs::path ubm_in, ubm_out;
  train_ubm->add_option("--in", ubm_in, "Feature directory")->required();
  train_ubm->add_option("--out", ubm_out, "Model file")->required();
  train_ubm->add_option("--mixtures", tc.num_components)->check(CLI::PositiveNumber);
  train_ubm->add_option("--max-iters", tc.max_iters)->check(CLI::PositiveNumber);
  train_ubm->add_option("--rel-tol", tc.rel_tol)->check(CLI::NonNegativeNumber);

  // adapt
  auto* adapt = app.add_subcommand("adapt", "MAP-adapt the UBM per feature file and write supervectors");
  fs::path adapt_ubm, adapt_in, adapt_out;
  double relevance = 16.0;
  std::string scaling = "plain";
  adapt->add_option("--ubm", adapt_ubm, "UBM model file")->required();
  adapt->add_option("--in", adapt_in, "Feature directory")->required();
  adapt->add_option("--out", adapt_out, "Supervector directory")->required();
  adapt->add_option("--relevance", relevance)->check(CLI::PositiveNumber);
  adapt->add_option("--scaling", scaling)->check(CLI::IsMember({"plain", "kl"}));

  // train-svm
  auto* train_svm = app.add_subcommand("train-svm", "Cross-validate and train a multiclass SVM");
  std::string kernel_name = "linear";
  std::string grid_text = "C=0.1,1,10,100;sigma=auto";
  int folds = 10;
  bool conventional = false;
  fs::path svm_in, svm_out;
  train_svm->add_option("--in", svm_in, "Supervector directory")->required();
  train_svm->add_option("--out", svm_out, "Model file")->required();
  train_svm->add_option("--kernel", kernel_name)->check(CLI::IsMember({"linear", "rbf"}));
  train_svm->add_option("--cv", folds, "Number of folds")->check(CLI::Range(2, 1000));
  train_svm->add_option("--grid", grid_text);
  train_svm->add_flag("--rbf-conventional", conventional, "Use exp(-d^2 / (2 sigma^2))");

  // identify
  auto* identify = app.add_subcommand("identify", "Print the predicted speaker per supervector");
  fs::path model_path;
  std::vector<fs::path> identify_in;
  identify->add_option("--model", model_path, "SVM model file")->required();
  identify->add_option("--in", identify_in, "Supervector file(s)")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run a full front-end x kernel sweep");
  fs::path config_path, csv_out, md_out;
  evaluate->add_option("--config", config_path, "Experiment config")->required();
  evaluate->add_option("--out", csv_out, "Result CSV")->required();
  evaluate->add_option("--markdown", md_out, "Optional markdown table");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) {
      sp.seed = seed;
      const Corpus corpus = SynthesizeCorpus(sp);
      SaveCorpusDir(corpus, synth_out);
      spdlog::info("wrote {} utterances to {}", corpus.size(), synth_out.string());
    } else if (extract->parsed()) {
      const FrontendSpec spec = FrontendSpec::Parse(frontend_text);
      spec.Validate();
      const Frontend fe = AssembleFrontend(spec);
      const Corpus corpus = LoadCorpusDir(extract_in);
      for (const auto& u : corpus.utterances()) {
        const FeatureMatrix f = fe.Extract(u.wave);
        EnsureDir(extract_out / u.speaker_id);
        WriteFeatures(extract_out / u.speaker_id / (u.utterance_id + ".svft"), f);
      }
    } else if (train_ubm->parsed()) {
      tc.seed = seed;
      tc.jobs = jobs;
      const auto files = ListTree(ubm_in, ".svft");
      std::vector<FeatureMatrix> feats;
      Eigen::Index total = 0;
      for (const auto& e : files) {
        feats.push_back(ReadFeatures(e.path));
        if (feats.back().dim() != feats.front().dim()) {
          Fail(ErrorCode::kDimMismatch, e.path.string() + " has a different dimension");
        }
        total += feats.back().values.rows();
      }
      Matrix pooled(total, feats.front().values.cols());
      Eigen::Index row = 0;
      for (const auto& f : feats) {
        pooled.middleRows(row, f.values.rows()) = f.values;
        row += f.values.rows();
      }
      const TrainResult r = TrainUbm(pooled, tc);
      WriteGmm(ubm_out, r.model);
      spdlog::info("UBM K={} D={} after {} iterations", r.model.num_components(), r.model.dim(),
                   r.iterations);
    } else if (adapt->parsed()) {
      const GmmModel ubm = ReadGmm(adapt_ubm);
      const auto files = ListTree(adapt_in, ".svft");
      const auto sc = scaling == "kl" ? SupervectorScaling::kKl : SupervectorScaling::kPlain;
      for (const auto& e : files) {
        const FeatureMatrix f = ReadFeatures(e.path);
        Supervector sv = MakeSupervector(MapAdaptMeans(ubm, f.values, relevance), ubm, sc);
        sv.source = e.speaker + "/" + e.utterance;
        EnsureDir(adapt_out / e.speaker);
        WriteSupervector(adapt_out / e.speaker / (e.utterance + ".svsv"), sv);
      }
    } else if (train_svm->parsed()) {
      CvGrid grid = CvGrid::Parse(grid_text);
      grid.folds = folds;
      grid.seed = seed;
      const KernelKind kind = ParseKernel(kernel_name);
      const auto files = ListTree(svm_in, ".svsv");
      std::vector<std::string> labels;
      Matrix x;
      for (std::size_t i = 0; i < files.size(); ++i) {
        const Supervector sv = ReadSupervector(files[i].path);
        if (i == 0) x.resize(static_cast<Eigen::Index>(files.size()), sv.values.size());
        if (sv.values.size() != x.cols()) {
          Fail(ErrorCode::kDimMismatch, files[i].path.string() + " has a different length");
        }
        x.row(static_cast<Eigen::Index>(i)) = sv.values.transpose();
        labels.push_back(files[i].speaker);
      }
      const CvResult cv = CrossValidate(x, labels, grid, kind, conventional, jobs);
      spdlog::info("CV accuracy {:.4f} at C={} sigma={}", cv.best_accuracy, cv.best_c, cv.best_sigma);
      const KernelSpec kernel{kind, kind == KernelKind::kRbf ? cv.best_sigma : 1.0, conventional};
      WriteSvm(svm_out, TrainMulticlass(x, labels, kernel, cv.best_c));
    } else if (identify->parsed()) {
      const MulticlassSvm model = ReadSvm(model_path);
      for (const auto& p : identify_in) {
        const Supervector sv = ReadSupervector(p);
        std::cout << model.PredictLabel({sv.values.data(), static_cast<std::size_t>(sv.values.size())})
                  << "\n";
      }
    } else if (evaluate->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::Load(config_path);
      if (seed_given) cfg.SetSeed(seed);
      cfg.jobs = jobs;
      const ExperimentReport report = RunExperiment(cfg);
      if (!report.rows.empty()) {
        EmitTable(report.rows, TableFormat::kCsv, csv_out);
        if (!md_out.empty()) EmitTable(report.rows, TableFormat::kMarkdown, md_out);
      }
      if (!report.failures.empty()) {
        std::string text;
        for (const auto& f : report.failures) {
          text += f.frontend + "\t" + f.stage + "\t" + f.message + "\n";
          std::cerr << "failed: " << f.frontend << " [" << f.stage << "]: " << f.message << "\n";
        }
        WriteText(fs::path(csv_out.string() + ".errors"), text);
        return 2;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace svid
