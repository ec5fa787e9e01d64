// include/svid/harness.h
//
// End-to-end evaluation: identification rate, front-end x kernel sweeps and
// result tables.

#ifndef SVID_HARNESS_H_
#define SVID_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svid/corpus.h"
#include "svid/dsp.h"
#include "svid/features.h"
#include "svid/gmm.h"
#include "svid/svm.h"

namespace svid {

struct IdentificationResult {
  double percent = 0.0;  // rounded to 2 decimals, half away from zero
  int correct = 0;
  int trials = 0;
};

IdentificationResult IdentificationRate(const std::vector<std::string>& predictions,
                                        const std::vector<std::string>& truth);
/// round(100 k / n, 2) computed in integers.
double RoundedRate(long long correct, long long trials);

struct KernelGrid {
  KernelKind kind = KernelKind::kLinear;
  CvGrid grid;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  /// Empty: synthesize the corpus from `synth`.
  std::filesystem::path corpus_dir;
  SynthParams synth;
  SplitSpec split;
  PreprocessConfig preprocess;
  std::vector<FrontendSpec> frontends;
  TrainConfig gmm;
  SupervectorScaling scaling = SupervectorScaling::kPlain;
  std::vector<KernelGrid> kernels;
  bool rbf_conventional = false;
  int jobs = 1;

  /// Sections [corpus] [split] [preprocess] [gmm] [svm] and repeated
  /// [[frontend]] blocks of key = value lines; '#' starts a comment.
  static ExperimentConfig Parse(std::string_view text);
  static ExperimentConfig Load(const std::filesystem::path& path);
  /// Applies `seed` to every stage.
  void SetSeed(std::uint64_t s);
  void Validate() const;
};

struct ResultRow {
  std::string feature;   // table label, e.g. "MFCC+D+DD"
  std::string frontend;  // canonical spec string
  int dim = 0;
  KernelKind kernel = KernelKind::kLinear;
  double c = 0.0;
  double sigma = 0.0;  // 0 for linear
  double ir = 0.0;
  int correct = 0;
  int trials = 0;
};

struct StageFailure {
  std::string frontend;
  std::string stage;
  std::string message;
};

struct ExperimentReport {
  std::vector<ResultRow> rows;
  std::vector<StageFailure> failures;
};

/// Rows are in config order (frontend-major, then kernel).
ExperimentReport RunExperiment(const ExperimentConfig& cfg);
/// Same, on an already loaded corpus.
ExperimentReport RunExperiment(const ExperimentConfig& cfg, const Corpus& corpus);

std::string FormatCsv(const std::vector<ResultRow>& rows);
std::string FormatMarkdown(const std::vector<ResultRow>& rows);
enum class TableFormat { kCsv, kMarkdown };
void EmitTable(const std::vector<ResultRow>& rows, TableFormat format,
               const std::filesystem::path& path);

const char* KernelName(KernelKind kind);
KernelKind ParseKernel(std::string_view name);

/// Reads SVID_LOG (error, info, debug) once; defaults to error.
void InitLogging();

}  // namespace svid

#endif  // SVID_HARNESS_H_
