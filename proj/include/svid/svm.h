// include/svid/svm.h
//
// Kernel SVMs over supervectors: a soft-margin dual solver (SMO with
// second-order working-set selection), one-vs-one multiclass voting and
// stratified k-fold grid search.

#ifndef SVID_SVM_H_
#define SVID_SVM_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svid/common.h"

namespace svid {

enum class KernelKind : std::uint8_t { kLinear = 0, kRbf = 1 };

struct KernelSpec {
  KernelKind kind = KernelKind::kLinear;
  double sigma = 1.0;
  /// false: exp(-|x-v|^2 / (2 sigma)); true: exp(-|x-v|^2 / (2 sigma^2)).
  bool conventional = false;

  void Validate() const;
  /// Kernel value from a precomputed squared distance (rbf only).
  double FromSquaredDistance(double d2) const;
};

double KernelEval(const KernelSpec& spec, std::span<const double> x, std::span<const double> v);
/// n x n kernel matrix over the rows of x.
Matrix GramMatrix(const KernelSpec& spec, const Matrix& x);

/// Dual solution over an externally supplied kernel matrix.
struct DualSolution {
  std::vector<double> alpha;
  double bias = 0.0;
  /// Dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
  double objective = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct SolverOptions {
  double kkt_tolerance = 1e-3;
  int max_iterations = 100000;
};

/// Solves max sum a - 1/2 a'Qa s.t. 0 <= a <= C, y'a = 0 with Q_ij =
/// y_i y_j gram(idx_i, idx_j). `idx` selects the training rows of `gram`.
DualSolution SolveDual(const Matrix& gram, std::span<const Eigen::Index> idx,
                       std::span<const int> y, double c, const SolverOptions& opts = {});

struct SvmModel {
  Matrix support_vectors;  // n_sv x dim
  Vector dual_coefs;       // alpha_i y_i
  double bias = 0.0;
  KernelSpec kernel;
  double c = 1.0;
  double objective = 0.0;
  bool converged = true;
};

/// Support vectors are the points with alpha > 1e-8.
SvmModel TrainBinary(const Matrix& x, std::span<const int> y, const KernelSpec& kernel, double c);

struct BinaryDecision {
  double score;
  int label;  // +1 when score >= 0
};

BinaryDecision PredictBinary(const SvmModel& model, std::span<const double> x);

/// Per-dimension standardization with training statistics; constant
/// dimensions get scale 1.
struct Standardizer {
  bool enabled = false;
  Vector mean;
  Vector scale;

  static Standardizer Fit(const Matrix& x);
  Matrix Apply(const Matrix& x) const;
  Vector Apply(std::span<const double> x) const;
};

struct PairModel {
  int positive;  // class index voted for when score >= 0
  int negative;
  SvmModel model;
};

struct MulticlassPrediction {
  int class_index = -1;
  std::vector<int> votes;
  std::vector<double> score_sums;
};

class MulticlassSvm {
 public:
  std::vector<std::string> classes;  // sorted
  std::vector<PairModel> pairs;      // (i, j) for i < j in class order
  Standardizer standardizer;
  KernelSpec kernel;
  double c = 1.0;

  int dim() const;
  /// Majority vote; ties go to the larger summed |score| of won pairs, then
  /// to the smaller class index.
  MulticlassPrediction Predict(std::span<const double> x) const;
  const std::string& PredictLabel(std::span<const double> x) const;
};

/// One binary model per class pair. `standardize` defaults to true for rbf.
MulticlassSvm TrainMulticlass(const Matrix& x, const std::vector<std::string>& labels,
                              const KernelSpec& kernel, double c);
MulticlassSvm TrainMulticlass(const Matrix& x, const std::vector<std::string>& labels,
                              const KernelSpec& kernel, double c, bool standardize);

struct CvGrid {
  std::vector<double> c_values = {0.1, 1.0, 10.0, 100.0};
  std::vector<double> sigma_values;
  /// sigma in {0.5, 1, 2, 4} x median pairwise squared distance (square root
  /// of it for the conventional rbf form).
  bool sigma_auto = true;
  int folds = 10;
  std::uint64_t seed = 42;

  /// "C=0.1,1,10,100;sigma=auto" or "C=1;sigma=0.5,2".
  static CvGrid Parse(std::string_view text);
  std::string ToString() const;
};

struct GridScore {
  double c;
  double sigma;
  double accuracy;
  std::vector<double> fold_accuracies;
};

struct CvResult {
  double best_c = 0.0;
  double best_sigma = 0.0;
  double best_accuracy = 0.0;
  std::vector<double> fold_accuracies;
  std::vector<GridScore> scores;
  /// Some class has fewer samples than folds.
  bool few_samples = false;
};

/// Fold index per sample: classes are dealt round-robin (after a seeded
/// shuffle within each class) so folds are stratified and equal-size +-1.
std::vector<int> StratifiedFolds(const std::vector<std::string>& labels, int folds,
                                 std::uint64_t seed);

double MedianPairwiseSquaredDistance(const Matrix& x);

/// Grid search; ties go to smaller C then smaller sigma.
CvResult CrossValidate(const Matrix& x, const std::vector<std::string>& labels,
                       const CvGrid& grid, KernelKind kind, bool conventional = false,
                       int jobs = 1);

/// "SVSM" model files.
void WriteSvm(const std::filesystem::path& path, const MulticlassSvm& model);
MulticlassSvm ReadSvm(const std::filesystem::path& path);

}  // namespace svid

#endif  // SVID_SVM_H_
