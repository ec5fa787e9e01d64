// include/svid/gmm.h
//
// Diagonal-covariance GMM-UBM: K-means initialization, EM training, mean-only
// MAP adaptation and supervector extraction.

#ifndef SVID_GMM_H_
#define SVID_GMM_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svid/common.h"

namespace svid {

struct GmmModel {
  Vector weights;    // K
  Matrix means;      // K x D
  Matrix variances;  // K x D

  int num_components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
  /// Shape, weight-sum and positivity checks.
  void Validate() const;
};

struct TrainConfig {
  int num_components = 128;
  int max_iters = 50;
  double rel_tol = 1e-5;
  double variance_floor_factor = 1e-3;
  std::uint64_t seed = 42;
  double relevance = 16.0;
  /// Worker threads for the E-step; results do not depend on it.
  int jobs = 1;
};

struct TrainResult {
  GmmModel model;
  /// Average per-frame log-likelihood of the data before each M-step and a
  /// final entry for the returned model.
  std::vector<double> ll_trace;
  int iterations = 0;
  /// N < 10 K.
  bool few_points = false;
};

Matrix KMeansInit(const Matrix& data, int num_components, std::uint64_t seed, int jobs = 1);
TrainResult TrainUbm(const Matrix& data, const TrainConfig& cfg);

/// (1/T) sum_t ln sum_k w_k N(x_t; m_k, diag v_k), evaluated in the log domain.
double LogLikelihood(const GmmModel& model, const Matrix& frames);

/// Per-frame component posteriors (T x K).
Matrix Posteriors(const GmmModel& model, const Matrix& frames);

GmmModel MapAdaptMeans(const GmmModel& ubm, const Matrix& frames, double relevance);

enum class SupervectorScaling : std::uint8_t { kPlain = 0, kKl = 1 };

struct Supervector {
  Vector values;
  SupervectorScaling scaling = SupervectorScaling::kPlain;
  std::string source;
};

/// Plain: m_1 || ... || m_K. KL: sqrt(w_k) v_k^{-1/2} m_k with UBM w, v.
Supervector MakeSupervector(const GmmModel& model, const GmmModel& ubm,
                            SupervectorScaling scaling);

/// "SVGM": magic, version u32, K u32, D u32, weights, means, variances (f64).
void WriteGmm(const std::filesystem::path& path, const GmmModel& model);
GmmModel ReadGmm(const std::filesystem::path& path);

/// "SVSV": magic, length u32, scaling tag u8, values f64.
void WriteSupervector(const std::filesystem::path& path, const Supervector& sv);
Supervector ReadSupervector(const std::filesystem::path& path);

}  // namespace svid

#endif  // SVID_GMM_H_
