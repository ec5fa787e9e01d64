// include/svid/normalize.h
//
// Per-utterance feature normalizers. All of them preserve T and D.

#ifndef SVID_NORMALIZE_H_
#define SVID_NORMALIZE_H_

#include "svid/common.h"
#include "svid/features.h"

namespace svid {

/// Standard normal quantile.
double NormalQuantile(double p);

/// Subtracts the whole-utterance mean per dimension.
FeatureMatrix Cms(FeatureMatrix f);
/// Mean and variance normalization with population std; a constant
/// dimension becomes zeros.
FeatureMatrix Cvn(FeatureMatrix f);

struct RastaResult {
  Matrix values;
  /// Set when T < 5 and the input was passed through unfiltered.
  bool passthrough = false;
};

/// Per-column IIR band-pass H(z) = 0.1 (2 + z^-1 - z^-3 - 2 z^-4) / (1 - 0.98 z^-1)
/// over a T x B matrix of log band energies, zero initial state.
RastaResult RastaFilter(const Matrix& log_band_energies);

struct WarpResult {
  FeatureMatrix features;
  int window = 0;
  /// Set when the requested window exceeded T and was shrunk.
  bool shrunk = false;
};

/// Sliding-window rank mapping to N(0, 1): each value becomes
/// Phi^-1((r - 0.5) / W) where r is its rank in the W-frame window around it
/// (ties broken by frame index). Near the edges the window is shifted to stay
/// inside the utterance.
WarpResult FeatureWarp(const FeatureMatrix& f, int window);

/// Iterated global whitening followed by full-utterance marginal
/// Gaussianization; each output dimension is rescaled to unit variance.
FeatureMatrix ShortTimeGaussianize(const FeatureMatrix& f, int iters);

/// Applies one normalizer spec. RASTA is handled inside PLP extraction, so
/// here it is a no-op.
FeatureMatrix ApplyNormalizer(const FeatureMatrix& f, const NormalizerSpec& spec);

}  // namespace svid

#endif  // SVID_NORMALIZE_H_
