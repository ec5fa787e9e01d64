// include/svid/features.h
//
// Acoustic front-ends (MFCC, LPC, PLP), dynamic features, energy append and
// front-end assembly from a compact spec string such as "mfcc,d2,e,cms".

#ifndef SVID_FEATURES_H_
#define SVID_FEATURES_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svid/common.h"
#include "svid/corpus.h"
#include "svid/dsp.h"

namespace svid {

struct FeatureMatrix {
  Matrix values;  // T x D
  /// Canonical FrontendSpec string of the producer.
  std::string frontend;
  double frame_shift_ms = 0.0;
  /// One entry per frame; non-zero when the frame was degenerate (all-zero
  /// input or a singular all-pole fit) and a zero/reduced vector was emitted.
  std::vector<std::uint8_t> flags;

  std::size_t num_frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

enum class BaseFeature { kMfcc, kLpc, kPlp };

enum class NormalizerKind { kCms, kCvn, kRasta, kWarp, kGaussianize };

struct NormalizerSpec {
  NormalizerKind kind = NormalizerKind::kCms;
  int warp_window = 301;
  int gaussianize_iters = 1;
};

struct FrontendSpec {
  BaseFeature base = BaseFeature::kMfcc;
  int n_base = 12;
  int deltas = 0;   // 0, 1 or 2 orders appended
  int delta_d = 1;  // frame offset of the difference operator
  bool energy = false;
  std::vector<NormalizerSpec> normalizers;

  /// Grammar: base[:n] followed by any of d1|d2, off=1|2, e, cms, cvn,
  /// rasta, warp[:W], gauss[:iters], comma-separated.
  static FrontendSpec Parse(std::string_view text);
  std::string ToString() const;
  /// Short ASCII label used in result tables, e.g. "MFCC+D+DD+E".
  std::string Label() const;
  int Dimension() const;
  bool HasRasta() const;
  void Validate() const;
};

struct LpcModel {
  int order = 0;
  /// Predictor a_1..a_p under s[n] ~ sum_i a_i s[n-i].
  std::vector<double> coefficients;
  std::vector<double> reflection;
  /// Final prediction error; gain = sqrt(error).
  double error = 0.0;
  double gain = 0.0;
  /// Stages actually completed; < order when the recursion went singular.
  int effective_order = 0;
  bool singular = false;
};

/// Biased, unnormalized r[k] = sum_{n=0}^{N-1-k} s[n] s[n+k], k = 0..max_lag.
std::vector<double> Autocorrelation(std::span<const double> frame, int max_lag);
LpcModel LevinsonDurbin(std::span<const double> r, int order);
/// Cepstrum c_0..c_{n-1} of the all-pole model gain^2 / |A(e^jw)|^2.
std::vector<double> LpcToCepstrum(const LpcModel& lpc, int n);

/// |FFT|^2 of the zero-padded frame at bins 0..fft_size/2.
std::vector<double> PowerSpectrum(std::span<const double> frame, int fft_size);

/// Triangular filters on the HTK mel scale mel(f) = 2595 log10(1 + f/700).
class MelFilterbank {
 public:
  MelFilterbank(int n_filters, int fft_size, int sample_rate, double low_hz = 0.0,
                double high_hz = 0.0);

  int num_filters() const { return static_cast<int>(weights_.rows()); }
  int fft_size() const { return fft_size_; }
  const Matrix& weights() const { return weights_; }  // n_filters x (fft/2+1)
  const std::vector<double>& centers_hz() const { return centers_hz_; }
  std::vector<double> Apply(std::span<const double> power) const;

  static double HzToMel(double hz);
  static double MelToHz(double mel);

 private:
  int fft_size_;
  Matrix weights_;
  std::vector<double> centers_hz_;
};

/// Critical-band filters on the Bark scale b(f) = 6 asinh(f/600), one per
/// Bark from 0 to ceil(b(nyquist)), with the trapezoidal masking curve and
/// equal-loudness weights at each band centre.
class BarkFilterbank {
 public:
  BarkFilterbank(int fft_size, int sample_rate);

  int num_filters() const { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }
  const std::vector<double>& centers_hz() const { return centers_hz_; }
  const std::vector<double>& equal_loudness() const { return equal_loudness_; }
  std::vector<double> Apply(std::span<const double> power) const;

  static double HzToBark(double hz);
  static double BarkToHz(double bark);
  static double EqualLoudness(double hz);

 private:
  int fft_size_;
  Matrix weights_;
  std::vector<double> centers_hz_;
  std::vector<double> equal_loudness_;
};

struct MfccConfig {
  int n_filters = 26;
  int n_ceps = 12;
  int fft_size = 0;  // 0: smallest power of two >= frame length
  double low_hz = 0.0;
  double high_hz = 0.0;  // 0: Nyquist
};

struct PlpConfig {
  int order = 12;
  int fft_size = 0;
  bool rasta = false;
};

FeatureMatrix ComputeLpc(const FrameMatrix& frames, int order);
FeatureMatrix ComputeMfcc(const FrameMatrix& frames, const MfccConfig& cfg);
FeatureMatrix ComputePlp(const FrameMatrix& frames, const PlpConfig& cfg);

/// Appends `orders` difference streams dy_i = y_{i+d} - y_{i-d} with edge
/// replication; columns are ordered [static | delta | delta-delta].
FeatureMatrix AppendDeltas(const FeatureMatrix& f, int d, int orders);
FeatureMatrix AppendLogEnergy(const FeatureMatrix& f, std::span<const double> log_energy);

/// A fully assembled front-end: base extraction, energy, deltas, speech-frame
/// selection and normalizers, in that order.
class Frontend {
 public:
  Frontend(FrontendSpec spec, PreprocessConfig preprocess);

  const FrontendSpec& spec() const { return spec_; }
  const PreprocessConfig& preprocess() const { return preprocess_; }
  int dimension() const { return spec_.Dimension(); }

  /// Features for every frame of a pre-processed (windowed) frame matrix.
  FeatureMatrix FromFrames(const FrameMatrix& windowed) const;
  /// Full chain on a waveform; only frames inside detected speech are kept.
  FeatureMatrix Extract(const Waveform& wave) const;

 private:
  FrontendSpec spec_;
  PreprocessConfig preprocess_;
};

Frontend AssembleFrontend(const FrontendSpec& spec,
                          const PreprocessConfig& preprocess = {});

/// "SVFT" feature files: magic, version u32, T u32, D u32, spec length u32 +
/// UTF-8 spec, then T*D little-endian float32 row-major.
void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix ReadFeatures(const std::filesystem::path& path);

}  // namespace svid

#endif  // SVID_FEATURES_H_
