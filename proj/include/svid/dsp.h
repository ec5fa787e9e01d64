// include/svid/dsp.h
//
// Pre-processing chain applied before feature extraction, in fixed order:
// energy-based endpoint detection on the raw signal, pre-emphasis, frame
// blocking and Hamming windowing.

#ifndef SVID_DSP_H_
#define SVID_DSP_H_

#include <cstddef>
#include <span>
#include <vector>

#include "svid/common.h"
#include "svid/corpus.h"

namespace svid {

struct VadConfig {
  /// Frames within this many dB of the loudest frame count as speech.
  double relative_floor_db = 30.0;
  int min_speech_frames = 5;
  int min_silence_frames = 10;
};

struct PreprocessConfig {
  double pre_emphasis_alpha = 0.95;
  double frame_len_ms = 16.0;
  double frame_shift_ms = 8.0;
  double window_a = 0.46;
  VadConfig vad;
  /// Permits alpha outside [0.9, 1.0] (e.g. alpha = 0 for identity checks).
  bool allow_any_alpha = false;

  void Validate() const;
  int FrameLength(int sample_rate) const;
  int FrameShift(int sample_rate) const;
};

struct FrameMatrix {
  Matrix frames;  // T x N
  int sample_rate = 0;
  int shift = 0;

  std::size_t num_frames() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t frame_length() const { return static_cast<std::size_t>(frames.cols()); }
};

/// Half-open sample range [start, end).
struct SampleSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const SampleSpan&) const = default;
};

Waveform PreEmphasize(const Waveform& x, double alpha);

/// Frame-level speech mask (one entry per full frame) after the run-length
/// rules. Exposed separately because the pipeline selects frames with it.
std::vector<bool> SpeechFrameMask(const Waveform& x, const PreprocessConfig& cfg);
std::vector<SampleSpan> DetectEndpoints(const Waveform& x, const PreprocessConfig& cfg);

FrameMatrix FrameSignal(const Waveform& x, const PreprocessConfig& cfg);

/// w[n] = (1 - a) - a cos(2 pi n / (N - 1)), symmetric.
std::vector<double> HammingWindow(int n, double a);
FrameMatrix ApplyWindow(FrameMatrix frames, std::span<const double> window);

/// e_t = ln(max(sum_n s_t[n]^2, 1e-10)).
std::vector<double> FrameLogEnergy(const FrameMatrix& frames);

/// Convenience: pre-emphasis, framing and windowing with cfg.
FrameMatrix PreprocessFrames(const Waveform& x, const PreprocessConfig& cfg);

}  // namespace svid

#endif  // SVID_DSP_H_
