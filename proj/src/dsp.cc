// src/dsp.cc

#include "svid/dsp.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "svid/error.h"

namespace svid {

void PreprocessConfig::Validate() const {
  if (!std::isfinite(pre_emphasis_alpha)) {
    Fail(ErrorCode::kConfigError, "pre_emphasis_alpha must be finite");
  }
  if (!allow_any_alpha && (pre_emphasis_alpha < 0.9 || pre_emphasis_alpha > 1.0)) {
    Fail(ErrorCode::kConfigError, "pre_emphasis_alpha outside [0.9, 1.0]");
  }
  if (!(frame_len_ms > 0.0) || !(frame_shift_ms > 0.0) || frame_shift_ms > frame_len_ms) {
    Fail(ErrorCode::kConfigError, "need 0 < frame shift <= frame length");
  }
  if (!(window_a >= 0.0 && window_a <= 0.5)) {
    Fail(ErrorCode::kConfigError, "window_a outside [0, 0.5]");
  }
  if (!(vad.relative_floor_db > 0.0)) Fail(ErrorCode::kConfigError, "vad floor must be > 0 dB");
  if (vad.min_speech_frames < 1 || vad.min_silence_frames < 1) {
    Fail(ErrorCode::kConfigError, "vad frame counts must be >= 1");
  }
}

int PreprocessConfig::FrameLength(int sample_rate) const {
  return static_cast<int>(std::lround(frame_len_ms * sample_rate / 1000.0));
}

int PreprocessConfig::FrameShift(int sample_rate) const {
  return static_cast<int>(std::lround(frame_shift_ms * sample_rate / 1000.0));
}

Waveform PreEmphasize(const Waveform& x, double alpha) {
  if (!std::isfinite(alpha)) Fail(ErrorCode::kInvalidParam, "alpha must be finite");
  x.Validate();
  Waveform y;
  y.sample_rate = x.sample_rate;
  y.samples.resize(x.samples.size());
  double prev = 0.0;
  for (std::size_t n = 0; n < x.samples.size(); ++n) {
    y.samples[n] = x.samples[n] - alpha * prev;
    prev = x.samples[n];
  }
  return y;
}

namespace {

struct Framing {
  std::size_t length;
  std::size_t shift;
  std::size_t count;
};

Framing VadFraming(const Waveform& x, const PreprocessConfig& cfg) {
  const auto n = static_cast<std::size_t>(std::max(cfg.FrameLength(x.sample_rate), 1));
  const auto shift = static_cast<std::size_t>(std::max(cfg.FrameShift(x.sample_rate), 1));
  const std::size_t len = x.samples.size();
  if (len < n) return {len, shift, 1};  // one short frame covering everything
  return {n, shift, (len - n) / shift + 1};
}

}  // namespace

std::vector<bool> SpeechFrameMask(const Waveform& x, const PreprocessConfig& cfg) {
  if (x.samples.empty()) Fail(ErrorCode::kEmptySignal, "endpoint detection on empty signal");
  cfg.Validate();
  const Framing fr = VadFraming(x, cfg);

  std::vector<double> energy(fr.count);
  double max_energy = 0.0;
  for (std::size_t t = 0; t < fr.count; ++t) {
    double e = 0.0;
    for (std::size_t n = 0; n < fr.length; ++n) {
      const double s = x.samples[t * fr.shift + n];
      e += s * s;
    }
    energy[t] = e;
    max_energy = std::max(max_energy, e);
  }
  std::vector<bool> mask(fr.count, false);
  if (max_energy <= kLogFloor) return mask;  // silence everywhere

  const double threshold =
      std::log(max_energy) - cfg.vad.relative_floor_db / 10.0 * std::numbers::ln10;
  for (std::size_t t = 0; t < fr.count; ++t) {
    mask[t] = std::log(std::max(energy[t], kLogFloor)) > threshold;
  }

  // Drop short speech runs.
  const auto min_speech = static_cast<std::size_t>(cfg.vad.min_speech_frames);
  for (std::size_t t = 0; t < fr.count;) {
    if (!mask[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < fr.count && mask[end]) ++end;
    if (end - t < min_speech) std::fill(mask.begin() + t, mask.begin() + end, false);
    t = end;
  }

  // Bridge short interior gaps between speech runs.
  const auto min_silence = static_cast<std::size_t>(cfg.vad.min_silence_frames);
  std::size_t last_speech = fr.count;  // none yet
  for (std::size_t t = 0; t < fr.count; ++t) {
    if (!mask[t]) continue;
    if (last_speech != fr.count && t - last_speech - 1 > 0 &&
        t - last_speech - 1 < min_silence) {
      std::fill(mask.begin() + last_speech + 1, mask.begin() + t, true);
    }
    last_speech = t;
  }
  return mask;
}

std::vector<SampleSpan> DetectEndpoints(const Waveform& x, const PreprocessConfig& cfg) {
  const auto mask = SpeechFrameMask(x, cfg);
  const Framing fr = VadFraming(x, cfg);
  std::vector<SampleSpan> spans;
  for (std::size_t t = 0; t < mask.size();) {
    if (!mask[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < mask.size() && mask[end]) ++end;
    SampleSpan span{t * fr.shift, (end - 1) * fr.shift + fr.length};
    // Frames overlap, so adjacent runs can touch; merge rather than overlap.
    if (!spans.empty() && span.start <= spans.back().end) {
      spans.back().end = span.end;
    } else {
      spans.push_back(span);
    }
    t = end;
  }
  return spans;
}

FrameMatrix FrameSignal(const Waveform& x, const PreprocessConfig& cfg) {
  cfg.Validate();
  x.Validate();
  const int n = cfg.FrameLength(x.sample_rate);
  const int shift = cfg.FrameShift(x.sample_rate);
  if (n < 1 || shift < 1) Fail(ErrorCode::kConfigError, "frame shorter than one sample");
  const auto len = x.samples.size();
  if (len < static_cast<std::size_t>(n)) {
    Fail(ErrorCode::kSignalTooShort, std::to_string(len) + " samples < frame length " +
                                         std::to_string(n));
  }
  const std::size_t count = (len - static_cast<std::size_t>(n)) / static_cast<std::size_t>(shift) + 1;
  FrameMatrix out;
  out.sample_rate = x.sample_rate;
  out.shift = shift;
  out.frames.resize(static_cast<Eigen::Index>(count), n);
  for (std::size_t t = 0; t < count; ++t) {
    const double* src = x.samples.data() + t * static_cast<std::size_t>(shift);
    out.frames.row(static_cast<Eigen::Index>(t)) =
        Eigen::Map<const Eigen::RowVectorXd>(src, n);
  }
  return out;
}

std::vector<double> HammingWindow(int n, double a) {
  if (n < 2) Fail(ErrorCode::kInvalidParam, "window length must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(n));
  const double denom = static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        (1.0 - a) - a * std::cos(2.0 * std::numbers::pi * i / denom);
  }
  // Mirror so the window is symmetric to the last bit.
  for (int i = 0; i < n / 2; ++i) {
    w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
  return w;
}

FrameMatrix ApplyWindow(FrameMatrix frames, std::span<const double> window) {
  if (window.size() != frames.frame_length()) {
    Fail(ErrorCode::kLengthMismatch, "window length " + std::to_string(window.size()) +
                                         " != frame length " +
                                         std::to_string(frames.frame_length()));
  }
  const Eigen::Map<const Eigen::RowVectorXd> w(window.data(),
                                               static_cast<Eigen::Index>(window.size()));
  for (Eigen::Index t = 0; t < frames.frames.rows(); ++t) {
    frames.frames.row(t).array() *= w.array();
  }
  return frames;
}

std::vector<double> FrameLogEnergy(const FrameMatrix& frames) {
  std::vector<double> e(frames.num_frames());
  for (std::size_t t = 0; t < e.size(); ++t) {
    e[t] = std::log(std::max(frames.frames.row(static_cast<Eigen::Index>(t)).squaredNorm(),
                             kLogFloor));
  }
  return e;
}

FrameMatrix PreprocessFrames(const Waveform& x, const PreprocessConfig& cfg) {
  FrameMatrix frames = FrameSignal(PreEmphasize(x, cfg.pre_emphasis_alpha), cfg);
  const auto window = HammingWindow(static_cast<int>(frames.frame_length()), cfg.window_a);
  return ApplyWindow(std::move(frames), window);
}

}  // namespace svid
