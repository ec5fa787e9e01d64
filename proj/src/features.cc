// src/features.cc

#include "svid/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "svid/error.h"
#include "svid/normalize.h"

namespace svid {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// ---------------------------------------------------------------------------
// Linear prediction

std::vector<double> Autocorrelation(std::span<const double> frame, int max_lag) {
  if (max_lag < 0 || static_cast<std::size_t>(max_lag) >= frame.size()) {
    Fail(ErrorCode::kLagTooLarge, "max lag " + std::to_string(max_lag) +
                                      " for frame of " + std::to_string(frame.size()));
  }
  const std::size_t n = frame.size();
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (std::size_t k = 0; k < r.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += frame[i] * frame[i + k];
    r[k] = acc;
  }
  return r;
}

LpcModel LevinsonDurbin(std::span<const double> r, int order) {
  if (order < 0 || r.size() < static_cast<std::size_t>(order) + 1) {
    Fail(ErrorCode::kInvalidParam, "need order+1 autocorrelation lags");
  }
  if (!(r[0] > 0.0)) Fail(ErrorCode::kNonPositiveEnergy, "r[0] <= 0");

  const auto p = static_cast<std::size_t>(order);
  LpcModel m;
  m.order = order;
  m.coefficients.assign(p, 0.0);
  m.reflection.assign(p, 0.0);
  std::vector<double> prev(p, 0.0);
  double err = r[0];
  for (std::size_t i = 1; i <= p; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc -= m.coefficients[j - 1] * r[i - j];
    const double k = acc / err;
    const double next_err = (1.0 - k * k) * err;
    // Relative error at the rounding floor means the system is rank deficient.
    if (!(next_err > 1e-12 * r[0]) || !std::isfinite(k)) {
      m.singular = true;
      break;
    }
    prev = m.coefficients;
    m.coefficients[i - 1] = k;
    for (std::size_t j = 1; j < i; ++j) {
      m.coefficients[j - 1] = prev[j - 1] - k * prev[i - j - 1];
    }
    m.reflection[i - 1] = k;
    err = next_err;
    m.effective_order = static_cast<int>(i);
  }
  m.error = err;
  m.gain = std::sqrt(err);
  return m;
}

std::vector<double> LpcToCepstrum(const LpcModel& lpc, int n) {
  // c_0 is the log of the model power gain; c_1.. follow the all-pole
  // recursion for 1 / (1 - sum a_i z^-i).
  std::vector<double> c(static_cast<std::size_t>(std::max(n, 0)), 0.0);
  if (c.empty()) return c;
  c[0] = std::log(std::max(lpc.error, kLogFloor));
  const auto p = lpc.coefficients.size();
  auto a = [&](std::size_t i) { return i >= 1 && i <= p ? lpc.coefficients[i - 1] : 0.0; };
  for (std::size_t m = 1; m < c.size(); ++m) {
    double acc = a(m);
    for (std::size_t k = 1; k < m; ++k) {
      acc += static_cast<double>(k) / static_cast<double>(m) * c[k] * a(m - k);
    }
    c[m] = acc;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Spectra and filterbanks

namespace {

int DefaultFftSize(std::size_t frame_length) {
  int n = 1;
  while (static_cast<std::size_t>(n) < frame_length) n <<= 1;
  return n;
}

class SpectrumAnalyzer {
 public:
  explicit SpectrumAnalyzer(int fft_size)
      : fft_size_(fft_size), buffer_(static_cast<std::size_t>(fft_size), 0.0) {}

  void Compute(std::span<const double> frame, std::vector<double>& power) {
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
    std::copy(frame.begin(), frame.end(), buffer_.begin());
    fft_.fwd(spectrum_, buffer_);
    power.resize(static_cast<std::size_t>(fft_size_ / 2 + 1));
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum_[k]);
  }

 private:
  int fft_size_;
  Eigen::FFT<double> fft_;
  std::vector<double> buffer_;
  std::vector<std::complex<double>> spectrum_;
};

void CheckFftSize(int fft_size, std::size_t frame_length) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
    Fail(ErrorCode::kConfigError, "fft size must be a power of two");
  }
  if (static_cast<std::size_t>(fft_size) < frame_length) {
    Fail(ErrorCode::kConfigError, "fft size shorter than frame");
  }
}

}  // namespace

std::vector<double> PowerSpectrum(std::span<const double> frame, int fft_size) {
  CheckFftSize(fft_size, frame.size());
  SpectrumAnalyzer analyzer(fft_size);
  std::vector<double> power;
  analyzer.Compute(frame, power);
  return power;
}

double MelFilterbank::HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelFilterbank::MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank::MelFilterbank(int n_filters, int fft_size, int sample_rate, double low_hz,
                             double high_hz)
    : fft_size_(fft_size) {
  if (n_filters < 1) Fail(ErrorCode::kConfigError, "need at least one mel filter");
  CheckFftSize(fft_size, 1);
  if (sample_rate <= 0) Fail(ErrorCode::kConfigError, "sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (high_hz <= 0.0) high_hz = nyquist;
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist)) {
    Fail(ErrorCode::kConfigError, "mel filterbank band edges out of range");
  }
  const double mel_lo = HzToMel(low_hz);
  const double mel_hi = HzToMel(high_hz);
  std::vector<double> edges(static_cast<std::size_t>(n_filters) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_filters + 1));
  }
  const int n_bins = fft_size / 2 + 1;
  weights_ = Matrix::Zero(n_filters, n_bins);
  centers_hz_.resize(static_cast<std::size_t>(n_filters));
  for (int m = 0; m < n_filters; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    centers_hz_[static_cast<std::size_t>(m)] = mid;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      weights_(m, k) = w;
    }
  }
}

std::vector<double> MelFilterbank::Apply(std::span<const double> power) const {
  if (power.size() != static_cast<std::size_t>(weights_.cols())) {
    Fail(ErrorCode::kLengthMismatch, "power spectrum size does not match filterbank");
  }
  const Eigen::Map<const Vector> p(power.data(), static_cast<Eigen::Index>(power.size()));
  const Vector e = weights_ * p;
  return {e.data(), e.data() + e.size()};
}

double BarkFilterbank::HzToBark(double hz) { return 6.0 * std::asinh(hz / 600.0); }
double BarkFilterbank::BarkToHz(double bark) { return 600.0 * std::sinh(bark / 6.0); }

double BarkFilterbank::EqualLoudness(double hz) {
  const double w2 = std::pow(2.0 * std::numbers::pi * hz, 2);
  return (w2 + 56.8e6) * w2 * w2 / (std::pow(w2 + 6.3e6, 2) * (w2 + 0.38e9));
}

BarkFilterbank::BarkFilterbank(int fft_size, int sample_rate) : fft_size_(fft_size) {
  CheckFftSize(fft_size, 1);
  if (sample_rate <= 0) Fail(ErrorCode::kConfigError, "sample rate must be positive");
  const double top = std::ceil(HzToBark(sample_rate / 2.0));
  const int n_filters = static_cast<int>(top) + 1;
  const int n_bins = fft_size / 2 + 1;
  weights_ = Matrix::Zero(n_filters, n_bins);
  centers_hz_.resize(static_cast<std::size_t>(n_filters));
  equal_loudness_.resize(static_cast<std::size_t>(n_filters));
  for (int j = 0; j < n_filters; ++j) {
    const double center = static_cast<double>(j);
    centers_hz_[static_cast<std::size_t>(j)] = BarkToHz(center);
    equal_loudness_[static_cast<std::size_t>(j)] = EqualLoudness(BarkToHz(center));
    for (int k = 0; k < n_bins; ++k) {
      const double dz = HzToBark(static_cast<double>(k) * sample_rate / fft_size) - center;
      double w = 0.0;
      if (dz >= -1.3 && dz <= -0.5) {
        w = std::pow(10.0, 2.5 * (dz + 0.5));
      } else if (dz > -0.5 && dz < 0.5) {
        w = 1.0;
      } else if (dz >= 0.5 && dz <= 2.5) {
        w = std::pow(10.0, -(dz - 0.5));
      }
      weights_(j, k) = w;
    }
  }
}

std::vector<double> BarkFilterbank::Apply(std::span<const double> power) const {
  if (power.size() != static_cast<std::size_t>(weights_.cols())) {
    Fail(ErrorCode::kLengthMismatch, "power spectrum size does not match filterbank");
  }
  const Eigen::Map<const Vector> p(power.data(), static_cast<Eigen::Index>(power.size()));
  const Vector e = weights_ * p;
  return {e.data(), e.data() + e.size()};
}

// ---------------------------------------------------------------------------
// Base front-ends

namespace {

FeatureMatrix EmptyFeatures(const FrameMatrix& frames, Eigen::Index dim) {
  FeatureMatrix f;
  f.values = Matrix::Zero(frames.frames.rows(), dim);
  f.flags.assign(frames.num_frames(), 0);
  f.frame_shift_ms =
      frames.sample_rate > 0 ? 1000.0 * frames.shift / frames.sample_rate : 0.0;
  return f;
}

std::span<const double> RowSpan(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

FeatureMatrix ComputeLpc(const FrameMatrix& frames, int order) {
  if (order < 1 || static_cast<std::size_t>(order) >= frames.frame_length()) {
    Fail(ErrorCode::kConfigError, "LPC order must be in [1, frame length)");
  }
  FeatureMatrix f = EmptyFeatures(frames, order);
  for (Eigen::Index t = 0; t < frames.frames.rows(); ++t) {
    const auto r = Autocorrelation(RowSpan(frames.frames, t), order);
    if (!(r[0] > 0.0)) {
      f.flags[static_cast<std::size_t>(t)] = 1;
      continue;
    }
    const LpcModel lpc = LevinsonDurbin(r, order);
    for (int i = 0; i < order; ++i) f.values(t, i) = lpc.coefficients[static_cast<std::size_t>(i)];
    if (lpc.singular) f.flags[static_cast<std::size_t>(t)] = 1;
  }
  return f;
}

FeatureMatrix ComputeMfcc(const FrameMatrix& frames, const MfccConfig& cfg) {
  if (cfg.n_ceps < 1 || cfg.n_ceps >= cfg.n_filters) {
    Fail(ErrorCode::kConfigError, "MFCC needs 1 <= n_ceps < n_filters");
  }
  const int fft_size = cfg.fft_size > 0 ? cfg.fft_size : DefaultFftSize(frames.frame_length());
  CheckFftSize(fft_size, frames.frame_length());
  const MelFilterbank bank(cfg.n_filters, fft_size, frames.sample_rate, cfg.low_hz, cfg.high_hz);

  // Orthonormal DCT-II rows 1..n_ceps.
  const int m = cfg.n_filters;
  Matrix dct(cfg.n_ceps, m);
  const double scale = std::sqrt(2.0 / m);
  for (int k = 1; k <= cfg.n_ceps; ++k) {
    for (int j = 0; j < m; ++j) {
      dct(k - 1, j) = scale * std::cos(std::numbers::pi * k * (j + 0.5) / m);
    }
  }

  FeatureMatrix f = EmptyFeatures(frames, cfg.n_ceps);
  SpectrumAnalyzer analyzer(fft_size);
  std::vector<double> power;
  Vector log_mel(m);
  for (Eigen::Index t = 0; t < frames.frames.rows(); ++t) {
    analyzer.Compute(RowSpan(frames.frames, t), power);
    const auto mel = bank.Apply(power);
    for (int j = 0; j < m; ++j) log_mel[j] = std::log(std::max(mel[static_cast<std::size_t>(j)], kLogFloor));
    f.values.row(t) = (dct * log_mel).transpose();
  }
  return f;
}

FeatureMatrix ComputePlp(const FrameMatrix& frames, const PlpConfig& cfg) {
  if (cfg.order < 1) Fail(ErrorCode::kConfigError, "PLP order must be >= 1");
  const int fft_size = cfg.fft_size > 0 ? cfg.fft_size : DefaultFftSize(frames.frame_length());
  CheckFftSize(fft_size, frames.frame_length());
  const BarkFilterbank bank(fft_size, frames.sample_rate);
  const int n_bands = bank.num_filters();
  if (cfg.order >= 2 * (n_bands - 1)) {
    Fail(ErrorCode::kConfigError, "PLP order too high for the number of critical bands");
  }

  const Eigen::Index n_frames = frames.frames.rows();
  Matrix bands(n_frames, n_bands);
  std::vector<bool> silent(static_cast<std::size_t>(n_frames), false);
  {
    SpectrumAnalyzer analyzer(fft_size);
    std::vector<double> power;
    for (Eigen::Index t = 0; t < n_frames; ++t) {
      analyzer.Compute(RowSpan(frames.frames, t), power);
      const auto e = bank.Apply(power);
      double total = 0.0;
      for (int j = 0; j < n_bands; ++j) {
        bands(t, j) = e[static_cast<std::size_t>(j)];
        total += e[static_cast<std::size_t>(j)];
      }
      silent[static_cast<std::size_t>(t)] = !(total > 0.0);
    }
  }

  if (cfg.rasta) {
    const Matrix log_bands = bands.array().max(kLogFloor).log().matrix();
    bands = RastaFilter(log_bands).values.array().exp().matrix();
  }

  // Inverse DFT of the (real, even) auditory spectrum sampled at
  // j * pi / (B - 1) gives the autocorrelation of the all-pole fit.
  const int n_lags = cfg.order + 1;
  Matrix idft(n_lags, n_bands);
  const double denom = 2.0 * (n_bands - 1);
  for (int k = 0; k < n_lags; ++k) {
    for (int j = 0; j < n_bands; ++j) {
      const double w = (j == 0 || j == n_bands - 1) ? 1.0 : 2.0;
      idft(k, j) = w * std::cos(std::numbers::pi * j * k / (n_bands - 1)) / denom;
    }
  }

  FeatureMatrix f = EmptyFeatures(frames, cfg.order + 1);
  Vector auditory(n_bands);
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    if (silent[static_cast<std::size_t>(t)] && !cfg.rasta) {
      f.flags[static_cast<std::size_t>(t)] = 1;
      continue;
    }
    for (int j = 0; j < n_bands; ++j) {
      auditory[j] = std::cbrt(bands(t, j) * bank.equal_loudness()[static_cast<std::size_t>(j)]);
    }
    const Vector r = idft * auditory;
    if (!(r[0] > 0.0)) {
      f.flags[static_cast<std::size_t>(t)] = 1;
      continue;
    }
    const LpcModel lpc = LevinsonDurbin(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), cfg.order);
    if (lpc.singular) f.flags[static_cast<std::size_t>(t)] = 1;
    const auto c = LpcToCepstrum(lpc, cfg.order + 1);
    for (int i = 0; i <= cfg.order; ++i) f.values(t, i) = c[static_cast<std::size_t>(i)];
  }
  return f;
}

// ---------------------------------------------------------------------------
// Dynamics and energy

FeatureMatrix AppendDeltas(const FeatureMatrix& f, int d, int orders) {
  if (d < 1) Fail(ErrorCode::kInvalidParam, "delta offset must be >= 1");
  if (orders < 0 || orders > 2) Fail(ErrorCode::kInvalidParam, "delta orders must be 0, 1 or 2");
  const Eigen::Index t_count = f.values.rows();
  const Eigen::Index dim = f.values.cols();
  if (orders > 0 && t_count <= 2 * d) {
    Fail(ErrorCode::kTooFewFrames, std::to_string(t_count) + " frames for delta offset " +
                                       std::to_string(d));
  }
  FeatureMatrix out = f;
  out.values.resize(t_count, dim * (1 + orders));
  out.values.leftCols(dim) = f.values;
  for (int o = 1; o <= orders; ++o) {
    const auto src_col = (o - 1) * dim;
    const auto dst_col = o * dim;
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + d, t_count - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - d, 0);
      out.values.block(t, dst_col, 1, dim) =
          out.values.block(ahead, src_col, 1, dim) - out.values.block(behind, src_col, 1, dim);
    }
  }
  return out;
}

FeatureMatrix AppendLogEnergy(const FeatureMatrix& f, std::span<const double> log_energy) {
  if (log_energy.size() != f.num_frames()) {
    Fail(ErrorCode::kLengthMismatch, "energy length " + std::to_string(log_energy.size()) +
                                         " != frame count " + std::to_string(f.num_frames()));
  }
  FeatureMatrix out = f;
  out.values.conservativeResize(Eigen::NoChange, f.values.cols() + 1);
  for (std::size_t t = 0; t < log_energy.size(); ++t) {
    out.values(static_cast<Eigen::Index>(t), f.values.cols()) = log_energy[t];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Front-end specs

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int ParseInt(std::string_view s, std::string_view context) {
  int v = 0;
  if (s.empty()) Fail(ErrorCode::kConfigError, "missing number in '" + std::string(context) + "'");
  for (char c : s) {
    if (c < '0' || c > '9') {
      Fail(ErrorCode::kConfigError, "bad number in '" + std::string(context) + "'");
    }
    v = v * 10 + (c - '0');
    if (v > 1000000) Fail(ErrorCode::kConfigError, "number too large in '" + std::string(context) + "'");
  }
  return v;
}

int DefaultBaseCount(BaseFeature b) { return b == BaseFeature::kMfcc ? 12 : 13; }

const char* BaseName(BaseFeature b) {
  switch (b) {
    case BaseFeature::kMfcc: return "mfcc";
    case BaseFeature::kLpc: return "lpc";
    case BaseFeature::kPlp: return "plp";
  }
  return "?";
}

}  // namespace

FrontendSpec FrontendSpec::Parse(std::string_view text) {
  FrontendSpec spec;
  std::vector<std::string_view> tokens;
  while (true) {
    const auto comma = text.find(',');
    tokens.push_back(Trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (tokens.empty() || tokens.front().empty()) Fail(ErrorCode::kConfigError, "empty frontend spec");

  auto split = [](std::string_view tok, char sep) {
    const auto pos = tok.find(sep);
    return pos == std::string_view::npos
               ? std::pair{tok, std::string_view{}}
               : std::pair{tok.substr(0, pos), tok.substr(pos + 1)};
  };

  {
    const auto [name, count] = split(tokens.front(), ':');
    if (name == "mfcc") {
      spec.base = BaseFeature::kMfcc;
    } else if (name == "lpc") {
      spec.base = BaseFeature::kLpc;
    } else if (name == "plp") {
      spec.base = BaseFeature::kPlp;
    } else {
      Fail(ErrorCode::kConfigError, "unknown base feature '" + std::string(name) + "'");
    }
    spec.n_base = count.empty() ? DefaultBaseCount(spec.base) : ParseInt(count, tokens.front());
  }

  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::string_view tok = tokens[i];
    if (tok == "d0" || tok == "d1" || tok == "d2") {
      spec.deltas = tok[1] - '0';
    } else if (tok.starts_with("off=")) {
      spec.delta_d = ParseInt(tok.substr(4), tok);
    } else if (tok == "e") {
      spec.energy = true;
    } else {
      const auto [name, arg] = split(tok, ':');
      NormalizerSpec n;
      if (name == "cms") {
        n.kind = NormalizerKind::kCms;
      } else if (name == "cvn") {
        n.kind = NormalizerKind::kCvn;
      } else if (name == "rasta") {
        n.kind = NormalizerKind::kRasta;
      } else if (name == "warp") {
        n.kind = NormalizerKind::kWarp;
        if (!arg.empty()) n.warp_window = ParseInt(arg, tok);
      } else if (name == "gauss") {
        n.kind = NormalizerKind::kGaussianize;
        if (!arg.empty()) n.gaussianize_iters = ParseInt(arg, tok);
      } else {
        Fail(ErrorCode::kConfigError, "unknown frontend token '" + std::string(tok) + "'");
      }
      if (!arg.empty() && n.kind != NormalizerKind::kWarp && n.kind != NormalizerKind::kGaussianize) {
        Fail(ErrorCode::kConfigError, "token '" + std::string(tok) + "' takes no argument");
      }
      spec.normalizers.push_back(n);
    }
  }
  spec.Validate();
  return spec;
}

std::string FrontendSpec::ToString() const {
  std::ostringstream out;
  out << BaseName(base);
  if (n_base != DefaultBaseCount(base)) out << ':' << n_base;
  if (deltas > 0) out << ",d" << deltas;
  if (delta_d != 1) out << ",off=" << delta_d;
  if (energy) out << ",e";
  for (const auto& n : normalizers) {
    switch (n.kind) {
      case NormalizerKind::kCms: out << ",cms"; break;
      case NormalizerKind::kCvn: out << ",cvn"; break;
      case NormalizerKind::kRasta: out << ",rasta"; break;
      case NormalizerKind::kWarp:
        out << ",warp";
        if (n.warp_window != NormalizerSpec{}.warp_window) out << ':' << n.warp_window;
        break;
      case NormalizerKind::kGaussianize:
        out << ",gauss";
        if (n.gaussianize_iters != NormalizerSpec{}.gaussianize_iters) out << ':' << n.gaussianize_iters;
        break;
    }
  }
  return out.str();
}

std::string FrontendSpec::Label() const {
  std::string label = BaseName(base);
  std::transform(label.begin(), label.end(), label.begin(), ::toupper);
  if (n_base != DefaultBaseCount(base)) label += std::to_string(n_base);
  if (deltas >= 1) label += "+D";
  if (deltas >= 2) label += "+DD";
  if (energy) label += "+E";
  for (const auto& n : normalizers) {
    switch (n.kind) {
      case NormalizerKind::kCms: label += "+CMS"; break;
      case NormalizerKind::kCvn: label += "+CVN"; break;
      case NormalizerKind::kRasta: label += "+RASTA"; break;
      case NormalizerKind::kWarp: label += "+WARP"; break;
      case NormalizerKind::kGaussianize: label += "+GAUSS"; break;
    }
  }
  return label;
}

int FrontendSpec::Dimension() const {
  return n_base * (1 + deltas) + (energy ? 1 + deltas : 0);
}

bool FrontendSpec::HasRasta() const {
  return std::any_of(normalizers.begin(), normalizers.end(),
                     [](const NormalizerSpec& n) { return n.kind == NormalizerKind::kRasta; });
}

void FrontendSpec::Validate() const {
  const MfccConfig mfcc_defaults;
  if (n_base < 1) Fail(ErrorCode::kConfigError, "base coefficient count must be >= 1");
  if (base == BaseFeature::kMfcc && n_base >= mfcc_defaults.n_filters) {
    Fail(ErrorCode::kConfigError, "MFCC count must be below the mel filter count");
  }
  if (base == BaseFeature::kPlp && n_base < 2) {
    Fail(ErrorCode::kConfigError, "PLP needs at least 2 cepstra");
  }
  if (deltas < 0 || deltas > 2) Fail(ErrorCode::kConfigError, "deltas must be 0, 1 or 2");
  if (delta_d != 1 && delta_d != 2) Fail(ErrorCode::kConfigError, "delta offset must be 1 or 2");
  for (const auto& n : normalizers) {
    if (n.kind == NormalizerKind::kRasta && base != BaseFeature::kPlp) {
      Fail(ErrorCode::kConfigError, "rasta is only available with plp");
    }
    if (n.kind == NormalizerKind::kWarp && (n.warp_window < 3 || n.warp_window % 2 == 0)) {
      Fail(ErrorCode::kConfigError, "warp window must be odd and >= 3");
    }
    if (n.kind == NormalizerKind::kGaussianize && n.gaussianize_iters < 1) {
      Fail(ErrorCode::kConfigError, "gaussianize iterations must be >= 1");
    }
  }
}

// ---------------------------------------------------------------------------
// Assembled front-end

Frontend::Frontend(FrontendSpec spec, PreprocessConfig preprocess)
    : spec_(std::move(spec)), preprocess_(preprocess) {
  spec_.Validate();
  preprocess_.Validate();
}

FeatureMatrix Frontend::FromFrames(const FrameMatrix& windowed) const {
  FeatureMatrix f;
  switch (spec_.base) {
    case BaseFeature::kMfcc: {
      MfccConfig cfg;
      cfg.n_ceps = spec_.n_base;
      f = ComputeMfcc(windowed, cfg);
      break;
    }
    case BaseFeature::kLpc:
      f = ComputeLpc(windowed, spec_.n_base);
      break;
    case BaseFeature::kPlp: {
      PlpConfig cfg;
      cfg.order = spec_.n_base - 1;
      cfg.rasta = spec_.HasRasta();
      f = ComputePlp(windowed, cfg);
      break;
    }
  }
  if (spec_.energy) f = AppendLogEnergy(f, FrameLogEnergy(windowed));
  if (spec_.deltas > 0) f = AppendDeltas(f, spec_.delta_d, spec_.deltas);
  f.frontend = spec_.ToString();
  return f;
}

FeatureMatrix Frontend::Extract(const Waveform& wave) const {
  const auto mask = SpeechFrameMask(wave, preprocess_);
  const FrameMatrix windowed = PreprocessFrames(wave, preprocess_);
  FeatureMatrix all = FromFrames(windowed);

  std::vector<Eigen::Index> keep;
  for (std::size_t t = 0; t < all.num_frames() && t < mask.size(); ++t) {
    if (mask[t]) keep.push_back(static_cast<Eigen::Index>(t));
  }
  if (keep.empty()) Fail(ErrorCode::kNoSpeech, "no speech frames detected");

  FeatureMatrix f;
  f.frontend = all.frontend;
  f.frame_shift_ms = all.frame_shift_ms;
  f.values.resize(static_cast<Eigen::Index>(keep.size()), all.values.cols());
  f.flags.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    f.values.row(static_cast<Eigen::Index>(i)) = all.values.row(keep[i]);
    f.flags[i] = all.flags[static_cast<std::size_t>(keep[i])];
  }
  for (const auto& n : spec_.normalizers) f = ApplyNormalizer(f, n);
  return f;
}

Frontend AssembleFrontend(const FrontendSpec& spec, const PreprocessConfig& preprocess) {
  return Frontend(spec, preprocess);
}

// ---------------------------------------------------------------------------
// SVFT files

namespace {

constexpr char kFeatureMagic[4] = {'S', 'V', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void Put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T Take(const std::string& in, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > in.size()) Fail(ErrorCode::kFormatError, "truncated " + path.string());
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& f) {
  std::string out(kFeatureMagic, 4);
  Put<std::uint32_t>(out, kFeatureVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(f.values.rows()));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(f.values.cols()));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(f.frontend.size()));
  out += f.frontend;
  for (Eigen::Index t = 0; t < f.values.rows(); ++t) {
    for (Eigen::Index d = 0; d < f.values.cols(); ++d) {
      Put<float>(out, static_cast<float>(f.values(t, d)));
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    Fail(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

FeatureMatrix ReadFeatures(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (in.size() < 4 || std::memcmp(in.data(), kFeatureMagic, 4) != 0) {
    Fail(ErrorCode::kFormatError, "not a feature file: " + path.string());
  }
  std::size_t pos = 4;
  if (Take<std::uint32_t>(in, pos, path) != kFeatureVersion) {
    Fail(ErrorCode::kFormatError, "unsupported feature file version in " + path.string());
  }
  const auto rows = Take<std::uint32_t>(in, pos, path);
  const auto cols = Take<std::uint32_t>(in, pos, path);
  const auto spec_len = Take<std::uint32_t>(in, pos, path);
  if (pos + spec_len > in.size()) Fail(ErrorCode::kFormatError, "truncated " + path.string());
  FeatureMatrix f;
  f.frontend = in.substr(pos, spec_len);
  pos += spec_len;
  if (in.size() - pos != static_cast<std::size_t>(rows) * cols * sizeof(float)) {
    Fail(ErrorCode::kFormatError, "payload size mismatch in " + path.string());
  }
  f.values.resize(rows, cols);
  for (Eigen::Index t = 0; t < f.values.rows(); ++t) {
    for (Eigen::Index d = 0; d < f.values.cols(); ++d) {
      f.values(t, d) = Take<float>(in, pos, path);
    }
  }
  f.flags.assign(rows, 0);
  return f;
}

}  // namespace svid
