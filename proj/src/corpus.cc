// src/corpus.cc

#include "svid/corpus.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <set>

#include "svid/common.h"
#include "svid/error.h"

namespace svid {

namespace fs = std::filesystem;

void Waveform::Validate() const {
  if (sample_rate <= 0) Fail(ErrorCode::kInvalidParam, "sample rate must be positive");
  if (samples.empty()) Fail(ErrorCode::kInvalidParam, "waveform has no samples");
  for (double s : samples) {
    if (!std::isfinite(s)) Fail(ErrorCode::kInvalidParam, "non-finite sample");
  }
}

Corpus::Corpus(std::vector<Utterance> utterances)
    : utterances_(std::move(utterances)) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& u : utterances_) {
    u.wave.Validate();
    if (!seen.emplace(u.speaker_id, u.utterance_id).second) {
      Fail(ErrorCode::kInvalidParam,
           "duplicate utterance " + u.speaker_id + "/" + u.utterance_id);
    }
    if (u.wave.sample_rate != utterances_.front().wave.sample_rate) {
      Fail(ErrorCode::kInvalidParam,
           "mixed sample rates in corpus (" + u.speaker_id + "/" +
               u.utterance_id + ")");
    }
  }
}

int Corpus::sample_rate() const {
  return utterances_.empty() ? 0 : utterances_.front().wave.sample_rate;
}

std::vector<std::string> Corpus::Speakers() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& u : utterances_) {
    if (seen.insert(u.speaker_id).second) out.push_back(u.speaker_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// WAV I/O

namespace {

std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

Waveform ReadWav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    Fail(ErrorCode::kNotWav, path.string());
  }

  bool have_fmt = false;
  int rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = ReadU32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) {
        Fail(ErrorCode::kTruncated, "fmt chunk in " + path.string());
      }
      const std::uint16_t format = ReadU16(bytes.data() + body);
      const std::uint16_t channels = ReadU16(bytes.data() + body + 2);
      rate = static_cast<int>(ReadU32(bytes.data() + body + 4));
      const std::uint16_t bits = ReadU16(bytes.data() + body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        Fail(ErrorCode::kUnsupportedEncoding,
             path.string() + " (format " + std::to_string(format) + ", " +
                 std::to_string(channels) + " channels, " + std::to_string(bits) +
                 " bits)");
      }
      if (rate <= 0) Fail(ErrorCode::kUnsupportedEncoding, "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) Fail(ErrorCode::kNotWav, "data chunk before fmt in " + path.string());
      if (body + size > bytes.size() || size < 2) {
        Fail(ErrorCode::kTruncated, "data chunk in " + path.string());
      }
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(ReadU16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  Fail(have_fmt ? ErrorCode::kTruncated : ErrorCode::kNotWav,
       "missing chunk in " + path.string());
}

void WriteWav(const fs::path& path, const Waveform& wave) {
  wave.Validate();
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  PutU32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate));
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, 2 * n);
  for (double s : wave.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    PutU16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    Fail(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

Corpus LoadCorpusDir(const fs::path& root) {
  if (!fs::is_directory(root)) Fail(ErrorCode::kIoError, "not a directory: " + root.string());
  std::map<std::string, std::vector<fs::path>> by_speaker;
  for (const auto& spk : fs::directory_iterator(root)) {
    if (!spk.is_directory()) continue;
    auto& files = by_speaker[spk.path().filename().string()];
    for (const auto& f : fs::directory_iterator(spk.path())) {
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
  }
  std::vector<Utterance> utts;
  for (const auto& [speaker, files] : by_speaker) {
    for (const auto& f : files) {
      utts.push_back({speaker, f.stem().string(), ReadWav(f)});
    }
  }
  if (utts.empty()) Fail(ErrorCode::kIoError, "no .wav files under " + root.string());
  return Corpus(std::move(utts));
}

void SaveCorpusDir(const Corpus& corpus, const fs::path& root) {
  for (const auto& u : corpus.utterances()) {
    const fs::path dir = root / u.speaker_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) Fail(ErrorCode::kIoError, "cannot create " + dir.string());
    WriteWav(dir / (u.utterance_id + ".wav"), u.wave);
  }
}

// ---------------------------------------------------------------------------
// Synthetic formant voices

namespace {

constexpr double kMinFormantSpacingHz = 150.0;
constexpr double kSnrDb = 35.0;
constexpr double kTargetRms = 0.1;

// Stream tags keep speaker and utterance draws independent of each other.
constexpr std::uint64_t kVoiceStream = 0x766F696365ull;
constexpr std::uint64_t kUttStream = 0x757474ull;

std::string IndexedId(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

}  // namespace

std::vector<VoiceParams> DrawVoices(std::uint64_t seed, int n_speakers) {
  Rng rng(MixSeed(seed, kVoiceStream));
  std::vector<VoiceParams> voices;
  voices.reserve(static_cast<std::size_t>(n_speakers));
  const std::array<std::pair<double, double>, 3> ranges = {
      {{300.0, 850.0}, {900.0, 2300.0}, {2400.0, 3500.0}}};
  while (static_cast<int>(voices.size()) < n_speakers) {
    VoiceParams v{};
    v.f0_hz = rng.Uniform(100.0, 240.0);
    for (int i = 0; i < 3; ++i) {
      v.formants_hz[i] = rng.Uniform(ranges[i].first, ranges[i].second);
      v.bandwidths_hz[i] = 50.0 + 0.04 * v.formants_hz[i];
      v.formant_gains[i] = rng.Uniform(0.4, 1.0) / (1.0 + i);
    }
    // Every pair of voices must differ by at least the spacing in some formant.
    bool separated = true;
    for (const auto& other : voices) {
      double dist = 0.0;
      for (int i = 0; i < 3; ++i) {
        dist = std::max(dist, std::abs(other.formants_hz[i] - v.formants_hz[i]));
      }
      if (dist < kMinFormantSpacingHz) {
        separated = false;
        break;
      }
    }
    if (separated) voices.push_back(v);
  }
  return voices;
}

Corpus SynthesizeCorpus(const SynthParams& p) {
  if (p.n_speakers < 2) Fail(ErrorCode::kInvalidParam, "need at least 2 speakers");
  if (p.n_utterances < 1) Fail(ErrorCode::kInvalidParam, "need at least 1 utterance");
  if (!(p.duration_s > 0.0)) Fail(ErrorCode::kInvalidParam, "duration must be positive");
  if (p.sample_rate <= 0) Fail(ErrorCode::kInvalidParam, "sample rate must be positive");
  if (!(p.articulation >= 0.0 && p.articulation < 0.5)) {
    Fail(ErrorCode::kInvalidParam, "articulation must be in [0, 0.5)");
  }

  const auto voices = DrawVoices(p.seed, p.n_speakers);
  const auto n_samples =
      static_cast<std::size_t>(std::llround(p.duration_s * p.sample_rate));
  if (n_samples == 0) Fail(ErrorCode::kInvalidParam, "duration shorter than one sample");
  const double fs = p.sample_rate;

  std::vector<Utterance> utts;
  utts.reserve(static_cast<std::size_t>(p.n_speakers * p.n_utterances));
  for (int s = 0; s < p.n_speakers; ++s) {
    const VoiceParams& voice = voices[static_cast<std::size_t>(s)];
    for (int u = 0; u < p.n_utterances; ++u) {
      Rng rng(MixSeed(p.seed, kUttStream, (static_cast<std::uint64_t>(s) << 32) | u));

      // Excitation: impulse train at a slightly perturbed F0 with per-period
      // jitter and a random starting phase.
      const double f0 = voice.f0_hz * rng.Uniform(0.95, 1.05);
      std::vector<double> excitation(n_samples, 0.0);
      double t = rng.Uniform(0.0, fs / f0);
      while (t < static_cast<double>(n_samples)) {
        excitation[static_cast<std::size_t>(t)] = 1.0;
        t += (fs / f0) * (1.0 + 0.01 * rng.Normal());
      }

      // Articulation: each formant glides between segment targets drawn
      // around the speaker's centre, so spectra move through a space shared
      // with other speakers instead of sitting at one point.
      std::array<std::vector<double>, 3> track;
      for (auto& tr : track) tr.assign(n_samples, 0.0);
      {
        std::array<double, 3> from{}, to{};
        for (int i = 0; i < 3; ++i) from[i] = rng.Uniform(-1.0, 1.0);
        std::size_t start = 0;
        while (start < n_samples) {
          const auto len = static_cast<std::size_t>(fs * rng.Uniform(0.06, 0.16));
          for (int i = 0; i < 3; ++i) to[i] = rng.Uniform(-1.0, 1.0);
          const std::size_t end = std::min(n_samples, start + len);
          for (std::size_t n = start; n < end; ++n) {
            const double x = static_cast<double>(n - start) / static_cast<double>(len);
            const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * x);
            for (int i = 0; i < 3; ++i) track[i][n] = from[i] + w * (to[i] - from[i]);
          }
          from = to;
          start = end;
        }
      }

      // Parallel bank of two-pole resonators.
      std::vector<double> voiced(n_samples, 0.0);
      for (int i = 0; i < 3; ++i) {
        const double centre = voice.formants_hz[i] * rng.Uniform(0.98, 1.02);
        const double radius = std::exp(-std::numbers::pi * voice.bandwidths_hz[i] / fs);
        const double b2 = -radius * radius;
        const double gain = voice.formant_gains[i] * (1.0 - radius);
        double y1 = 0.0, y2 = 0.0;
        for (std::size_t n = 0; n < n_samples; ++n) {
          const double freq = centre * (1.0 + p.articulation * track[i][n]);
          const double b1 = 2.0 * radius * std::cos(2.0 * std::numbers::pi * freq / fs);
          const double y = gain * excitation[n] + b1 * y1 + b2 * y2;
          voiced[n] += y;
          y2 = y1;
          y1 = y;
        }
      }

      // Slow syllabic amplitude modulation.
      const double mod_rate = rng.Uniform(3.0, 5.0);
      const double mod_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
      double energy = 0.0;
      for (std::size_t n = 0; n < n_samples; ++n) {
        voiced[n] *= 1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * mod_rate * n / fs + mod_phase);
        energy += voiced[n] * voiced[n];
      }
      const double rms = std::sqrt(energy / static_cast<double>(n_samples));
      const double scale = rms > 0.0 ? kTargetRms / rms : 0.0;
      const double noise_std = kTargetRms * std::pow(10.0, -kSnrDb / 20.0);

      Waveform w;
      w.sample_rate = p.sample_rate;
      w.samples.resize(n_samples);
      for (std::size_t n = 0; n < n_samples; ++n) {
        w.samples[n] = scale * voiced[n] + noise_std * rng.Normal();
      }
      utts.push_back({IndexedId("spk", s), IndexedId("utt", u), std::move(w)});
    }
  }
  return Corpus(std::move(utts));
}

std::pair<Corpus, Corpus> SplitTrainTest(const Corpus& corpus, const SplitSpec& spec,
                                         std::uint64_t seed) {
  if (spec.n_train < 1 || spec.n_test < 1) {
    Fail(ErrorCode::kInvalidParam, "split counts must be at least 1");
  }
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_speaker[corpus.utterances()[i].speaker_id].push_back(i);
  }
  std::vector<Utterance> train, test;
  // Iterate speakers in corpus order so output order is stable.
  for (const auto& speaker : corpus.Speakers()) {
    auto idx = by_speaker[speaker];
    if (static_cast<int>(idx.size()) < spec.n_train + spec.n_test) {
      Fail(ErrorCode::kInsufficientUtterances,
           speaker + " has " + std::to_string(idx.size()) + " utterances");
    }
    std::uint64_t h = 0;
    for (char c : speaker) h = MixSeed(h, static_cast<unsigned char>(c));
    Rng rng(MixSeed(seed, h));
    rng.Shuffle(idx.begin(), idx.end());
    for (int k = 0; k < spec.n_train + spec.n_test; ++k) {
      const auto& u = corpus.utterances()[idx[static_cast<std::size_t>(k)]];
      (k < spec.n_train ? train : test).push_back(u);
    }
  }
  return {Corpus(std::move(train)), Corpus(std::move(test))};
}

}  // namespace svid
