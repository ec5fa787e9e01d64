// include/svid/corpus.h
//
// Audio ingestion: 16-bit PCM mono WAV files, corpus directories laid out as
// <root>/<speaker_id>/<utterance_id>.wav, a deterministic synthetic corpus of
// formant voices, and per-speaker train/test splitting.

#ifndef SVID_CORPUS_H_
#define SVID_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace svid {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  /// Throws kInvalidParam unless rate > 0, non-empty and all finite.
  void Validate() const;
};

struct Utterance {
  std::string speaker_id;
  std::string utterance_id;
  Waveform wave;
};

/// Ordered collection of utterances sharing one sample rate.
class Corpus {
 public:
  Corpus() = default;
  /// Validates uniqueness of (speaker, utterance) and a common sample rate.
  explicit Corpus(std::vector<Utterance> utterances);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  std::size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }
  int sample_rate() const;

  /// Speaker ids in first-appearance order.
  std::vector<std::string> Speakers() const;

 private:
  std::vector<Utterance> utterances_;
};

struct SplitSpec {
  int n_train = 8;
  int n_test = 2;
};

struct SynthParams {
  std::uint64_t seed = 42;
  int n_speakers = 14;
  int n_utterances = 10;
  double duration_s = 2.0;
  int sample_rate = 16000;
  /// Relative formant excursion of the articulation trajectory; 0 holds
  /// every formant at the speaker's centre frequency.
  double articulation = 0.3;
};

/// Per-speaker voice drawn by the synthesizer; exposed for tests.
struct VoiceParams {
  double f0_hz;
  double formants_hz[3];
  double bandwidths_hz[3];
  double formant_gains[3];
};

Waveform ReadWav(const std::filesystem::path& path);
/// Samples are scaled by 32768, rounded and clamped to the int16 range.
void WriteWav(const std::filesystem::path& path, const Waveform& wave);

/// Loads <root>/<speaker>/<utt>.wav in lexicographic order.
Corpus LoadCorpusDir(const std::filesystem::path& root);
void SaveCorpusDir(const Corpus& corpus, const std::filesystem::path& root);

std::vector<VoiceParams> DrawVoices(std::uint64_t seed, int n_speakers);
Corpus SynthesizeCorpus(const SynthParams& params);

std::pair<Corpus, Corpus> SplitTrainTest(const Corpus& corpus,
                                         const SplitSpec& spec,
                                         std::uint64_t seed);

}  // namespace svid

#endif  // SVID_CORPUS_H_
