// src/common.cc

#include "svid/common.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>
#include <vector>

#include "svid/error.h"

namespace svid {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotWav: return "NotWav";
    case ErrorCode::kUnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kInvalidParam: return "InvalidParam";
    case ErrorCode::kInsufficientUtterances: return "InsufficientUtterances";
    case ErrorCode::kEmptySignal: return "EmptySignal";
    case ErrorCode::kSignalTooShort: return "SignalTooShort";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kLagTooLarge: return "LagTooLarge";
    case ErrorCode::kNonPositiveEnergy: return "NonPositiveEnergy";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kTooFewFrames: return "TooFewFrames";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateData: return "DegenerateData";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kEmptyGrid: return "EmptyGrid";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kEmptyRows: return "EmptyRows";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kNoSpeech: return "NoSpeech";
  }
  return "Unknown";
}

namespace {

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b) {
  return SplitMix(SplitMix(a) ^ (b + 0x632BE59BD9B4E019ull));
}

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return MixSeed(MixSeed(a, b), c);
}

std::uint64_t Rng::NextU64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

std::size_t Rng::Index(std::size_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void ParallelFor(std::size_t n_blocks, int jobs,
                 const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n_blocks, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_blocks; b = next++) {
        try {
          fn(b);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace svid
