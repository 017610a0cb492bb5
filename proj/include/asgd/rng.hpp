#pragma once

// Counter-based random numbers (Philox4x32-10).
//
// Every random quantity in the library is addressed by (seed, stream, index):
// the seed is the Philox key, the stream id occupies the upper 64 bits of the
// 128-bit counter and the position inside the stream the lower 64 bits.  Two
// streams never overlap, so work can be split across rows, epochs or workers
// without sharing generator state, and results do not depend on the number of
// threads used to produce them.
//
// Stream ids are built with `stream_id(tag, a, b)`; the tags used by the
// library are listed in `StreamTag`.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace asgd {

enum class StreamTag : std::uint32_t {
  DataTarget = 1,   // u_star for synthetic data
  DataRow = 2,      // one stream per synthetic row
  Permutation = 3,  // one stream per epoch
  Sampling = 4,     // per worker: i.i.d. row draws / residual draws
  Noise = 5,        // per worker: residual noise
  Delay = 6,        // simulated delays
  Replicate = 7,    // replicate harness seeds
  Test = 15,
};

/// Packs a tag and two indices (24 and 32 bits) into a 64-bit stream id.
constexpr std::uint64_t stream_id(StreamTag tag, std::uint64_t a, std::uint64_t b = 0) {
  return (static_cast<std::uint64_t>(tag) << 56) | ((a & 0xFFFFFFull) << 32) | (b & 0xFFFFFFFFull);
}

/// Philox4x32 with 10 rounds (Salmon et al. constants).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// A sequential view of one Philox stream.  Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t position = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream),
        position_(position) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    if (lane_ >= 4) refill();
    const std::uint64_t lo = buffer_[lane_];
    const std::uint64_t hi = buffer_[lane_ + 1];
    lane_ += 2;
    return (hi << 32) | lo;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  /// Uniform integer on [0, bound) by rejection, unbiased.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Stream::below: bound must be positive");
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  /// Standard normal by Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t position() const { return position_; }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = philox4x32(ctr, key_);
    ++position_;
    lane_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t position_;
  std::array<std::uint32_t, 4> buffer_{};
  int lane_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by `Stream::below`, so the result is the same
/// on every standard library.
template <class T>
void shuffle(std::span<T> values, Stream& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

/// Random permutation of {0, ..., n-1}.
inline std::vector<std::uint32_t> permutation(std::size_t n, Stream& rng) {
  std::vector<std::uint32_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint32_t>(i);
  shuffle(std::span<std::uint32_t>(p), rng);
  return p;
}

}  // namespace asgd
