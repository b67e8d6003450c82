#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dnlkit/error.hpp"

// Counter-based pseudorandom generator (Philox4x32-10) plus the Box-Muller
// Gaussian recipe built on top of it. The exact constants and consumption
// order are part of the toolkit's reproducibility contract; docs/rng.md
// spells out the byte-level recipe so other implementations can agree.
namespace dnlkit::philox {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
inline constexpr int kRounds = 10;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter block(Counter ctr, Key key) {
  for (int round = 0; round < kRounds; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

// Sequential stream of u32/u64/doubles/Gaussians addressed by (seed, stream).
// Block i of stream s under seed k is philox(ctr = {lo(i), hi(i), lo(s),
// hi(s)}, key = {lo(k), hi(k)}); the four words of a block are consumed in
// order 0..3.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  std::uint32_t next_u32() {
    if (word_ == 4) {
      ++block_;
      word_ = 0;
    }
    if (word_ == 0) {
      buf_ = block({static_cast<std::uint32_t>(block_),
                    static_cast<std::uint32_t>(block_ >> 32), stream_lo_,
                    stream_hi_},
                   key_);
    }
    return buf_[word_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform double in [0, 1): x * 2^-32.
  double uniform() { return next_u32() * 0x1p-32; }

  // Unbiased uniform integer in [0, n) by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw_precondition("uniform_below: n must be positive");
    if (n == 1) return 0;
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller. Each pair of u32 words (a, b) yields
  // one deviate: u1 = (a + 1) * 2^-32 in (0,1], u2 = b * 2^-32 in [0,1),
  // z = sqrt(-2 ln u1) * cos(2*pi*u2). The sine partner is discarded so
  // deviate i always depends on words 2i and 2i+1 only.
  double gaussian() {
    const double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;
    const double u2 = next_u32() * 0x1p-32;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint64_t block_ = 0;
  int word_ = 0;
  Counter buf_{};
};

// First k entries of a seeded partial Fisher-Yates shuffle of [0, n).
// Prefix-consistent: the result for k is a prefix of the result for k' >= k
// under the same stream state.
inline std::vector<std::uint64_t> sample_without_replacement(
    std::uint64_t n, std::uint64_t k, Stream& rng) {
  if (k > n) throw_precondition("sample_without_replacement: k exceeds population");
  std::vector<std::uint64_t> idx(n);
  for (std::uint64_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + rng.uniform_below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

inline void shuffle(std::vector<std::uint32_t>& v, Stream& rng) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const std::uint64_t j = i + rng.uniform_below(v.size() - i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace dnlkit::philox
