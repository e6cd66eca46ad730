#pragma once

// Counter-based random streams.
//
// Every random draw in the toolkit comes from a Philox4x32-10 block cipher
// keyed by the 64-bit run seed. The 128-bit counter is split into a 64-bit
// stream id (high half) and a 64-bit block index (low half). A stream id is
// composed from a purpose tag and a task index:
//
//     stream_id = (purpose << 40) | task_index        task_index < 2^40
//
// so two subsystems never share draws under one seed, and a task's draws do
// not depend on which worker thread executes it.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace bsp {

enum class StreamPurpose : std::uint64_t {
  kTest = 0,
  kTreeSim = 1,
  kSurvival = 2,
  kKernel = 3,
  kPilot = 4,
  kPhiPaths = 5,
  kFkPaths = 6,
  kIncrements = 7,
  kLimits = 8,
};

inline constexpr std::uint64_t kMaxTaskIndex = (std::uint64_t{1} << 40) - 1;

constexpr std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t task) {
  return (static_cast<std::uint64_t>(purpose) << 40) | (task & kMaxTaskIndex);
}

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block encrypt(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;
};

/// One independent random stream. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t task)
      : RngStream(seed, stream_id(purpose, task)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (cursor_ == 2) refill();
    return buffer_[cursor_++];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Exp(rate) by inversion.
  double exponential(double rate = 1.0) { return -std::log(uniform_open()) / rate; }

  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill() {
    const Philox4x32::Block ctr{static_cast<std::uint32_t>(block_),
                                static_cast<std::uint32_t>(block_ >> 32),
                                static_cast<std::uint32_t>(stream_),
                                static_cast<std::uint32_t>(stream_ >> 32)};
    const auto out = Philox4x32::encrypt(ctr, key_);
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    ++block_;
    cursor_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int cursor_ = 2;
};

}  // namespace bsp
