#pragma once

#include <cstdint>

namespace bai {

// Finalizer of splitmix64. Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class StreamRole : std::uint64_t {
  rewards = 0x72657761ULL,
  coins = 0x636f696eULL,
  generic = 0x67656e65ULL,
};

// Counter-based stream: draw i is a pure function of (key, i). Splitting a
// run into substreams and replaying any position is cheap and exact, which
// keeps Monte Carlo output independent of scheduling.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t key, std::uint64_t start = 0)
      : key_(key), counter_(start) {}

  static RngStream substream(std::uint64_t master_seed, std::uint64_t run_id,
                             StreamRole role) {
    std::uint64_t key = mix64(master_seed + 0x9e3779b97f4a7c15ULL);
    key = mix64(key ^ (run_id + 0x9e3779b97f4a7c15ULL));
    key = mix64(key ^ static_cast<std::uint64_t>(role));
    return RngStream(key);
  }

  std::uint64_t position() const { return counter_; }
  void seek(std::uint64_t position) { counter_ = position; }

  std::uint64_t draw_at(std::uint64_t position) const {
    return mix64(key_ + (position + 1) * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t next_u64() { return draw_at(counter_++); }

  // Uniform on the open interval (0, 1); safe under log().
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace bai
