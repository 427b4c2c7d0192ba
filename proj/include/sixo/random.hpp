#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

#include "sixo/tensor.hpp"

namespace sixo {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds.
PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

// Counter-based random stream. The key is the 64-bit seed, the counter holds a
// 64-bit stream id and a 64-bit block position, so streams derived through split()
// are independent of how many draws other streams made.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

  RngStream split(std::uint64_t id) const;
  RngStream split(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // 64 random bits; also makes the stream usable with <algorithm> shuffles.
  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  double uniform();  // in the open interval (0, 1)
  double normal();
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

  Matrix normal(Index rows, Index cols);
  Matrix uniform(Index rows, Index cols);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  PhiloxCounter buffer_{};
  int buffered_ = 0;  // unread 64-bit words in buffer_
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sixo
