#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sfd {

// Counter-based splittable random stream.
//
// A stream is identified by a 64-bit key derived from (seed, path), where the
// path is the ordered list of child labels that produced it. The sequence for
// a given key is the same on every run and does not depend on how many values
// other streams have consumed, so per-client / per-round substreams can be
// drawn from in any order (or in parallel) without changing results.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Substream derivation. Children are keyed by the parent's identity, not by
  // its current position: calling child("x") twice yields the same stream.
  RngStream child(std::string_view label) const;
  RngStream child(std::uint64_t index) const;
  RngStream child(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1), 53-bit resolution.
  double next_double();
  // Standard normal via the polar method.
  double next_normal();
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  // First k entries of a Fisher-Yates shuffle of 0..n-1 (unsorted).
  std::vector<std::uint32_t> pick(std::uint32_t n, std::uint32_t k);

  std::uint64_t key() const { return key_; }

 private:
  RngStream(std::uint64_t key, int /*tag*/) : key_(key), state_(key) {}

  std::uint64_t key_;
  std::uint64_t state_;
};

}  // namespace sfd
