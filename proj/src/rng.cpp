#include "sfd/rng.hpp"

#include <cmath>

#include "sfd/error.hpp"

namespace sfd {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Finalizer from MurmurHash3; bijective on 64-bit values.
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 33;
  z *= 0xff51afd7ed558ccdull;
  z ^= z >> 33;
  z *= 0xc4ceb9fe1a85ec53ull;
  z ^= z >> 33;
  return z;
}

std::uint64_t hash_label(std::string_view label) {
  // FNV-1a, then an extra mix so short labels still differ in high bits.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return mix64(h);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) {
  key_ = mix64(seed + kGolden);
  state_ = key_;
}

RngStream RngStream::child(std::string_view label) const {
  std::uint64_t k = mix64(key_ ^ hash_label(label));
  return RngStream(k, 0);
}

RngStream RngStream::child(std::uint64_t index) const {
  std::uint64_t k = mix64(key_ ^ mix64(index * kGolden + 0x2545f4914f6cdd1dull));
  return RngStream(k, 0);
}

RngStream RngStream::child(std::string_view label, std::uint64_t index) const {
  return child(label).child(index);
}

std::uint64_t RngStream::next_u64() {
  // SplitMix64 step keyed at the stream's identity.
  state_ += kGolden;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
  // Polar method; hand-rolled so sequences are identical across platforms,
  // which std::normal_distribution does not guarantee.
  for (;;) {
    double u = 2.0 * next_double() - 1.0;
    double v = 2.0 * next_double() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw ParameterError("next_below: n must be positive");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

std::vector<std::uint32_t> RngStream::pick(std::uint32_t n, std::uint32_t k) {
  if (k > n) throw ParameterError("pick: k exceeds n");
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t j = i + static_cast<std::uint32_t>(next_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace sfd
