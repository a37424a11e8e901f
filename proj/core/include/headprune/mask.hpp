#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace headprune {

/// Generator handle used everywhere a seed is consumed. Each search chain owns one.
using Rng = std::mt19937_64;

/// Set of pruned attention heads, stored as a packed bit vector of fixed length.
///
/// Bit i set means head i is pruned. Heads are flattened layer-major, head-minor,
/// so index 0 is head 0 of layer 0. The text form is a string of '0'/'1'
/// characters with index 0 first.
class HeadMask {
public:
  HeadMask() = default;
  explicit HeadMask(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

  static HeadMask ones(std::size_t n);
  static HeadMask from_indices(std::size_t n, std::span<const std::size_t> indices);

  /// Accepts "0101", "0,1,0,1", "[0, 1, 0, 1]" and JSON-ish variants. Throws ValidationError.
  static HeadMask parse(std::string_view text);

  std::size_t size() const noexcept { return n_; }

  bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool value = true) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (value)
      words_[i >> 6] |= bit;
    else
      words_[i >> 6] &= ~bit;
  }
  void reset(std::size_t i) noexcept { set(i, false); }
  void flip(std::size_t i) noexcept { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }

  /// Hamming weight.
  std::size_t count() const noexcept {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  /// Position of the k-th set (or clear) bit, 0-based. Precondition: k < count of such bits.
  std::size_t nth_set(std::size_t k) const noexcept;
  std::size_t nth_clear(std::size_t k) const noexcept;

  template <typename F>
  void for_each_set(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t word = words_[w];
      while (word) {
        const int b = std::countr_zero(word);
        f(w * 64 + static_cast<std::size_t>(b));
        word &= word - 1;
      }
    }
  }

  std::vector<std::size_t> set_indices() const;
  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::string to_string() const;

  friend bool operator==(const HeadMask&, const HeadMask&) = default;

private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Inclusive limits on the number of pruned heads.
struct WeightBounds {
  std::size_t lower = 0;
  std::size_t upper = 0;

  bool equal() const noexcept { return lower == upper; }
  bool admits(std::size_t weight) const noexcept { return lower <= weight && weight <= upper; }

  /// Throws ConfigError unless lower <= upper <= n.
  void validate(std::size_t n) const;
};

/// Number of differing positions. Throws DimensionError on length mismatch.
std::size_t hamming_distance(const HeadMask& a, const HeadMask& b);

inline std::size_t hamming_weight(const HeadMask& s) noexcept { return s.count(); }

/// Uniform weight k in [lower, upper], then k distinct heads uniformly without replacement.
HeadMask random_state(std::size_t n, const WeightBounds& bounds, Rng& rng);
HeadMask random_state(std::size_t n, const WeightBounds& bounds, std::uint64_t seed);

/// How generate_neighbor moved between states.
enum class NeighborMode {
  single_flip, // Hamming distance 1, weight stays within bounds
  swap,        // equal bounds: clear one set bit and set one clear bit
};

inline NeighborMode neighbor_mode(const WeightBounds& bounds) noexcept {
  return bounds.equal() ? NeighborMode::swap : NeighborMode::single_flip;
}

/// The move that produced a neighbor; `second` is only meaningful for swaps.
struct Move {
  std::size_t first = 0;
  std::size_t second = 0;
  bool is_swap = false;
};

/// Number of legal single flips from s under the bounds (the size of the bounded neighborhood).
std::size_t legal_flip_count(const HeadMask& s, const WeightBounds& bounds) noexcept;

/// Draws a move uniformly from the bounded neighborhood of s without rejection.
/// Throws NeighborhoodError when the neighborhood is empty.
Move sample_move(const HeadMask& s, const WeightBounds& bounds, Rng& rng);

inline void apply_move(HeadMask& s, const Move& m) noexcept {
  s.flip(m.first);
  if (m.is_swap) s.flip(m.second);
}

/// Uniform sample from the bounded neighborhood. With equal bounds the neighbor is a
/// constant-weight swap at Hamming distance 2.
HeadMask generate_neighbor(const HeadMask& s, const WeightBounds& bounds, Rng& rng);
HeadMask generate_neighbor(const HeadMask& s, const WeightBounds& bounds, std::uint64_t seed);

} // namespace headprune
