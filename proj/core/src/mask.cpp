#include "headprune/mask.hpp"

#include "headprune/errors.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace headprune {

namespace {

// Index of the k-th set bit of a single word.
std::size_t select_in_word(std::uint64_t word, std::size_t k) noexcept {
  for (; k > 0; --k) word &= word - 1;
  return static_cast<std::size_t>(std::countr_zero(word));
}

} // namespace

HeadMask HeadMask::ones(std::size_t n) {
  HeadMask m(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i);
  return m;
}

HeadMask HeadMask::from_indices(std::size_t n, std::span<const std::size_t> indices) {
  HeadMask m(n);
  for (auto i : indices) {
    if (i >= n) throw DimensionError("head index " + std::to_string(i) + " out of range for " + std::to_string(n) + " heads");
    m.set(i);
  }
  return m;
}

HeadMask HeadMask::parse(std::string_view text) {
  std::vector<bool> bits;
  bits.reserve(text.size());
  for (char c : text) {
    if (c == '0' || c == '1') {
      bits.push_back(c == '1');
    } else if (c == ',' || c == '[' || c == ']' || c == '"' || std::isspace(static_cast<unsigned char>(c))) {
      continue;
    } else {
      throw ValidationError(std::string("invalid character '") + c + "' in head mask");
    }
  }
  if (bits.empty()) throw ValidationError("empty head mask");
  HeadMask m(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) m.set(i);
  return m;
}

std::size_t HeadMask::nth_set(std::size_t k) const noexcept {
  for (std::size_t w = 0; w < words_.size(); ++w) {
    const auto c = static_cast<std::size_t>(std::popcount(words_[w]));
    if (k < c) return w * 64 + select_in_word(words_[w], k);
    k -= c;
  }
  return n_;
}

std::size_t HeadMask::nth_clear(std::size_t k) const noexcept {
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t inv = ~words_[w];
    const std::size_t valid = std::min<std::size_t>(64, n_ - w * 64);
    if (valid < 64) inv &= (std::uint64_t{1} << valid) - 1;
    const auto c = static_cast<std::size_t>(std::popcount(inv));
    if (k < c) return w * 64 + select_in_word(inv, k);
    k -= c;
  }
  return n_;
}

std::vector<std::size_t> HeadMask::set_indices() const {
  std::vector<std::size_t> out;
  for_each_set([&](std::size_t i) { out.push_back(i); });
  return out;
}

std::string HeadMask::to_string() const {
  std::string s(n_, '0');
  for_each_set([&](std::size_t i) { s[i] = '1'; });
  return s;
}

void WeightBounds::validate(std::size_t n) const {
  if (lower > upper || upper > n)
    throw ConfigError("weight bounds [" + std::to_string(lower) + ", " + std::to_string(upper) +
                      "] infeasible for " + std::to_string(n) + " heads");
}

std::size_t hamming_distance(const HeadMask& a, const HeadMask& b) {
  if (a.size() != b.size())
    throw DimensionError("hamming_distance: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  std::size_t d = 0;
  const auto wa = a.words();
  const auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return d;
}

HeadMask random_state(std::size_t n, const WeightBounds& bounds, Rng& rng) {
  bounds.validate(n);
  std::uniform_int_distribution<std::size_t> pick_weight(bounds.lower, bounds.upper);
  const std::size_t k = pick_weight(rng);

  // Partial Fisher-Yates over head indices.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  HeadMask m(n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    m.set(idx[i]);
  }
  return m;
}

HeadMask random_state(std::size_t n, const WeightBounds& bounds, std::uint64_t seed) {
  Rng rng(seed);
  return random_state(n, bounds, rng);
}

std::size_t legal_flip_count(const HeadMask& s, const WeightBounds& bounds) noexcept {
  const std::size_t w = s.count();
  std::size_t c = 0;
  if (w < bounds.upper) c += s.size() - w;
  if (w > bounds.lower) c += w;
  return c;
}

Move sample_move(const HeadMask& s, const WeightBounds& bounds, Rng& rng) {
  const std::size_t n = s.size();
  const std::size_t w = s.count();
  if (!bounds.admits(w))
    throw ConfigError("state weight " + std::to_string(w) + " outside bounds [" + std::to_string(bounds.lower) + ", " +
                      std::to_string(bounds.upper) + "]");

  if (bounds.equal()) {
    if (w == 0 || w == n) throw NeighborhoodError("constant-weight neighborhood empty at weight " + std::to_string(w));
    std::uniform_int_distribution<std::size_t> pick_set(0, w - 1);
    std::uniform_int_distribution<std::size_t> pick_clear(0, n - w - 1);
    const std::size_t a = s.nth_set(pick_set(rng));
    const std::size_t b = s.nth_clear(pick_clear(rng));
    return Move{a, b, true};
  }

  const std::size_t can_set = w < bounds.upper ? n - w : 0;
  const std::size_t can_clear = w > bounds.lower ? w : 0;
  const std::size_t total = can_set + can_clear;
  if (total == 0) throw NeighborhoodError("bounded neighborhood empty");
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const std::size_t r = pick(rng);
  const std::size_t pos = r < can_set ? s.nth_clear(r) : s.nth_set(r - can_set);
  return Move{pos, pos, false};
}

HeadMask generate_neighbor(const HeadMask& s, const WeightBounds& bounds, Rng& rng) {
  HeadMask next = s;
  apply_move(next, sample_move(s, bounds, rng));
  return next;
}

HeadMask generate_neighbor(const HeadMask& s, const WeightBounds& bounds, std::uint64_t seed) {
  Rng rng(seed);
  return generate_neighbor(s, bounds, rng);
}

} // namespace headprune
