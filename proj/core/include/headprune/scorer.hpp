#pragma once

#include "headprune/mask.hpp"

#include <cstddef>

namespace headprune {

/// Anything that maps a head mask to a scalar in scaled units: a trained surrogate,
/// or a synthetic ground-truth objective. Implementations must be safe for concurrent
/// const calls.
class MaskScorer {
public:
  virtual ~MaskScorer() = default;
  virtual std::size_t input_width() const noexcept = 0;
  virtual double score(const HeadMask& s) const = 0;
};

} // namespace headprune
