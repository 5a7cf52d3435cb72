#pragma once

#include <cstdint>
#include <vector>

#include "lve/common.hpp"

namespace lve {

// Unbounded natural number, base 10^9 limbs. Just enough arithmetic for
// exact multinomial coefficients; converted to double at the use site.
class BigNat {
 public:
  explicit BigNat(uint64_t v = 0) {
    while (v > 0) {
      limbs_.push_back(static_cast<uint32_t>(v % kBase));
      v /= kBase;
    }
  }

  void mul_small(uint64_t m) {
    if (m == 0) {
      limbs_.clear();
      return;
    }
    uint64_t carry = 0;
    for (auto& limb : limbs_) {
      uint64_t cur = static_cast<uint64_t>(limb) * m + carry;
      limb = static_cast<uint32_t>(cur % kBase);
      carry = cur / kBase;
    }
    while (carry > 0) {
      limbs_.push_back(static_cast<uint32_t>(carry % kBase));
      carry /= kBase;
    }
  }

  // Requires that d divides the value exactly.
  void div_small_exact(uint32_t d) {
    uint64_t rem = 0;
    for (size_t i = limbs_.size(); i-- > 0;) {
      uint64_t cur = rem * kBase + limbs_[i];
      limbs_[i] = static_cast<uint32_t>(cur / d);
      rem = cur % d;
    }
    while (!limbs_.empty() && limbs_.back() == 0) limbs_.pop_back();
  }

  double to_double() const {
    double v = 0.0;
    for (size_t i = limbs_.size(); i-- > 0;) v = v * kBase + limbs_[i];
    return v;
  }

  bool is_zero() const { return limbs_.empty(); }

 private:
  static constexpr uint64_t kBase = 1000000000ULL;
  std::vector<uint32_t> limbs_;  // little-endian
};

// n! / prod(counts[i]!) computed as a product of binomial coefficients,
// each built by exact incremental multiply/divide.
inline BigNat multinomial_exact(const std::vector<uint64_t>& counts) {
  BigNat result(1);
  uint64_t cumulative = 0;
  for (uint64_t c : counts) {
    cumulative += c;
    // result *= C(cumulative, c)
    for (uint64_t j = 1; j <= c; ++j) {
      result.mul_small(cumulative - c + j);
      result.div_small_exact(static_cast<uint32_t>(j));
    }
  }
  return result;
}

inline double multinomial(const std::vector<uint64_t>& counts) {
  return multinomial_exact(counts).to_double();
}

}  // namespace lve
