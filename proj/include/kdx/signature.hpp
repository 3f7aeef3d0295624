// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace kdx {

enum class SignatureKind { forest, net };

/// Discrete identity of the polytope a point falls in: one leaf id per tree,
/// or one activation bit per hidden node (bit = 1 iff pre-activation >= 0).
struct MembershipSignature {
  SignatureKind kind = SignatureKind::forest;
  std::vector<std::uint32_t> leaves;
  std::vector<std::vector<std::uint8_t>> activations;

  bool operator==(const MembershipSignature&) const = default;
};

struct SignatureHash {
  std::size_t operator()(const MembershipSignature& sig) const noexcept {
    std::uint64_t h = sig.kind == SignatureKind::forest ? 0x51ED27A1ULL : 0xA3C59AC3ULL;
    auto mix = [&h](std::uint64_t v) {
      h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    };
    for (auto leaf : sig.leaves) mix(leaf);
    for (const auto& layer : sig.activations) {
      mix(layer.size());
      for (auto bit : layer) mix(bit);
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace kdx
