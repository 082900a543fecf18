#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace hsgeom {

using Rng = std::mt19937_64;

/// Stable 64-bit hash of a label, used to turn names into stream tags.
std::uint64_t label_tag(std::string_view label);

/// Derives an independent stream seed from a base seed and a list of tags.
/// The mapping goes through std::seed_seq, whose algorithm is fixed by the
/// standard, so derived streams do not depend on call order or thread count.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

}  // namespace hsgeom
