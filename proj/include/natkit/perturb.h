#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "natkit/core.h"

namespace natkit {

enum class PerturbMode { kDelete, kReplaceUnk, kSwap };

struct PerturbSpec {
  PerturbMode mode = PerturbMode::kDelete;
  double p = 0.1;
  /// Swap partner distance bound; required (>= 1) in swap mode.
  int window = 0;
  std::uint64_t seed = 0;
  /// Swap partners drawn from both sides instead of only to the right.
  bool symmetric = false;

  /// Throws std::invalid_argument when p is outside [0, 1] or a swap spec has no window.
  void Check() const;
  std::string ToJson() const;
};

/// Noise for one sentence. The random stream is derived from
/// (spec.seed, stream_id) so a corpus perturbs identically in any order.
///   delete:      drop each token with probability p
///   replace_unk: replace each token by `unk` with probability p
///   swap:        left to right, with probability p exchange position i
///                with a uniform partner in (i, i + window], clamped to
///                the sequence end ([i - window, i + window] \ {i} when
///                symmetric)
TokenSequence Perturb(const TokenSequence& sequence, const PerturbSpec& spec, std::string_view stream_id = {},
                      TokenId unk = kUnkId);

PerturbMode ParsePerturbMode(std::string_view name);
const char* ToString(PerturbMode mode);

}  // namespace natkit
