#pragma once

#include <vector>

#include "natkit/at_nat.h"
#include "natkit/core.h"
#include "natkit/random.h"

namespace natkit {

/// Sorted, distinct positions of a length-T target.
using MaskSet = std::vector<int>;

/// Mask size uniform in [1, T], positions drawn without replacement.
MaskSet SampleMask(int target_length, Rng& rng);

/// Copies `target` with every masked position replaced by `mask_id`.
TokenSequence ApplyMask(const TokenSequence& target, const MaskSet& mask, TokenId mask_id = kMaskId);

/// p(y_t | partially observed target, x) for every position t.
class ConditionalLatticeScorer {
 public:
  virtual ~ConditionalLatticeScorer() = default;
  /// `observed` has the target length; masked slots hold the MASK id.
  virtual EmissionLattice Score(const TokenSequence& source, const TokenSequence& observed) const = 0;
};

/// -sum_{t in mask} log p(y_t | masked target, x) on an already-scored lattice.
/// Gradient rows at unmasked positions are exactly zero.
LossGrad CmlmLossGrad(const EmissionLattice& lattice, const TokenSequence& target, const MaskSet& mask);

LossGrad CmlmLossGrad(const ConditionalLatticeScorer& scorer, const TokenSequence& source,
                      const TokenSequence& target, const MaskSet& mask, TokenId mask_id = kMaskId);

struct MaskPredictResult {
  TokenSequence tokens;
  std::vector<int> remask_counts;  // one per iteration
};

/// Mask-predict: start fully masked; each iteration predicts the masked
/// slots by argmax, then remasks the floor(T (K - t) / K) least confident
/// tokens (lower position first on ties). Observed tokens stay frozen.
MaskPredictResult MaskPredictDecode(const ConditionalLatticeScorer& scorer, const TokenSequence& source,
                                    int target_length, int iterations, TokenId mask_id = kMaskId);

}  // namespace natkit
