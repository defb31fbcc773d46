#pragma once

#include <span>
#include <vector>

#include "natkit/core.h"

namespace natkit {

/// Merges consecutive repeats, then drops blanks.
TokenSequence Collapse(std::span<const TokenId> alignment, TokenId blank = kBlankId);

/// Shortest alignment able to produce `target`: one slot per token plus a
/// separating blank between equal neighbours.
int MinAlignmentLength(const TokenSequence& target);

/// Brute-force preimage of Collapse: every length-`positions` alignment
/// over `width` symbols that collapses to `target`. Intended as a test
/// oracle; rejects positions > 8 or width^positions > 1e7.
std::vector<TokenSequence> EnumerateAlignments(const TokenSequence& target, int positions, int width,
                                               TokenId blank = kBlankId);

struct CtcResult {
  double log_prob = 0.0;
  Matrix grad;  // d log_prob / d logits
};

/// log sum over alignments a collapsing to `target` of prod_i p(a_i),
/// with its gradient by forward-backward. Throws InfeasibleLengthError
/// when the lattice is too short for the target.
CtcResult CtcLogProbGrad(const EmissionLattice& lattice, const TokenSequence& target, TokenId blank = kBlankId);

enum class CtcStrategy { kGreedy, kPrefixBeam };

struct CtcDecodeResult {
  TokenSequence tokens;
  double log_prob = 0.0;  // best-path score (greedy) or prefix mass (beam)
};

/// Greedy collapses the per-position argmax. Prefix beam keeps the
/// `beam_size` prefixes with the highest total (blank + non-blank ending)
/// probability and returns the best one; equal masses are broken by the
/// lexicographically smaller prefix.
CtcDecodeResult CtcDecode(const EmissionLattice& lattice, CtcStrategy strategy, int beam_size = 5,
                          TokenId blank = kBlankId);

}  // namespace natkit
