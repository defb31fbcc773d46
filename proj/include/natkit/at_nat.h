#pragma once

#include <span>

#include "natkit/core.h"

namespace natkit {

/// Loss value together with the gradient of the loss w.r.t. the logits
/// that produced the scored distributions (one row per scored step).
struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

/// Next-token distribution given source and target prefix.
class ArScorer {
 public:
  virtual ~ArScorer() = default;
  /// Log-distribution over the vocabulary for the token following `prefix`.
  virtual Vector NextLogProbs(const TokenSequence& source, std::span<const TokenId> prefix) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

/// Teacher-forced cross-entropy: -sum_i log p(y_i | y_<i, x). Row i of the
/// gradient is softmax - onehot(y_i) for step i.
LossGrad AtXeLossGrad(const ArScorer& scorer, const TokenSequence& source, const TokenSequence& target);

enum class AtStrategy { kGreedy, kBeam };

struct AtDecodeOptions {
  AtStrategy strategy = AtStrategy::kBeam;
  int beam_size = 5;
  int max_len = 64;
  TokenId eos = kEosId;
};

struct AtDecodeResult {
  TokenSequence tokens;  // EOS stripped
  double score = 0.0;    // accumulated log-probability, EOS step included
  bool truncated = false;  // max_len reached without EOS
};

/// Greedy: argmax chain (lowest id on ties) until EOS or max_len.
/// Beam: length-unnormalized; among equal scores the lexicographically
/// smallest token-id sequence wins.
AtDecodeResult AtDecode(const ArScorer& scorer, const TokenSequence& source, const AtDecodeOptions& options);

/// -sum_i log p(y_i | x) with one lattice row per target position.
LossGrad NatLossGrad(const EmissionLattice& lattice, const TokenSequence& target);

/// Per-position argmax, ties to the lowest id.
TokenSequence NatArgmaxDecode(const EmissionLattice& lattice);

/// Log-probabilities over target-length offsets T - S in [-max_offset, max_offset].
class LengthDistribution {
 public:
  static LengthDistribution FromLogits(const Vector& logits);
  static LengthDistribution FromLogProbs(Vector log_probs, double tolerance = 1e-9);

  int max_offset() const { return static_cast<int>(log_probs_.size() / 2); }
  const Vector& log_probs() const { return log_probs_; }
  double LogProb(int offset) const;
  /// Most probable offset (lowest offset on ties).
  int ArgmaxOffset() const;
  /// Predicted target length for a source of length `source_length`, at least 1.
  int PredictLength(int source_length) const;

 private:
  explicit LengthDistribution(Vector log_probs) : log_probs_(std::move(log_probs)) {}
  Vector log_probs_;
};

struct LengthLossGrad {
  double loss = 0.0;
  Vector grad;  // w.r.t. the offset logits
};

/// -log p(T - S). Throws std::out_of_range when |T - S| > max_offset.
LengthLossGrad LengthLoss(const LengthDistribution& dist, int true_length, int source_length);

}  // namespace natkit
