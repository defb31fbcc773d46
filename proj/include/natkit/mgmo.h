#pragma once

#include <vector>

#include "natkit/core.h"
#include "natkit/random.h"

namespace natkit {

struct SampleSet {
  std::vector<TokenSequence> hypotheses;
  std::vector<double> model_logprobs;  // log p(h^k | x)
  double alpha = 1.0;                  // sharpness of q
};

/// K independent draws, one categorical sample per lattice position.
/// Duplicates are kept.
SampleSet SampleHypotheses(const EmissionLattice& lattice, int count, Rng& rng, double alpha = 1.0);

/// Collapses duplicate hypotheses, keeping the first occurrence.
SampleSet Deduplicate(const SampleSet& samples);

/// q_k = p_k^alpha / sum_j p_j^alpha, computed in log space.
std::vector<double> NormalizeQ(const SampleSet& samples);

struct RewardSpec {
  std::vector<int> orders{1, 2, 3, 4};
};

/// Mean over `spec.orders` of the F1 between hypothesis and reference
/// n-gram multisets. An order longer than both sequences scores 0.
double NgramReward(const TokenSequence& hypothesis, const TokenSequence& reference, const RewardSpec& spec = {});

struct MgmoLossGrad {
  double loss = 0.0;
  Vector grad;  // w.r.t. model_logprobs
};

/// loss = -sum_k q_k R_k; d loss / d logp_j = -alpha q_j (R_j - sum_k q_k R_k).
MgmoLossGrad MgmoLoss(const SampleSet& samples, const std::vector<double>& rewards);

/// Chains a gradient w.r.t. hypothesis log-probs into the lattice logits
/// the hypotheses were sampled from.
Matrix MgmoLatticeGrad(const EmissionLattice& lattice, const SampleSet& samples, const Vector& grad_logprobs);

}  // namespace natkit
