#include "natkit/cmlm.h"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace natkit {

namespace {

void CheckMask(const MaskSet& mask, std::size_t target_length) {
  if (mask.empty()) throw std::invalid_argument("CMLM: empty mask");
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] < 0 || static_cast<std::size_t>(mask[i]) >= target_length) {
      std::ostringstream msg;
      msg << "CMLM: mask position " << mask[i] << " outside [0, " << target_length << ")";
      throw std::invalid_argument(msg.str());
    }
    if (i && mask[i] <= mask[i - 1]) throw std::invalid_argument("CMLM: mask positions must be sorted and distinct");
  }
}

}  // namespace

MaskSet SampleMask(int target_length, Rng& rng) {
  if (target_length < 1) throw std::invalid_argument("SampleMask: target_length must be >= 1");
  const auto count = static_cast<int>(rng.UniformRange(1, target_length));
  // Partial Fisher-Yates over the positions.
  std::vector<int> pos(static_cast<std::size_t>(target_length));
  std::iota(pos.begin(), pos.end(), 0);
  for (int i = 0; i < count; ++i) {
    auto j = static_cast<std::size_t>(rng.UniformRange(i, target_length - 1));
    std::swap(pos[static_cast<std::size_t>(i)], pos[j]);
  }
  MaskSet mask(pos.begin(), pos.begin() + count);
  std::sort(mask.begin(), mask.end());
  return mask;
}

TokenSequence ApplyMask(const TokenSequence& target, const MaskSet& mask, TokenId mask_id) {
  TokenSequence out = target;
  for (int p : mask) out.at(static_cast<std::size_t>(p)) = mask_id;
  return out;
}

LossGrad CmlmLossGrad(const EmissionLattice& lattice, const TokenSequence& target, const MaskSet& mask) {
  if (static_cast<std::size_t>(lattice.positions()) != target.size()) {
    throw std::invalid_argument("CMLM: lattice length differs from target length");
  }
  CheckMask(mask, target.size());
  CheckIdsInRange(target, static_cast<std::size_t>(lattice.width()), "CMLM target");
  LossGrad out;
  out.grad = Matrix::Zero(lattice.positions(), lattice.width());
  for (int p : mask) {
    const TokenId gold = target[static_cast<std::size_t>(p)];
    out.loss -= lattice.at(p, gold);
    out.grad.row(p) = lattice.log_probs().row(p).array().exp();
    out.grad(p, gold) -= 1.0;
  }
  return out;
}

LossGrad CmlmLossGrad(const ConditionalLatticeScorer& scorer, const TokenSequence& source,
                      const TokenSequence& target, const MaskSet& mask, TokenId mask_id) {
  CheckMask(mask, target.size());
  return CmlmLossGrad(scorer.Score(source, ApplyMask(target, mask, mask_id)), target, mask);
}

MaskPredictResult MaskPredictDecode(const ConditionalLatticeScorer& scorer, const TokenSequence& source,
                                    int target_length, int iterations, TokenId mask_id) {
  if (iterations < 1) throw std::invalid_argument("mask-predict: iterations must be >= 1");
  if (target_length < 1) throw std::invalid_argument("mask-predict: target_length must be >= 1");
  const auto T = static_cast<std::size_t>(target_length);
  MaskPredictResult out;
  out.tokens.assign(T, mask_id);
  std::vector<double> confidence(T, kNegInf);
  std::vector<bool> masked(T, true);
  for (int t = 1; t <= iterations; ++t) {
    EmissionLattice lattice = scorer.Score(source, out.tokens);
    if (static_cast<std::size_t>(lattice.positions()) != T) {
      throw std::runtime_error("mask-predict: scorer returned a lattice of the wrong length");
    }
    for (std::size_t p = 0; p < T; ++p) {
      if (!masked[p]) continue;
      const auto row = static_cast<Eigen::Index>(p);
      const auto best = ArgMax(RowSpan(lattice.log_probs(), row));
      out.tokens[p] = static_cast<TokenId>(best);
      confidence[p] = lattice.at(row, static_cast<TokenId>(best));
      masked[p] = false;
    }
    const auto remask = static_cast<std::size_t>(target_length * (iterations - t) / iterations);
    out.remask_counts.push_back(static_cast<int>(remask));
    if (remask == 0) continue;
    std::vector<std::size_t> order(T);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return confidence[a] < confidence[b]; });
    for (std::size_t i = 0; i < remask; ++i) {
      out.tokens[order[i]] = mask_id;
      masked[order[i]] = true;
    }
  }
  return out;
}

}  // namespace natkit
