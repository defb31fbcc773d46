#include "natkit/at_nat.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace natkit {

namespace {

Vector OneHotResidual(const Vector& log_probs, TokenId gold) {
  Vector g = log_probs.array().exp();
  g(gold) -= 1.0;
  return g;
}

struct BeamHyp {
  TokenSequence tokens;  // includes EOS when finished through EOS
  double score = 0.0;
};

// Higher score first, then lexicographically smaller sequence.
bool BetterHyp(const BeamHyp& a, const BeamHyp& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

LossGrad AtXeLossGrad(const ArScorer& scorer, const TokenSequence& source, const TokenSequence& target) {
  if (target.empty()) throw std::invalid_argument("AT loss: empty target");
  CheckIdsInRange(target, scorer.vocab_size(), "AT loss target");
  LossGrad out;
  out.grad = Matrix::Zero(static_cast<Eigen::Index>(target.size()), static_cast<Eigen::Index>(scorer.vocab_size()));
  std::span<const TokenId> y(target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    Vector lp = scorer.NextLogProbs(source, y.first(i));
    out.loss -= lp(target[i]);
    out.grad.row(static_cast<Eigen::Index>(i)) = OneHotResidual(lp, target[i]).transpose();
  }
  return out;
}

AtDecodeResult AtDecode(const ArScorer& scorer, const TokenSequence& source, const AtDecodeOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("AT decode: max_len must be >= 1");
  if (options.strategy == AtStrategy::kBeam && options.beam_size < 1) {
    throw std::invalid_argument("AT decode: beam_size must be >= 1");
  }
  AtDecodeResult result;
  if (options.strategy == AtStrategy::kGreedy) {
    TokenSequence prefix;
    for (int step = 0; step < options.max_len; ++step) {
      Vector lp = scorer.NextLogProbs(source, prefix);
      auto best = static_cast<TokenId>(ArgMax(AsSpan(lp)));
      result.score += lp(best);
      if (best == options.eos) return {prefix, result.score, false};
      prefix.push_back(best);
    }
    return {prefix, result.score, true};
  }

  const auto beam = static_cast<std::size_t>(options.beam_size);
  std::vector<BeamHyp> live{BeamHyp{}};
  std::vector<BeamHyp> finished;  // truncated hyps carry no EOS
  std::vector<bool> finished_truncated;
  for (int step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<BeamHyp> candidates;
    for (const auto& hyp : live) {
      Vector lp = scorer.NextLogProbs(source, hyp.tokens);
      for (Eigen::Index w = 0; w < lp.size(); ++w) {
        if (lp(w) == kNegInf) continue;
        BeamHyp next = hyp;
        next.tokens.push_back(static_cast<TokenId>(w));
        next.score += lp(w);
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), BetterHyp);
    if (candidates.size() > beam) candidates.resize(beam);
    live.clear();
    for (auto& c : candidates) {
      if (c.tokens.back() == options.eos) {
        finished.push_back(std::move(c));
        finished_truncated.push_back(false);
      } else if (step + 1 == options.max_len) {
        finished.push_back(std::move(c));
        finished_truncated.push_back(true);
      } else {
        live.push_back(std::move(c));
      }
    }
    // Scores only decrease with length, so no live hypothesis can overtake
    // a finished one that already beats the best live score.
    if (!finished.empty() && !live.empty()) {
      double best_finished = kNegInf;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      if (best_finished > live.front().score) break;
    }
  }
  if (finished.empty()) throw std::runtime_error("AT beam search produced no hypothesis");
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (BetterHyp(finished[i], finished[best])) best = i;
  }
  result.score = finished[best].score;
  result.truncated = finished_truncated[best];
  result.tokens = finished[best].tokens;
  if (!result.truncated) result.tokens.pop_back();
  return result;
}

LossGrad NatLossGrad(const EmissionLattice& lattice, const TokenSequence& target) {
  if (static_cast<std::size_t>(lattice.positions()) != target.size()) {
    std::ostringstream msg;
    msg << "NAT loss: lattice has " << lattice.positions() << " positions but target has " << target.size()
        << " tokens";
    throw std::invalid_argument(msg.str());
  }
  CheckIdsInRange(target, static_cast<std::size_t>(lattice.width()), "NAT loss target");
  LossGrad out;
  out.grad = lattice.probs();
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    out.loss -= lattice.at(r, target[i]);
    out.grad(r, target[i]) -= 1.0;
  }
  return out;
}

TokenSequence NatArgmaxDecode(const EmissionLattice& lattice) {
  TokenSequence out;
  out.reserve(static_cast<std::size_t>(lattice.positions()));
  for (Eigen::Index r = 0; r < lattice.positions(); ++r) {
    out.push_back(static_cast<TokenId>(ArgMax(RowSpan(lattice.log_probs(), r))));
  }
  return out;
}

LengthDistribution LengthDistribution::FromLogits(const Vector& logits) {
  if (logits.size() < 1 || logits.size() % 2 == 0) {
    throw std::invalid_argument("length distribution needs an odd number (2*max_offset+1) of entries");
  }
  return LengthDistribution(LogSoftmax(logits));
}

LengthDistribution LengthDistribution::FromLogProbs(Vector log_probs, double tolerance) {
  if (log_probs.size() < 1 || log_probs.size() % 2 == 0) {
    throw std::invalid_argument("length distribution needs an odd number (2*max_offset+1) of entries");
  }
  double z = LogSumExp(AsSpan(log_probs));
  if (!(std::abs(z) <= tolerance)) throw std::invalid_argument("length distribution is not normalized");
  return LengthDistribution(std::move(log_probs));
}

double LengthDistribution::LogProb(int offset) const {
  if (std::abs(offset) > max_offset()) return kNegInf;
  return log_probs_(offset + max_offset());
}

int LengthDistribution::ArgmaxOffset() const {
  return static_cast<int>(ArgMax(AsSpan(log_probs_))) - max_offset();
}

int LengthDistribution::PredictLength(int source_length) const {
  return std::max(1, source_length + ArgmaxOffset());
}

LengthLossGrad LengthLoss(const LengthDistribution& dist, int true_length, int source_length) {
  int offset = true_length - source_length;
  if (std::abs(offset) > dist.max_offset()) {
    std::ostringstream msg;
    msg << "length offset " << offset << " (T=" << true_length << ", S=" << source_length
        << ") outside supported range [" << -dist.max_offset() << ", " << dist.max_offset() << "]";
    throw std::out_of_range(msg.str());
  }
  LengthLossGrad out;
  out.loss = -dist.LogProb(offset);
  out.grad = OneHotResidual(dist.log_probs(), offset + dist.max_offset());
  return out;
}

}  // namespace natkit
