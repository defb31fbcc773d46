#include "natkit/ctc.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace natkit {

TokenSequence Collapse(std::span<const TokenId> alignment, TokenId blank) {
  TokenSequence out;
  TokenId prev = -1;
  for (TokenId a : alignment) {
    if (a != prev && a != blank) out.push_back(a);
    prev = a;
  }
  return out;
}

int MinAlignmentLength(const TokenSequence& target) {
  int length = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++length;
  }
  return length;
}

std::vector<TokenSequence> EnumerateAlignments(const TokenSequence& target, int positions, int width,
                                               TokenId blank) {
  if (positions < 1 || width < 1) throw std::invalid_argument("EnumerateAlignments: empty space");
  double space = std::pow(static_cast<double>(width), positions);
  if (positions > 8 || space > 1e7) {
    std::ostringstream msg;
    msg << "EnumerateAlignments: " << width << "^" << positions << " alignments exceeds the oracle guard";
    throw std::invalid_argument(msg.str());
  }
  std::vector<TokenSequence> out;
  TokenSequence a(static_cast<std::size_t>(positions), 0);
  const auto total = static_cast<long long>(space);
  for (long long code = 0; code < total; ++code) {
    long long c = code;
    for (int i = positions - 1; i >= 0; --i) {
      a[static_cast<std::size_t>(i)] = static_cast<TokenId>(c % width);
      c /= width;
    }
    if (Collapse(a, blank) == target) out.push_back(a);
  }
  return out;
}

CtcResult CtcLogProbGrad(const EmissionLattice& lattice, const TokenSequence& target, TokenId blank) {
  const Eigen::Index T = lattice.positions();
  const Eigen::Index width = lattice.width();
  if (blank < 0 || blank >= width) throw std::invalid_argument("CTC: blank id outside lattice width");
  CheckIdsInRange(target, static_cast<std::size_t>(width), "CTC target");
  if (std::find(target.begin(), target.end(), blank) != target.end()) {
    throw std::invalid_argument("CTC: target contains the blank symbol");
  }
  const int needed = MinAlignmentLength(target);
  if (T < needed) {
    std::ostringstream msg;
    msg << "CTC: target of length " << target.size() << " needs at least " << needed << " positions, lattice has "
        << T;
    throw InfeasibleLengthError(msg.str());
  }

  // Blank-interleaved label sequence: _ y1 _ y2 _ ... yL _
  const Eigen::Index S = 2 * static_cast<Eigen::Index>(target.size()) + 1;
  std::vector<TokenId> labels(static_cast<std::size_t>(S), blank);
  for (std::size_t i = 0; i < target.size(); ++i) labels[2 * i + 1] = target[i];
  auto can_skip = [&](Eigen::Index s) {
    return s >= 2 && labels[s] != blank && labels[s] != labels[s - 2];
  };

  const Matrix& lp = lattice.log_probs();
  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, blank);
  if (S > 1) alpha(0, 1) = lp(0, labels[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = LogAdd(acc, alpha(t - 1, s - 2));
      if (acc != kNegInf) alpha(t, s) = acc + lp(t, labels[s]);
    }
  }

  Matrix beta = Matrix::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = lp(T - 1, labels[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = lp(T - 1, labels[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double acc = beta(t + 1, s);
      if (s + 1 < S) acc = LogAdd(acc, beta(t + 1, s + 1));
      if (s + 2 < S && can_skip(s + 2)) acc = LogAdd(acc, beta(t + 1, s + 2));
      if (acc != kNegInf) beta(t, s) = acc + lp(t, labels[s]);
    }
  }

  CtcResult out;
  out.log_prob = S > 1 ? LogAdd(alpha(T - 1, S - 1), alpha(T - 1, S - 2)) : alpha(T - 1, 0);

  // Posterior occupancy per (position, symbol); the logit gradient of
  // log p is occupancy minus the softmax row (occupancy rows sum to 1).
  Matrix occupancy = Matrix::Zero(T, width);
  if (out.log_prob != kNegInf) {
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index s = 0; s < S; ++s) {
        double v = alpha(t, s) + beta(t, s);
        if (v == kNegInf) continue;
        occupancy(t, labels[s]) += std::exp(v - lp(t, labels[s]) - out.log_prob);
      }
    }
  }
  out.grad = occupancy - lattice.probs();
  return out;
}

namespace {

struct PrefixScore {
  double blank = kNegInf;      // mass of alignments ending in blank
  double non_blank = kNegInf;  // mass ending in the prefix's last symbol
  double total() const { return LogAdd(blank, non_blank); }
};

using PrefixMap = std::map<TokenSequence, PrefixScore>;

std::vector<std::pair<TokenSequence, PrefixScore>> TopPrefixes(const PrefixMap& beams, std::size_t k) {
  std::vector<std::pair<TokenSequence, PrefixScore>> ranked(beams.begin(), beams.end());
  // std::map iterates in lexicographic order, so a stable sort by mass keeps
  // the smaller prefix first among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace

CtcDecodeResult CtcDecode(const EmissionLattice& lattice, CtcStrategy strategy, int beam_size, TokenId blank) {
  const Eigen::Index T = lattice.positions();
  if (blank < 0 || blank >= lattice.width()) throw std::invalid_argument("CTC decode: blank id outside lattice");
  const Matrix& lp = lattice.log_probs();
  if (strategy == CtcStrategy::kGreedy) {
    TokenSequence path;
    double score = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      auto best = ArgMax(RowSpan(lp, t));
      path.push_back(static_cast<TokenId>(best));
      score += lp(t, best);
    }
    return {Collapse(path, blank), score};
  }
  if (beam_size < 1) throw std::invalid_argument("CTC decode: beam_size must be >= 1");

  PrefixMap beams;
  beams[TokenSequence{}] = PrefixScore{0.0, kNegInf};
  for (Eigen::Index t = 0; t < T; ++t) {
    PrefixMap next;
    for (const auto& [prefix, score] : TopPrefixes(beams, static_cast<std::size_t>(beam_size))) {
      const double both = score.total();
      for (Eigen::Index c = 0; c < lattice.width(); ++c) {
        const double p = lp(t, c);
        if (p == kNegInf) continue;
        const auto sym = static_cast<TokenId>(c);
        if (sym == blank) {
          auto& slot = next[prefix];
          slot.blank = LogAdd(slot.blank, both + p);
          continue;
        }
        TokenSequence extended = prefix;
        extended.push_back(sym);
        auto& ext = next[extended];
        if (!prefix.empty() && prefix.back() == sym) {
          // Repeat without a blank stays on the same prefix; after a blank it extends.
          auto& same = next[prefix];
          same.non_blank = LogAdd(same.non_blank, score.non_blank + p);
          ext.non_blank = LogAdd(ext.non_blank, score.blank + p);
        } else {
          ext.non_blank = LogAdd(ext.non_blank, both + p);
        }
      }
    }
    beams = std::move(next);
  }
  auto best = TopPrefixes(beams, 1);
  return {best.front().first, best.front().second.total()};
}

}  // namespace natkit
