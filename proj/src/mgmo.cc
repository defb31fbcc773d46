#include "natkit/mgmo.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace natkit {

namespace {

std::map<TokenSequence, int> NgramCounts(const TokenSequence& seq, int n) {
  std::map<TokenSequence, int> counts;
  if (n < 1 || static_cast<std::size_t>(n) > seq.size()) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i) {
    ++counts[TokenSequence(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return counts;
}

}  // namespace

SampleSet SampleHypotheses(const EmissionLattice& lattice, int count, Rng& rng, double alpha) {
  if (count < 1) throw std::invalid_argument("SampleHypotheses: count must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("SampleHypotheses: alpha must be > 0");
  SampleSet out;
  out.alpha = alpha;
  const Matrix probs = lattice.probs();
  for (int k = 0; k < count; ++k) {
    TokenSequence hyp;
    double lp = 0.0;
    for (Eigen::Index m = 0; m < lattice.positions(); ++m) {
      // Inverse-CDF draw; the last column absorbs rounding slack.
      double u = rng.Uniform();
      Eigen::Index pick = lattice.width() - 1;
      double cumulative = 0.0;
      for (Eigen::Index v = 0; v < lattice.width(); ++v) {
        cumulative += probs(m, v);
        if (u < cumulative) {
          pick = v;
          break;
        }
      }
      while (probs(m, pick) == 0.0 && pick > 0) --pick;
      hyp.push_back(static_cast<TokenId>(pick));
      lp += lattice.at(m, static_cast<TokenId>(pick));
    }
    out.hypotheses.push_back(std::move(hyp));
    out.model_logprobs.push_back(lp);
  }
  return out;
}

SampleSet Deduplicate(const SampleSet& samples) {
  SampleSet out;
  out.alpha = samples.alpha;
  std::set<TokenSequence> seen;
  for (std::size_t k = 0; k < samples.hypotheses.size(); ++k) {
    if (seen.insert(samples.hypotheses[k]).second) {
      out.hypotheses.push_back(samples.hypotheses[k]);
      out.model_logprobs.push_back(samples.model_logprobs[k]);
    }
  }
  return out;
}

std::vector<double> NormalizeQ(const SampleSet& samples) {
  if (samples.model_logprobs.empty()) throw std::invalid_argument("NormalizeQ: empty sample set");
  std::vector<double> scaled(samples.model_logprobs.size());
  for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = samples.alpha * samples.model_logprobs[k];
  const double z = LogSumExp(scaled);
  for (double& s : scaled) s = std::exp(s - z);
  return scaled;
}

double NgramReward(const TokenSequence& hypothesis, const TokenSequence& reference, const RewardSpec& spec) {
  if (reference.empty()) throw std::invalid_argument("NgramReward: empty reference");
  if (spec.orders.empty()) throw std::invalid_argument("NgramReward: no n-gram orders");
  double total = 0.0;
  for (int n : spec.orders) {
    if (n < 1) throw std::invalid_argument("NgramReward: n-gram orders must be >= 1");
    auto hyp = NgramCounts(hypothesis, n);
    auto ref = NgramCounts(reference, n);
    int hyp_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, c] : hyp) {
      hyp_total += c;
      auto it = ref.find(gram);
      if (it != ref.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [gram, c] : ref) ref_total += c;
    if (hyp_total + ref_total > 0) total += 2.0 * overlap / (hyp_total + ref_total);
  }
  return total / static_cast<double>(spec.orders.size());
}

MgmoLossGrad MgmoLoss(const SampleSet& samples, const std::vector<double>& rewards) {
  if (rewards.size() != samples.model_logprobs.size()) {
    throw std::invalid_argument("MgMO: " + std::to_string(rewards.size()) + " rewards for " +
                                std::to_string(samples.model_logprobs.size()) + " hypotheses");
  }
  const std::vector<double> q = NormalizeQ(samples);
  // Rewards are centred on the first one so equal rewards give an exactly
  // zero gradient.
  const double base = rewards.front();
  double expected = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) expected += q[k] * (rewards[k] - base);
  MgmoLossGrad out;
  out.loss = -(base + expected);
  out.grad.resize(static_cast<Eigen::Index>(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) {
    out.grad(static_cast<Eigen::Index>(k)) = -samples.alpha * q[k] * ((rewards[k] - base) - expected);
  }
  return out;
}

Matrix MgmoLatticeGrad(const EmissionLattice& lattice, const SampleSet& samples, const Vector& grad_logprobs) {
  Matrix grad_lp = Matrix::Zero(lattice.positions(), lattice.width());
  for (std::size_t k = 0; k < samples.hypotheses.size(); ++k) {
    const auto& hyp = samples.hypotheses[k];
    if (static_cast<Eigen::Index>(hyp.size()) != lattice.positions()) {
      throw std::invalid_argument("MgMO: hypothesis length differs from lattice length");
    }
    for (std::size_t m = 0; m < hyp.size(); ++m) {
      grad_lp(static_cast<Eigen::Index>(m), hyp[m]) += grad_logprobs(static_cast<Eigen::Index>(k));
    }
  }
  return LogSoftmaxBackward(lattice.log_probs(), grad_lp);
}

}  // namespace natkit
