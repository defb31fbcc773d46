#pragma once

#include <optional>
#include <string>
#include <vector>

#include "natkit/core.h"

namespace natkit {

/// Forward-only transition log-probabilities between M vertices. Only
/// cells j > i carry mass; every row but the last is normalized; the last
/// row (the EOS vertex) is terminal.
class TransitionMatrix {
 public:
  /// Row log-softmax of `logits` restricted to the strict upper triangle.
  static TransitionMatrix FromLogits(const Matrix& logits);
  /// Validates support and row normalization.
  static TransitionMatrix FromLogProbs(Matrix log_e, double tolerance = 1e-9);

  Eigen::Index size() const { return log_e_.rows(); }
  double at(Eigen::Index from, Eigen::Index to) const { return log_e_(from, to); }
  const Matrix& log_probs() const { return log_e_; }

  /// {"m": M, "log_e": [row-major], with -inf as null}
  std::string ToJson() const;
  static TransitionMatrix FromJson(const std::string& text);

 private:
  explicit TransitionMatrix(Matrix log_e) : log_e_(std::move(log_e)) {}
  Matrix log_e_;
};

/// Gradient w.r.t. transition logits from a gradient w.r.t. log_e.
Matrix TransitionLogitGrad(const TransitionMatrix& transition, const Matrix& grad_log_e);

struct DatParams {
  Matrix w_q;  // d x d
  Matrix w_k;  // d x d
  std::optional<Matrix> w_q_star;
  std::optional<Matrix> w_k_star;

  Eigen::Index hidden() const { return w_q.rows(); }
  bool has_star() const { return w_q_star.has_value(); }
  /// Throws std::invalid_argument on inconsistent shapes.
  void Check() const;
};

enum class TransitionVariant { kPlain, kStar };

/// Intermediate values kept for the backward pass.
struct TransitionCache {
  TransitionVariant variant = TransitionVariant::kPlain;
  Matrix q, k;            // H W_Q, H W_K
  Matrix q_out, k_out;    // q/k (plain) or ReLU(q) W_Q*, ReLU(k) W_K* (star)
  Matrix logits;          // q_out k_out^T / sqrt(d), before masking
};

struct TransitionGrads {
  Matrix states;
  Matrix w_q, w_k;
  Matrix w_q_star, w_k_star;  // empty for the plain variant
};

/// E = masked row-softmax(Q K^T / sqrt(d)) with Q = H W_Q, K = H W_K. The
/// star variant replaces Q by ReLU(Q) W_Q* and K by ReLU(K) W_K*.
TransitionMatrix BuildTransition(const Matrix& states, const DatParams& params, TransitionVariant variant,
                                 TransitionCache* cache = nullptr);

/// Backpropagates a gradient w.r.t. the transition logits.
TransitionGrads TransitionBackward(const Matrix& states, const DatParams& params, const TransitionCache& cache,
                                   const Matrix& grad_logits);

using Path = std::vector<int>;  // strictly increasing vertex ids, 0 .. M-1

/// All paths of `length` vertices from vertex 0 to vertex M-1. Oracle use;
/// rejects C(M-2, length-2) > 1e6.
std::vector<Path> EnumeratePaths(int vertices, int length);

struct DatResult {
  double log_prob = 0.0;
  Matrix grad_emission;    // d log_prob / d emission logits (M x V)
  Matrix grad_transition;  // d log_prob / d transition logits (M x M)
};

/// Marginal over paths of <bos> target <eos>, the path fixed at vertex 0
/// (BOS) and vertex M-1 (EOS). Throws InfeasibleLengthError when M < |y|+2.
DatResult DatLogProbGrad(const EmissionLattice& emissions, const TransitionMatrix& transition,
                         const TokenSequence& target, TokenId bos = kBosId, TokenId eos = kEosId);

/// Probability of a single path/target pair, for oracles.
double DatPathLogProb(const EmissionLattice& emissions, const TransitionMatrix& transition,
                      const TokenSequence& augmented_target, const Path& path);

enum class DatStrategy { kGreedy, kLookahead, kViterbi, kBeam };

struct DatDecodeOptions {
  DatStrategy strategy = DatStrategy::kLookahead;
  int beam_size = 5;
  /// Maximum number of emitted tokens (interior path vertices).
  int max_len = 1 << 20;
  /// Viterbi only: added once per emitted token.
  double length_penalty = 0.0;
};

struct DatDecodeResult {
  TokenSequence tokens;  // argmax/selected tokens at interior vertices
  Path path;
  double score = 0.0;    // joint score: transitions plus per-vertex token log-probs
};

DatDecodeResult DatDecode(const EmissionLattice& emissions, const TransitionMatrix& transition,
                          const DatDecodeOptions& options);

/// Sum of transition log-probs plus per-vertex max-token log-probs.
double DatJointScore(const EmissionLattice& emissions, const TransitionMatrix& transition, const Path& path);

}  // namespace natkit
