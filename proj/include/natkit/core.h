#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace natkit {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Reserved ids occupy the first five slots of every Vocabulary.
inline constexpr TokenId kBosId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kBlankId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kNumReserved = 5;

// Raised when a target cannot be produced by the given number of positions.
class InfeasibleLengthError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Vocabulary {
 public:
  /// Builds a vocabulary from surface strings in id order. The first five
  /// entries are taken as BOS, EOS, UNK, BLANK, MASK.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Default reserved surfaces followed by `content`.
  static Vocabulary WithReserved(const std::vector<std::string>& content);

  std::size_t size() const { return tokens_.size(); }
  bool Contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }
  const std::string& Surface(TokenId id) const;
  /// Unknown strings map to UNK.
  TokenId Id(std::string_view surface) const;
  std::optional<TokenId> Find(std::string_view surface) const;

  TokenSequence Encode(const std::vector<std::string>& words) const;
  std::vector<std::string> Decode(std::span<const TokenId> ids) const;

  /// Throws std::invalid_argument when any id is outside [0, size()).
  void CheckIds(std::span<const TokenId> ids, std::string_view what) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Checks ids against a vocabulary width (no Vocabulary object needed).
void CheckIdsInRange(std::span<const TokenId> ids, std::size_t width, std::string_view what);

double LogSumExp(std::span<const double> values);
double LogAdd(double a, double b);

/// Row log-softmax of arbitrary logits.
Matrix LogSoftmaxRows(const Matrix& logits);
Vector LogSoftmax(const Vector& logits);

/// Per-position log-probability rows; each row is normalized.
class EmissionLattice {
 public:
  static EmissionLattice FromLogits(const Matrix& logits);
  /// Throws std::invalid_argument when a row is not normalized within `tolerance`.
  static EmissionLattice FromLogProbs(Matrix log_probs, double tolerance = 1e-9);

  Eigen::Index positions() const { return log_probs_.rows(); }
  Eigen::Index width() const { return log_probs_.cols(); }
  double at(Eigen::Index position, TokenId token) const { return log_probs_(position, token); }
  const Matrix& log_probs() const { return log_probs_; }
  Matrix probs() const { return log_probs_.array().exp().matrix(); }

 private:
  explicit EmissionLattice(Matrix log_probs) : log_probs_(std::move(log_probs)) {}
  Matrix log_probs_;
};

/// Maps a gradient w.r.t. log-probabilities to the gradient w.r.t. the
/// logits that produced them through a row log-softmax.
Matrix LogSoftmaxBackward(const Matrix& log_probs, const Matrix& grad_log_probs);
Vector LogSoftmaxBackward(const Vector& log_probs, const Vector& grad_log_probs);

struct LatticeIssue {
  enum class Kind { kRowNotNormalized, kWidthMismatch, kEmpty };
  Kind kind;
  Eigen::Index row = -1;
  double deviation = 0.0;  // |logsumexp(row)| for kRowNotNormalized
  std::string message;
};

std::vector<LatticeIssue> ValidateLattice(const Matrix& log_probs,
                                          std::optional<std::size_t> vocab_size = std::nullopt,
                                          double tolerance = 1e-9);

/// Index of the maximum entry; ties go to the lowest index.
Eigen::Index ArgMax(std::span<const double> values);
inline std::span<const double> RowSpan(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<const double> AsSpan(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace natkit
