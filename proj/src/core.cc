#include "natkit/core.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace natkit {

namespace {

const std::vector<std::string> kReservedSurfaces = {"<s>", "</s>", "<unk>", "<blank>", "<mask>"};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < static_cast<std::size_t>(kNumReserved)) {
    throw std::invalid_argument("vocabulary needs the five reserved tokens (BOS, EOS, UNK, BLANK, MASK)");
  }
  if (tokens_.size() > static_cast<std::size_t>(std::numeric_limits<TokenId>::max())) {
    throw std::invalid_argument("vocabulary larger than 2^31 - 1 tokens");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw std::invalid_argument("duplicate vocabulary entry '" + tokens_[i] + "' at line " +
                                  std::to_string(i));
    }
  }
}

Vocabulary Vocabulary::WithReserved(const std::vector<std::string>& content) {
  std::vector<std::string> tokens = kReservedSurfaces;
  tokens.insert(tokens.end(), content.begin(), content.end());
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::Surface(TokenId id) const {
  if (!Contains(id)) throw std::out_of_range("token id " + std::to_string(id) + " not in vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::Find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::Id(std::string_view surface) const { return Find(surface).value_or(kUnkId); }

TokenSequence Vocabulary::Encode(const std::vector<std::string>& words) const {
  TokenSequence ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(Id(w));
  return ids;
}

std::vector<std::string> Vocabulary::Decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId id : ids) words.push_back(Surface(id));
  return words;
}

void Vocabulary::CheckIds(std::span<const TokenId> ids, std::string_view what) const {
  CheckIdsInRange(ids, size(), what);
}

void CheckIdsInRange(std::span<const TokenId> ids, std::size_t width, std::string_view what) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= width) {
      std::ostringstream msg;
      msg << what << ": token id " << ids[i] << " at index " << i << " outside [0, " << width << ")";
      throw std::invalid_argument(msg.str());
    }
  }
}

double LogSumExp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  double max = *std::max_element(values.begin(), values.end());
  if (max == kNegInf) return kNegInf;
  if (std::isinf(max)) return max;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

Vector LogSoftmax(const Vector& logits) {
  double z = LogSumExp(AsSpan(logits));
  return logits.array() - z;
}

Matrix LogSoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double z = LogSumExp(RowSpan(logits, r));
    out.row(r) = logits.row(r).array() - z;
  }
  return out;
}

EmissionLattice EmissionLattice::FromLogits(const Matrix& logits) {
  if (logits.rows() < 1 || logits.cols() < 1) {
    throw std::invalid_argument("emission lattice needs at least one position and one column");
  }
  return EmissionLattice(LogSoftmaxRows(logits));
}

EmissionLattice EmissionLattice::FromLogProbs(Matrix log_probs, double tolerance) {
  auto issues = ValidateLattice(log_probs, std::nullopt, tolerance);
  if (!issues.empty()) throw std::invalid_argument("invalid emission lattice: " + issues.front().message);
  return EmissionLattice(std::move(log_probs));
}

Matrix LogSoftmaxBackward(const Matrix& log_probs, const Matrix& grad_log_probs) {
  Matrix grad(log_probs.rows(), log_probs.cols());
  for (Eigen::Index r = 0; r < log_probs.rows(); ++r) {
    double total = grad_log_probs.row(r).sum();
    grad.row(r) = grad_log_probs.row(r).array() - log_probs.row(r).array().exp() * total;
  }
  return grad;
}

Vector LogSoftmaxBackward(const Vector& log_probs, const Vector& grad_log_probs) {
  return grad_log_probs.array() - log_probs.array().exp() * grad_log_probs.sum();
}

std::vector<LatticeIssue> ValidateLattice(const Matrix& log_probs, std::optional<std::size_t> vocab_size,
                                          double tolerance) {
  std::vector<LatticeIssue> issues;
  if (log_probs.rows() < 1) {
    issues.push_back({LatticeIssue::Kind::kEmpty, -1, 0.0, "lattice has no positions"});
  }
  if (vocab_size && static_cast<std::size_t>(log_probs.cols()) != *vocab_size) {
    std::ostringstream msg;
    msg << "lattice width " << log_probs.cols() << " != vocabulary size " << *vocab_size;
    issues.push_back({LatticeIssue::Kind::kWidthMismatch, -1, 0.0, msg.str()});
  }
  for (Eigen::Index r = 0; r < log_probs.rows(); ++r) {
    double z = LogSumExp(RowSpan(log_probs, r));
    double deviation = std::isfinite(z) ? std::abs(z) : std::numeric_limits<double>::infinity();
    if (!(deviation <= tolerance)) {
      std::ostringstream msg;
      msg << "row " << r << " log-sum-exp deviates from 0 by " << deviation;
      issues.push_back({LatticeIssue::Kind::kRowNotNormalized, r, deviation, msg.str()});
    }
  }
  return issues;
}

Eigen::Index ArgMax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  Eigen::Index best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<Eigen::Index>(i);
  }
  return best;
}

}  // namespace natkit
