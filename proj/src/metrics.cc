#include "natkit/metrics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace natkit {

namespace {

using NgramCounts = std::map<TokenSequence, long>;

NgramCounts CountNgrams(const TokenSequence& seq, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || n > seq.size()) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[TokenSequence(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double RepetitionRatio(const std::vector<TokenSequence>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("repetition ratio of an empty corpus");
  long repeated = 0;
  for (const auto& seq : corpus) {
    if (std::adjacent_find(seq.begin(), seq.end()) != seq.end()) ++repeated;
  }
  return 100.0 * static_cast<double>(repeated) / static_cast<double>(corpus.size());
}

std::map<int, long> NgramRepetitionCounts(const std::vector<TokenSequence>& corpus, int n_min, int n_max) {
  if (n_min < 2 || n_max < n_min) throw std::invalid_argument("n-gram repetition needs 2 <= n_min <= n_max");
  std::map<int, long> out;
  for (int n = n_min; n <= n_max; ++n) {
    long count = 0;
    for (const auto& seq : corpus) {
      for (const auto& [gram, c] : CountNgrams(seq, static_cast<std::size_t>(n))) {
        if (c >= 2) ++count;
      }
    }
    out[n] = count;
  }
  return out;
}

std::string RepetitionReport::ToJson() const {
  nlohmann::json doc;
  doc["unigram_ratio"] = unigram_ratio;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [n, c] : ngram_counts) counts[std::to_string(n)] = c;
  doc["ngram_counts"] = std::move(counts);
  return doc.dump();
}

RepetitionReport MakeRepetitionReport(const std::vector<TokenSequence>& corpus, int n_min, int n_max) {
  return {RepetitionRatio(corpus), NgramRepetitionCounts(corpus, n_min, n_max)};
}

double CorpusBleu(const std::vector<TokenSequence>& hypotheses, const std::vector<TokenSequence>& references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("BLEU: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                                std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw std::invalid_argument("BLEU: empty corpus");
  constexpr int kOrder = 4;
  double matches[kOrder] = {};
  double totals[kOrder] = {};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<double>(hypotheses[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (int n = 1; n <= kOrder; ++n) {
      auto hyp = CountNgrams(hypotheses[s], static_cast<std::size_t>(n));
      auto ref = CountNgrams(references[s], static_cast<std::size_t>(n));
      for (const auto& [gram, c] : hyp) {
        totals[n - 1] += static_cast<double>(c);
        auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += static_cast<double>(std::min(c, it->second));
      }
    }
  }
  if (hyp_len == 0.0 || matches[0] == 0.0) return 0.0;
  double log_precision = std::log(matches[0] / totals[0]);
  for (int n = 2; n <= kOrder; ++n) {
    log_precision += std::log((matches[n - 1] + 1.0) / (totals[n - 1] + 1.0));
  }
  log_precision /= kOrder;
  const double log_bp = hyp_len < ref_len ? 1.0 - ref_len / hyp_len : 0.0;
  return 100.0 * std::exp(log_precision + log_bp);
}

}  // namespace natkit
