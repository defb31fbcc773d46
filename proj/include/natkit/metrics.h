#pragma once

#include <map>
#include <string>
#include <vector>

#include "natkit/core.h"

namespace natkit {

/// Percentage of sequences with at least one pair of equal adjacent tokens.
/// Throws std::invalid_argument on an empty corpus.
double RepetitionRatio(const std::vector<TokenSequence>& corpus);

/// For each n in [n_min, n_max]: number of (sequence, n-gram type) pairs
/// whose n-gram occurs at least twice in that sequence, overlapping or not.
std::map<int, long> NgramRepetitionCounts(const std::vector<TokenSequence>& corpus, int n_min, int n_max);

struct RepetitionReport {
  double unigram_ratio = 0.0;
  std::map<int, long> ngram_counts;

  /// {"unigram_ratio": r, "ngram_counts": {"2": c2, ...}}
  std::string ToJson() const;
};

RepetitionReport MakeRepetitionReport(const std::vector<TokenSequence>& corpus, int n_min = 2, int n_max = 10);

/// Corpus BLEU-4 in [0, 100]: clipped n-gram precisions pooled over the
/// corpus, add-one smoothing on orders 2-4, brevity penalty against the
/// total reference length.
double CorpusBleu(const std::vector<TokenSequence>& hypotheses, const std::vector<TokenSequence>& references);

}  // namespace natkit
