#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "natkit/core.h"

namespace natkit {

/// Malformed input files (bad JSON, missing keys, bad vocabulary layout).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusEntry {
  std::string id;
  TokenSequence source;
  std::optional<TokenSequence> hypothesis;
  std::optional<TokenSequence> reference;
};

using Corpus = std::vector<CorpusEntry>;

/// Throws std::invalid_argument on a repeated id.
void CheckUniqueIds(const Corpus& corpus);

// Corpus JSONL: one object per line, {"id", "src", "hyp", "ref"}, token
// arrays of surface strings. "hyp" and "ref" may be absent or null.
Corpus ReadCorpus(std::istream& in, const Vocabulary& vocab);
Corpus ReadCorpusFile(const std::string& path, const Vocabulary& vocab);
std::string CorpusLineJson(const CorpusEntry& entry, const Vocabulary& vocab);
void WriteCorpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab);

// Vocabulary file: one token per line, line number = id.
Vocabulary ReadVocabulary(std::istream& in);
Vocabulary ReadVocabularyFile(const std::string& path);
void WriteVocabulary(std::ostream& out, const Vocabulary& vocab);

/// Whitespace-joined surfaces, handy in logs and tables.
std::string JoinTokens(const Vocabulary& vocab, std::span<const TokenId> ids);

}  // namespace natkit
