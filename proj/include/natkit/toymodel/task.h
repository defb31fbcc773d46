#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "natkit/core.h"
#include "natkit/corpus.h"
#include "natkit/random.h"

namespace natkit::toy {

enum class TaskKind { kCopy, kReverse, kMultimodalLexicon };

TaskKind ParseTaskKind(std::string_view name);
const char* ToString(TaskKind kind);

/// Reserved tokens followed by content tokens "w0", "w1", ...
Vocabulary MakeToyVocabulary(int vocab_size);

/// Source id -> equally likely target renderings.
using Lexicon = std::map<TokenId, std::vector<TokenSequence>>;

/// With n = V - reserved content ids, source symbol i < n / 3 renders as
/// the single token w(3i) or the two-token phrase w(3i+1) w(3i+2), so the
/// two renderings of a sentence usually differ in length.
Lexicon DefaultLexicon(int vocab_size);

struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  int vocab_size = 12;
  int min_len = 3;
  int max_len = 8;
  int pairs = 1000;
  /// multimodal_lexicon only; DefaultLexicon(vocab_size) when unset.
  std::optional<Lexicon> lexicon;

  void Check() const;
};

/// Entries with ids "<kind>-<index>", source and reference set. Copy and
/// reverse draw sources over all content tokens; the lexicon task draws
/// from the lexicon keys with no immediate repeats (when it has two or
/// more keys) and picks one rendering per token.
Corpus MakeToyTask(const TaskSpec& spec, Rng& rng);

}  // namespace natkit::toy
