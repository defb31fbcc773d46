#include "natkit/toymodel/task.h"

#include <stdexcept>

namespace natkit::toy {

TaskKind ParseTaskKind(std::string_view name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "reverse") return TaskKind::kReverse;
  if (name == "multimodal_lexicon" || name == "multimodal-lexicon") return TaskKind::kMultimodalLexicon;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

const char* ToString(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kMultimodalLexicon: return "multimodal_lexicon";
  }
  return "?";
}

Vocabulary MakeToyVocabulary(int vocab_size) {
  if (vocab_size < kNumReserved + 1) throw std::invalid_argument("toy vocabulary needs content tokens");
  std::vector<std::string> content;
  for (int i = 0; i < vocab_size - kNumReserved; ++i) content.push_back("w" + std::to_string(i));
  return Vocabulary::WithReserved(content);
}

Lexicon DefaultLexicon(int vocab_size) {
  const int n = vocab_size - kNumReserved;
  if (n < 3) throw std::invalid_argument("lexicon task needs at least 3 content tokens");
  Lexicon lex;
  for (int i = 0; i < n / 3; ++i) {
    const TokenId base = kNumReserved + 3 * i;
    lex[kNumReserved + i] = {{base}, {base + 1, base + 2}};
  }
  return lex;
}

void TaskSpec::Check() const {
  if (vocab_size - kNumReserved < 4) throw std::invalid_argument("toy task: need at least 4 content tokens");
  if (min_len < 1 || max_len < min_len) throw std::invalid_argument("toy task: bad length range");
  if (pairs < 0) throw std::invalid_argument("toy task: negative pair count");
  if (lexicon) {
    if (lexicon->empty()) throw std::invalid_argument("toy task: empty lexicon");
    for (const auto& [src, options] : *lexicon) {
      if (options.empty()) throw std::invalid_argument("toy task: lexicon entry without renderings");
      CheckIdsInRange(TokenSequence{src}, static_cast<std::size_t>(vocab_size), "lexicon key");
      for (const auto& o : options) CheckIdsInRange(o, static_cast<std::size_t>(vocab_size), "lexicon rendering");
    }
  }
}

Corpus MakeToyTask(const TaskSpec& spec, Rng& rng) {
  spec.Check();
  const Lexicon lex =
      spec.kind == TaskKind::kMultimodalLexicon ? spec.lexicon.value_or(DefaultLexicon(spec.vocab_size)) : Lexicon{};
  std::vector<TokenId> keys;
  for (const auto& [k, v] : lex) keys.push_back(k);
  const int content = spec.vocab_size - kNumReserved;

  Corpus corpus;
  corpus.reserve(static_cast<std::size_t>(spec.pairs));
  for (int p = 0; p < spec.pairs; ++p) {
    const int len = static_cast<int>(rng.UniformRange(spec.min_len, spec.max_len));
    TokenSequence src, ref;
    for (int i = 0; i < len; ++i) {
      if (spec.kind == TaskKind::kMultimodalLexicon) {
        TokenId t;
        do {
          t = keys[rng.UniformInt(keys.size())];
        } while (keys.size() > 1 && !src.empty() && src.back() == t);
        src.push_back(t);
      } else {
        src.push_back(static_cast<TokenId>(kNumReserved + rng.UniformInt(static_cast<std::uint64_t>(content))));
      }
    }
    switch (spec.kind) {
      case TaskKind::kCopy: ref = src; break;
      case TaskKind::kReverse: ref.assign(src.rbegin(), src.rend()); break;
      case TaskKind::kMultimodalLexicon:
        for (TokenId t : src) {
          const auto& options = lex.at(t);
          const auto& pick = options[rng.UniformInt(options.size())];
          ref.insert(ref.end(), pick.begin(), pick.end());
        }
        break;
    }
    corpus.push_back({std::string(ToString(spec.kind)) + "-" + std::to_string(p), std::move(src), std::nullopt,
                      std::move(ref)});
  }
  return corpus;
}

}  // namespace natkit::toy
