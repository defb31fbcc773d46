#include "natkit/corpus.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "json.hpp"

namespace natkit {

namespace {

using nlohmann::json;

std::optional<TokenSequence> ReadTokens(const json& obj, const char* key, const Vocabulary& vocab,
                                        std::size_t line_no, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) {
      throw DataError("line " + std::to_string(line_no) + ": missing \"" + key + "\"");
    }
    return std::nullopt;
  }
  if (!it->is_array()) {
    throw DataError("line " + std::to_string(line_no) + ": \"" + key + "\" must be an array of strings");
  }
  TokenSequence ids;
  ids.reserve(it->size());
  for (const auto& tok : *it) {
    if (!tok.is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": \"" + key + "\" holds a non-string token");
    }
    ids.push_back(vocab.Id(tok.get<std::string>()));
  }
  return ids;
}

json TokensJson(const Vocabulary& vocab, const TokenSequence& ids) {
  json arr = json::array();
  for (TokenId id : ids) arr.push_back(vocab.Surface(id));
  return arr;
}

}  // namespace

void CheckUniqueIds(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (const auto& entry : corpus) {
    if (!seen.insert(entry.id).second) throw std::invalid_argument("duplicate corpus id '" + entry.id + "'");
  }
}

Corpus ReadCorpus(std::istream& in, const Vocabulary& vocab) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
    CorpusEntry entry;
    auto id = obj.find("id");
    if (id == obj.end()) throw DataError("line " + std::to_string(line_no) + ": missing \"id\"");
    entry.id = id->is_string() ? id->get<std::string>() : id->dump();
    entry.source = *ReadTokens(obj, "src", vocab, line_no, true);
    entry.hypothesis = ReadTokens(obj, "hyp", vocab, line_no, false);
    entry.reference = ReadTokens(obj, "ref", vocab, line_no, false);
    corpus.push_back(std::move(entry));
  }
  try {
    CheckUniqueIds(corpus);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return corpus;
}

Corpus ReadCorpusFile(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return ReadCorpus(in, vocab);
}

std::string CorpusLineJson(const CorpusEntry& entry, const Vocabulary& vocab) {
  json obj;
  obj["id"] = entry.id;
  obj["src"] = TokensJson(vocab, entry.source);
  if (entry.hypothesis) obj["hyp"] = TokensJson(vocab, *entry.hypothesis);
  if (entry.reference) obj["ref"] = TokensJson(vocab, *entry.reference);
  return obj.dump();
}

void WriteCorpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab) {
  for (const auto& entry : corpus) out << CorpusLineJson(entry, vocab) << '\n';
}

Vocabulary ReadVocabulary(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("vocabulary: ") + e.what());
  }
}

Vocabulary ReadVocabularyFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary '" + path + "'");
  return ReadVocabulary(in);
}

void WriteVocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& tok : vocab.tokens()) out << tok << '\n';
}

std::string JoinTokens(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.Surface(ids[i]);
  }
  return out;
}

}  // namespace natkit
