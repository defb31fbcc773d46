#include "natkit/mqm.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "natkit/corpus.h"

namespace natkit {

namespace {

constexpr std::array<const char*, 4> kAccuracySubcategories = {"Addition", "Omission", "Mistranslation",
                                                               "Untranslated text"};
constexpr std::array<const char*, 6> kFluencySubcategories = {"Punctuation",   "Spelling",
                                                              "Grammar",       "Register",
                                                              "Inconsistency", "Character encoding"};

// Lowercase with separators dropped: "Non-translation" == "non_translation".
std::string Normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ' || c == '/') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

MqmCategory ParseCategory(std::string_view s) {
  const std::string n = Normalize(s);
  if (n == "accuracy" || n == "acc") return MqmCategory::kAccuracy;
  if (n == "fluency" || n == "flc") return MqmCategory::kFluency;
  if (n == "nontranslation" || n == "non") return MqmCategory::kNonTranslation;
  throw std::invalid_argument("unknown MQM category '" + std::string(s) + "'");
}

MqmSeverity ParseSeverity(std::string_view s) {
  const std::string n = Normalize(s);
  if (n == "major" || n == "maj") return MqmSeverity::kMajor;
  if (n == "minor" || n == "min") return MqmSeverity::kMinor;
  throw std::invalid_argument("unknown MQM severity '" + std::string(s) + "'");
}

template <std::size_t N>
const char* FindSubcategory(const std::array<const char*, N>& names, std::string_view s) {
  const std::string n = Normalize(s);
  for (const char* name : names) {
    if (Normalize(name) == n) return name;
  }
  return nullptr;
}

}  // namespace

const char* ToString(MqmCategory c) {
  switch (c) {
    case MqmCategory::kAccuracy: return "Accuracy";
    case MqmCategory::kFluency: return "Fluency";
    case MqmCategory::kNonTranslation: return "Non-translation";
  }
  return "?";
}

const char* ToString(MqmSeverity s) { return s == MqmSeverity::kMajor ? "major" : "minor"; }

MqmAnnotation MakeMqmAnnotation(std::string_view category, std::string_view subcategory, std::string_view severity,
                                std::string id) {
  MqmAnnotation a{ParseCategory(category), {}, ParseSeverity(severity), std::move(id)};
  const char* canonical = nullptr;
  switch (a.category) {
    case MqmCategory::kAccuracy: canonical = FindSubcategory(kAccuracySubcategories, subcategory); break;
    case MqmCategory::kFluency: canonical = FindSubcategory(kFluencySubcategories, subcategory); break;
    case MqmCategory::kNonTranslation: {
      const std::string n = Normalize(subcategory);
      if (n.empty() || n == "nontranslation") canonical = "";
      if (a.severity != MqmSeverity::kMajor) {
        throw std::invalid_argument("Non-translation errors are always major");
      }
      break;
    }
  }
  if (canonical == nullptr) {
    throw std::invalid_argument("unknown MQM subcategory '" + std::string(subcategory) + "' for category " +
                                ToString(a.category));
  }
  a.subcategory = canonical;
  return a;
}

double MqmWeights::WeightOf(const MqmAnnotation& a) const {
  if (a.severity == MqmSeverity::kMajor) {
    return a.category == MqmCategory::kNonTranslation ? major_non_translation : major_other;
  }
  if (a.category == MqmCategory::kFluency && a.subcategory == "Punctuation") return minor_fluency_punctuation;
  return minor_other;
}

double MqmScore(const std::vector<MqmAnnotation>& annotations, const MqmWeights& weights) {
  double total = 0.0;
  for (const auto& a : annotations) total += weights.WeightOf(a);
  return total;
}

std::vector<MqmAnnotation> ReadMqmAnnotations(std::istream& in) {
  std::vector<MqmAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      std::string id = obj.contains("id") ? (obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump())
                                          : std::string();
      std::string sub = obj.contains("subcategory") && obj["subcategory"].is_string()
                            ? obj["subcategory"].get<std::string>()
                            : std::string();
      out.push_back(MakeMqmAnnotation(obj.at("category").get<std::string>(), sub,
                                      obj.at("severity").get<std::string>(), std::move(id)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("MQM line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError("MQM line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace natkit
