#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace natkit {

enum class MqmCategory { kAccuracy, kFluency, kNonTranslation };
enum class MqmSeverity { kMajor, kMinor };

/// One annotated error. Subcategory names follow the MQM hierarchy:
///   Accuracy: Addition, Omission, Mistranslation, Untranslated text
///   Fluency:  Punctuation, Spelling, Grammar, Register, Inconsistency,
///             Character encoding
///   Non-translation: no subcategory, major only
struct MqmAnnotation {
  MqmCategory category;
  std::string subcategory;
  MqmSeverity severity;
  std::string id;  // segment id, informational
};

struct MqmWeights {
  double major_non_translation = 25.0;
  double major_other = 5.0;
  double minor_fluency_punctuation = 0.1;
  double minor_other = 1.0;

  double WeightOf(const MqmAnnotation& a) const;
};

/// Throws std::invalid_argument for an unknown subcategory or a minor
/// non-translation. Subcategory matching is case-insensitive and the
/// stored name is canonicalized.
MqmAnnotation MakeMqmAnnotation(std::string_view category, std::string_view subcategory,
                                std::string_view severity, std::string id = {});

/// Weighted error count; lower is better, 0 for no annotations.
double MqmScore(const std::vector<MqmAnnotation>& annotations, const MqmWeights& weights = {});

/// JSONL, one {"id", "category", "subcategory", "severity"} per line.
std::vector<MqmAnnotation> ReadMqmAnnotations(std::istream& in);

const char* ToString(MqmCategory c);
const char* ToString(MqmSeverity s);

}  // namespace natkit
