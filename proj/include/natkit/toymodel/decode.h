#pragma once

#include <string_view>

#include "natkit/at_nat.h"
#include "natkit/corpus.h"
#include "natkit/ctc.h"
#include "natkit/dat.h"
#include "natkit/toymodel/model.h"

namespace natkit::toy {

enum class Method { kAt, kNat, kCtc, kDat, kDatStar, kCmlm };

Method ParseMethod(std::string_view name);
const char* ToString(Method method);

struct DecodeConfig {
  Method method = Method::kNat;
  AtStrategy at_strategy = AtStrategy::kBeam;
  CtcStrategy ctc_strategy = CtcStrategy::kGreedy;
  DatStrategy dat_strategy = DatStrategy::kLookahead;
  int beam_size = 5;
  int cmlm_iterations = 10;
  int ctc_upsample = 3;
  int dat_upsample = 8;
  /// AT only; clamped to the position table.
  int max_len = 64;
};

struct Decoded {
  TokenSequence tokens;
  double score = 0.0;  // method-specific (log-prob, joint score, or 0 for argmax decoders)
};

/// NAT and CMLM take their length from the length head.
Decoded DecodeSentence(const ModelParams& params, const TokenSequence& source, const DecodeConfig& config);

/// Fills `hypothesis` of every entry; sentences may run on `threads` threads
/// with identical results.
Corpus DecodeCorpus(const ModelParams& params, const Corpus& corpus, const DecodeConfig& config, int threads = 1);

}  // namespace natkit::toy
