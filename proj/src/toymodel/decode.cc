#include "natkit/toymodel/decode.h"

#include <algorithm>
#include <stdexcept>

#include "natkit/cmlm.h"
#include "natkit/parallel.h"
#include "natkit/toymodel/objectives.h"

namespace natkit::toy {

Method ParseMethod(std::string_view name) {
  if (name == "at") return Method::kAt;
  if (name == "nat") return Method::kNat;
  if (name == "ctc") return Method::kCtc;
  if (name == "dat") return Method::kDat;
  if (name == "dat-star" || name == "dat_star") return Method::kDatStar;
  if (name == "cmlm") return Method::kCmlm;
  throw std::invalid_argument("unknown decode method '" + std::string(name) + "'");
}

const char* ToString(Method method) {
  switch (method) {
    case Method::kAt: return "at";
    case Method::kNat: return "nat";
    case Method::kCtc: return "ctc";
    case Method::kDat: return "dat";
    case Method::kDatStar: return "dat-star";
    case Method::kCmlm: return "cmlm";
  }
  return "?";
}

Decoded DecodeSentence(const ModelParams& params, const TokenSequence& source, const DecodeConfig& config) {
  const int S = static_cast<int>(source.size());
  const int P = params.config().PositionRows();
  auto predicted_length = [&] {
    ForwardResult fr = Forward(params, source, ExactPlan(S, 1));
    return std::min(fr.length.PredictLength(S), P);
  };
  switch (config.method) {
    case Method::kAt: {
      ModelArScorer scorer(params);
      AtDecodeOptions opt{config.at_strategy, config.beam_size, std::min(config.max_len, P), kEosId};
      AtDecodeResult r = AtDecode(scorer, source, opt);
      return {r.tokens, r.score};
    }
    case Method::kNat: {
      ForwardResult fr = Forward(params, source, ExactPlan(S, predicted_length()));
      return {NatArgmaxDecode(fr.emissions), 0.0};
    }
    case Method::kCtc: {
      ForwardResult fr = Forward(params, source, UpsampledPlan(S, config.ctc_upsample));
      CtcDecodeResult r = CtcDecode(fr.emissions, config.ctc_strategy, config.beam_size);
      return {r.tokens, r.log_prob};
    }
    case Method::kDat:
    case Method::kDatStar: {
      if (config.method == Method::kDatStar && !params.config().dat_star) {
        throw std::invalid_argument("dat-star decoding needs a model built with dat_star");
      }
      ForwardResult fr = Forward(params, source, UpsampledPlan(S, config.dat_upsample));
      TransitionMatrix e = BuildTransition(
          fr.states, params.Dat(), config.method == Method::kDatStar ? TransitionVariant::kStar : TransitionVariant::kPlain);
      DatDecodeOptions opt;
      opt.strategy = config.dat_strategy;
      opt.beam_size = config.beam_size;
      DatDecodeResult r = DatDecode(fr.emissions, e, opt);
      return {r.tokens, r.score};
    }
    case Method::kCmlm: {
      ModelMaskedScorer scorer(params);
      MaskPredictResult r = MaskPredictDecode(scorer, source, predicted_length(), config.cmlm_iterations);
      return {r.tokens, 0.0};
    }
  }
  throw std::logic_error("unhandled decode method");
}

Corpus DecodeCorpus(const ModelParams& params, const Corpus& corpus, const DecodeConfig& config, int threads) {
  Corpus out = corpus;
  ParallelFor(out.size(), threads, [&](std::size_t i) {
    out[i].hypothesis = DecodeSentence(params, out[i].source, config).tokens;
  });
  return out;
}

}  // namespace natkit::toy
