#include "natkit/perturb.h"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"
#include "natkit/random.h"

namespace natkit {

void PerturbSpec::Check() const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("perturb: p must lie in [0, 1]");
  if (mode == PerturbMode::kSwap && window < 1) throw std::invalid_argument("perturb: swap mode needs window >= 1");
}

std::string PerturbSpec::ToJson() const {
  nlohmann::json doc;
  doc["mode"] = ToString(mode);
  doc["p"] = p;
  if (mode == PerturbMode::kSwap) {
    doc["window"] = window;
    doc["symmetric"] = symmetric;
  }
  doc["seed"] = seed;
  doc["rng"] = "xoshiro256**/splitmix64, stream = seed ^ fnv1a64(id)";
  return doc.dump();
}

PerturbMode ParsePerturbMode(std::string_view name) {
  if (name == "delete") return PerturbMode::kDelete;
  if (name == "replace_unk" || name == "replace-unk" || name == "unk") return PerturbMode::kReplaceUnk;
  if (name == "swap") return PerturbMode::kSwap;
  throw std::invalid_argument("unknown perturbation mode '" + std::string(name) + "'");
}

const char* ToString(PerturbMode mode) {
  switch (mode) {
    case PerturbMode::kDelete: return "delete";
    case PerturbMode::kReplaceUnk: return "replace_unk";
    case PerturbMode::kSwap: return "swap";
  }
  return "?";
}

TokenSequence Perturb(const TokenSequence& sequence, const PerturbSpec& spec, std::string_view stream_id,
                      TokenId unk) {
  spec.Check();
  Rng rng = Rng::ForStream(spec.seed, stream_id);
  TokenSequence out;
  switch (spec.mode) {
    case PerturbMode::kDelete:
      for (TokenId t : sequence) {
        if (!rng.Bernoulli(spec.p)) out.push_back(t);
      }
      break;
    case PerturbMode::kReplaceUnk:
      out = sequence;
      for (TokenId& t : out) {
        if (rng.Bernoulli(spec.p)) t = unk;
      }
      break;
    case PerturbMode::kSwap: {
      out = sequence;
      const auto n = static_cast<std::int64_t>(out.size());
      for (std::int64_t i = 0; i < n; ++i) {
        if (!rng.Bernoulli(spec.p)) continue;
        const std::int64_t hi = std::min(n - 1, i + spec.window);
        if (spec.symmetric) {
          const std::int64_t lo = std::max<std::int64_t>(0, i - spec.window);
          if (hi == lo) continue;
          // Draw from [lo, hi] minus i.
          std::int64_t j = rng.UniformRange(lo, hi - 1);
          if (j >= i) ++j;
          std::swap(out[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(j)]);
        } else {
          if (hi <= i) continue;
          const std::int64_t j = rng.UniformRange(i + 1, hi);
          std::swap(out[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(j)]);
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace natkit
