#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "natkit/cmlm.h"
#include "natkit/corpus.h"
#include "natkit/mgmo.h"
#include "natkit/toymodel/model.h"

namespace natkit::toy {

enum class Objective { kAt, kNat, kLength, kCtc, kDat, kDatStar, kCmlm, kMgmo };

Objective ParseObjective(std::string_view name);
const char* ToString(Objective objective);
/// The seven loss families checked by a full gradient sweep (DAT and DAT*
/// listed separately).
const std::vector<Objective>& AllObjectives();

struct ObjectiveOptions {
  int ctc_upsample = 3;
  int dat_upsample = 8;
  int mgmo_samples = 8;
  double mgmo_alpha = 1.0;
  RewardSpec reward;
  /// NAT, CMLM and MgMO also train the length head when set.
  bool add_length_loss = false;
};

/// Autoregressive view of the model: one decoder position per step, the
/// prefix fed in as observed tokens.
class ModelArScorer : public ArScorer {
 public:
  explicit ModelArScorer(const ModelParams& params) : params_(params) {}
  Vector NextLogProbs(const TokenSequence& source, std::span<const TokenId> prefix) const override;
  std::size_t vocab_size() const override { return static_cast<std::size_t>(params_.config().vocab_size); }

 private:
  const ModelParams& params_;
};

/// Conditional masked view: unmasked target tokens feed the observed mean.
class ModelMaskedScorer : public ConditionalLatticeScorer {
 public:
  explicit ModelMaskedScorer(const ModelParams& params, TokenId mask_id = kMaskId)
      : params_(params), mask_id_(mask_id) {}
  EmissionLattice Score(const TokenSequence& source, const TokenSequence& observed) const override;

 private:
  const ModelParams& params_;
  TokenId mask_id_;
};

/// A training instance with its random choices (CMLM mask, MgMO samples)
/// frozen, so the loss is a deterministic function of the parameters.
struct PreparedInstance {
  Objective objective;
  TokenSequence source;
  TokenSequence target;
  MaskSet mask;
  SampleSet samples;
};

/// Draws the random parts and checks compatibility (e.g. CTC/DAT length
/// feasibility, length offset range). Throws std::invalid_argument or
/// InfeasibleLengthError for incompatible instances.
PreparedInstance Prepare(Objective objective, const ModelParams& params, const CorpusEntry& entry, Rng& rng,
                         const ObjectiveOptions& options = {});

/// Loss of the prepared instance; accumulates d loss / d params into
/// `grads` when non-null.
double LossAndGrad(const ModelParams& params, const PreparedInstance& instance, const ObjectiveOptions& options,
                   ModelParams* grads);

struct BlockError {
  std::string block;
  double max_rel_error = 0.0;
  int checked = 0;
};

struct GradCheckReport {
  Objective objective;
  std::vector<BlockError> blocks;
  double step = 0.0;
  double threshold = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
  double floor = 0.0;  // denominator floor actually used
};

struct GradCheckOptions {
  double step = 1e-5;
  double threshold = 1e-4;
  /// Coordinates per block; half drawn among non-zero analytic entries.
  int coords_per_block = 24;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Raises the floor to eps |loss| / (step * threshold), the smallest
  /// gradient entry a central difference can resolve to the threshold.
  bool resolution_floor = true;
  std::uint64_t seed = 0;
};

/// Central finite differences against the analytic parameter gradient of
/// one objective on one instance.
GradCheckReport GradCheck(Objective objective, const ModelParams& params, const CorpusEntry& entry,
                          const GradCheckOptions& options = {}, const ObjectiveOptions& objective_options = {});

}  // namespace natkit::toy
