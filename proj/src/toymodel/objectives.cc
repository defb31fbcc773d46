#include "natkit/toymodel/objectives.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "natkit/ctc.h"
#include "natkit/dat.h"

namespace natkit::toy {

namespace {

int Len(const TokenSequence& s) { return static_cast<int>(s.size()); }

TokenSequence Unmasked(const TokenSequence& observed, TokenId mask_id) {
  TokenSequence out;
  for (TokenId t : observed) {
    if (t != mask_id) out.push_back(t);
  }
  return out;
}

TokenSequence ObservedFor(const TokenSequence& target, const MaskSet& mask) {
  TokenSequence out;
  std::size_t k = 0;
  for (int i = 0; i < Len(target); ++i) {
    if (k < mask.size() && mask[k] == i) {
      ++k;
      continue;
    }
    out.push_back(target[static_cast<std::size_t>(i)]);
  }
  return out;
}

bool UsesLengthHead(Objective o, const ObjectiveOptions& options) {
  if (o == Objective::kLength) return true;
  return options.add_length_loss && (o == Objective::kNat || o == Objective::kCmlm || o == Objective::kMgmo);
}

double AddLengthLoss(const ForwardResult& fr, const PreparedInstance& inst, Vector* grad) {
  LengthLossGrad lg = LengthLoss(fr.length, Len(inst.target), Len(inst.source));
  if (grad) *grad = lg.grad;
  return lg.loss;
}

double SequenceLogProb(const EmissionLattice& lattice, const TokenSequence& h) {
  double lp = 0.0;
  for (int t = 0; t < Len(h); ++t) lp += lattice.at(t, h[static_cast<std::size_t>(t)]);
  return lp;
}

}  // namespace

Objective ParseObjective(std::string_view name) {
  if (name == "at") return Objective::kAt;
  if (name == "nat") return Objective::kNat;
  if (name == "length") return Objective::kLength;
  if (name == "ctc") return Objective::kCtc;
  if (name == "dat") return Objective::kDat;
  if (name == "dat_star" || name == "dat-star") return Objective::kDatStar;
  if (name == "cmlm") return Objective::kCmlm;
  if (name == "mgmo") return Objective::kMgmo;
  throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
}

const char* ToString(Objective objective) {
  switch (objective) {
    case Objective::kAt: return "at";
    case Objective::kNat: return "nat";
    case Objective::kLength: return "length";
    case Objective::kCtc: return "ctc";
    case Objective::kDat: return "dat";
    case Objective::kDatStar: return "dat_star";
    case Objective::kCmlm: return "cmlm";
    case Objective::kMgmo: return "mgmo";
  }
  return "?";
}

const std::vector<Objective>& AllObjectives() {
  static const std::vector<Objective> all = {Objective::kAt,  Objective::kNat,     Objective::kLength,
                                             Objective::kCtc, Objective::kDat,     Objective::kDatStar,
                                             Objective::kCmlm, Objective::kMgmo};
  return all;
}

Vector ModelArScorer::NextLogProbs(const TokenSequence& source, std::span<const TokenId> prefix) const {
  ForwardResult fr = Forward(params_, source, ArStepPlan(Len(source), static_cast<int>(prefix.size())), prefix);
  return fr.emissions.log_probs().row(0).transpose();
}

EmissionLattice ModelMaskedScorer::Score(const TokenSequence& source, const TokenSequence& observed) const {
  TokenSequence seen = Unmasked(observed, mask_id_);
  return Forward(params_, source, ExactPlan(Len(source), Len(observed)), seen).emissions;
}

PreparedInstance Prepare(Objective objective, const ModelParams& params, const CorpusEntry& entry, Rng& rng,
                         const ObjectiveOptions& options) {
  if (!entry.reference) throw std::invalid_argument("instance '" + entry.id + "' has no reference");
  PreparedInstance inst{objective, entry.source, *entry.reference, {}, {}};
  const ModelConfig& cfg = params.config();
  const int S = Len(inst.source), T = Len(inst.target);
  if (S == 0) throw std::invalid_argument("instance '" + entry.id + "': empty source");
  if (S > cfg.max_source_len) {
    throw std::invalid_argument("instance '" + entry.id + "': source longer than max_source_len");
  }
  CheckIdsInRange(inst.target, static_cast<std::size_t>(cfg.vocab_size), "target");
  if (objective != Objective::kLength && objective != Objective::kCtc && objective != Objective::kDat &&
      objective != Objective::kDatStar && T == 0) {
    throw std::invalid_argument("instance '" + entry.id + "': empty target");
  }
  if (UsesLengthHead(objective, options) && std::abs(T - S) > cfg.max_offset) {
    throw std::invalid_argument("instance '" + entry.id + "': length offset outside the length head range");
  }
  const int P = cfg.PositionRows();
  switch (objective) {
    case Objective::kAt:
      if (T + 1 > P) throw std::invalid_argument("instance '" + entry.id + "': target longer than position table");
      break;
    case Objective::kNat:
    case Objective::kCmlm:
    case Objective::kMgmo:
      if (T > P) throw std::invalid_argument("instance '" + entry.id + "': target longer than position table");
      break;
    case Objective::kLength:
      break;
    case Objective::kCtc: {
      const int M = options.ctc_upsample * S;
      if (M > P) throw std::invalid_argument("ctc upsample exceeds the position table");
      if (M < MinAlignmentLength(inst.target)) {
        throw InfeasibleLengthError("instance '" + entry.id + "': " + std::to_string(M) +
                                    " CTC positions cannot emit a target needing " +
                                    std::to_string(MinAlignmentLength(inst.target)));
      }
      break;
    }
    case Objective::kDat:
    case Objective::kDatStar: {
      if (objective == Objective::kDatStar && !cfg.dat_star) {
        throw std::invalid_argument("dat_star objective needs a model built with dat_star");
      }
      const int M = options.dat_upsample * S;
      if (M > P) throw std::invalid_argument("dat upsample exceeds the position table");
      if (M < T + 2) {
        throw InfeasibleLengthError("instance '" + entry.id + "': " + std::to_string(M) +
                                    " DAT vertices cannot hold a target of length " + std::to_string(T));
      }
      break;
    }
  }
  if (objective == Objective::kCmlm) inst.mask = SampleMask(T, rng);
  if (objective == Objective::kMgmo) {
    if (options.mgmo_samples < 1) throw std::invalid_argument("mgmo needs at least one sample");
    ForwardResult fr = Forward(params, inst.source, ExactPlan(S, T));
    inst.samples = SampleHypotheses(fr.emissions, options.mgmo_samples, rng, options.mgmo_alpha);
  }
  return inst;
}

double LossAndGrad(const ModelParams& params, const PreparedInstance& inst, const ObjectiveOptions& options,
                   ModelParams* grads) {
  const int S = Len(inst.source), T = Len(inst.target);
  const bool with_length = UsesLengthHead(inst.objective, options);
  double loss = 0.0;
  Vector len_grad;

  switch (inst.objective) {
    case Objective::kAt: {
      TokenSequence y = inst.target;
      y.push_back(kEosId);
      std::span<const TokenId> ys(y);
      for (int i = 0; i < Len(y); ++i) {
        PositionPlan plan = ArStepPlan(S, i);
        ForwardResult fr = Forward(params, inst.source, plan, ys.first(static_cast<std::size_t>(i)));
        const TokenId gold = y[static_cast<std::size_t>(i)];
        loss -= fr.emissions.at(0, gold);
        if (grads) {
          Matrix g = fr.emissions.probs();
          g(0, gold) -= 1.0;
          Backward(params, inst.source, plan, ys.first(static_cast<std::size_t>(i)), fr.cache, {&g, nullptr, nullptr},
                   *grads);
        }
      }
      return loss;
    }
    case Objective::kNat:
    case Objective::kLength:
    case Objective::kCmlm: {
      const int positions = inst.objective == Objective::kLength ? std::max(T, 1) : T;
      PositionPlan plan = ExactPlan(S, positions);
      TokenSequence observed;
      if (inst.objective == Objective::kCmlm) observed = ObservedFor(inst.target, inst.mask);
      ForwardResult fr = Forward(params, inst.source, plan, observed);
      LossGrad lg;
      if (inst.objective == Objective::kNat) lg = NatLossGrad(fr.emissions, inst.target);
      if (inst.objective == Objective::kCmlm) lg = CmlmLossGrad(fr.emissions, inst.target, inst.mask);
      loss += lg.loss;
      if (with_length) loss += AddLengthLoss(fr, inst, grads ? &len_grad : nullptr);
      if (grads) {
        BackwardInputs in;
        if (inst.objective != Objective::kLength) in.grad_logits = &lg.grad;
        if (with_length) in.grad_length_logits = &len_grad;
        Backward(params, inst.source, plan, observed, fr.cache, in, *grads);
      }
      return loss;
    }
    case Objective::kCtc: {
      PositionPlan plan = UpsampledPlan(S, options.ctc_upsample);
      ForwardResult fr = Forward(params, inst.source, plan);
      CtcResult r = CtcLogProbGrad(fr.emissions, inst.target);
      if (grads) {
        Matrix g = -r.grad;
        Backward(params, inst.source, plan, {}, fr.cache, {&g, nullptr, nullptr}, *grads);
      }
      return -r.log_prob;
    }
    case Objective::kDat:
    case Objective::kDatStar: {
      PositionPlan plan = UpsampledPlan(S, options.dat_upsample);
      ForwardResult fr = Forward(params, inst.source, plan);
      const DatParams dat = params.Dat();
      const TransitionVariant variant =
          inst.objective == Objective::kDatStar ? TransitionVariant::kStar : TransitionVariant::kPlain;
      TransitionCache cache;
      TransitionMatrix e = BuildTransition(fr.states, dat, variant, &cache);
      DatResult r = DatLogProbGrad(fr.emissions, e, inst.target);
      if (grads) {
        TransitionGrads tg = TransitionBackward(fr.states, dat, cache, -r.grad_transition);
        grads->w_q += tg.w_q;
        grads->w_k += tg.w_k;
        if (variant == TransitionVariant::kStar) {
          grads->w_q_star += tg.w_q_star;
          grads->w_k_star += tg.w_k_star;
        }
        Matrix g = -r.grad_emission;
        Backward(params, inst.source, plan, {}, fr.cache, {&g, &tg.states, nullptr}, *grads);
      }
      return -r.log_prob;
    }
    case Objective::kMgmo: {
      PositionPlan plan = ExactPlan(S, T);
      ForwardResult fr = Forward(params, inst.source, plan);
      SampleSet samples = inst.samples;
      std::vector<double> rewards;
      for (std::size_t k = 0; k < samples.hypotheses.size(); ++k) {
        samples.model_logprobs[k] = SequenceLogProb(fr.emissions, samples.hypotheses[k]);
        rewards.push_back(NgramReward(samples.hypotheses[k], inst.target, options.reward));
      }
      MgmoLossGrad mg = MgmoLoss(samples, rewards);
      loss += mg.loss;
      if (with_length) loss += AddLengthLoss(fr, inst, grads ? &len_grad : nullptr);
      if (grads) {
        Matrix g = MgmoLatticeGrad(fr.emissions, samples, mg.grad);
        Backward(params, inst.source, plan, {}, fr.cache, {&g, nullptr, with_length ? &len_grad : nullptr}, *grads);
      }
      return loss;
    }
  }
  throw std::logic_error("unhandled objective");
}

GradCheckReport GradCheck(Objective objective, const ModelParams& params, const CorpusEntry& entry,
                          const GradCheckOptions& options, const ObjectiveOptions& objective_options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");
  Rng rng = Rng::ForStream(options.seed, entry.id);
  PreparedInstance inst = Prepare(objective, params, entry, rng, objective_options);

  ModelParams analytic = params.ZerosLike();
  const double loss = LossAndGrad(params, inst, objective_options, &analytic);

  GradCheckReport report{objective, {}, options.step, options.threshold, 0.0, false};
  report.floor = options.floor;
  if (options.resolution_floor) {
    // Round-off in the loss alone perturbs a central difference by about
    // eps |loss| / step; entries smaller than that over the threshold
    // cannot be resolved and are compared absolutely.
    const double resolution = std::numeric_limits<double>::epsilon() * std::max(std::abs(loss), 1.0) / options.step;
    report.floor = std::max(report.floor, resolution / options.threshold);
  }
  ModelParams probe = params;
  auto probe_blocks = probe.Blocks();
  auto grad_blocks = analytic.Blocks();
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    Matrix& theta = *probe_blocks[b].second;
    const Matrix& grad = *grad_blocks[b].second;
    BlockError be{probe_blocks[b].first, 0.0, 0};
    if (theta.size() == 0) {
      report.blocks.push_back(be);
      continue;
    }
    std::vector<Eigen::Index> nonzero;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      if (grad.data()[i] != 0.0) nonzero.push_back(i);
    }
    std::vector<Eigen::Index> coords;
    const int half = options.coords_per_block / 2;
    for (int c = 0; c < half && !nonzero.empty(); ++c) {
      coords.push_back(nonzero[rng.UniformInt(nonzero.size())]);
    }
    for (int c = static_cast<int>(coords.size()); c < options.coords_per_block; ++c) {
      coords.push_back(static_cast<Eigen::Index>(rng.UniformInt(static_cast<std::uint64_t>(theta.size()))));
    }
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    for (Eigen::Index i : coords) {
      const double saved = theta.data()[i];
      theta.data()[i] = saved + options.step;
      const double up = LossAndGrad(probe, inst, objective_options, nullptr);
      theta.data()[i] = saved - options.step;
      const double down = LossAndGrad(probe, inst, objective_options, nullptr);
      theta.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = grad.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), report.floor});
      be.max_rel_error = std::max(be.max_rel_error, std::abs(a - numeric) / denom);
      ++be.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, be.max_rel_error);
    report.blocks.push_back(be);
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error <= options.threshold;
  return report;
}

}  // namespace natkit::toy
