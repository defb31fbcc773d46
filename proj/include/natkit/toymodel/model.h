#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "natkit/at_nat.h"
#include "natkit/core.h"
#include "natkit/dat.h"
#include "natkit/random.h"

namespace natkit::toy {

struct ModelConfig {
  int vocab_size = 0;
  int hidden = 16;          // d
  int ff = 32;              // d_ff
  int max_source_len = 16;  // S_max
  int upsample = 8;         // lambda, decoder positions per source token
  int max_offset = 20;      // length head covers T - S in [-max_offset, max_offset]
  /// Adds the embedding of the source token at the uniformly aligned
  /// position floor(m * S / M) to decoder position m. Without it the model
  /// only sees the mean-pooled source and is invariant to source order.
  bool uniform_copy = true;
  bool dat_star = false;    // allocate W_Q* / W_K*

  int PositionRows() const;
  void Check() const;
};

/// Parameters as named row-major blocks; gradients use the same layout.
class ModelParams {
 public:
  ModelParams() = default;
  /// Gaussian init scaled by 1/sqrt(fan_in); biases start at zero.
  static ModelParams Init(const ModelConfig& config, Rng& rng);
  static ModelParams Zeros(const ModelConfig& config);
  ModelParams ZerosLike() const { return Zeros(config_); }

  const ModelConfig& config() const { return config_; }

  Matrix embed, pos, pos_rev;  // V x d, P x d, P x d
  Matrix tgt_embed;            // V x d, observed target tokens
  Matrix w1, b1, w2, b2;       // d x ff, 1 x ff, ff x d, 1 x d
  Matrix w_out, b_out;         // d x V, 1 x V  (vocabulary projection)
  Matrix w_len, b_len;         // d x (2*max_offset+1), 1 x (2*max_offset+1)
  Matrix w_q, w_k;             // d x d
  Matrix w_q_star, w_k_star;   // d x d, empty unless config.dat_star

  std::vector<std::pair<std::string, Matrix*>> Blocks();
  std::vector<std::pair<std::string, const Matrix*>> Blocks() const;
  std::size_t ParameterCount() const;
  DatParams Dat() const;

  /// this += scale * other (same config).
  void AddScaled(const ModelParams& other, double scale);
  double SquaredNorm() const;

  /// {"format": "natkit-toymodel", "version": 1, "config": {...},
  ///  "blocks": {name: {"rows", "cols", "data": [row-major]}}}
  std::string ToJson() const;
  static ModelParams FromJson(const std::string& text);

 private:
  explicit ModelParams(ModelConfig config) : config_(std::move(config)) {}
  ModelConfig config_;
};

/// Which embeddings feed one decoder position.
struct PositionFeature {
  int pos = 0;       // row of `pos`
  int pos_rev = -1;  // row of `pos_rev`, -1 when the total length is unknown
  int aligned = -1;  // source index for the uniform copy, -1 for none
};
using PositionPlan = std::vector<PositionFeature>;

/// T positions, source index floor(m * S / T).
PositionPlan ExactPlan(int source_length, int target_length);
/// upsample * S positions, source index floor(m / upsample).
PositionPlan UpsampledPlan(int source_length, int upsample);
/// Single position for the next autoregressive step.
PositionPlan ArStepPlan(int source_length, int step);

struct ForwardCache {
  Vector pooled;    // mean source embedding
  Vector observed;  // mean observed-target embedding (zero if none)
  int observed_count = 0;
  Matrix u, z, states;  // inputs, tanh activations, decoder states H
};

struct ForwardResult {
  EmissionLattice emissions;
  Matrix states;  // M x d
  LengthDistribution length;
  ForwardCache cache;
};

/// u_m = mean_s E[x_s] + P[m] + R[rev m] + E[x_aligned(m)] + mean_o G[o]
/// H_m = u_m + W2^T tanh(W1^T u_m + b1) + b2
/// emissions = log_softmax(H W_out + b_out); length from the pooled source.
/// `observed` lists unmasked target tokens (the prefix for AT).
/// Glancing training would feed sampled reference tokens through the same
/// pathway; it is not implemented.
ForwardResult Forward(const ModelParams& params, const TokenSequence& source, const PositionPlan& plan,
                      std::span<const TokenId> observed = {});

struct BackwardInputs {
  const Matrix* grad_logits = nullptr;       // M x V
  const Matrix* grad_states = nullptr;       // M x d, e.g. from the transition
  const Vector* grad_length_logits = nullptr;
};

/// Accumulates parameter gradients into `grads`.
void Backward(const ModelParams& params, const TokenSequence& source, const PositionPlan& plan,
              std::span<const TokenId> observed, const ForwardCache& cache, const BackwardInputs& inputs,
              ModelParams& grads);

}  // namespace natkit::toy
