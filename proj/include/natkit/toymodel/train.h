#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "natkit/corpus.h"
#include "natkit/toymodel/model.h"
#include "natkit/toymodel/objectives.h"

namespace natkit::toy {

/// Loss became NaN or infinite.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 16;
  Objective objective = Objective::kNat;
  /// Global L2 norm bound on the batch gradient; <= 0 disables clipping.
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  ObjectiveOptions options;

  void Check() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // mean instance loss per epoch
};

/// Plain SGD over shuffled mini-batches; the batch gradient is the mean
/// of instance gradients. Deterministic for a given seed.
/// `on_epoch(epoch, mean_loss)` is called after every epoch when set.
TrainResult Train(const Corpus& corpus, const ModelParams& init, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch = {});

}  // namespace natkit::toy
