#include "natkit/toymodel/train.h"

#include <cmath>
#include <numeric>
#include <sstream>

namespace natkit::toy {

void TrainConfig::Check() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train: learning rate must be finite and >= 0");
  }
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
}

TrainResult Train(const Corpus& corpus, const ModelParams& init, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch) {
  config.Check();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  TrainResult result{init, {}};
  ModelParams& params = result.params;
  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with our own generator keeps the order portable.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.UniformInt(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      ModelParams grads = params.ZerosLike();
      for (std::size_t b = start; b < end; ++b) {
        const CorpusEntry& entry = corpus[order[b]];
        PreparedInstance inst = Prepare(config.objective, params, entry, rng, config.options);
        const double loss = LossAndGrad(params, inst, config.options, &grads);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "training diverged: loss " << loss << " on '" << entry.id << "' in epoch " << epoch + 1
              << " (objective " << ToString(config.objective) << ", lr " << config.learning_rate << ")";
          throw TrainingDivergedError(msg.str());
        }
        epoch_loss += loss;
      }
      if (config.learning_rate == 0.0) continue;
      double scale = 1.0 / static_cast<double>(end - start);
      const double norm = std::sqrt(grads.SquaredNorm()) * scale;
      if (!std::isfinite(norm)) throw TrainingDivergedError("training diverged: non-finite gradient norm");
      if (config.clip_norm > 0.0 && norm > config.clip_norm) scale *= config.clip_norm / norm;
      params.AddScaled(grads, -config.learning_rate * scale);
    }
    const double mean = epoch_loss / static_cast<double>(corpus.size());
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

}  // namespace natkit::toy
