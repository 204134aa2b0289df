#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pararank/ranker.hpp"

namespace pararank {

struct TrainingConfig {
  std::size_t negatives_per_positive = 4;
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables clipping
};

struct TrainingExample {
  TokenSeq question;
  const Paragraph* positive = nullptr;
  std::vector<std::string> answers;
};

struct TrainingLog {
  std::vector<double> epoch_mean_loss;
};

/// Adamax (infinity-norm Adam) over a flat list of tensors.
class Adamax {
 public:
  Adamax(double learning_rate, double beta1, double beta2, double epsilon);

  /// Applies one update to `params` from `grads`; both lists must describe
  /// the same shapes in the same order.
  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> u_;
};

/// Sum of squares over every gradient entry, square-rooted.
double global_norm(const std::vector<TensorRef>& grads);

/// Negative-sampling training of every trainable parameter. Shuffling,
/// negatives and dropout masks all derive from config.seed.
TrainingLog train(RankerModel& model, std::span<const TrainingExample> dataset,
                  const NoiseDistribution& noise, const TrainingConfig& config);

}  // namespace pararank
