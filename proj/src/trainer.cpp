#include "pararank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pararank/errors.hpp"

namespace pararank {

Adamax::Adamax(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
}

void Adamax::step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
  if (params.size() != grads.size()) throw DimensionError("adamax: tensor count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      u_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double step_size = lr_ / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || m_[k].size() != params[k].size()) {
      throw DimensionError("adamax: shape mismatch at " + params[k].name);
    }
    double* theta = params[k].data;
    const double* g = grads[k].data;
    auto& m = m_[k];
    auto& u = u_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      u[i] = std::max(beta2_ * u[i], std::abs(g[i]));
      theta[i] -= step_size * m[i] / (u[i] + eps_);
    }
  }
}

double global_norm(const std::vector<TensorRef>& grads) {
  double sum = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values()) sum += v * v;
  }
  return std::sqrt(sum);
}

TrainingLog train(RankerModel& model, std::span<const TrainingExample> dataset,
                  const NoiseDistribution& noise, const TrainingConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  if (config.negatives_per_positive == 0) throw std::invalid_argument("k_neg must be at least 1");
  if (!(config.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  for (const auto& ex : dataset) {
    if (ex.positive == nullptr) throw std::invalid_argument("training example without positive");
  }
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

  Rng rng(config.seed);
  Adamax optimizer(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  std::vector<TensorRef> params = model.tensors();
  TrainingLog log;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      RankerModel accum = model.zeros_like();
      std::vector<TensorRef> grads = accum.tensors();
      for (std::size_t pos = start; pos < end; ++pos) {
        const auto idx = order[pos];
        const auto& ex = dataset[idx];
        const auto negatives =
            noise.sample_negatives(*ex.positive, ex.answers, config.negatives_per_positive, rng);
        auto result = nce_loss(model, ex.question, *ex.positive, negatives, Mode::Train, &rng);
        if (!std::isfinite(result.loss)) {
          throw NumericError("non-finite loss at training example " + std::to_string(idx) +
                             " (epoch " + std::to_string(epoch) + ")");
        }
        loss_sum += result.loss;
        const auto example_grads = result.gradient.tensors();
        for (std::size_t k = 0; k < grads.size(); ++k) {
          auto dst = grads[k].values();
          auto src = example_grads[k].values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (double& v : g.values()) v *= scale;
      }
      const double norm = global_norm(grads);
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient in batch starting at example " +
                           std::to_string(order[start]));
      }
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        const double shrink = config.clip_norm / norm;
        for (auto& g : grads) {
          for (double& v : g.values()) v *= shrink;
        }
      }
      optimizer.step(params, grads);
    }
    log.epoch_mean_loss.push_back(loss_sum / static_cast<double>(dataset.size()));
  }
  return log;
}

}  // namespace pararank
