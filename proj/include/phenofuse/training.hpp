#pragma once

// Mini-batch Adam training loop shared by all three regressors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "phenofuse/error.hpp"
#include "phenofuse/nn.hpp"

namespace phenofuse {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    // lr == 0 is accepted: it freezes the parameters, which tests rely on.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning rate must be a finite non-negative number");
    }
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  }
};

struct EpochStats {
  double loss = 0.0;               // sample-weighted mean of batch losses
  std::vector<double> per_head;    // same, per output column
};

struct TrainResult {
  nn::MlpModel model;
  nn::AdamState adam;
  std::vector<EpochStats> history;
};

/// Trains a freshly initialized MLP on rows of `inputs` against rows of
/// `targets` with loss sum_c MSE(column c). The last partial batch is kept.
/// Single-threaded and fully determined by (spec, data, config).
inline TrainResult train_regressor(const nn::MlpSpec& spec, const nn::Matrix<float>& inputs,
                                   const nn::Matrix<float>& targets, const TrainConfig& config) {
  config.validate();
  spec.validate();
  if (inputs.rows() == 0) throw InvalidArgument("training set is empty");
  if (inputs.rows() != targets.rows()) throw InvalidArgument("inputs and targets differ in row count");
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_size() ||
      static_cast<std::size_t>(targets.cols()) != spec.output_size()) {
    throw InvalidArgument("training data shape does not match MLP spec " + spec.to_string());
  }

  TrainResult result;
  result.model = nn::init_params(spec, config.seed);
  result.adam = nn::make_adam_state(result.model, config.learning_rate);

  const auto n = static_cast<std::size_t>(inputs.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  nn::Matrix<float> xb;
  nn::Matrix<float> yb;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochStats stats;
    stats.per_head.assign(spec.output_size(), 0.0);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t bs = std::min(config.batch_size, n - start);
      xb.resize(static_cast<Eigen::Index>(bs), inputs.cols());
      yb.resize(static_cast<Eigen::Index>(bs), targets.cols());
      for (std::size_t i = 0; i < bs; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = inputs.row(order[start + i]);
        yb.row(static_cast<Eigen::Index>(i)) = targets.row(order[start + i]);
      }
      auto fwd = nn::forward_batch(result.model, xb);
      auto loss = nn::column_mse_sum(fwd.output, yb);
      if (!std::isfinite(loss.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      const auto grads = nn::backward(result.model, fwd.tape, loss.gradient);
      nn::adam_step(result.model, grads, result.adam);
      stats.loss += loss.total * static_cast<double>(bs);
      for (std::size_t c = 0; c < stats.per_head.size(); ++c) {
        stats.per_head[c] += loss.per_column[c] * static_cast<double>(bs);
      }
    }
    stats.loss /= static_cast<double>(n);
    for (double& h : stats.per_head) h /= static_cast<double>(n);
    result.history.push_back(std::move(stats));
  }
  return result;
}

}  // namespace phenofuse
