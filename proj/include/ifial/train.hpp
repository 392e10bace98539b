#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ifial/dataset.hpp"
#include "ifial/model.hpp"
#include "ifial/partition.hpp"

namespace ifial {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int max_epochs = 100;
  int batch_size = 32;
  int patience = 15;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
  enum class EpochPolicy : std::uint8_t { full_budget, divided };
  EpochPolicy epochs_per_session = EpochPolicy::full_budget;  // divided = max_epochs / P per session
  bool reset_adam_per_session = true;

  static TrainConfig full_size();  // lr 1e-5, 300 epochs, batch 128, patience 50
  static TrainConfig desk();   // lr 1e-3, 100 epochs, batch 32, patience 15
  void validate() const;
};

struct SessionLog {
  int window = 0;
  int epochs_run = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  long t = 0;
  std::map<std::string, std::pair<Eigen::VectorXd, Eigen::VectorXd>> moments;  // (m, v) per tensor

  // Only tensors present in `grads` are touched, so parameters of features
  // outside the current window stay bit-identical.
  void step(ModelState& state, const Gradients& grads);
  void reset();
};

struct TrainResult {
  ModelState state;
  std::vector<SessionLog> sessions;
  std::vector<std::string> warnings;
};

// Algorithm: one shared model trained sequentially over the plan's windows,
// Adam + early stopping on a stratified validation split carved once from the
// given rows and reused by every session.
TrainResult train_ifial(const Dataset& data, const PartitionPlan& plan, const ModelConfig& mcfg,
                        const TrainConfig& tcfg);

// Inference over ALL d features (sequence length d+1, masks from actual
// missingness); returns row-stochastic class probabilities.
Eigen::MatrixXd predict(const ModelState& state, const Dataset& data, const std::vector<int>& rows,
                        std::vector<std::string>* warnings = nullptr);

// Stratified (val, train) split helper shared with the evaluation harness;
// falls back to a plain split when some class has fewer than 2 rows.
std::pair<std::vector<int>, std::vector<int>> val_split(const std::vector<int>& rows,
                                                        const std::vector<int>& labels, int class_count,
                                                        double val_fraction, std::uint64_t seed,
                                                        std::vector<std::string>* warnings = nullptr);

}  // namespace ifial
