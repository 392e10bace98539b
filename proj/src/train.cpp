#include "ifial/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ifial/errors.hpp"

namespace ifial {

TrainConfig TrainConfig::full_size() {
  TrainConfig t;
  t.learning_rate = 1e-5;
  t.max_epochs = 300;
  t.batch_size = 128;
  t.patience = 50;
  return t;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1 || patience >= max_epochs)
    throw ConfigError("patience must satisfy 1 <= patience < max_epochs");
  if (!(val_fraction > 0.0 && val_fraction < 0.5))
    throw ConfigError("val_fraction must lie in (0, 0.5)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

void Adam::reset() {
  t = 0;
  moments.clear();
}

void Adam::step(ModelState& state, const Gradients& grads) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));

  std::map<std::string, Eigen::Map<Eigen::VectorXd>> params;
  for (auto& [name, view] : param_views(state)) params.emplace(name, view);

  for (const auto& [name, g] : grad_views(grads)) {
    auto pit = params.find(name);
    if (pit == params.end()) throw NumericError("optimizer: gradient for unknown parameter " + name);
    auto& theta = pit->second;
    auto [mit, fresh] = moments.try_emplace(name, Eigen::VectorXd::Zero(g.size()), Eigen::VectorXd::Zero(g.size()));
    auto& [m, v] = mit->second;
    (void)fresh;
    Eigen::VectorXd grad = g;
    if (weight_decay != 0.0) grad += weight_decay * theta;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const Eigen::VectorXd mhat = m / bc1;
    const Eigen::VectorXd vhat = v / bc2;
    theta.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

std::pair<std::vector<int>, std::vector<int>> val_split(const std::vector<int>& rows,
                                                        const std::vector<int>& labels, int class_count,
                                                        double val_fraction, std::uint64_t seed,
                                                        std::vector<std::string>* warnings) {
  Rng rng(mix_seed(seed, "val_split"));
  std::vector<std::vector<int>> by_class(class_count);
  for (int r : rows) by_class[labels[r]].push_back(r);

  bool stratifiable = true;
  for (const auto& cls : by_class) {
    if (!cls.empty() && cls.size() < 2) stratifiable = false;
  }

  std::vector<int> val, train;
  if (stratifiable) {
    for (auto& cls : by_class) {
      if (cls.empty()) continue;
      rng.shuffle(cls);
      const auto n = static_cast<long>(cls.size());
      long nv = std::lround(val_fraction * static_cast<double>(n));
      nv = std::clamp(nv, 1L, n - 1);
      val.insert(val.end(), cls.begin(), cls.begin() + nv);
      train.insert(train.end(), cls.begin() + nv, cls.end());
    }
  } else {
    if (warnings) warnings->push_back("a class has fewer than 2 rows; validation split is not stratified");
    std::vector<int> shuffled = rows;
    rng.shuffle(shuffled);
    const auto n = static_cast<long>(shuffled.size());
    if (n < 2) throw DataError("need at least 2 rows to carve a validation split");
    long nv = std::clamp(std::lround(val_fraction * static_cast<double>(n)), 1L, n - 1);
    val.assign(shuffled.begin(), shuffled.begin() + nv);
    train.assign(shuffled.begin() + nv, shuffled.end());
  }
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {val, train};
}

namespace {

double validation_loss(const DatasetView& view, const ModelState& state, const std::vector<int>& val_rows) {
  const TokenBatch batch = tokenize_frozen(view, state, val_rows);
  const Eigen::MatrixXd logits = forward(batch, state, false);
  std::vector<int> labels(val_rows.size());
  for (std::size_t i = 0; i < val_rows.size(); ++i) labels[i] = view.label(val_rows[i]);
  return mean_cross_entropy(logits, labels);
}

}  // namespace

TrainResult train_ifial(const Dataset& data, const PartitionPlan& plan, const ModelConfig& mcfg,
                        const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (mcfg.class_count != data.class_count())
    throw ConfigError("model class_count " + std::to_string(mcfg.class_count) + " does not match dataset's " +
                      std::to_string(data.class_count()));

  TrainResult result;
  std::vector<int> all_rows(data.n());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  auto [val_rows, train_rows] =
      val_split(all_rows, data.labels(), data.class_count(), tcfg.val_fraction, tcfg.seed, &result.warnings);

  ModelState model = init_model(mcfg, mix_seed(tcfg.seed, "init"));

  int budget = tcfg.max_epochs;
  if (tcfg.epochs_per_session == TrainConfig::EpochPolicy::divided)
    budget = std::max(1, tcfg.max_epochs / plan.P);
  const int patience = std::min(tcfg.patience, std::max(1, budget - 1));

  Adam adam;
  adam.lr = tcfg.learning_rate;
  adam.weight_decay = tcfg.weight_decay;

  for (int i = 0; i < plan.P; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const DatasetView view = partition_view(data, plan, i);
    if (tcfg.reset_adam_per_session || i == 0) adam.reset();

    Rng shuffle_rng(mix_seed(tcfg.seed, "shuffle", static_cast<std::uint64_t>(i)));
    Rng dropout_rng(mix_seed(tcfg.seed, "dropout", static_cast<std::uint64_t>(i)));

    SessionLog log;
    log.window = i;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    ModelState best_model = model;

    std::vector<int> order = train_rows;
    for (int epoch = 1; epoch <= budget; ++epoch) {
      shuffle_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
        const auto end = std::min(order.size(), start + tcfg.batch_size);
        const std::vector<int> rows(order.begin() + start, order.begin() + end);
        const TokenBatch batch = tokenize(view, model, rows);
        std::vector<int> labels(rows.size());
        for (std::size_t b = 0; b < rows.size(); ++b) labels[b] = data.label(rows[b]);
        Gradients grads = zero_grads(model);
        loss_and_grad(batch, labels, model, dropout_rng, grads);
        adam.step(model, grads);
      }
      const double vloss = validation_loss(view, model, val_rows);
      if (!std::isfinite(vloss)) throw NumericError("validation loss diverged in session " + std::to_string(i));
      log.epochs_run = epoch;
      if (vloss < best_val) {
        best_val = vloss;
        best_epoch = epoch;
        best_model = model;
      } else if (epoch - best_epoch >= patience) {
        log.early_stopped = true;
        break;
      }
    }
    model = std::move(best_model);  // restore the best-validation parameters
    log.best_val_loss = best_val;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.sessions.push_back(log);
  }
  result.state = std::move(model);
  return result;
}

Eigen::MatrixXd predict(const ModelState& state, const Dataset& data, const std::vector<int>& rows,
                        std::vector<std::string>* warnings) {
  std::vector<int> features(data.d());
  std::iota(features.begin(), features.end(), 0);
  const DatasetView view(data, features);

  Eigen::MatrixXd probs(static_cast<long>(rows.size()), state.config.class_count);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const auto end = std::min(rows.size(), start + kChunk);
    const std::vector<int> chunk(rows.begin() + start, rows.begin() + end);
    const TokenBatch batch = tokenize_frozen(view, state, chunk, true, warnings);
    probs.middleRows(static_cast<long>(start), static_cast<long>(end - start)) =
        softmax_rows(forward(batch, state, false));
  }
  return probs;
}

}  // namespace ifial
