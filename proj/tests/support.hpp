#pragma once

// Independent oracles the tests check the library against: brute-force pair
// counting, textbook attention with no masking, IRLS logistic regression, and
// a seeded Gaussian two-class generator.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ifial/attention.hpp"
#include "ifial/dataset.hpp"
#include "ifial/eval.hpp"
#include "ifial/rng.hpp"

namespace testsupport {

// O(n^2) pair count with half credit for ties.
inline double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

// Multi-head attention with no masking at all; the mask-equivalence tests run
// it on the observed-token submatrix.
inline Eigen::MatrixXd plain_attention(const Eigen::MatrixXd& X, const ifial::AttentionParams& p) {
  const int L = static_cast<int>(X.rows());
  Eigen::MatrixXd concat(L, p.model_dim);
  for (int h = 0; h < p.num_heads; ++h) {
    const auto cols = Eigen::seqN(h * p.head_dim, p.head_dim);
    const Eigen::MatrixXd Q = X * p.wq(Eigen::all, cols);
    const Eigen::MatrixXd K = X * p.wk(Eigen::all, cols);
    const Eigen::MatrixXd V = X * p.wv(Eigen::all, cols);
    Eigen::MatrixXd S = Q * K.transpose() / std::sqrt(static_cast<double>(p.head_dim));
    for (int i = 0; i < L; ++i) {
      const Eigen::RowVectorXd e = (S.row(i).array() - S.row(i).maxCoeff()).exp();
      S.row(i) = e / e.sum();
    }
    concat(Eigen::all, cols) = S * V;
  }
  return concat * p.wo;
}

inline ifial::AttentionParams random_attention_params(int model_dim, int num_heads, ifial::Rng& rng) {
  ifial::AttentionParams p;
  p.model_dim = model_dim;
  p.num_heads = num_heads;
  p.head_dim = model_dim / num_heads;
  for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    w->resize(model_dim, model_dim);
    for (int i = 0; i < model_dim; ++i)
      for (int j = 0; j < model_dim; ++j) (*w)(i, j) = rng.normal() * 0.5;
  }
  return p;
}

// Two balanced Gaussian classes over d numerical features; the first
// `informative` features have class means +/- sep/2 (unit variance), the rest
// are pure noise.
inline ifial::Dataset gaussian_task(int n, int d, int informative, double sep, std::uint64_t seed) {
  std::vector<ifial::FeatureSchema> columns;
  for (int f = 0; f < d; ++f) {
    ifial::FeatureSchema col;
    col.name = "x" + std::to_string(f);
    columns.push_back(col);
  }
  ifial::FeatureSchema target;
  target.name = "label";
  target.role = ifial::ColumnRole::target;
  target.categories = {"0", "1"};
  columns.push_back(target);

  std::vector<int> labels(n);
  for (int r = 0; r < n; ++r) labels[r] = r % 2;

  std::vector<std::vector<ifial::Cell>> cells(d, std::vector<ifial::Cell>(n));
  for (int f = 0; f < d; ++f) {
    ifial::Rng rng(ifial::mix_seed(seed, "gauss", static_cast<std::uint64_t>(f)));
    for (int r = 0; r < n; ++r) {
      double mu = 0.0;
      if (f < informative) mu = labels[r] == 1 ? sep / 2.0 : -sep / 2.0;
      cells[f][r] = ifial::Cell::number(mu + rng.normal());
    }
  }
  return ifial::Dataset(std::move(columns), std::move(cells), std::move(labels));
}

// Ridge-stabilized IRLS logistic regression; returns P(y=1) for the given rows.
inline std::vector<double> logistic_scores(const ifial::Dataset& data, const std::vector<int>& train_rows,
                                           const std::vector<int>& score_rows) {
  const int d = data.d();
  auto design = [&](const std::vector<int>& rows) {
    Eigen::MatrixXd X(rows.size(), d + 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      X(i, 0) = 1.0;
      for (int f = 0; f < d; ++f) X(i, f + 1) = data.cell(rows[i], f).num;
    }
    return X;
  };
  const Eigen::MatrixXd X = design(train_rows);
  Eigen::VectorXd y(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) y(i) = data.label(train_rows[i]);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd prob(X.rows());
    for (int i = 0; i < prob.size(); ++i) prob(i) = 1.0 / (1.0 + std::exp(-X.row(i).dot(w)));
    const Eigen::VectorXd wt = prob.array() * (1.0 - prob.array());
    Eigen::MatrixXd H = X.transpose() * wt.asDiagonal() * X;
    H.diagonal().array() += 1e-6;
    const Eigen::VectorXd g = X.transpose() * (y - prob);
    const Eigen::VectorXd step = H.ldlt().solve(g);
    w += step;
    if (step.norm() < 1e-10) break;
  }

  const Eigen::MatrixXd Xs = design(score_rows);
  std::vector<double> out(score_rows.size());
  for (std::size_t i = 0; i < score_rows.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-Xs.row(i).dot(w)));
  return out;
}

// Stratified k-fold mean AUC of the IRLS oracle.
inline double logistic_cv_auc(const ifial::Dataset& data, int folds, std::uint64_t seed) {
  const auto assign = ifial::stratified_folds(data.labels(), folds, seed);
  double sum = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (int r = 0; r < data.n(); ++r) (assign[r] == f ? test : train).push_back(r);
    const auto scores = logistic_scores(data, train, test);
    std::vector<int> labels;
    for (int r : test) labels.push_back(data.label(r));
    sum += ifial::auc(scores, labels);
  }
  return sum / folds;
}

}  // namespace testsupport
