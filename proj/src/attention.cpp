#include "ifial/attention.hpp"

#include <cmath>

#include "ifial/errors.hpp"

namespace ifial {

MaskPair build_masks(const MaskVector& m) {
  const int L = static_cast<int>(m.size());
  if (L == 0) throw DataError("build_masks: empty mask vector");
  if (m[0] != 0) throw DataError("build_masks: CLS token (position 0) must be observed");
  MaskPair out;
  out.M1 = Eigen::MatrixXd::Zero(L, L);
  Eigen::VectorXd cbar(L);
  for (int j = 0; j < L; ++j) {
    cbar[j] = m[j] ? 0.0 : 1.0;
    if (m[j]) out.M1.col(j).setConstant(-kMaskLarge);
  }
  out.M2 = cbar * cbar.transpose();
  return out;
}

AttentionGrads zero_attention_grads(const AttentionParams& p) {
  AttentionGrads g;
  g.wq = Eigen::MatrixXd::Zero(p.model_dim, p.model_dim);
  g.wk = Eigen::MatrixXd::Zero(p.model_dim, p.model_dim);
  g.wv = Eigen::MatrixXd::Zero(p.model_dim, p.model_dim);
  g.wo = Eigen::MatrixXd::Zero(p.model_dim, p.model_dim);
  return g;
}

Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& X, const AttentionParams& p,
                                 const MaskPair& masks, AttentionCache* cache) {
  const int L = static_cast<int>(X.rows());
  const int D = p.model_dim;
  if (X.cols() != D) throw NumericError("masked_attention: token dim mismatch");
  if (masks.M1.rows() != L || masks.M2.rows() != L) throw NumericError("masked_attention: mask size mismatch");
  if (!X.allFinite()) throw NumericError("masked_attention: non-finite input tokens");

  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  const Eigen::MatrixXd Q = X * p.wq;
  const Eigen::MatrixXd K = X * p.wk;
  const Eigen::MatrixXd V = X * p.wv;

  Eigen::MatrixXd concat(L, D);
  std::vector<Eigen::MatrixXd> softmaxed;
  softmaxed.reserve(p.num_heads);
  for (int h = 0; h < p.num_heads; ++h) {
    const auto Qh = Q.middleCols(h * p.head_dim, p.head_dim);
    const auto Kh = K.middleCols(h * p.head_dim, p.head_dim);
    const auto Vh = V.middleCols(h * p.head_dim, p.head_dim);
    Eigen::MatrixXd S = (Qh * Kh.transpose()) * inv_sqrt_h + masks.M1;
    for (int i = 0; i < L; ++i) {
      // masked entries sit ~1e9 below the row max, so their exp underflows
      // to exactly 0 and the denominator equals the observed-column sum
      const double mx = S.row(i).maxCoeff();
      S.row(i) = (S.row(i).array() - mx).exp();
      S.row(i) /= S.row(i).sum();
    }
    concat.middleCols(h * p.head_dim, p.head_dim).noalias() = S.cwiseProduct(masks.M2) * Vh;
    softmaxed.push_back(std::move(S));
  }
  if (cache) {
    cache->X = X;
    cache->Q = Q;
    cache->K = K;
    cache->V = V;
    cache->S = std::move(softmaxed);
    cache->M2 = masks.M2;
    cache->concat = concat;
  }
  return concat * p.wo;
}

Eigen::MatrixXd masked_attention_backward(const Eigen::MatrixXd& grad_out, const AttentionParams& p,
                                          const AttentionCache& cache, AttentionGrads& grads) {
  const int L = static_cast<int>(cache.X.rows());
  if (grad_out.rows() != L || grad_out.cols() != p.model_dim)
    throw NumericError("masked_attention_backward: upstream gradient shape mismatch");

  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  grads.wo.noalias() += cache.concat.transpose() * grad_out;
  const Eigen::MatrixXd d_concat = grad_out * p.wo.transpose();

  Eigen::MatrixXd dQ(L, p.model_dim), dK(L, p.model_dim), dV(L, p.model_dim);
  for (int h = 0; h < p.num_heads; ++h) {
    const auto Qh = cache.Q.middleCols(h * p.head_dim, p.head_dim);
    const auto Kh = cache.K.middleCols(h * p.head_dim, p.head_dim);
    const auto Vh = cache.V.middleCols(h * p.head_dim, p.head_dim);
    const auto d_head = d_concat.middleCols(h * p.head_dim, p.head_dim);
    const Eigen::MatrixXd& S = cache.S[h];
    const Eigen::MatrixXd SM = S.cwiseProduct(cache.M2);

    dV.middleCols(h * p.head_dim, p.head_dim).noalias() = SM.transpose() * d_head;
    const Eigen::MatrixXd dSM = d_head * Vh.transpose();
    const Eigen::MatrixXd dS = dSM.cwiseProduct(cache.M2);
    // softmax backward row by row: ds = s o (dS - <s, dS>)
    Eigen::MatrixXd d_scores(L, L);
    for (int i = 0; i < L; ++i) {
      const double dot = S.row(i).dot(dS.row(i));
      d_scores.row(i) = (S.row(i).array() * (dS.row(i).array() - dot)).matrix();
    }
    dQ.middleCols(h * p.head_dim, p.head_dim).noalias() = d_scores * Kh * inv_sqrt_h;
    dK.middleCols(h * p.head_dim, p.head_dim).noalias() = d_scores.transpose() * Qh * inv_sqrt_h;
  }
  grads.wq.noalias() += cache.X.transpose() * dQ;
  grads.wk.noalias() += cache.X.transpose() * dK;
  grads.wv.noalias() += cache.X.transpose() * dV;
  Eigen::MatrixXd dX = dQ * p.wq.transpose();
  dX.noalias() += dK * p.wk.transpose();
  dX.noalias() += dV * p.wv.transpose();
  return dX;
}

}  // namespace ifial
