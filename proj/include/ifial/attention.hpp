#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ifial {

// 1 = missing token, 0 = observed; index 0 is the CLS token and must be 0 so
// every softmax row keeps at least one live column.
using MaskVector = std::vector<std::uint8_t>;

// Additive mask value standing in for -inf. exp(x - 1e9) underflows to an
// exact 0.0 in f64 for any realistic score x, which makes masked columns
// contribute nothing, bit for bit, while keeping the backward pass NaN-free.
inline constexpr double kMaskLarge = 1e9;

struct MaskPair {
  Eigen::MatrixXd M1;  // L x L additive: column j = -kMaskLarge iff m[j] = 1
  Eigen::MatrixXd M2;  // L x L multiplicative: outer(1-m, 1-m)
};

MaskPair build_masks(const MaskVector& m);

struct AttentionParams {
  int model_dim = 0;
  int num_heads = 0;
  int head_dim = 0;  // model_dim / num_heads
  // heads are packed side by side: head h owns columns [h*head_dim, (h+1)*head_dim)
  Eigen::MatrixXd wq, wk, wv;  // model_dim x model_dim
  Eigen::MatrixXd wo;          // model_dim x model_dim (concat -> model_dim)
};

struct AttentionGrads {
  Eigen::MatrixXd wq, wk, wv, wo;
};

AttentionGrads zero_attention_grads(const AttentionParams& p);

struct AttentionCache {
  Eigen::MatrixXd X;                // L x model_dim input tokens
  Eigen::MatrixXd Q, K, V;          // L x model_dim, heads packed
  std::vector<Eigen::MatrixXd> S;   // per head: row-softmaxed scores, L x L
  Eigen::MatrixXd M2;               // multiplicative mask used in forward
  Eigen::MatrixXd concat;           // L x model_dim pre-output-projection
};

// One sample. scores = Q K^T / sqrt(head_dim) + M1, rows softmaxed, Hadamard
// with M2, applied to V; heads concatenated then output-projected. Missing
// rows of `concat` are exactly zero (M2 kills the whole row); missing columns
// carry exactly zero weight (M1 underflow).
Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& X, const AttentionParams& p,
                                 const MaskPair& masks, AttentionCache* cache = nullptr);

// Reverse-mode gradients of the forward composition; masks are constants and
// receive none. Returns dX and accumulates into `grads`.
Eigen::MatrixXd masked_attention_backward(const Eigen::MatrixXd& grad_out, const AttentionParams& p,
                                          const AttentionCache& cache, AttentionGrads& grads);

}  // namespace ifial
