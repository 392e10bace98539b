#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ifial/attention.hpp"
#include "ifial/dataset.hpp"
#include "ifial/rng.hpp"

namespace ifial {

enum class Activation : std::uint8_t { relu, gelu, leakyrelu };
std::string activation_name(Activation a);
Activation parse_activation(const std::string& s);

struct ModelConfig {
  int model_dim = 128;
  int num_layers = 2;
  int num_heads = 8;
  int ffn_dim = 2048;
  double dropout = 0.3;
  Activation activation = Activation::relu;
  bool gated_ffn = false;  // elementwise sigmoid gate on the FFN hidden branch
  int class_count = 2;

  static ModelConfig full_size(int classes = 2);  // 128 dim / 2 layers / 8 heads / 2048 ffn
  static ModelConfig desk(int classes = 2);   // 64 dim / 2 layers / 4 heads / 256 ffn
  void validate() const;
};

struct LayerParams {
  AttentionParams attn;
  Eigen::MatrixXd w1;  // model_dim x ffn_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd wg;  // gate projection (empty unless gated_ffn)
  Eigen::VectorXd bg;
  Eigen::MatrixXd w2;  // ffn_dim x model_dim
  Eigen::VectorXd b2;
  Eigen::VectorXd ln1_g, ln1_b;  // post-attention layer norm
  Eigen::VectorXd ln2_g, ln2_b;  // post-FFN layer norm
};

// Embedding tables are keyed by feature NAME, so a feature shared by two
// overlapping partition windows indexes the same storage — this is what lets
// one model be trained incrementally across windows.
struct ModelState {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  Eigen::VectorXd cls;
  std::vector<LayerParams> layers;
  Eigen::MatrixXd head_w;  // model_dim x class_count
  Eigen::VectorXd head_b;

  std::map<std::string, Eigen::VectorXd> name_emb;
  std::map<std::string, Eigen::VectorXd> value_proj;  // numerical: token += value * value_proj
  std::map<std::string, std::map<std::string, Eigen::VectorXd>> cat_emb;

  bool has_feature(const std::string& name) const { return name_emb.count(name) != 0; }
  // Seeded by (init_seed, feature name), so registration order cannot change
  // the initialization. Idempotent.
  void register_feature(const FeatureSchema& schema);
};

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed);

struct LayerGrads {
  AttentionGrads attn;
  Eigen::MatrixXd w1, wg, w2;
  Eigen::VectorXd b1, bg, b2, ln1_g, ln1_b, ln2_g, ln2_b;
};

// Mirrors ModelState; feature-table entries exist only for features actually
// touched by the batch, so everything else is structurally zero.
struct Gradients {
  Eigen::VectorXd cls;
  std::vector<LayerGrads> layers;
  Eigen::MatrixXd head_w;
  Eigen::VectorXd head_b;
  std::map<std::string, Eigen::VectorXd> name_emb;
  std::map<std::string, Eigen::VectorXd> value_proj;
  std::map<std::string, std::map<std::string, Eigen::VectorXd>> cat_emb;
};

Gradients zero_grads(const ModelState& state);

struct TokenBatch {
  int B = 0, L = 0, D = 0;
  Eigen::MatrixXd X;            // (B*L) x D, sample s owns rows [s*L, (s+1)*L)
  std::vector<MaskVector> m;    // per sample
  struct Source {               // provenance for the embedding scatter in backward
    const FeatureSchema* schema = nullptr;  // null for CLS
    CellKind kind = CellKind::missing;
    double value = 0.0;
    int cat = -1;
  };
  std::vector<Source> src;      // length B*L
};

// Training path: unseen features are registered with seeded init on first sight.
TokenBatch tokenize(const DatasetView& view, ModelState& state, const std::vector<int>& rows);
// Inference path: unseen features either raise an error or degrade to Missing
// with a warning (predict uses the latter).
TokenBatch tokenize_frozen(const DatasetView& view, const ModelState& state, const std::vector<int>& rows,
                           bool missing_on_unseen = false, std::vector<std::string>* warnings = nullptr);

struct ForwardCache;

// Returns logits (B x class_count). train_mode enables seeded dropout on the
// token embeddings and the FFN hidden layer.
Eigen::MatrixXd forward(const TokenBatch& batch, const ModelState& state, bool train_mode,
                        Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr);

// Mean cross-entropy over the batch plus reverse-mode gradients for every
// parameter reachable from it.
double loss_and_grad(const TokenBatch& batch, const std::vector<int>& labels, const ModelState& state,
                     Rng& dropout_rng, Gradients& grads);

double mean_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels);
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// Flat named views over every parameter tensor, in a fixed deterministic
// order; used by the optimizer, the checkpoint writer, and the
// finite-difference harness.
std::vector<std::pair<std::string, Eigen::Map<Eigen::VectorXd>>> param_views(ModelState& s);
std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> param_views(const ModelState& s);
std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> grad_views(const Gradients& g);

// Checkpoint: versioned JSON, f64 payloads stored as hex bit patterns so a
// load -> save round trip is byte-identical.
std::string checkpoint_to_json(const ModelState& state, const FeatureStats* stats = nullptr,
                               const std::vector<FeatureSchema>* schema = nullptr);
void save_checkpoint(const ModelState& state, const std::string& path, const FeatureStats* stats = nullptr,
                     const std::vector<FeatureSchema>* schema = nullptr);
struct Checkpoint {
  ModelState state;
  bool has_stats = false;
  FeatureStats stats;
  std::vector<FeatureSchema> schema;  // feature columns only, when stats present
};
Checkpoint load_checkpoint(const std::string& path);

// Definition exposed for the training loop's cache reuse; treat as opaque.
struct ForwardCache {
  struct Layer {
    Eigen::MatrixXd x_in;                  // layer input
    std::vector<AttentionCache> attn;      // per sample
    Eigen::MatrixXd r1, xhat1;             // residual 1 and its normalized image
    Eigen::VectorXd inv_std1;
    Eigen::MatrixXd h;                     // LN1 output = FFN input
    Eigen::MatrixXd z1, hidden_pre, gate_z, gate, hidden_dropped;
    Eigen::MatrixXd ffn_drop_mask;
    Eigen::MatrixXd r2, xhat2;
    Eigen::VectorXd inv_std2;
  };
  Eigen::MatrixXd x_tokens;       // embeddings after token dropout
  Eigen::MatrixXd token_drop_mask;
  std::vector<Layer> layers;
  Eigen::MatrixXd cls_out;        // B x D rows fed to the head
  Eigen::MatrixXd logits;
  std::vector<MaskPair> masks;    // per sample, shared across layers
};

}  // namespace ifial
