#include "ifial/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ifial/errors.hpp"

namespace ifial {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::leakyrelu: return "leakyrelu";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "leakyrelu") return Activation::leakyrelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu|gelu|leakyrelu)");
}

ModelConfig ModelConfig::full_size(int classes) {
  ModelConfig c;
  c.class_count = classes;
  return c;  // defaults are the full-size constants
}

ModelConfig ModelConfig::desk(int classes) {
  ModelConfig c;
  c.model_dim = 64;
  c.num_layers = 2;
  c.num_heads = 4;
  c.ffn_dim = 256;
  c.class_count = classes;
  return c;
}

void ModelConfig::validate() const {
  if (model_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ffn_dim <= 0)
    throw ConfigError("model dimensions must be positive");
  if (model_dim % num_heads != 0)
    throw ConfigError("model_dim (" + std::to_string(model_dim) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
}

namespace {

constexpr double kLnEps = 1e-5;

Eigen::MatrixXd uniform_init(int rows, int cols, double bound, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

Eigen::VectorXd uniform_init_vec(int n, double bound, std::uint64_t seed) {
  return uniform_init(n, 1, bound, seed);
}

double act_value(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::gelu: return 0.5 * z * (1.0 + std::erf(z * 0.7071067811865476));
    case Activation::leakyrelu: return z > 0.0 ? z : 0.01 * z;
  }
  return z;
}

double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(z * 0.7071067811865476));
      const double pdf = std::exp(-0.5 * z * z) * 0.3989422804014327;
      return cdf + z * pdf;
    }
    case Activation::leakyrelu: return z > 0.0 ? 1.0 : 0.01;
  }
  return 1.0;
}

Eigen::MatrixXd apply_act(Activation a, const Eigen::MatrixXd& z) {
  return z.unaryExpr([a](double v) { return act_value(a, v); });
}

Eigen::MatrixXd apply_act_deriv(Activation a, const Eigen::MatrixXd& z) {
  return z.unaryExpr([a](double v) { return act_deriv(a, v); });
}

// fixed element order so dropout masks reproduce bit-for-bit
Eigen::MatrixXd dropout_mask(int rows, int cols, double p, Rng& rng) {
  const double keep = 1.0 - p;
  const double scale = 1.0 / keep;
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform() < keep ? scale : 0.0;
  }
  return m;
}

// y = g o (x-mu)/sqrt(var+eps) + b per row; returns y, fills xhat and inv_std
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                           Eigen::MatrixXd& xhat, Eigen::VectorXd& inv_std) {
  const int R = static_cast<int>(x.rows());
  const int D = static_cast<int>(x.cols());
  xhat.resize(R, D);
  inv_std.resize(R);
  Eigen::MatrixXd y(R, D);
  for (int r = 0; r < R; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kLnEps);
    inv_std[r] = is;
    xhat.row(r) = (x.row(r).array() - mu) * is;
    y.row(r) = xhat.row(r).cwiseProduct(g.transpose()) + b.transpose();
  }
  return y;
}

// gradients through layer_norm; accumulates dg/db, returns dx
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& xhat,
                                    const Eigen::VectorXd& inv_std, const Eigen::VectorXd& g,
                                    Eigen::VectorXd& dg, Eigen::VectorXd& db) {
  const int R = static_cast<int>(dy.rows());
  const int D = static_cast<int>(dy.cols());
  Eigen::MatrixXd dx(R, D);
  for (int r = 0; r < R; ++r) {
    dg += dy.row(r).cwiseProduct(xhat.row(r)).transpose();
    db += dy.row(r).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) = ((dxhat.array() - m1) - xhat.row(r).array() * m2) * inv_std[r];
  }
  return dx;
}

}  // namespace

void ModelState::register_feature(const FeatureSchema& schema) {
  const int D = config.model_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(D));
  if (!has_feature(schema.name)) {
    name_emb[schema.name] = uniform_init_vec(D, bound, mix_seed(init_seed, "feat_name", schema.name));
    if (schema.kind == FeatureKind::numerical)
      value_proj[schema.name] = uniform_init_vec(D, bound, mix_seed(init_seed, "feat_proj", schema.name));
  }
  if (schema.kind == FeatureKind::categorical) {
    auto& table = cat_emb[schema.name];
    for (const auto& cat : schema.categories) {
      if (!table.count(cat))
        table[cat] = uniform_init_vec(D, bound, mix_seed(init_seed, "feat_cat", schema.name, cat));
    }
  }
}

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState s;
  s.config = cfg;
  s.init_seed = seed;
  const int D = cfg.model_dim;
  const int F = cfg.ffn_dim;
  const double bd = 1.0 / std::sqrt(static_cast<double>(D));
  const double bf = 1.0 / std::sqrt(static_cast<double>(F));

  s.cls = uniform_init_vec(D, bd, mix_seed(seed, "cls"));
  s.head_w = uniform_init(D, cfg.class_count, bd, mix_seed(seed, "head_w"));
  s.head_b = Eigen::VectorXd::Zero(cfg.class_count);

  s.layers.resize(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& layer = s.layers[l];
    const auto lt = static_cast<std::uint64_t>(l);
    layer.attn.model_dim = D;
    layer.attn.num_heads = cfg.num_heads;
    layer.attn.head_dim = D / cfg.num_heads;
    layer.attn.wq = uniform_init(D, D, bd, mix_seed(seed, "layer", lt, "wq"));
    layer.attn.wk = uniform_init(D, D, bd, mix_seed(seed, "layer", lt, "wk"));
    layer.attn.wv = uniform_init(D, D, bd, mix_seed(seed, "layer", lt, "wv"));
    layer.attn.wo = uniform_init(D, D, bd, mix_seed(seed, "layer", lt, "wo"));
    layer.w1 = uniform_init(D, F, bd, mix_seed(seed, "layer", lt, "w1"));
    layer.b1 = Eigen::VectorXd::Zero(F);
    layer.w2 = uniform_init(F, D, bf, mix_seed(seed, "layer", lt, "w2"));
    layer.b2 = Eigen::VectorXd::Zero(D);
    if (cfg.gated_ffn) {
      layer.wg = uniform_init(D, F, bd, mix_seed(seed, "layer", lt, "wg"));
      layer.bg = Eigen::VectorXd::Zero(F);
    }
    layer.ln1_g = Eigen::VectorXd::Ones(D);
    layer.ln1_b = Eigen::VectorXd::Zero(D);
    layer.ln2_g = Eigen::VectorXd::Ones(D);
    layer.ln2_b = Eigen::VectorXd::Zero(D);
  }
  return s;
}

Gradients zero_grads(const ModelState& state) {
  const auto& cfg = state.config;
  Gradients g;
  g.cls = Eigen::VectorXd::Zero(cfg.model_dim);
  g.head_w = Eigen::MatrixXd::Zero(cfg.model_dim, cfg.class_count);
  g.head_b = Eigen::VectorXd::Zero(cfg.class_count);
  g.layers.resize(cfg.num_layers);
  for (auto& lg : g.layers) {
    lg.attn = zero_attention_grads(state.layers[0].attn);
    lg.w1 = Eigen::MatrixXd::Zero(cfg.model_dim, cfg.ffn_dim);
    lg.b1 = Eigen::VectorXd::Zero(cfg.ffn_dim);
    lg.w2 = Eigen::MatrixXd::Zero(cfg.ffn_dim, cfg.model_dim);
    lg.b2 = Eigen::VectorXd::Zero(cfg.model_dim);
    if (cfg.gated_ffn) {
      lg.wg = Eigen::MatrixXd::Zero(cfg.model_dim, cfg.ffn_dim);
      lg.bg = Eigen::VectorXd::Zero(cfg.ffn_dim);
    }
    lg.ln1_g = Eigen::VectorXd::Zero(cfg.model_dim);
    lg.ln1_b = Eigen::VectorXd::Zero(cfg.model_dim);
    lg.ln2_g = Eigen::VectorXd::Zero(cfg.model_dim);
    lg.ln2_b = Eigen::VectorXd::Zero(cfg.model_dim);
  }
  return g;
}

namespace {

TokenBatch tokenize_impl(const DatasetView& view, const ModelState& state, ModelState* mutable_state,
                         const std::vector<int>& rows, bool missing_on_unseen,
                         std::vector<std::string>* warnings) {
  const int D = state.config.model_dim;
  const int k = view.d();
  const int L = k + 1;
  const int B = static_cast<int>(rows.size());

  if (mutable_state) {
    for (int j = 0; j < k; ++j) mutable_state->register_feature(view.feature(j));
  }

  TokenBatch batch;
  batch.B = B;
  batch.L = L;
  batch.D = D;
  batch.X.resize(static_cast<long>(B) * L, D);
  batch.m.assign(B, MaskVector(L, 0));
  batch.src.resize(static_cast<std::size_t>(B) * L);

  auto warn_once = [&](const std::string& msg) {
    if (!warnings) return;
    for (const auto& w : *warnings)
      if (w == msg) return;
    warnings->push_back(msg);
  };

  for (int s = 0; s < B; ++s) {
    const int row = rows[s];
    const long base = static_cast<long>(s) * L;
    batch.X.row(base) = state.cls.transpose();
    batch.src[base] = TokenBatch::Source{};  // CLS
    for (int j = 0; j < k; ++j) {
      const FeatureSchema& schema = view.feature(j);
      auto& src = batch.src[base + 1 + j];
      src.schema = &schema;
      const auto name_it = state.name_emb.find(schema.name);
      if (name_it == state.name_emb.end()) {
        if (!missing_on_unseen)
          throw DataError("feature '" + schema.name + "' was never seen in training");
        warn_once("feature '" + schema.name + "' unseen in training; treated as missing");
        batch.X.row(base + 1 + j).setZero();
        batch.m[s][1 + j] = 1;
        src.kind = CellKind::missing;
        continue;
      }
      const Cell& cell = view.cell(row, j);
      src.kind = cell.kind;
      if (cell.is_missing()) {
        batch.X.row(base + 1 + j) = name_it->second.transpose();
        batch.m[s][1 + j] = 1;
      } else if (cell.kind == CellKind::num) {
        const auto proj_it = state.value_proj.find(schema.name);
        if (proj_it == state.value_proj.end())
          throw DataError("feature '" + schema.name + "' was categorical in training but is numerical here");
        src.value = cell.num;
        batch.X.row(base + 1 + j) = (name_it->second + cell.num * proj_it->second).transpose();
      } else {
        const std::string& cat_name = schema.categories[cell.cat];
        const Eigen::VectorXd* cat_vec = nullptr;
        if (auto feat_it = state.cat_emb.find(schema.name); feat_it != state.cat_emb.end()) {
          if (auto cat_it = feat_it->second.find(cat_name); cat_it != feat_it->second.end())
            cat_vec = &cat_it->second;
        }
        if (!cat_vec) {
          if (!missing_on_unseen)
            throw DataError("category '" + cat_name + "' of feature '" + schema.name + "' unseen in training");
          warn_once("category '" + cat_name + "' of '" + schema.name + "' unseen in training; treated as missing");
          batch.X.row(base + 1 + j) = name_it->second.transpose();
          batch.m[s][1 + j] = 1;
          src.kind = CellKind::missing;
          continue;
        }
        src.cat = cell.cat;
        batch.X.row(base + 1 + j) = (name_it->second + *cat_vec).transpose();
      }
    }
  }
  return batch;
}

}  // namespace

TokenBatch tokenize(const DatasetView& view, ModelState& state, const std::vector<int>& rows) {
  return tokenize_impl(view, state, &state, rows, false, nullptr);
}

TokenBatch tokenize_frozen(const DatasetView& view, const ModelState& state, const std::vector<int>& rows,
                           bool missing_on_unseen, std::vector<std::string>* warnings) {
  return tokenize_impl(view, state, nullptr, rows, missing_on_unseen, warnings);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double mean_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows()) throw NumericError("label count does not match logits");
  double total = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, labels[r]);
  }
  return total / static_cast<double>(logits.rows());
}

Eigen::MatrixXd forward(const TokenBatch& batch, const ModelState& state, bool train_mode,
                        Rng* dropout_rng, ForwardCache* cache) {
  const auto& cfg = state.config;
  const int B = batch.B, L = batch.L, D = batch.D;
  if (D != cfg.model_dim) throw NumericError("token batch dim does not match model");
  if (train_mode && cfg.dropout > 0.0 && !dropout_rng)
    throw NumericError("train-mode forward needs a dropout rng");

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  const bool keep = cache != nullptr;

  fc.masks.clear();
  fc.masks.reserve(B);
  for (int s = 0; s < B; ++s) fc.masks.push_back(build_masks(batch.m[s]));

  Eigen::MatrixXd x = batch.X;
  const bool drop = train_mode && cfg.dropout > 0.0;
  if (drop) {
    fc.token_drop_mask = dropout_mask(static_cast<int>(x.rows()), D, cfg.dropout, *dropout_rng);
    x = x.cwiseProduct(fc.token_drop_mask);
  }
  if (keep) fc.x_tokens = x;

  fc.layers.assign(cfg.num_layers, ForwardCache::Layer());
  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& lp = state.layers[l];
    auto& lc = fc.layers[l];
    if (keep) lc.x_in = x;

    Eigen::MatrixXd attn_out(x.rows(), D);
    lc.attn.resize(B);
    for (int s = 0; s < B; ++s) {
      attn_out.middleRows(static_cast<long>(s) * L, L) = masked_attention(
          x.middleRows(static_cast<long>(s) * L, L), lp.attn, fc.masks[s], keep ? &lc.attn[s] : nullptr);
    }
    const Eigen::MatrixXd r1 = x + attn_out;
    Eigen::MatrixXd xhat1;
    Eigen::VectorXd inv_std1;
    const Eigen::MatrixXd h = layer_norm(r1, lp.ln1_g, lp.ln1_b, xhat1, inv_std1);

    Eigen::MatrixXd z1 = (h * lp.w1).rowwise() + lp.b1.transpose();
    Eigen::MatrixXd hidden = apply_act(cfg.activation, z1);
    Eigen::MatrixXd gate, gate_z;
    if (cfg.gated_ffn) {
      gate_z = (h * lp.wg).rowwise() + lp.bg.transpose();
      gate = gate_z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      if (keep) lc.hidden_pre = hidden;
      hidden = hidden.cwiseProduct(gate);
    } else if (keep) {
      lc.hidden_pre = hidden;
    }
    if (drop) {
      lc.ffn_drop_mask = dropout_mask(static_cast<int>(hidden.rows()), cfg.ffn_dim, cfg.dropout, *dropout_rng);
      hidden = hidden.cwiseProduct(lc.ffn_drop_mask);
    }
    const Eigen::MatrixXd ffn_out = (hidden * lp.w2).rowwise() + lp.b2.transpose();
    const Eigen::MatrixXd r2 = h + ffn_out;
    Eigen::MatrixXd xhat2;
    Eigen::VectorXd inv_std2;
    x = layer_norm(r2, lp.ln2_g, lp.ln2_b, xhat2, inv_std2);
    if (!x.allFinite()) throw NumericError("non-finite activation in encoder layer " + std::to_string(l));

    if (keep) {
      lc.r1 = r1;
      lc.xhat1 = std::move(xhat1);
      lc.inv_std1 = std::move(inv_std1);
      lc.h = h;
      lc.z1 = std::move(z1);
      lc.gate_z = std::move(gate_z);
      lc.gate = std::move(gate);
      lc.hidden_dropped = std::move(hidden);
      lc.r2 = r2;
      lc.xhat2 = std::move(xhat2);
      lc.inv_std2 = std::move(inv_std2);
    }
  }

  Eigen::MatrixXd cls_out(B, D);
  for (int s = 0; s < B; ++s) cls_out.row(s) = x.row(static_cast<long>(s) * L);
  Eigen::MatrixXd logits = (cls_out * state.head_w).rowwise() + state.head_b.transpose();
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  if (keep) {
    fc.cls_out = std::move(cls_out);
    fc.logits = logits;
  }
  return logits;
}

double loss_and_grad(const TokenBatch& batch, const std::vector<int>& labels, const ModelState& state,
                     Rng& dropout_rng, Gradients& grads) {
  const auto& cfg = state.config;
  const int B = batch.B, L = batch.L, D = batch.D;
  ForwardCache fc;
  const Eigen::MatrixXd logits = forward(batch, state, true, &dropout_rng, &fc);
  const double loss = mean_cross_entropy(logits, labels);

  Eigen::MatrixXd d_logits = softmax_rows(logits);
  for (int r = 0; r < B; ++r) d_logits(r, labels[r]) -= 1.0;
  d_logits /= static_cast<double>(B);

  grads.head_w.noalias() += fc.cls_out.transpose() * d_logits;
  grads.head_b += d_logits.colwise().sum().transpose();
  const Eigen::MatrixXd d_cls_out = d_logits * state.head_w.transpose();

  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(static_cast<long>(B) * L, D);
  for (int s = 0; s < B; ++s) dx.row(static_cast<long>(s) * L) = d_cls_out.row(s);

  const bool drop = cfg.dropout > 0.0;
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& lp = state.layers[l];
    const auto& lc = fc.layers[l];
    auto& lg = grads.layers[l];

    const Eigen::MatrixXd d_r2 =
        layer_norm_backward(dx, lc.xhat2, lc.inv_std2, lp.ln2_g, lg.ln2_g, lg.ln2_b);
    Eigen::MatrixXd dh = d_r2;  // residual branch
    const Eigen::MatrixXd& d_ffn_out = d_r2;

    lg.w2.noalias() += lc.hidden_dropped.transpose() * d_ffn_out;
    lg.b2 += d_ffn_out.colwise().sum().transpose();
    Eigen::MatrixXd d_hidden = d_ffn_out * lp.w2.transpose();
    if (drop) d_hidden = d_hidden.cwiseProduct(lc.ffn_drop_mask);

    Eigen::MatrixXd d_pre;
    if (cfg.gated_ffn) {
      d_pre = d_hidden.cwiseProduct(lc.gate);
      const Eigen::MatrixXd d_gate = d_hidden.cwiseProduct(lc.hidden_pre);
      const Eigen::MatrixXd d_gate_z =
          d_gate.cwiseProduct(lc.gate.cwiseProduct(Eigen::MatrixXd::Ones(lc.gate.rows(), lc.gate.cols()) - lc.gate));
      lg.wg.noalias() += lc.h.transpose() * d_gate_z;
      lg.bg += d_gate_z.colwise().sum().transpose();
      dh.noalias() += d_gate_z * lp.wg.transpose();
    } else {
      d_pre = std::move(d_hidden);
    }
    const Eigen::MatrixXd d_z1 = d_pre.cwiseProduct(apply_act_deriv(cfg.activation, lc.z1));
    lg.w1.noalias() += lc.h.transpose() * d_z1;
    lg.b1 += d_z1.colwise().sum().transpose();
    dh.noalias() += d_z1 * lp.w1.transpose();

    const Eigen::MatrixXd d_r1 =
        layer_norm_backward(dh, lc.xhat1, lc.inv_std1, lp.ln1_g, lg.ln1_g, lg.ln1_b);
    dx = d_r1;  // residual branch into the layer input
    for (int s = 0; s < B; ++s) {
      dx.middleRows(static_cast<long>(s) * L, L) += masked_attention_backward(
          d_r1.middleRows(static_cast<long>(s) * L, L), lp.attn, lc.attn[s], lg.attn);
    }
  }

  if (drop) dx = dx.cwiseProduct(fc.token_drop_mask);

  // scatter token gradients into the embedding tables
  const int total = B * L;
  for (int t = 0; t < total; ++t) {
    const auto& src = batch.src[t];
    const Eigen::VectorXd row = dx.row(t).transpose();
    if (!src.schema) {
      grads.cls += row;
      continue;
    }
    const std::string& name = src.schema->name;
    auto emb = grads.name_emb.try_emplace(name, Eigen::VectorXd::Zero(D)).first;
    emb->second += row;
    if (src.kind == CellKind::num) {
      auto proj = grads.value_proj.try_emplace(name, Eigen::VectorXd::Zero(D)).first;
      proj->second += src.value * row;
    } else if (src.kind == CellKind::cat) {
      const std::string& cat = src.schema->categories[src.cat];
      auto ce = grads.cat_emb[name].try_emplace(cat, Eigen::VectorXd::Zero(D)).first;
      ce->second += row;
    }
  }
  return loss;
}

namespace {

template <typename State, typename MapT>
void collect_views(State& s, std::vector<std::pair<std::string, MapT>>& out) {
  auto add = [&](const std::string& name, auto& tensor) {
    if (tensor.size() == 0) return;
    out.emplace_back(name, MapT(tensor.data(), tensor.size()));
  };
  add("cls", s.cls);
  add("head_w", s.head_w);
  add("head_b", s.head_b);
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    auto& layer = s.layers[l];
    const std::string p = "layer" + std::to_string(l) + "/";
    add(p + "wq", layer.attn.wq);
    add(p + "wk", layer.attn.wk);
    add(p + "wv", layer.attn.wv);
    add(p + "wo", layer.attn.wo);
    add(p + "w1", layer.w1);
    add(p + "b1", layer.b1);
    add(p + "wg", layer.wg);
    add(p + "bg", layer.bg);
    add(p + "w2", layer.w2);
    add(p + "b2", layer.b2);
    add(p + "ln1_g", layer.ln1_g);
    add(p + "ln1_b", layer.ln1_b);
    add(p + "ln2_g", layer.ln2_g);
    add(p + "ln2_b", layer.ln2_b);
  }
  for (auto& [name, v] : s.name_emb) add("feat/" + name + "/emb", v);
  for (auto& [name, v] : s.value_proj) add("feat/" + name + "/proj", v);
  for (auto& [name, cats] : s.cat_emb) {
    for (auto& [cat, v] : cats) add("feat/" + name + "/cat/" + cat, v);
  }
}

}  // namespace

std::vector<std::pair<std::string, Eigen::Map<Eigen::VectorXd>>> param_views(ModelState& s) {
  std::vector<std::pair<std::string, Eigen::Map<Eigen::VectorXd>>> out;
  collect_views(s, out);
  return out;
}

std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> param_views(const ModelState& s) {
  std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> out;
  collect_views(s, out);
  return out;
}

std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> grad_views(const Gradients& g) {
  std::vector<std::pair<std::string, Eigen::Map<const Eigen::VectorXd>>> out;
  collect_views(g, out);
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

using json = nlohmann::ordered_json;

std::string doubles_to_hex(const double* p, long n) {
  std::string out;
  out.resize(static_cast<std::size_t>(n) * 16);
  char buf[17];
  for (long i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(p[i])));
    std::copy(buf, buf + 16, out.begin() + i * 16);
  }
  return out;
}

void hex_to_doubles(const std::string& hex, double* p, long n) {
  if (static_cast<long>(hex.size()) != n * 16) throw DataError("checkpoint: tensor payload length mismatch");
  for (long i = 0; i < n; ++i) {
    const std::string chunk = hex.substr(static_cast<std::size_t>(i) * 16, 16);
    p[i] = std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(chunk, nullptr, 16)));
  }
}

json tensor_to_json(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"bits", doubles_to_hex(m.data(), m.size())}};
}

json tensor_to_json(const Eigen::VectorXd& v) {
  return json{{"rows", v.size()}, {"cols", 1}, {"bits", doubles_to_hex(v.data(), v.size())}};
}

Eigen::MatrixXd tensor_from_json(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<long>(), j.at("cols").get<long>());
  hex_to_doubles(j.at("bits").get<std::string>(), m.data(), m.size());
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (j.at("cols").get<long>() != 1) throw DataError("checkpoint: expected a vector tensor");
  Eigen::VectorXd v(j.at("rows").get<long>());
  hex_to_doubles(j.at("bits").get<std::string>(), v.data(), v.size());
  return v;
}

json double_bits(double v) { return doubles_to_hex(&v, 1); }

double double_from_bits(const json& j) {
  double v;
  hex_to_doubles(j.get<std::string>(), &v, 1);
  return v;
}

}  // namespace

std::string checkpoint_to_json(const ModelState& state, const FeatureStats* stats,
                               const std::vector<FeatureSchema>* schema) {
  const auto& cfg = state.config;
  json j;
  j["version"] = 1;
  j["config"] = {{"model_dim", cfg.model_dim},       {"num_layers", cfg.num_layers},
                 {"num_heads", cfg.num_heads},       {"ffn_dim", cfg.ffn_dim},
                 {"dropout", cfg.dropout},           {"activation", activation_name(cfg.activation)},
                 {"gated_ffn", cfg.gated_ffn},       {"class_count", cfg.class_count}};
  j["init_seed"] = std::to_string(state.init_seed);  // u64 exceeds JSON number precision

  json params;
  params["cls"] = tensor_to_json(state.cls);
  params["head_w"] = tensor_to_json(state.head_w);
  params["head_b"] = tensor_to_json(state.head_b);
  params["layers"] = json::array();
  for (const auto& layer : state.layers) {
    json lj;
    lj["wq"] = tensor_to_json(layer.attn.wq);
    lj["wk"] = tensor_to_json(layer.attn.wk);
    lj["wv"] = tensor_to_json(layer.attn.wv);
    lj["wo"] = tensor_to_json(layer.attn.wo);
    lj["w1"] = tensor_to_json(layer.w1);
    lj["b1"] = tensor_to_json(layer.b1);
    if (cfg.gated_ffn) {
      lj["wg"] = tensor_to_json(layer.wg);
      lj["bg"] = tensor_to_json(layer.bg);
    }
    lj["w2"] = tensor_to_json(layer.w2);
    lj["b2"] = tensor_to_json(layer.b2);
    lj["ln1_g"] = tensor_to_json(layer.ln1_g);
    lj["ln1_b"] = tensor_to_json(layer.ln1_b);
    lj["ln2_g"] = tensor_to_json(layer.ln2_g);
    lj["ln2_b"] = tensor_to_json(layer.ln2_b);
    params["layers"].push_back(std::move(lj));
  }
  json feats = json::object();
  for (const auto& [name, emb] : state.name_emb) {
    json fj;
    fj["emb"] = tensor_to_json(emb);
    if (auto it = state.value_proj.find(name); it != state.value_proj.end())
      fj["proj"] = tensor_to_json(it->second);
    if (auto it = state.cat_emb.find(name); it != state.cat_emb.end()) {
      json cats = json::object();
      for (const auto& [cat, v] : it->second) cats[cat] = tensor_to_json(v);
      fj["cats"] = std::move(cats);
    }
    feats[name] = std::move(fj);
  }
  params["features"] = std::move(feats);
  j["params"] = std::move(params);

  if (stats && schema) {
    json sf = json::array();
    for (int f = 0; f < stats->d(); ++f) {
      const auto& pf = stats->per_feature[f];
      const auto& col = (*schema)[f];
      json e;
      e["name"] = col.name;
      e["kind"] = col.kind == FeatureKind::numerical ? "numerical" : "categorical";
      e["missing_rate"] = double_bits(pf.missing_rate);
      e["observed"] = pf.observed;
      e["mean"] = double_bits(pf.mean);
      e["std"] = double_bits(pf.stddev);
      e["median"] = double_bits(pf.median);
      e["mode"] = pf.mode;
      if (col.kind == FeatureKind::categorical) e["categories"] = col.categories;
      sf.push_back(std::move(e));
    }
    j["stats"] = {{"features", std::move(sf)}};
  }
  return j.dump(1);
}

void save_checkpoint(const ModelState& state, const std::string& path, const FeatureStats* stats,
                     const std::vector<FeatureSchema>* schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << checkpoint_to_json(state, stats, schema) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint parse: ") + e.what());
  }
  if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");

  Checkpoint ck;
  const auto& jc = j.at("config");
  ModelConfig cfg;
  cfg.model_dim = jc.at("model_dim").get<int>();
  cfg.num_layers = jc.at("num_layers").get<int>();
  cfg.num_heads = jc.at("num_heads").get<int>();
  cfg.ffn_dim = jc.at("ffn_dim").get<int>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.activation = parse_activation(jc.at("activation").get<std::string>());
  cfg.gated_ffn = jc.at("gated_ffn").get<bool>();
  cfg.class_count = jc.at("class_count").get<int>();
  cfg.validate();

  ModelState s;
  s.config = cfg;
  s.init_seed = std::stoull(j.at("init_seed").get<std::string>());
  const auto& jp = j.at("params");
  s.cls = vector_from_json(jp.at("cls"));
  s.head_w = tensor_from_json(jp.at("head_w"));
  s.head_b = vector_from_json(jp.at("head_b"));
  const auto& jl = jp.at("layers");
  if (static_cast<int>(jl.size()) != cfg.num_layers) throw DataError("checkpoint: layer count mismatch");
  s.layers.resize(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& layer = s.layers[l];
    const auto& lj = jl[l];
    layer.attn.model_dim = cfg.model_dim;
    layer.attn.num_heads = cfg.num_heads;
    layer.attn.head_dim = cfg.model_dim / cfg.num_heads;
    layer.attn.wq = tensor_from_json(lj.at("wq"));
    layer.attn.wk = tensor_from_json(lj.at("wk"));
    layer.attn.wv = tensor_from_json(lj.at("wv"));
    layer.attn.wo = tensor_from_json(lj.at("wo"));
    layer.w1 = tensor_from_json(lj.at("w1"));
    layer.b1 = vector_from_json(lj.at("b1"));
    if (cfg.gated_ffn) {
      layer.wg = tensor_from_json(lj.at("wg"));
      layer.bg = vector_from_json(lj.at("bg"));
    }
    layer.w2 = tensor_from_json(lj.at("w2"));
    layer.b2 = vector_from_json(lj.at("b2"));
    layer.ln1_g = vector_from_json(lj.at("ln1_g"));
    layer.ln1_b = vector_from_json(lj.at("ln1_b"));
    layer.ln2_g = vector_from_json(lj.at("ln2_g"));
    layer.ln2_b = vector_from_json(lj.at("ln2_b"));
  }
  for (const auto& [name, fj] : jp.at("features").items()) {
    s.name_emb[name] = vector_from_json(fj.at("emb"));
    if (fj.contains("proj")) s.value_proj[name] = vector_from_json(fj.at("proj"));
    if (fj.contains("cats")) {
      for (const auto& [cat, v] : fj.at("cats").items()) s.cat_emb[name][cat] = vector_from_json(v);
    }
  }
  ck.state = std::move(s);

  if (j.contains("stats")) {
    ck.has_stats = true;
    for (const auto& e : j.at("stats").at("features")) {
      FeatureStats::PerFeature pf;
      pf.missing_rate = double_from_bits(e.at("missing_rate"));
      pf.observed = e.at("observed").get<long>();
      pf.mean = double_from_bits(e.at("mean"));
      pf.stddev = double_from_bits(e.at("std"));
      pf.median = double_from_bits(e.at("median"));
      pf.mode = e.at("mode").get<int>();
      ck.stats.per_feature.push_back(pf);
      FeatureSchema col;
      col.name = e.at("name").get<std::string>();
      col.kind = e.at("kind").get<std::string>() == "numerical" ? FeatureKind::numerical : FeatureKind::categorical;
      if (e.contains("categories")) col.categories = e.at("categories").get<std::vector<std::string>>();
      ck.schema.push_back(std::move(col));
    }
  }
  return ck;
}

}  // namespace ifial
