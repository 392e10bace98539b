#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>
#include <string>
#include <vector>

#include "ifial/baselines.hpp"
#include "ifial/dataset.hpp"
#include "ifial/errors.hpp"
#include "ifial/eval.hpp"
#include "ifial/model.hpp"
#include "ifial/partition.hpp"
#include "ifial/simulate.hpp"
#include "ifial/train.hpp"

namespace py = pybind11;

namespace {

std::vector<int> all_rows(const ifial::Dataset& d) {
  std::vector<int> rows(d.n());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// trained model plus the training-set statistics needed to score new data
struct Model {
  ifial::ModelState state;
  bool has_stats = false;
  ifial::FeatureStats stats;
  std::vector<ifial::FeatureSchema> schema;

  Eigen::MatrixXd predict(const ifial::Dataset& data) const {
    const ifial::Dataset working = has_stats ? ifial::standardize(data, stats) : data;
    return ifial::predict(state, working, all_rows(working));
  }

  void save(const std::string& path) const {
    ifial::save_checkpoint(state, path, has_stats ? &stats : nullptr, has_stats ? &schema : nullptr);
  }
};

Model train(const ifial::Dataset& data, int k, std::uint64_t seed, py::dict model_kw, py::dict train_kw) {
  ifial::ModelConfig mcfg = ifial::ModelConfig::desk();
  for (auto item : model_kw) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "model_dim") mcfg.model_dim = py::cast<int>(item.second);
    else if (key == "num_layers") mcfg.num_layers = py::cast<int>(item.second);
    else if (key == "num_heads") mcfg.num_heads = py::cast<int>(item.second);
    else if (key == "ffn_dim") mcfg.ffn_dim = py::cast<int>(item.second);
    else if (key == "dropout") mcfg.dropout = py::cast<double>(item.second);
    else if (key == "activation") mcfg.activation = ifial::parse_activation(py::cast<std::string>(item.second));
    else if (key == "gated_ffn") mcfg.gated_ffn = py::cast<bool>(item.second);
    else throw ifial::ConfigError("unknown model option: " + key);
  }
  ifial::TrainConfig tcfg = ifial::TrainConfig::desk();
  for (auto item : train_kw) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "learning_rate") tcfg.learning_rate = py::cast<double>(item.second);
    else if (key == "weight_decay") tcfg.weight_decay = py::cast<double>(item.second);
    else if (key == "max_epochs") tcfg.max_epochs = py::cast<int>(item.second);
    else if (key == "batch_size") tcfg.batch_size = py::cast<int>(item.second);
    else if (key == "patience") tcfg.patience = py::cast<int>(item.second);
    else if (key == "val_fraction") tcfg.val_fraction = py::cast<double>(item.second);
    else throw ifial::ConfigError("unknown train option: " + key);
  }
  mcfg.class_count = data.class_count();
  mcfg.validate();
  tcfg.seed = seed;
  tcfg.validate();

  const auto rows = all_rows(data);
  Model m;
  m.stats = ifial::compute_stats(data, rows);
  m.has_stats = true;
  for (const auto& col : data.columns()) {
    if (col.role == ifial::ColumnRole::feature) m.schema.push_back(col);
  }
  const auto plan = ifial::build_plan(m.stats, k > 0 ? k : ifial::default_k(data.d()));
  const ifial::Dataset working = ifial::standardize(data, m.stats);
  m.state = ifial::train_ifial(working, plan, mcfg, tcfg).state;
  return m;
}

Model load_model(const std::string& path) {
  ifial::Checkpoint ckpt = ifial::load_checkpoint(path);
  Model m;
  m.state = std::move(ckpt.state);
  m.has_stats = ckpt.has_stats;
  m.stats = std::move(ckpt.stats);
  m.schema = std::move(ckpt.schema);
  return m;
}

py::dict plan_to_dict(const ifial::PartitionPlan& plan) {
  py::dict d;
  d["d"] = plan.d;
  d["k"] = plan.k;
  d["overlap"] = plan.s;
  d["step"] = plan.step;
  d["partitions"] = plan.P;
  d["sorted_features"] = plan.sorted_features;
  d["windows"] = plan.windows;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "incremental attention learning over incomplete tabular data";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ifial::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ifial::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ifial::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<ifial::Dataset>(m, "Dataset")
      .def_property_readonly("n", &ifial::Dataset::n)
      .def_property_readonly("d", &ifial::Dataset::d)
      .def_property_readonly("class_count", &ifial::Dataset::class_count)
      .def_property_readonly("labels", [](const ifial::Dataset& d) { return d.labels(); })
      .def_property_readonly("feature_names",
                             [](const ifial::Dataset& d) {
                               std::vector<std::string> names;
                               for (int f = 0; f < d.d(); ++f) names.push_back(d.feature(f).name);
                               return names;
                             })
      .def("missing_mask",
           [](const ifial::Dataset& d) {
             Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask(d.n(), d.d());
             for (int r = 0; r < d.n(); ++r)
               for (int f = 0; f < d.d(); ++f) mask(r, f) = d.cell(r, f).is_missing() ? 1 : 0;
             return mask;
           },
           "n x d matrix, 1 where the cell is missing")
      .def("__repr__", [](const ifial::Dataset& d) {
        return "<Dataset n=" + std::to_string(d.n()) + " d=" + std::to_string(d.d()) +
               " classes=" + std::to_string(d.class_count()) + ">";
      });

  m.def("load_csv", &ifial::load_csv, py::arg("csv_path"), py::arg("schema_path"));

  m.def(
      "inject",
      [](const ifial::Dataset& data, const std::string& mechanism, double rate, std::uint64_t seed) {
        ifial::MissingSpec spec;
        spec.mechanism = ifial::parse_mechanism(mechanism);
        spec.rate = rate;
        spec.seed = seed;
        return ifial::inject(data, spec);
      },
      py::arg("data"), py::arg("mechanism"), py::arg("rate"), py::arg("seed") = 0,
      "mask exactly round(rate*n) cells per feature (mcar: uniform rows; mnar: self-censoring)");

  m.def(
      "missing_rates",
      [](const ifial::Dataset& data) {
        const auto stats = ifial::compute_stats(data, all_rows(data));
        std::vector<double> rates;
        for (const auto& pf : stats.per_feature) rates.push_back(pf.missing_rate);
        return rates;
      },
      py::arg("data"));

  m.def("default_k", &ifial::default_k, py::arg("d"), "ceil(d/2)");

  m.def(
      "partition_plan",
      [](const std::vector<double>& rates, int k) {
        ifial::FeatureStats stats;
        stats.per_feature.resize(rates.size());
        for (std::size_t f = 0; f < rates.size(); ++f) stats.per_feature[f].missing_rate = rates[f];
        return plan_to_dict(ifial::build_plan(stats, k));
      },
      py::arg("missing_rates"), py::arg("k"),
      "overlapping windows over features sorted by ascending missing rate");

  m.def(
      "mask_pair",
      [](const std::vector<int>& mask) {
        ifial::MaskVector m8;
        for (int v : mask) m8.push_back(v ? 1 : 0);
        auto masks = ifial::build_masks(m8);
        return py::make_tuple(masks.M1, masks.M2);
      },
      py::arg("missing"), "(additive, multiplicative) mask matrices for a token-missingness vector");

  m.def(
      "masked_attention",
      [](const Eigen::MatrixXd& x, const std::vector<int>& mask, const Eigen::MatrixXd& wq,
         const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo, int num_heads) {
        const int dim = static_cast<int>(x.cols());
        if (num_heads < 1 || dim % num_heads != 0)
          throw ifial::ConfigError("num_heads must divide the embedding width");
        ifial::AttentionParams p;
        p.model_dim = dim;
        p.num_heads = num_heads;
        p.head_dim = dim / num_heads;
        p.wq = wq;
        p.wk = wk;
        p.wv = wv;
        p.wo = wo;
        ifial::MaskVector m8;
        for (int v : mask) m8.push_back(v ? 1 : 0);
        return ifial::masked_attention(x, p, ifial::build_masks(m8));
      },
      py::arg("x"), py::arg("missing"), py::arg("wq"), py::arg("wk"), py::arg("wv"), py::arg("wo"),
      py::arg("num_heads"), "single-sample masked multi-head self-attention (rows of x are tokens)");

  py::class_<Model>(m, "Model")
      .def("predict", &Model::predict, py::arg("data"), "row-stochastic class probabilities, one row per sample")
      .def("save", &Model::save, py::arg("path"));

  m.def("train", &train, py::arg("data"), py::arg("k") = 0, py::arg("seed") = 0,
        py::arg("model") = py::dict(), py::arg("train") = py::dict(),
        "fit on all rows via incremental window training; k=0 means ceil(d/2)");
  m.def("load_model", &load_model, py::arg("path"));

  m.def("auc", &ifial::auc, py::arg("scores"), py::arg("labels"),
        "Mann-Whitney AUC with tie correction; labels are 0/1");

  m.def("stratified_folds", &ifial::stratified_folds, py::arg("labels"), py::arg("folds"), py::arg("seed") = 0);

  m.def(
      "cost_ratio",
      [](int d, int k, const std::string& mode, int model_dim, int ffn_dim, int num_layers, int num_heads) {
        ifial::CostModel cm;
        cm.mode = ifial::parse_cost_mode(mode);
        cm.model_dim = model_dim;
        cm.ffn_dim = ffn_dim;
        cm.num_layers = num_layers;
        cm.num_heads = num_heads;
        return ifial::cost_ratio(d, k, cm);
      },
      py::arg("d"), py::arg("k"), py::arg("mode") = "score_only", py::arg("model_dim") = 64,
      py::arg("ffn_dim") = 256, py::arg("num_layers") = 2, py::arg("num_heads") = 4,
      "operation-count ratio of incremental window training to one full-width pass");
}
