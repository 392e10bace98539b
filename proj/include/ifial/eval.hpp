#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ifial/baselines.hpp"
#include "ifial/dataset.hpp"
#include "ifial/simulate.hpp"

namespace ifial {

struct FoldResult {
  std::string dataset;
  std::string method;
  std::string mechanism;
  double rate = 0.0;
  int fold = 0;
  std::uint64_t seed = 0;
  double auc = 0.0;
};

// Mann-Whitney with half credit for ties, O(n log n) via average tie ranks.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Macro-averaged one-vs-rest over classes present in the fold.
double auc_multiclass(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int class_count);

// fold_id per row; sizes differ by <= 1 and per-class counts per fold differ
// by <= 1 from an even share.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

struct CrossValSpec {
  std::string dataset_id;
  Method method;
  Mechanism mechanism = Mechanism::none;
  double rate = 0.0;  // ignored when mechanism == none
  int folds = 5;
  std::vector<std::uint64_t> seeds;
  ModelConfig mcfg;
  TrainConfig tcfg;
};

struct FoldLog {
  std::string method, mechanism;
  double rate = 0.0;
  std::uint64_t seed = 0;
  int fold = 0;
  std::vector<SessionLog> sessions;
  std::vector<std::string> warnings;
};

// Missingness is injected into the COMPLETE dataset once per (mechanism,
// rate, seed), before fold splitting; stats/plan/model are then fitted on the
// training fold only.
std::vector<FoldResult> cross_validate(const Dataset& data, const CrossValSpec& spec,
                                       std::vector<FoldLog>* logs = nullptr);

struct RankTable {
  std::vector<std::string> methods;
  struct Row {
    std::string mechanism;
    double rate = 0.0;
    std::vector<double> mean_rank, std_rank;  // parallel to methods
    int datasets = 0;
  };
  std::vector<Row> rows;
};
RankTable rank_table(const std::vector<FoldResult>& results);

struct WinMatrix {
  std::vector<std::string> methods;
  Eigen::MatrixXd wins;  // wins(i,j) = fraction of scenarios where i strictly beats j
  Eigen::MatrixXd ties;
  int scenarios = 0;
};
WinMatrix win_matrix(const std::vector<FoldResult>& results);

struct RobustnessCurve {
  struct Point {
    std::string method, mechanism;
    double rate = 0.0;
    double percent = 0.0;  // mean over datasets of 100 * auc / reference auc
    int datasets = 0;
  };
  std::vector<Point> points;
};
RobustnessCurve robustness_curve(const std::vector<FoldResult>& results,
                                 const std::vector<FoldResult>& reference);

enum class CostMode : std::uint8_t { score_only, attention_only, full };
std::string cost_mode_name(CostMode m);
CostMode parse_cost_mode(const std::string& s);

struct CostModel {
  int model_dim = 64;
  int ffn_dim = 256;
  int num_layers = 2;
  int num_heads = 4;
  CostMode mode = CostMode::score_only;
};

// Forward multiply count per encoder pass over m features (sequence m+1 with
// CLS). score_only isolates the quadratic attention-score term of the m x m
// feature block; attention_only adds the QKV/output projections; full adds
// the FFN.
double cost_ops(int m, const CostModel& cm);

// P(k) * C(k) / C(d): operation ratio of incremental training over k-feature
// windows relative to one pass over all d features.
double cost_ratio(int d, int k, const CostModel& cm);

// results CSV: dataset,method,mechanism,rate,fold,seed,auc — sorted by the
// full key so identical result sets serialize to identical bytes
std::string results_to_csv(std::vector<FoldResult> results);
void write_results_csv(const std::string& path, std::vector<FoldResult> results);
std::vector<FoldResult> read_results_csv(const std::string& path);

}  // namespace ifial
