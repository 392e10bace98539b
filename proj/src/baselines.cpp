#include "ifial/baselines.hpp"

#include <algorithm>

#include "ifial/errors.hpp"
#include "ifial/partition.hpp"

namespace ifial {

std::string method_name(MethodId id) {
  switch (id) {
    case MethodId::ifial: return "ifial";
    case MethodId::am_ftt: return "am_ftt";
    case MethodId::median_ftt: return "median_ftt";
  }
  return "?";
}

MethodId parse_method(const std::string& s) {
  if (s == "ifial") return MethodId::ifial;
  if (s == "am_ftt") return MethodId::am_ftt;
  if (s == "median_ftt") return MethodId::median_ftt;
  throw ConfigError("unknown method '" + s + "' (expected ifial|am_ftt|median_ftt)");
}

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  std::vector<std::vector<Cell>> cells(data.d());
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (int f = 0; f < data.d(); ++f) cells[f].reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= data.n()) throw DataError("subset_rows: row index out of range");
    for (int f = 0; f < data.d(); ++f) cells[f].push_back(data.cell(r, f));
    labels.push_back(data.label(r));
  }
  return Dataset(data.columns(), std::move(cells), std::move(labels));
}

Dataset impute_median(const Dataset& data, const FeatureStats& stats, std::vector<std::string>* warnings) {
  if (stats.d() != data.d()) throw DataError("impute_median: stats do not match dataset");
  auto cells = data.feature_cells();
  for (int f = 0; f < data.d(); ++f) {
    const auto& pf = stats.per_feature[f];
    const bool numerical = data.feature(f).kind == FeatureKind::numerical;
    bool warned = false;
    for (int r = 0; r < data.n(); ++r) {
      if (!cells[f][r].is_missing()) continue;
      if (pf.observed == 0 && warnings && !warned) {
        warnings->push_back("feature '" + data.feature(f).name +
                            "' has no observed training values; imputing with " +
                            (numerical ? "0" : "category 0"));
        warned = true;
      }
      cells[f][r] = numerical ? Cell::number(pf.observed == 0 ? 0.0 : pf.median) : Cell::category(pf.mode);
    }
  }
  return Dataset(data.columns(), std::move(cells), data.labels());
}

MethodRun run_method(const Method& method, const std::vector<int>& train_rows,
                     const std::vector<int>& test_rows, const Dataset& data, const ModelConfig& mcfg,
                     const TrainConfig& tcfg) {
  {
    std::vector<int> sorted_test = test_rows;
    std::sort(sorted_test.begin(), sorted_test.end());
    for (int r : train_rows) {
      if (std::binary_search(sorted_test.begin(), sorted_test.end(), r))
        throw DataError("run_method: train and test rows overlap");
    }
  }

  MethodRun out;
  // everything fitted below sees only the training rows
  const FeatureStats stats = compute_stats(data, train_rows);

  int k = data.d();  // single window for the non-incremental methods
  if (method.id == MethodId::ifial) k = method.k > 0 ? method.k : default_k(data.d());
  const PartitionPlan plan = build_plan(stats, k);

  Dataset working = data;
  if (method.id == MethodId::median_ftt) working = impute_median(working, stats, &out.warnings);
  working = standardize(working, stats);

  const Dataset train_fold = subset_rows(working, train_rows);
  TrainResult trained = train_ifial(train_fold, plan, mcfg, tcfg);
  out.sessions = std::move(trained.sessions);
  for (auto& w : trained.warnings) out.warnings.push_back(std::move(w));

  out.probs = predict(trained.state, working, test_rows, &out.warnings);
  out.state = std::move(trained.state);
  return out;
}

}  // namespace ifial
