#include "ifial/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "ifial/errors.hpp"
#include "ifial/partition.hpp"
#include "ifial/rng.hpp"

namespace ifial {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("auc: score/label length mismatch");
  const int n = static_cast<int>(scores.size());
  long n1 = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0/1");
    n1 += y;
  }
  const long n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw DataError("auc: both classes must be present");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });

  // average ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (int t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  return (rank_sum_pos - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1)) /
         (static_cast<double>(n1) * static_cast<double>(n0));
}

double auc_multiclass(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int class_count) {
  if (probs.rows() != static_cast<long>(labels.size())) throw DataError("auc_multiclass: shape mismatch");
  if (probs.cols() != class_count) throw DataError("auc_multiclass: class column mismatch");
  const int n = static_cast<int>(labels.size());
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < class_count; ++c) {
    long pos = 0;
    for (int y : labels) pos += (y == c);
    if (pos == 0 || pos == n) continue;  // one-vs-rest undefined for this class
    std::vector<double> scores(n);
    std::vector<int> bin(n);
    for (int r = 0; r < n; ++r) {
      scores[r] = probs(r, c);
      bin[r] = labels[r] == c;
    }
    total += auc(scores, bin);
    ++used;
  }
  if (used == 0) throw DataError("auc_multiclass: fold contains a single class");
  return total / used;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (folds > n) throw DataError("more folds than rows");
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> by_class(classes);
  for (int r = 0; r < n; ++r) by_class[labels[r]].push_back(r);
  for (int c = 0; c < classes; ++c) {
    if (!by_class[c].empty() && static_cast<int>(by_class[c].size()) < folds)
      throw DataError("class " + std::to_string(c) + " has fewer rows (" +
                      std::to_string(by_class[c].size()) + ") than folds (" + std::to_string(folds) + ")");
  }

  Rng rng(mix_seed(seed, "folds"));
  std::vector<int> assign(n, -1);
  // continuous round-robin dealing across the shuffled classes keeps both the
  // global fold sizes and the per-class counts within one of an even split
  long pos = 0;
  for (auto& rows : by_class) {
    rng.shuffle(rows);
    for (int r : rows) assign[r] = static_cast<int>(pos++ % folds);
  }
  return assign;
}

std::vector<FoldResult> cross_validate(const Dataset& data, const CrossValSpec& spec,
                                       std::vector<FoldLog>* logs) {
  if (spec.seeds.empty()) throw ConfigError("cross_validate: need at least one seed");
  std::vector<FoldResult> out;
  for (const std::uint64_t seed : spec.seeds) {
    Dataset injected = data;
    double rate = 0.0;
    if (spec.mechanism != Mechanism::none) {
      MissingSpec ms;
      ms.mechanism = spec.mechanism;
      ms.rate = spec.rate;
      ms.seed = mix_seed(seed, "inject");
      injected = inject(data, ms);  // dataset-level, before any splitting
      rate = spec.rate;
    }
    const std::vector<int> assign = stratified_folds(injected.labels(), spec.folds, mix_seed(seed, "split"));
    for (int f = 0; f < spec.folds; ++f) {
      std::vector<int> train_rows, test_rows;
      for (int r = 0; r < injected.n(); ++r) (assign[r] == f ? test_rows : train_rows).push_back(r);

      ModelConfig mcfg = spec.mcfg;
      mcfg.class_count = injected.class_count();
      TrainConfig tcfg = spec.tcfg;
      tcfg.seed = mix_seed(seed, "fold", static_cast<std::uint64_t>(f));

      const MethodRun run = run_method(spec.method, train_rows, test_rows, injected, mcfg, tcfg);
      std::vector<int> test_labels(test_rows.size());
      for (std::size_t i = 0; i < test_rows.size(); ++i) test_labels[i] = injected.label(test_rows[i]);
      if (logs) {
        FoldLog lg;
        lg.method = method_name(spec.method.id);
        lg.mechanism = mechanism_name(spec.mechanism);
        lg.rate = rate;
        lg.seed = seed;
        lg.fold = f;
        lg.sessions = run.sessions;
        lg.warnings = run.warnings;
        logs->push_back(std::move(lg));
      }

      FoldResult r;
      r.dataset = spec.dataset_id;
      r.method = method_name(spec.method.id);
      r.mechanism = mechanism_name(spec.mechanism);
      r.rate = rate;
      r.fold = f;
      r.seed = seed;
      r.auc = auc_multiclass(run.probs, test_labels, injected.class_count());
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

struct ScenarioKey {
  std::string dataset, mechanism;
  double rate;
  bool operator<(const ScenarioKey& o) const {
    return std::tie(dataset, mechanism, rate) < std::tie(o.dataset, o.mechanism, o.rate);
  }
};

// mean auc per (scenario, method) over folds and seeds
std::map<ScenarioKey, std::map<std::string, double>> scenario_means(const std::vector<FoldResult>& results) {
  std::map<ScenarioKey, std::map<std::string, std::pair<double, long>>> acc;
  for (const auto& r : results) {
    auto& cell = acc[{r.dataset, r.mechanism, r.rate}][r.method];
    cell.first += r.auc;
    ++cell.second;
  }
  std::map<ScenarioKey, std::map<std::string, double>> out;
  for (const auto& [key, methods] : acc) {
    for (const auto& [m, sums] : methods) out[key][m] = sums.first / static_cast<double>(sums.second);
  }
  return out;
}

std::vector<std::string> distinct_methods(const std::vector<FoldResult>& results) {
  std::set<std::string> s;
  for (const auto& r : results) s.insert(r.method);
  return {s.begin(), s.end()};
}

void require_complete(const std::map<std::string, double>& cell, const std::vector<std::string>& methods,
                      const ScenarioKey& key) {
  for (const auto& m : methods) {
    if (!cell.count(m))
      throw DataError("incomplete result grid: no records for method '" + m + "' in scenario (" + key.dataset +
                      ", " + key.mechanism + ", rate " + std::to_string(key.rate) + ")");
  }
}

// rank 1 = best auc; tied methods share the average of their tied ranks
std::map<std::string, double> rank_methods(const std::map<std::string, double>& auc_by_method) {
  std::vector<std::pair<std::string, double>> v(auc_by_method.begin(), auc_by_method.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::map<std::string, double> ranks;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].second == v[i].second) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[v[t].first] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace

RankTable rank_table(const std::vector<FoldResult>& results) {
  if (results.empty()) throw DataError("rank_table: no results");
  RankTable table;
  table.methods = distinct_methods(results);
  const auto means = scenario_means(results);

  // (mechanism, rate) -> method -> ranks over datasets
  std::map<std::pair<std::string, double>, std::map<std::string, std::vector<double>>> groups;
  for (const auto& [key, cell] : means) {
    require_complete(cell, table.methods, key);
    const auto ranks = rank_methods(cell);
    for (const auto& [m, rank] : ranks) groups[{key.mechanism, key.rate}][m].push_back(rank);
  }
  for (const auto& [mr, per_method] : groups) {
    RankTable::Row row;
    row.mechanism = mr.first;
    row.rate = mr.second;
    row.datasets = static_cast<int>(per_method.begin()->second.size());
    for (const auto& m : table.methods) {
      const auto& ranks = per_method.at(m);
      const double n = static_cast<double>(ranks.size());
      const double mean = std::accumulate(ranks.begin(), ranks.end(), 0.0) / n;
      double sd = 0.0;
      if (ranks.size() >= 2) {
        double ss = 0.0;
        for (double r : ranks) ss += (r - mean) * (r - mean);
        sd = std::sqrt(ss / (n - 1.0));
      }
      row.mean_rank.push_back(mean);
      row.std_rank.push_back(sd);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

WinMatrix win_matrix(const std::vector<FoldResult>& results) {
  if (results.empty()) throw DataError("win_matrix: no results");
  WinMatrix wm;
  wm.methods = distinct_methods(results);
  const int M = static_cast<int>(wm.methods.size());
  wm.wins = Eigen::MatrixXd::Zero(M, M);
  wm.ties = Eigen::MatrixXd::Zero(M, M);

  const auto means = scenario_means(results);
  for (const auto& [key, cell] : means) {
    require_complete(cell, wm.methods, key);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j) {
        if (i == j) continue;
        const double a = cell.at(wm.methods[i]);
        const double b = cell.at(wm.methods[j]);
        if (a > b) wm.wins(i, j) += 1.0;
        else if (a == b) wm.ties(i, j) += 1.0;
      }
    }
  }
  wm.scenarios = static_cast<int>(means.size());
  if (wm.scenarios > 0) {
    wm.wins /= static_cast<double>(wm.scenarios);
    wm.ties /= static_cast<double>(wm.scenarios);
  }
  return wm;
}

RobustnessCurve robustness_curve(const std::vector<FoldResult>& results,
                                 const std::vector<FoldResult>& reference) {
  // reference auc per (dataset, method), complete data
  std::map<std::pair<std::string, std::string>, std::pair<double, long>> ref_acc;
  for (const auto& r : reference) {
    auto& cell = ref_acc[{r.dataset, r.method}];
    cell.first += r.auc;
    ++cell.second;
  }
  std::map<std::pair<std::string, std::string>, double> ref;
  for (const auto& [k, v] : ref_acc) ref[k] = v.first / static_cast<double>(v.second);

  const auto means = scenario_means(results);
  // (method, mechanism, rate) -> accumulated percent over datasets
  std::map<std::tuple<std::string, std::string, double>, std::pair<double, long>> curve;
  for (const auto& [key, cell] : means) {
    for (const auto& [method, auc_value] : cell) {
      const auto rit = ref.find({key.dataset, method});
      if (rit == ref.end())
        throw DataError("robustness_curve: no reference auc for dataset '" + key.dataset + "', method '" +
                        method + "'");
      auto& pt = curve[{method, key.mechanism, key.rate}];
      pt.first += 100.0 * auc_value / rit->second;
      ++pt.second;
    }
  }
  RobustnessCurve rc;
  for (const auto& [k, v] : curve) {
    rc.points.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k),
                         v.first / static_cast<double>(v.second), static_cast<int>(v.second)});
  }
  return rc;
}

std::string cost_mode_name(CostMode m) {
  switch (m) {
    case CostMode::score_only: return "score_only";
    case CostMode::attention_only: return "attention_only";
    case CostMode::full: return "full";
  }
  return "?";
}

CostMode parse_cost_mode(const std::string& s) {
  if (s == "score_only") return CostMode::score_only;
  if (s == "attention_only") return CostMode::attention_only;
  if (s == "full") return CostMode::full;
  throw ConfigError("unknown cost mode '" + s + "' (expected score_only|attention_only|full)");
}

double cost_ops(int m, const CostModel& cm) {
  if (m < 1) throw ConfigError("cost_ops: need at least one feature");
  const double D = cm.model_dim;
  const double L = static_cast<double>(m) + 1.0;  // CLS included
  double per_layer = 0.0;
  switch (cm.mode) {
    case CostMode::score_only:
      // the quadratic score + apply term over the m x m feature block of the
      // masks; heads * head_dim collapses to model_dim
      per_layer = 2.0 * D * static_cast<double>(m) * static_cast<double>(m);
      break;
    case CostMode::attention_only:
      per_layer = 2.0 * D * L * L + 4.0 * L * D * D;  // scores/apply + QKV and output projections
      break;
    case CostMode::full:
      per_layer = 2.0 * D * L * L + 4.0 * L * D * D + 2.0 * L * D * static_cast<double>(cm.ffn_dim);
      break;
  }
  return per_layer * cm.num_layers;
}

double cost_ratio(int d, int k, const CostModel& cm) {
  if (k < 2 || k > d) throw ConfigError("cost_ratio: require 2 <= k <= d");
  const double P = static_cast<double>(partition_count(d, k));
  return P * cost_ops(k, cm) / cost_ops(d, cm);
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string results_to_csv(std::vector<FoldResult> results) {
  std::sort(results.begin(), results.end(), [](const FoldResult& a, const FoldResult& b) {
    return std::tie(a.dataset, a.method, a.mechanism, a.rate, a.fold, a.seed) <
           std::tie(b.dataset, b.method, b.mechanism, b.rate, b.fold, b.seed);
  });
  std::ostringstream out;
  out << "dataset,method,mechanism,rate,fold,seed,auc\n";
  for (const auto& r : results) {
    out << r.dataset << ',' << r.method << ',' << r.mechanism << ',' << fmt_double(r.rate) << ',' << r.fold
        << ',' << r.seed << ',' << fmt_double(r.auc) << '\n';
  }
  return out.str();
}

void write_results_csv(const std::string& path, std::vector<FoldResult> results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write results file: " + path);
  out << results_to_csv(std::move(results));
}

std::vector<FoldResult> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open results file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty results file");
  if (line == "dataset,method,mechanism,rate,fold,seed,auc\r")
    line.pop_back();
  if (line != "dataset,method,mechanism,rate,fold,seed,auc")
    throw DataError(path + ": unexpected results header '" + line + "'");

  std::vector<FoldResult> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 7)
      throw DataError(path + " line " + std::to_string(lineno) + ": expected 7 fields, got " +
                      std::to_string(f.size()));
    try {
      FoldResult r;
      r.dataset = f[0];
      r.method = f[1];
      r.mechanism = f[2];
      r.rate = std::stod(f[3]);
      r.fold = std::stoi(f[4]);
      r.seed = std::stoull(f[5]);
      r.auc = std::stod(f[6]);
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw DataError(path + " line " + std::to_string(lineno) + ": malformed record");
    }
  }
  return out;
}

}  // namespace ifial
