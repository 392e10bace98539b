#include "ifial/partition.hpp"

#include <algorithm>
#include <numeric>

#include "ifial/errors.hpp"

namespace ifial {

int partition_count(int d, int k) {
  if (d <= k) return 1;
  const int step = k - (k + 1) / 2;  // k - ceil(k/2)
  return 1 + (d - k + step - 1) / step;
}

int default_k(int d) { return (d + 1) / 2; }

PartitionPlan build_plan(const FeatureStats& stats, int k) {
  const int d = stats.d();
  if (k < 2) throw ConfigError("partition size k must be >= 2, got " + std::to_string(k));
  if (d < 2) throw ConfigError("need at least 2 features to partition, got d=" + std::to_string(d));

  PartitionPlan plan;
  plan.d = d;
  plan.k_clamped = k > d;
  plan.k = std::min(k, d);
  plan.s = (plan.k + 1) / 2;
  plan.step = plan.k - plan.s;

  plan.sorted_features.resize(d);
  std::iota(plan.sorted_features.begin(), plan.sorted_features.end(), 0);
  std::stable_sort(plan.sorted_features.begin(), plan.sorted_features.end(), [&](int a, int b) {
    return stats.per_feature[a].missing_rate < stats.per_feature[b].missing_rate;
  });

  auto window_at = [&](int start) {
    return std::vector<int>(plan.sorted_features.begin() + start, plan.sorted_features.begin() + start + plan.k);
  };
  if (d <= plan.k) {
    plan.windows.push_back(window_at(0));
  } else {
    // emit [i*step, i*step+k) while it fits strictly inside, then the clamped
    // final window [d-k, d); this reproduces the closed-form count exactly
    for (int start = 0; start + plan.k < d; start += plan.step) plan.windows.push_back(window_at(start));
    plan.windows.push_back(window_at(d - plan.k));
  }
  plan.P = static_cast<int>(plan.windows.size());
  return plan;
}

DatasetView partition_view(const Dataset& data, const PartitionPlan& plan, int i) {
  if (i < 0 || i >= plan.P) throw ConfigError("window index " + std::to_string(i) + " out of range (P=" + std::to_string(plan.P) + ")");
  return DatasetView(data, plan.windows[i]);
}

}  // namespace ifial
