#pragma once

#include <vector>

#include "ifial/dataset.hpp"

namespace ifial {

// Overlapping fixed-size windows over features sorted by ascending missing
// rate. Consecutive windows share ceil(k/2) features; the last window is
// clamped to the final k sorted features when the stride overshoots.
struct PartitionPlan {
  int d = 0;
  int k = 0;
  int s = 0;     // overlap = ceil(k/2)
  int step = 0;  // k - s
  int P = 0;     // window count, closed form below
  bool k_clamped = false;  // true when requested k exceeded d
  std::vector<int> sorted_features;        // ascending missing rate, ties by index
  std::vector<std::vector<int>> windows;   // global feature ids, sorted order
};

// window count: 1 + ceil((d-k)/(k-ceil(k/2))) for d > k, else 1
int partition_count(int d, int k);

int default_k(int d);  // ceil(d/2)

PartitionPlan build_plan(const FeatureStats& stats, int k);

DatasetView partition_view(const Dataset& data, const PartitionPlan& plan, int i);

}  // namespace ifial
