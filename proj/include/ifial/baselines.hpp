#pragma once

#include <string>
#include <vector>

#include "ifial/dataset.hpp"
#include "ifial/train.hpp"

namespace ifial {

enum class MethodId : std::uint8_t { ifial, am_ftt, median_ftt };

std::string method_name(MethodId id);
MethodId parse_method(const std::string& s);

struct Method {
  MethodId id = MethodId::ifial;
  int k = 0;  // partition size; meaningful for ifial only (0 = ceil(d/2) at run time)
};

// Training-fold medians/modes imputed everywhere (test folds included), so the
// imputer never learns from test cells.
Dataset impute_median(const Dataset& data, const FeatureStats& stats, std::vector<std::string>* warnings = nullptr);

struct MethodRun {
  Eigen::MatrixXd probs;  // test rows x classes
  std::vector<SessionLog> sessions;
  std::vector<std::string> warnings;
  ModelState state;  // trained weights (the leakage harness diffs these)
};

// All three methods share the same model, optimizer, seeds and splits; they
// differ only in how missing values are handled:
//   ifial      - masked attention + incremental windows of size k
//   am_ftt     - masked attention, single window over all d features
//   median_ftt - impute first, then the same single-window training
MethodRun run_method(const Method& method, const std::vector<int>& train_rows,
                     const std::vector<int>& test_rows, const Dataset& data, const ModelConfig& mcfg,
                     const TrainConfig& tcfg);

// row-subset copy (training folds become standalone datasets)
Dataset subset_rows(const Dataset& data, const std::vector<int>& rows);

}  // namespace ifial
