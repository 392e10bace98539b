#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ifial {

// A cell is a tagged value, never a sentinel: an observed 0.0 and a missing
// entry are distinct by construction.
enum class CellKind : std::uint8_t { missing, num, cat };

struct Cell {
  CellKind kind = CellKind::missing;
  double num = 0.0;
  int cat = -1;

  static Cell make_missing() { return Cell{}; }
  static Cell number(double v) { return Cell{CellKind::num, v, -1}; }
  static Cell category(int idx) { return Cell{CellKind::cat, 0.0, idx}; }
  bool is_missing() const { return kind == CellKind::missing; }
};

enum class FeatureKind : std::uint8_t { numerical, categorical };
enum class ColumnRole : std::uint8_t { feature, target };

struct FeatureSchema {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;
  ColumnRole role = ColumnRole::feature;
  // category vocabulary in first-seen order (categorical features and the
  // target's class labels)
  std::vector<std::string> categories;
};

// Immutable after construction; safe to share read-only across folds.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<FeatureSchema> columns, std::vector<std::vector<Cell>> feature_cells,
          std::vector<int> labels);

  int n() const { return static_cast<int>(labels_.size()); }
  int d() const { return static_cast<int>(feature_cols_.size()); }
  int class_count() const { return class_count_; }

  const Cell& cell(int row, int feature) const { return cells_[feature][row]; }
  int label(int row) const { return labels_[row]; }

  const FeatureSchema& feature(int f) const { return columns_[feature_cols_[f]]; }
  const std::vector<FeatureSchema>& columns() const { return columns_; }
  const FeatureSchema& target() const { return columns_[target_col_]; }
  const std::vector<int>& labels() const { return labels_; }

  // mutation helpers return copies; the receiver stays untouched
  Dataset with_cell(int row, int feature, const Cell& c) const;
  std::vector<std::vector<Cell>> feature_cells() const { return cells_; }

 private:
  std::vector<FeatureSchema> columns_;  // file order, exactly one target
  std::vector<int> feature_cols_;       // indices into columns_ with role == feature
  int target_col_ = -1;
  std::vector<std::vector<Cell>> cells_;  // [feature][row]
  std::vector<int> labels_;
  int class_count_ = 0;

  friend Dataset standardize(const Dataset&, const struct FeatureStats&);
};

// Zero-copy column-subset view (a partition window, or the full feature set
// at inference time). Labels are shared with the underlying dataset.
class DatasetView {
 public:
  DatasetView(const Dataset& data, std::vector<int> features);

  int n() const { return data_->n(); }
  int d() const { return static_cast<int>(features_.size()); }
  int class_count() const { return data_->class_count(); }
  int global_feature(int j) const { return features_[j]; }
  const Cell& cell(int row, int j) const { return data_->cell(row, features_[j]); }
  const FeatureSchema& feature(int j) const { return data_->feature(features_[j]); }
  int label(int row) const { return data_->label(row); }
  const std::vector<int>& features() const { return features_; }

 private:
  const Dataset* data_;
  std::vector<int> features_;
};

struct FeatureStats {
  struct PerFeature {
    double missing_rate = 0.0;
    long observed = 0;
    // numerical features (observed cells only)
    double mean = 0.0;
    double stddev = 1.0;  // sample std (n-1); 1 when fewer than 2 observed
    double median = 0.0;
    // categorical features
    int mode = 0;
  };
  std::vector<PerFeature> per_feature;

  int d() const { return static_cast<int>(per_feature.size()); }
};

// CSV + JSON schema ingestion. Empty string cells become Missing; unknown
// categories are appended in first-seen order; rows with a missing target
// are rejected.
Dataset load_csv(const std::string& csv_path, const std::string& schema_path);
void write_csv(const Dataset& data, const std::string& csv_path);
std::string csv_to_string(const Dataset& data);

std::vector<FeatureSchema> load_schema(const std::string& schema_path);

// Statistics over a row subset (the training fold). Never reads cells outside
// `rows`.
FeatureStats compute_stats(const Dataset& data, const std::vector<int>& rows);

// (x - mean) / std on observed numerical cells; Missing and categorical cells
// pass through.
Dataset standardize(const Dataset& data, const FeatureStats& stats);

}  // namespace ifial
