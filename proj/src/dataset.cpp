#include "ifial/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ifial/errors.hpp"

namespace ifial {

namespace {

std::string render_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote_field(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

struct CsvRow {
  std::vector<std::string> fields;
  int line = 0;  // 1-based line the row starts on
};

// RFC-4180 style reader: quoted fields may contain commas, doubled quotes and
// line breaks.
std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  int line = 1;
  int row_line = 1;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(CsvRow{std::move(fields), row_line});
    fields.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!row_started) {
      row_started = true;
      row_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // swallow; the matching \n ends the row
    } else if (c == '\n') {
      ++line;
      end_row();
    } else {
      field += c;
    }
  }
  if (in_quotes) throw DataError("CSV: unterminated quoted field starting near line " + std::to_string(row_line));
  if (row_started || !field.empty() || !fields.empty()) end_row();
  return rows;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& raw, int line, const std::string& column) {
  const std::string s = trim(raw);
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw DataError("CSV line " + std::to_string(line) + ", column '" + column +
                    "': cannot parse '" + raw + "' as a number");
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset::Dataset(std::vector<FeatureSchema> columns, std::vector<std::vector<Cell>> feature_cells,
                 std::vector<int> labels)
    : columns_(std::move(columns)), cells_(std::move(feature_cells)), labels_(std::move(labels)) {
  for (int c = 0; c < static_cast<int>(columns_.size()); ++c) {
    if (columns_[c].role == ColumnRole::target) {
      if (target_col_ >= 0) throw DataError("schema has more than one target column");
      target_col_ = c;
    } else {
      feature_cols_.push_back(c);
    }
  }
  if (target_col_ < 0) throw DataError("schema has no target column");
  if (cells_.size() != feature_cols_.size()) throw DataError("cell storage does not match schema");
  const std::size_t n = labels_.size();
  for (const auto& col : cells_) {
    if (col.size() != n) throw DataError("ragged cell storage");
  }
  class_count_ = static_cast<int>(columns_[target_col_].categories.size());
  if (n > 0 && class_count_ < 2) throw DataError("target must have at least 2 classes");
  for (std::size_t r = 0; r < n; ++r) {
    if (labels_[r] < 0 || labels_[r] >= class_count_) throw DataError("label out of range at row " + std::to_string(r));
  }
  // cell kinds must agree with the schema
  for (std::size_t f = 0; f < cells_.size(); ++f) {
    const auto kind = columns_[feature_cols_[f]].kind;
    for (std::size_t r = 0; r < n; ++r) {
      const Cell& c = cells_[f][r];
      if (c.kind == CellKind::num && kind != FeatureKind::numerical)
        throw DataError("numeric cell in categorical column '" + columns_[feature_cols_[f]].name + "'");
      if (c.kind == CellKind::cat) {
        if (kind != FeatureKind::categorical)
          throw DataError("categorical cell in numerical column '" + columns_[feature_cols_[f]].name + "'");
        if (c.cat < 0 || c.cat >= static_cast<int>(columns_[feature_cols_[f]].categories.size()))
          throw DataError("category index out of range in column '" + columns_[feature_cols_[f]].name + "'");
      }
    }
  }
}

Dataset Dataset::with_cell(int row, int feature, const Cell& c) const {
  Dataset out = *this;
  out.cells_[feature][row] = c;
  return out;
}

DatasetView::DatasetView(const Dataset& data, std::vector<int> features)
    : data_(&data), features_(std::move(features)) {
  for (int f : features_) {
    if (f < 0 || f >= data.d()) throw DataError("view feature index out of range");
  }
}

std::vector<FeatureSchema> load_schema(const std::string& schema_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(schema_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema file " + schema_path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array())
    throw DataError("schema file must be an object with a 'columns' array");
  std::vector<FeatureSchema> cols;
  for (const auto& jc : j["columns"]) {
    FeatureSchema fs;
    if (!jc.contains("name") || !jc["name"].is_string()) throw DataError("schema column missing 'name'");
    fs.name = jc["name"].get<std::string>();
    const std::string kind = jc.value("kind", std::string());
    if (kind == "numerical") {
      fs.kind = FeatureKind::numerical;
    } else if (kind == "categorical") {
      fs.kind = FeatureKind::categorical;
    } else if (kind == "target") {
      fs.kind = FeatureKind::categorical;
      fs.role = ColumnRole::target;
    } else {
      throw DataError("schema column '" + fs.name + "': kind must be numerical|categorical|target");
    }
    if (jc.contains("categories")) {
      for (const auto& c : jc["categories"]) fs.categories.push_back(c.get<std::string>());
      // duplicate-free check
      auto sorted = fs.categories;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DataError("schema column '" + fs.name + "': duplicate categories");
    }
    cols.push_back(std::move(fs));
  }
  const int targets = static_cast<int>(
      std::count_if(cols.begin(), cols.end(), [](const FeatureSchema& c) { return c.role == ColumnRole::target; }));
  if (targets != 1) throw DataError("schema must declare exactly one target column");
  return cols;
}

Dataset load_csv(const std::string& csv_path, const std::string& schema_path) {
  auto schema = load_schema(schema_path);
  const auto rows = parse_csv(read_file(csv_path));
  if (rows.empty()) throw DataError(csv_path + ": empty CSV, header row required");

  // header: every schema column must be present; file order wins
  const auto& header = rows.front().fields;
  std::unordered_map<std::string, int> schema_by_name;
  for (int i = 0; i < static_cast<int>(schema.size()); ++i) schema_by_name[schema[i].name] = i;
  if (header.size() != schema.size())
    throw DataError(csv_path + ": header has " + std::to_string(header.size()) + " columns, schema has " +
                    std::to_string(schema.size()));
  std::vector<FeatureSchema> columns;
  columns.reserve(header.size());
  for (const auto& name : header) {
    auto it = schema_by_name.find(trim(name));
    if (it == schema_by_name.end()) throw DataError(csv_path + ": header column '" + name + "' not in schema");
    columns.push_back(schema[it->second]);
  }
  {
    auto names = header;
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw DataError(csv_path + ": duplicate header column");
  }

  const int ncols = static_cast<int>(columns.size());
  int target_col = -1;
  std::vector<int> feature_of_col(ncols, -1);
  int d = 0;
  for (int c = 0; c < ncols; ++c) {
    if (columns[c].role == ColumnRole::target) target_col = c;
    else feature_of_col[c] = d++;
  }

  std::vector<std::unordered_map<std::string, int>> cat_index(ncols);
  for (int c = 0; c < ncols; ++c) {
    for (int i = 0; i < static_cast<int>(columns[c].categories.size()); ++i)
      cat_index[c][columns[c].categories[i]] = i;
  }
  auto intern_category = [&](int c, const std::string& value) {
    auto it = cat_index[c].find(value);
    if (it != cat_index[c].end()) return it->second;
    const int idx = static_cast<int>(columns[c].categories.size());
    columns[c].categories.push_back(value);
    cat_index[c][value] = idx;
    return idx;
  };

  std::vector<std::vector<Cell>> cells(d);
  std::vector<int> labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (static_cast<int>(row.fields.size()) != ncols)
      throw DataError(csv_path + " line " + std::to_string(row.line) + ": expected " + std::to_string(ncols) +
                      " fields, got " + std::to_string(row.fields.size()));
    for (int c = 0; c < ncols; ++c) {
      const std::string& raw = row.fields[c];
      if (c == target_col) {
        if (raw.empty())
          throw DataError(csv_path + " line " + std::to_string(row.line) + ": missing target value");
        labels.push_back(intern_category(c, raw));
        continue;
      }
      const int f = feature_of_col[c];
      if (raw.empty()) {
        cells[f].push_back(Cell::make_missing());
      } else if (columns[c].kind == FeatureKind::numerical) {
        cells[f].push_back(Cell::number(parse_number(raw, row.line, columns[c].name)));
      } else {
        cells[f].push_back(Cell::category(intern_category(c, raw)));
      }
    }
  }
  return Dataset(std::move(columns), std::move(cells), std::move(labels));
}

std::string csv_to_string(const Dataset& data) {
  const auto& columns = data.columns();
  std::ostringstream out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ',';
    out << quote_field(columns[c].name);
  }
  out << '\n';
  // map file columns back to feature slots
  std::vector<int> feature_of_col(columns.size(), -1);
  int f = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].role == ColumnRole::feature) feature_of_col[c] = f++;
  }
  for (int r = 0; r < data.n(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ',';
      if (columns[c].role == ColumnRole::target) {
        out << quote_field(columns[c].categories[data.label(r)]);
        continue;
      }
      const Cell& cell = data.cell(r, feature_of_col[c]);
      switch (cell.kind) {
        case CellKind::missing: break;  // empty string
        case CellKind::num: out << render_double(cell.num); break;
        case CellKind::cat: out << quote_field(columns[c].categories[cell.cat]); break;
      }
    }
    out << '\n';
  }
  return out.str();
}

void write_csv(const Dataset& data, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + csv_path);
  out << csv_to_string(data);
}

FeatureStats compute_stats(const Dataset& data, const std::vector<int>& rows) {
  if (rows.empty()) throw DataError("compute_stats: empty row subset");
  for (int r : rows) {
    if (r < 0 || r >= data.n()) throw DataError("compute_stats: row index out of range");
  }
  FeatureStats stats;
  stats.per_feature.resize(data.d());
  const double n = static_cast<double>(rows.size());
  for (int f = 0; f < data.d(); ++f) {
    auto& pf = stats.per_feature[f];
    const auto& schema = data.feature(f);
    if (schema.kind == FeatureKind::numerical) {
      std::vector<double> observed;
      observed.reserve(rows.size());
      for (int r : rows) {
        const Cell& c = data.cell(r, f);
        if (!c.is_missing()) observed.push_back(c.num);
      }
      pf.observed = static_cast<long>(observed.size());
      pf.missing_rate = (n - static_cast<double>(pf.observed)) / n;
      if (!observed.empty()) {
        double sum = 0.0;
        for (double v : observed) sum += v;
        pf.mean = sum / static_cast<double>(observed.size());
        if (observed.size() >= 2) {
          double ss = 0.0;
          for (double v : observed) ss += (v - pf.mean) * (v - pf.mean);
          pf.stddev = std::sqrt(ss / static_cast<double>(observed.size() - 1));
          if (pf.stddev == 0.0) pf.stddev = 1.0;  // constant feature
        } else {
          pf.stddev = 1.0;
        }
        std::sort(observed.begin(), observed.end());
        const std::size_t m = observed.size();
        pf.median = (m % 2 == 1) ? observed[m / 2] : 0.5 * (observed[m / 2 - 1] + observed[m / 2]);
      }
    } else {
      std::vector<long> counts(schema.categories.size(), 0);
      long observed = 0;
      for (int r : rows) {
        const Cell& c = data.cell(r, f);
        if (!c.is_missing()) {
          ++counts[c.cat];
          ++observed;
        }
      }
      pf.observed = observed;
      pf.missing_rate = (n - static_cast<double>(observed)) / n;
      int mode = 0;
      for (int i = 1; i < static_cast<int>(counts.size()); ++i) {
        if (counts[i] > counts[mode]) mode = i;  // ties keep the smaller index
      }
      pf.mode = mode;
    }
  }
  return stats;
}

Dataset standardize(const Dataset& data, const FeatureStats& stats) {
  if (stats.d() != data.d()) throw DataError("standardize: stats do not match dataset");
  Dataset out = data;
  for (int f = 0; f < data.d(); ++f) {
    if (data.feature(f).kind != FeatureKind::numerical) continue;
    const auto& pf = stats.per_feature[f];
    for (int r = 0; r < data.n(); ++r) {
      Cell& c = out.cells_[f][r];
      if (c.kind == CellKind::num) c.num = (c.num - pf.mean) / pf.stddev;
    }
  }
  return out;
}

}  // namespace ifial
