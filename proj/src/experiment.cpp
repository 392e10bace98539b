#include "ifial/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "ifial/errors.hpp"
#include "ifial/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ifial {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw ConfigError(path + ": " + why);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) bad_field(where.empty() ? key : where + "." + key, "unknown key");
  }
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad_field(path, "expected an integer");
  return j.get<int>();
}

double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) bad_field(path, "expected a number");
  return j.get<double>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) bad_field(path, "expected a string");
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) bad_field(path, "expected a boolean");
  return j.get<bool>();
}

void parse_model_overrides(const json& jm, ModelConfig& m) {
  check_keys(jm, "model",
             {"preset", "model_dim", "num_layers", "num_heads", "ffn_dim", "dropout", "activation", "gated_ffn"});
  if (jm.contains("preset")) {
    const std::string p = get_string(jm["preset"], "model.preset");
    if (p == "desk") m = ModelConfig::desk();
    else if (p == "full") m = ModelConfig::full_size();
    else bad_field("model.preset", "expected desk|full");
  }
  if (jm.contains("model_dim")) m.model_dim = get_int(jm["model_dim"], "model.model_dim");
  if (jm.contains("num_layers")) m.num_layers = get_int(jm["num_layers"], "model.num_layers");
  if (jm.contains("num_heads")) m.num_heads = get_int(jm["num_heads"], "model.num_heads");
  if (jm.contains("ffn_dim")) m.ffn_dim = get_int(jm["ffn_dim"], "model.ffn_dim");
  if (jm.contains("dropout")) m.dropout = get_double(jm["dropout"], "model.dropout");
  if (jm.contains("activation")) m.activation = parse_activation(get_string(jm["activation"], "model.activation"));
  if (jm.contains("gated_ffn")) m.gated_ffn = get_bool(jm["gated_ffn"], "model.gated_ffn");
  try {
    m.validate();
  } catch (const ConfigError& e) {
    bad_field("model", e.what());
  }
}

void parse_train_overrides(const json& jt, TrainConfig& t) {
  check_keys(jt, "train",
             {"preset", "learning_rate", "weight_decay", "max_epochs", "batch_size", "patience", "val_fraction",
              "epochs_per_session", "reset_adam_per_session"});
  if (jt.contains("preset")) {
    const std::string p = get_string(jt["preset"], "train.preset");
    if (p == "desk") t = TrainConfig::desk();
    else if (p == "full") t = TrainConfig::full_size();
    else bad_field("train.preset", "expected desk|full");
  }
  if (jt.contains("learning_rate")) t.learning_rate = get_double(jt["learning_rate"], "train.learning_rate");
  if (jt.contains("weight_decay")) t.weight_decay = get_double(jt["weight_decay"], "train.weight_decay");
  if (jt.contains("max_epochs")) t.max_epochs = get_int(jt["max_epochs"], "train.max_epochs");
  if (jt.contains("batch_size")) t.batch_size = get_int(jt["batch_size"], "train.batch_size");
  if (jt.contains("patience")) t.patience = get_int(jt["patience"], "train.patience");
  if (jt.contains("val_fraction")) t.val_fraction = get_double(jt["val_fraction"], "train.val_fraction");
  if (jt.contains("epochs_per_session")) {
    const std::string p = get_string(jt["epochs_per_session"], "train.epochs_per_session");
    if (p == "full_budget") t.epochs_per_session = TrainConfig::EpochPolicy::full_budget;
    else if (p == "divided") t.epochs_per_session = TrainConfig::EpochPolicy::divided;
    else bad_field("train.epochs_per_session", "expected full_budget|divided");
  }
  if (jt.contains("reset_adam_per_session"))
    t.reset_adam_per_session = get_bool(jt["reset_adam_per_session"], "train.reset_adam_per_session");
  try {
    t.validate();
  } catch (const ConfigError& e) {
    bad_field("train", e.what());
  }
}

bool valid_dataset_id(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  }
  return true;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": config must be a JSON object");
  check_keys(j, "", {"version", "dataset", "schema", "dataset_id", "methods", "mechanisms", "rates", "k",
                     "model", "train", "folds", "seeds", "output_dir", "reference"});

  ExperimentConfig cfg;
  if (j.contains("version")) {
    cfg.version = get_int(j["version"], "version");
    if (cfg.version != 1) bad_field("version", "unsupported config version");
  }
  if (!j.contains("dataset")) bad_field("dataset", "required");
  cfg.dataset_path = get_string(j["dataset"], "dataset");
  if (!j.contains("schema")) bad_field("schema", "required");
  cfg.schema_path = get_string(j["schema"], "schema");

  if (j.contains("dataset_id")) {
    cfg.dataset_id = get_string(j["dataset_id"], "dataset_id");
  } else {
    cfg.dataset_id = fs::path(cfg.dataset_path).stem().string();
  }
  if (!valid_dataset_id(cfg.dataset_id))
    bad_field("dataset_id", "must be non-empty and use only [A-Za-z0-9_.-]");

  if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty())
    bad_field("methods", "required non-empty array");
  for (std::size_t i = 0; i < j["methods"].size(); ++i) {
    try {
      cfg.methods.push_back(parse_method(get_string(j["methods"][i], "methods[" + std::to_string(i) + "]")));
    } catch (const ConfigError& e) {
      bad_field("methods[" + std::to_string(i) + "]", e.what());
    }
  }

  if (j.contains("mechanisms")) {
    if (!j["mechanisms"].is_array()) bad_field("mechanisms", "expected an array");
    for (std::size_t i = 0; i < j["mechanisms"].size(); ++i) {
      const std::string path = "mechanisms[" + std::to_string(i) + "]";
      Mechanism m;
      try {
        m = parse_mechanism(get_string(j["mechanisms"][i], path));
      } catch (const ConfigError& e) {
        bad_field(path, e.what());
      }
      if (m == Mechanism::none) bad_field(path, "'none' is implied by reference=true, not listed here");
      cfg.mechanisms.push_back(m);
    }
  }

  if (j.contains("rates")) {
    if (!j["rates"].is_array()) bad_field("rates", "expected an array");
    for (std::size_t i = 0; i < j["rates"].size(); ++i) {
      const std::string path = "rates[" + std::to_string(i) + "]";
      const double r = get_double(j["rates"][i], path);
      if (!(r > 0.0 && r < 1.0)) bad_field(path, "must lie strictly in (0,1), got " + std::to_string(r));
      cfg.rates.push_back(r);
    }
  }
  if (!cfg.mechanisms.empty() && cfg.rates.empty()) bad_field("rates", "required when mechanisms are listed");

  if (j.contains("k")) {
    if (j["k"].is_string()) {
      if (j["k"].get<std::string>() != "half_d") bad_field("k", "expected an integer >= 2 or \"half_d\"");
      cfg.k = 0;
    } else {
      cfg.k = get_int(j["k"], "k");
      if (cfg.k < 2) bad_field("k", "partition size must be >= 2");
    }
  }

  if (j.contains("model")) {
    if (!j["model"].is_object()) bad_field("model", "expected an object");
    parse_model_overrides(j["model"], cfg.model);
  }
  if (j.contains("train")) {
    if (!j["train"].is_object()) bad_field("train", "expected an object");
    parse_train_overrides(j["train"], cfg.train);
  }

  if (j.contains("folds")) {
    cfg.folds = get_int(j["folds"], "folds");
    if (cfg.folds < 2) bad_field("folds", "need at least 2 folds");
  }

  if (!j.contains("seeds") || !j["seeds"].is_array() || j["seeds"].empty())
    bad_field("seeds", "required non-empty array");
  for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
    const std::string path = "seeds[" + std::to_string(i) + "]";
    const auto& js = j["seeds"][i];
    if (!js.is_number_integer() || (js.is_number_integer() && !js.is_number_unsigned() && js.get<long long>() < 0))
      bad_field(path, "expected a non-negative integer");
    cfg.seeds.push_back(js.get<std::uint64_t>());
  }

  if (j.contains("output_dir")) cfg.output_dir = get_string(j["output_dir"], "output_dir");
  if (j.contains("reference")) cfg.reference = get_bool(j["reference"], "reference");

  if (cfg.mechanisms.empty() && !cfg.reference)
    bad_field("mechanisms", "nothing to run: list mechanisms or set reference=true");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_file(path), path);
}

std::uint64_t file_content_hash(const std::string& path) { return hash_bytes(read_file(path)); }

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// canonical serialization of the effective config; its hash goes into the
// manifest so `report` can tell which run produced a results file
std::string canonical_config_json(const ExperimentConfig& c) {
  json j;
  j["version"] = c.version;
  j["dataset"] = c.dataset_path;
  j["schema"] = c.schema_path;
  j["dataset_id"] = c.dataset_id;
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  json mechs = json::array();
  for (auto m : c.mechanisms) mechs.push_back(mechanism_name(m));
  j["mechanisms"] = mechs;
  j["rates"] = c.rates;
  j["k"] = c.k;
  j["model"] = {{"model_dim", c.model.model_dim}, {"num_layers", c.model.num_layers},
                {"num_heads", c.model.num_heads}, {"ffn_dim", c.model.ffn_dim},
                {"dropout", c.model.dropout},     {"activation", activation_name(c.model.activation)},
                {"gated_ffn", c.model.gated_ffn}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"max_epochs", c.train.max_epochs},
                {"batch_size", c.train.batch_size},
                {"patience", c.train.patience},
                {"val_fraction", c.train.val_fraction},
                {"epochs_per_session",
                 c.train.epochs_per_session == TrainConfig::EpochPolicy::divided ? "divided" : "full_budget"},
                {"reset_adam_per_session", c.train.reset_adam_per_session}};
  j["folds"] = c.folds;
  json seeds = json::array();
  for (auto s : c.seeds) seeds.push_back(std::to_string(s));
  j["seeds"] = seeds;
  j["reference"] = c.reference;
  return j.dump(1);
}

struct GridCell {
  MethodId method;
  Mechanism mechanism;  // none = reference cell
  double rate;
  std::uint64_t seed;
};

std::string cell_key(const std::string& dataset, const GridCell& c) {
  return dataset + "|" + method_name(c.method) + "|" + mechanism_name(c.mechanism) + "|" +
         fmt_double(c.mechanism == Mechanism::none ? 0.0 : c.rate) + "|" + std::to_string(c.seed);
}

json rank_table_json(const RankTable& t) {
  json j;
  j["methods"] = t.methods;
  j["rows"] = json::array();
  for (const auto& row : t.rows) {
    json mean = json::object(), sd = json::object();
    for (std::size_t i = 0; i < t.methods.size(); ++i) {
      mean[t.methods[i]] = row.mean_rank[i];
      sd[t.methods[i]] = row.std_rank[i];
    }
    j["rows"].push_back({{"mechanism", row.mechanism},
                         {"rate", row.rate},
                         {"datasets", row.datasets},
                         {"mean_rank", std::move(mean)},
                         {"std_rank", std::move(sd)}});
  }
  return j;
}

json win_matrix_json(const WinMatrix& w) {
  json wins = json::array(), ties = json::array();
  for (int i = 0; i < w.wins.rows(); ++i) {
    json wr = json::array(), tr = json::array();
    for (int jcol = 0; jcol < w.wins.cols(); ++jcol) {
      wr.push_back(w.wins(i, jcol));
      tr.push_back(w.ties(i, jcol));
    }
    wins.push_back(std::move(wr));
    ties.push_back(std::move(tr));
  }
  return json{{"methods", w.methods}, {"scenarios", w.scenarios}, {"wins", std::move(wins)}, {"ties", std::move(ties)}};
}

std::string robustness_csv(const RobustnessCurve& rc) {
  auto points = rc.points;
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.mechanism, a.rate) < std::tie(b.method, b.mechanism, b.rate);
  });
  std::ostringstream out;
  out << "method,mechanism,rate,percent_of_reference,datasets\n";
  for (const auto& p : points) {
    out << p.method << ',' << p.mechanism << ',' << fmt_double(p.rate) << ',' << fmt_double(p.percent) << ','
        << p.datasets << '\n';
  }
  return out.str();
}

json fold_logs_json(const std::vector<FoldLog>& logs) {
  json arr = json::array();
  for (const auto& lg : logs) {
    json sessions = json::array();
    for (const auto& s : lg.sessions) {
      sessions.push_back({{"window", s.window},
                          {"epochs_run", s.epochs_run},
                          {"best_val_loss", s.best_val_loss},
                          {"early_stopped", s.early_stopped},
                          {"wall_seconds", s.wall_seconds}});
    }
    arr.push_back({{"method", lg.method},
                   {"mechanism", lg.mechanism},
                   {"rate", lg.rate},
                   {"seed", std::to_string(lg.seed)},
                   {"fold", lg.fold},
                   {"sessions", std::move(sessions)},
                   {"warnings", lg.warnings}});
  }
  return arr;
}

void write_report_files(const std::string& out_dir, const std::vector<FoldResult>& results,
                        const std::vector<FoldResult>& reference, std::map<std::string, std::string>& written) {
  if (!results.empty()) {
    const auto rt = rank_table(results);
    const auto wm = win_matrix(results);
    written["rank_table.json"] = rank_table_json(rt).dump(1) + "\n";
    written["win_matrix.json"] = win_matrix_json(wm).dump(1) + "\n";
    if (!reference.empty()) written["robustness.csv"] = robustness_csv(robustness_curve(results, reference));
  }
  for (const auto& [name, content] : written) write_file((fs::path(out_dir) / name).string(), content);
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, int jobs, bool resume) {
  const Dataset data = load_csv(cfg.dataset_path, cfg.schema_path);

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  const fs::path marker = out_dir / ".inprogress";
  const fs::path partial = out_dir / "results.partial.csv";
  if (fs::exists(marker) && !resume)
    throw ConfigError("output directory " + cfg.output_dir +
                      " holds a partial run; pass --resume to continue it or remove the directory");

  // already-finished grid cells from an interrupted run
  std::set<std::string> done;
  std::vector<FoldResult> carried;
  if (resume && fs::exists(partial)) {
    std::map<std::string, std::vector<FoldResult>> by_cell;
    for (auto& r : read_results_csv(partial.string())) {
      GridCell c{parse_method(r.method), parse_mechanism(r.mechanism), r.rate, r.seed};
      by_cell[cell_key(r.dataset, c)].push_back(std::move(r));
    }
    for (auto& [key, rows] : by_cell) {
      if (static_cast<int>(rows.size()) == cfg.folds) {  // complete cells only
        done.insert(key);
        for (auto& r : rows) carried.push_back(std::move(r));
      }
    }
  } else if (fs::exists(partial)) {
    fs::remove(partial);
  }
  write_file(marker.string(), "running\n");

  std::vector<GridCell> cells;
  for (const auto method : cfg.methods) {
    for (const auto seed : cfg.seeds) {
      for (const auto mech : cfg.mechanisms) {
        for (const double rate : cfg.rates) cells.push_back({method, mech, rate, seed});
      }
      if (cfg.reference) cells.push_back({method, Mechanism::none, 0.0, seed});
    }
  }

  std::vector<GridCell> todo;
  for (const auto& c : cells) {
    if (!done.count(cell_key(cfg.dataset_id, c))) todo.push_back(c);
  }

  std::mutex mu;
  std::vector<FoldResult> results = std::move(carried);
  std::vector<FoldLog> logs;
  const bool partial_empty = !fs::exists(partial) || fs::file_size(partial) == 0;
  std::ofstream partial_out(partial, std::ios::binary | std::ios::app);
  if (partial_out && partial_empty) partial_out << "dataset,method,mechanism,rate,fold,seed,auc\n";

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const GridCell& c = todo[i];
      try {
        CrossValSpec spec;
        spec.dataset_id = cfg.dataset_id;
        spec.method.id = c.method;
        if (c.method == MethodId::ifial) spec.method.k = cfg.k;
        spec.mechanism = c.mechanism;
        spec.rate = c.rate;
        spec.folds = cfg.folds;
        spec.seeds = {c.seed};
        spec.mcfg = cfg.model;
        spec.tcfg = cfg.train;
        std::vector<FoldLog> cell_logs;
        auto cell_results = cross_validate(data, spec, &cell_logs);

        std::lock_guard<std::mutex> lock(mu);
        for (const auto& r : cell_results) {
          if (partial_out)
            partial_out << r.dataset << ',' << r.method << ',' << r.mechanism << ',' << fmt_double(r.rate) << ','
                        << r.fold << ',' << r.seed << ',' << fmt_double(r.auc) << '\n';
        }
        if (partial_out) partial_out.flush();
        for (auto& r : cell_results) results.push_back(std::move(r));
        for (auto& lg : cell_logs) logs.push_back(std::move(lg));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        next.store(todo.size());  // stop handing out work
        return;
      }
    }
  };

  jobs = std::clamp<int>(jobs, 1, std::max<std::size_t>(todo.size(), 1));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  partial_out.close();
  if (first_error) std::rethrow_exception(first_error);

  // split the reference (complete data) records from the missingness grid
  std::vector<FoldResult> grid, reference;
  for (auto& r : results) (r.mechanism == "none" ? reference : grid).push_back(std::move(r));

  std::map<std::string, std::string> outputs;
  outputs["results.csv"] = results_to_csv(grid);
  if (!reference.empty()) outputs["reference.csv"] = results_to_csv(reference);
  std::sort(logs.begin(), logs.end(), [](const FoldLog& a, const FoldLog& b) {
    return std::tie(a.method, a.mechanism, a.rate, a.seed, a.fold) <
           std::tie(b.method, b.mechanism, b.rate, b.seed, b.fold);
  });
  outputs["session_logs.json"] = fold_logs_json(logs).dump(1) + "\n";
  write_report_files(out_dir.string(), grid, reference, outputs);

  json manifest;
  manifest["version"] = 1;
  manifest["config_hash"] = hex64(hash_bytes(canonical_config_json(cfg)));
  json seeds = json::array();
  for (auto s : cfg.seeds) seeds.push_back(std::to_string(s));
  manifest["seeds"] = std::move(seeds);
  json hashes = json::object();
  for (const auto& [name, content] : outputs) hashes[name] = hex64(hash_bytes(content));
  manifest["outputs"] = std::move(hashes);
  write_file((out_dir / "manifest.json").string(), manifest.dump(1) + "\n");

  fs::remove(partial);
  fs::remove(marker);
}

void report_from_results(const std::string& results_path, const std::string& out_dir) {
  const fs::path rp(results_path);
  const fs::path dir = rp.parent_path().empty() ? fs::path(".") : rp.parent_path();
  const fs::path manifest_path = dir / "manifest.json";

  if (fs::exists(manifest_path)) {
    json manifest;
    try {
      manifest = json::parse(read_file(manifest_path.string()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest.json: " + std::string(e.what()));
    }
    const auto& outputs = manifest.at("outputs");
    const std::string fname = rp.filename().string();
    if (outputs.contains(fname)) {
      const std::string expected = outputs.at(fname).get<std::string>();
      const std::string actual = hex64(file_content_hash(results_path));
      if (expected != actual)
        throw DataError(results_path + " does not match its manifest hash (expected " + expected + ", got " +
                        actual + "); refusing to report on modified results");
    }
  }

  const auto results = read_results_csv(results_path);
  std::vector<FoldResult> reference;
  const fs::path ref_path = dir / "reference.csv";
  if (fs::exists(ref_path)) reference = read_results_csv(ref_path.string());

  const std::string target = out_dir.empty() ? dir.string() : out_dir;
  fs::create_directories(target);
  std::map<std::string, std::string> outputs;
  write_report_files(target, results, reference, outputs);
}

}  // namespace ifial
