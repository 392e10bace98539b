#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ifial/baselines.hpp"
#include "ifial/dataset.hpp"
#include "ifial/errors.hpp"
#include "ifial/eval.hpp"
#include "ifial/experiment.hpp"
#include "ifial/model.hpp"
#include "ifial/partition.hpp"
#include "ifial/rng.hpp"
#include "ifial/simulate.hpp"
#include "ifial/train.hpp"

using json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool deterministic_mode() {
  const char* v = std::getenv("IFIAL_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

void emit_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            const std::vector<std::uint64_t>& seed_override, int jobs, bool resume) {
  ifial::ExperimentConfig cfg = ifial::load_experiment_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (!seed_override.empty()) cfg.seeds = seed_override;
  if (deterministic_mode() && jobs != 1) {
    std::cerr << "IFIAL_DETERMINISTIC=1: forcing --jobs 1\n";
    jobs = 1;
  }
  ifial::run_experiment(cfg, jobs, resume);
  std::cout << "results written to " << cfg.output_dir << "\n";
  return ifial::kExitOk;
}

int cmd_simulate(const std::string& in, const std::string& schema, const std::string& mechanism, double rate,
                 std::uint64_t seed, const std::string& out) {
  ifial::MissingSpec spec;
  spec.mechanism = ifial::parse_mechanism(mechanism);
  spec.rate = rate;
  spec.seed = seed;
  const ifial::Dataset data = ifial::load_csv(in, schema);
  const ifial::Dataset masked = ifial::inject(data, spec);
  ifial::write_csv(masked, out);
  return ifial::kExitOk;
}

int cmd_partitions(int d, int k, const std::string& rates_path) {
  std::vector<double> rates(static_cast<std::size_t>(std::max(d, 0)), 0.0);
  if (!rates_path.empty()) {
    std::ifstream in(rates_path);
    if (!in) throw ifial::DataError("cannot open rates file: " + rates_path);
    rates.clear();
    double r = 0.0;
    while (in >> r) rates.push_back(r);
    if (static_cast<int>(rates.size()) != d)
      throw ifial::DataError("rates file holds " + std::to_string(rates.size()) + " values, expected " +
                             std::to_string(d));
  }
  ifial::FeatureStats stats;
  stats.per_feature.resize(rates.size());
  for (std::size_t f = 0; f < rates.size(); ++f) stats.per_feature[f].missing_rate = rates[f];

  const ifial::PartitionPlan plan = ifial::build_plan(stats, k);
  json j;
  j["d"] = plan.d;
  j["k"] = plan.k;
  j["overlap"] = plan.s;
  j["step"] = plan.step;
  j["partitions"] = plan.P;
  j["sorted_features"] = plan.sorted_features;
  j["windows"] = plan.windows;
  if (plan.k_clamped) j["k_clamped"] = true;
  std::cout << j.dump(1) << "\n";
  return ifial::kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& log_path) {
  const ifial::ExperimentConfig cfg = ifial::load_experiment_config(config_path);
  const ifial::Dataset data = ifial::load_csv(cfg.dataset_path, cfg.schema_path);

  std::vector<int> rows(data.n());
  std::iota(rows.begin(), rows.end(), 0);
  const ifial::FeatureStats stats = ifial::compute_stats(data, rows);
  const int k = cfg.k > 0 ? cfg.k : ifial::default_k(data.d());
  const ifial::PartitionPlan plan = ifial::build_plan(stats, k);
  const ifial::Dataset working = ifial::standardize(data, stats);

  ifial::ModelConfig mcfg = cfg.model;
  mcfg.class_count = data.class_count();
  ifial::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seeds.front();
  const ifial::TrainResult trained = ifial::train_ifial(working, plan, mcfg, tcfg);
  emit_warnings(trained.warnings);

  std::vector<ifial::FeatureSchema> feature_schema;
  for (const auto& col : data.columns()) {
    if (col.role == ifial::ColumnRole::feature) feature_schema.push_back(col);
  }
  ifial::save_checkpoint(trained.state, out, &stats, &feature_schema);
  std::cout << "checkpoint written to " << out << "\n";

  if (!log_path.empty()) {
    json sessions = json::array();
    for (const auto& s : trained.sessions) {
      sessions.push_back({{"window", s.window},
                          {"epochs_run", s.epochs_run},
                          {"best_val_loss", s.best_val_loss},
                          {"early_stopped", s.early_stopped},
                          {"wall_seconds", s.wall_seconds}});
    }
    json j{{"partitions", plan.P}, {"k", plan.k}, {"sessions", std::move(sessions)},
           {"warnings", trained.warnings}};
    std::ofstream log_out(log_path, std::ios::binary);
    if (!log_out) throw ifial::DataError("cannot write log file: " + log_path);
    log_out << j.dump(1) << "\n";
  }
  return ifial::kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& in, const std::string& schema,
                const std::string& out) {
  const ifial::Checkpoint ckpt = ifial::load_checkpoint(model_path);
  ifial::Dataset data = ifial::load_csv(in, schema);
  if (ckpt.has_stats) data = ifial::standardize(data, ckpt.stats);

  std::vector<int> rows(data.n());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::string> warnings;
  const Eigen::MatrixXd probs = ifial::predict(ckpt.state, data, rows, &warnings);
  emit_warnings(warnings);

  std::ofstream os(out, std::ios::binary);
  if (!os) throw ifial::DataError("cannot write file: " + out);
  os << "row";
  for (int c = 0; c < probs.cols(); ++c) os << ",p" << c;
  os << '\n';
  for (int r = 0; r < probs.rows(); ++r) {
    os << r;
    for (int c = 0; c < probs.cols(); ++c) os << ',' << fmt_double(probs(r, c));
    os << '\n';
  }
  return ifial::kExitOk;
}

int cmd_cost(int d, int kmin, int kmax, const std::string& mode, const std::string& out) {
  ifial::CostModel cm;
  cm.mode = ifial::parse_cost_mode(mode);
  if (kmin < 2 || kmax > d || kmin > kmax)
    throw ifial::ConfigError("need 2 <= kmin <= kmax <= d, got kmin=" + std::to_string(kmin) +
                             " kmax=" + std::to_string(kmax) + " d=" + std::to_string(d));
  std::ostringstream table;
  table << "k,partitions,ratio\n";
  for (int k = kmin; k <= kmax; ++k) {
    table << k << ',' << ifial::partition_count(d, k) << ',' << fmt_double(ifial::cost_ratio(d, k, cm)) << '\n';
  }
  if (out.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw ifial::DataError("cannot write file: " + out);
    os << table.str();
  }
  return ifial::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental attention learning over incomplete tabular data"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a full experiment grid from a JSON config");
  std::string run_config, run_out;
  std::vector<std::uint64_t> run_seeds;
  int run_jobs = 1;
  bool run_resume = false;
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->add_option("--out", run_out, "override the config's output directory");
  run->add_option("--seed", run_seeds, "override the config's seed list");
  run->add_option("--jobs", run_jobs, "worker pool size")->default_val(1);
  run->add_flag("--resume", run_resume, "continue an interrupted run");

  // simulate
  auto* sim = app.add_subcommand("simulate", "inject missingness into a complete CSV");
  std::string sim_in, sim_schema, sim_mech, sim_out;
  double sim_rate = 0.0;
  std::uint64_t sim_seed = 0;
  sim->add_option("--in", sim_in, "input CSV")->required();
  sim->add_option("--schema", sim_schema, "schema JSON")->required();
  sim->add_option("--mechanism", sim_mech, "mcar|mnar")->required();
  sim->add_option("--rate", sim_rate, "per-feature missing rate in (0,1)")->required();
  sim->add_option("--seed", sim_seed, "rng seed")->default_val(0);
  sim->add_option("--out", sim_out, "output CSV")->required();

  // partitions
  auto* part = app.add_subcommand("partitions", "print the overlapping-window plan as JSON");
  int part_d = 0, part_k = 0;
  std::string part_rates;
  part->add_option("--d", part_d, "feature count")->required();
  part->add_option("--k", part_k, "window size")->required();
  part->add_option("--rates", part_rates, "whitespace-separated missing rates, one per feature");

  // train
  auto* train = app.add_subcommand("train", "train one model on the config's full dataset");
  std::string train_config, train_out, train_log;
  train->add_option("--config", train_config, "experiment config JSON")->required();
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--log", train_log, "session log JSON path");

  // predict
  auto* pred = app.add_subcommand("predict", "score a CSV with a trained checkpoint");
  std::string pred_model, pred_in, pred_schema, pred_out;
  pred->add_option("--model", pred_model, "checkpoint path")->required();
  pred->add_option("--in", pred_in, "input CSV")->required();
  pred->add_option("--schema", pred_schema, "schema JSON")->required();
  pred->add_option("--out", pred_out, "probability CSV")->required();

  // cost
  auto* cost = app.add_subcommand("cost", "tabulate the incremental/full operation-cost ratio");
  int cost_d = 0, cost_kmin = 2, cost_kmax = 0;
  std::string cost_mode = "score_only", cost_out;
  cost->add_option("--d", cost_d, "feature count")->required();
  cost->add_option("--kmin", cost_kmin, "smallest window size")->default_val(2);
  cost->add_option("--kmax", cost_kmax, "largest window size")->required();
  cost->add_option("--mode", cost_mode, "score_only|attention_only|full")->default_val("score_only");
  cost->add_option("--out", cost_out, "write the table here instead of stdout");

  // report
  auto* rep = app.add_subcommand("report", "rebuild rank/win/robustness reports from a results CSV");
  std::string rep_results, rep_out;
  rep->add_option("--results", rep_results, "results CSV")->required();
  rep->add_option("--out", rep_out, "output directory (default: alongside the results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ifial::kExitOk : ifial::kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_config, run_out, run_seeds, run_jobs, run_resume);
    if (*sim) return cmd_simulate(sim_in, sim_schema, sim_mech, sim_rate, sim_seed, sim_out);
    if (*part) return cmd_partitions(part_d, part_k, part_rates);
    if (*train) return cmd_train(train_config, train_out, train_log);
    if (*pred) return cmd_predict(pred_model, pred_in, pred_schema, pred_out);
    if (*cost) return cmd_cost(cost_d, cost_kmin, cost_kmax, cost_mode, cost_out);
    if (*rep) {
      ifial::report_from_results(rep_results, rep_out);
      return ifial::kExitOk;
    }
  } catch (const ifial::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ifial::kExitConfig;
  } catch (const ifial::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return ifial::kExitNumeric;
  } catch (const ifial::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return ifial::kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ifial::kExitData;
  }
  return ifial::kExitOk;
}
