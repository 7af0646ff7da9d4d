// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: dataset generation, training, and the three
// evaluation studies, all driven by a JSON config file with flag overrides.
// Exit codes: 0 success, 2 configuration problem, 3 runtime failure.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manet/experiment.hpp"
#include "manet/serialize.hpp"

namespace {

using manet::ExperimentConfig;

struct Overrides {
  std::string config_path;
  std::string output_dir;
  std::string data_path;
  std::string out_path;
  std::string trace_path;
  std::string algo = "best-single";
  std::string checkpoint;
  std::uint64_t seed = 0;
  int epochs = 0;
  int threads = 0;
  bool deterministic = false;
};

bool flag_given(const CLI::App* sub, const std::string& name) {
  const CLI::Option* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Precedence for the output directory: explicit flag, then the config file,
// then MANET_OUTPUT_DIR, then the working directory.
ExperimentConfig load_config(const Overrides& ov, const CLI::App* sub) {
  manet::json raw = manet::json::object();
  if (!ov.config_path.empty())
    raw = manet::json::parse(manet::read_text_file(ov.config_path));
  ExperimentConfig cfg = manet::experiment_config_from_json(raw);

  if (flag_given(sub, "--output-dir")) {
    cfg.output_dir = ov.output_dir;
  } else if (!raw.contains("output_dir")) {
    if (const char* env = std::getenv("MANET_OUTPUT_DIR")) cfg.output_dir = env;
  }
  if (flag_given(sub, "--seed")) cfg.seed = ov.seed;
  if (flag_given(sub, "--epochs")) cfg.training.epochs = ov.epochs;
  if (flag_given(sub, "--threads")) {
    cfg.threads = ov.threads;
    cfg.training.threads = ov.threads;
  }
  if (ov.deterministic) {
    cfg.deterministic = true;
    cfg.threads = 1;
    cfg.training.threads = 1;
  }
  cfg.validate();
  return cfg;
}

std::filesystem::path in_output_dir(const ExperimentConfig& cfg,
                                    const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return std::filesystem::path(cfg.output_dir) / name;
}

std::string snr_label(double snr_db) { return manet::format_double(snr_db); }

int cmd_gen_data(const ExperimentConfig& cfg) {
  for (std::size_t s = 0; s < cfg.snr_grid.size(); ++s) {
    const double snr = cfg.snr_grid[s];
    const auto train_path =
        in_output_dir(cfg, "dataset_train_snr" + snr_label(snr) + ".json");
    const auto test_path =
        in_output_dir(cfg, "dataset_test_snr" + snr_label(snr) + ".json");
    manet::save_dataset(manet::train_dataset(cfg, snr, s), train_path.string());
    manet::save_dataset(manet::test_dataset(cfg, snr), test_path.string());
    std::cout << train_path.string() << "\n" << test_path.string() << "\n";
  }
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.data_path.empty())
    throw manet::ConfigError("train: --data <dataset file> is required");
  const manet::Dataset data = manet::load_dataset(ov.data_path);
  if (data.bands != cfg.bands)
    throw manet::ConfigError("train: dataset band count does not match config");

  manet::TrainingConfig tc = cfg.training;
  manet::Rng init_rng(manet::mix_seed(cfg.seed, 0x696e6974ULL));
  manet::GnnParams params =
      manet::init_gnn_params(cfg.bands, tc.rounds, init_rng);
  manet::TrainResult result = manet::train(std::move(params), data, tc);

  if (cfg.deterministic)
    for (manet::EpochStats& e : result.trace) e.wall_ms = 0.0;

  const std::string out = ov.out_path.empty()
                              ? in_output_dir(cfg, "model.json").string()
                              : ov.out_path;
  manet::json meta = manet::training_config_to_json(tc);
  meta["dataset_seed"] = data.seed;
  meta["snr_db"] = data.snr_db;
  manet::save_checkpoint(result.params, out, meta);

  const std::string trace =
      ov.trace_path.empty() ? out + ".trace.csv" : ov.trace_path;
  manet::write_text_file(trace, manet::trace_to_csv(result.trace));

  std::cout << out << "\n" << trace << "\n";
  if (!result.trace.empty())
    std::cout << "final rate loss " << result.trace.back().rate << "\n";
  return 0;
}

int cmd_table(const ExperimentConfig& cfg, const Overrides& ov,
              const std::string& default_name, const manet::ResultTable& table) {
  const std::string out = ov.out_path.empty()
                              ? in_output_dir(cfg, default_name).string()
                              : ov.out_path;
  const std::string csv = manet::to_csv(table);
  manet::write_text_file(out, csv);
  std::cout << csv << out << "\n";
  return 0;
}

int cmd_baseline(const ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.data_path.empty())
    throw manet::ConfigError("baseline: --data <dataset file> is required");
  const manet::Dataset data = manet::load_dataset(ov.data_path);
  if (data.bands != cfg.bands)
    throw manet::ConfigError(
        "baseline: dataset band count does not match config");

  manet::Algorithm algo;
  if (ov.algo == "gnn") {
    if (ov.checkpoint.empty())
      throw manet::ConfigError("baseline: gnn needs --checkpoint");
    algo = manet::gnn_algorithm("gnn", manet::load_checkpoint(ov.checkpoint));
  } else if (ov.algo == "centralized") {
    algo = manet::centralized_algorithm(cfg.solver, cfg.seed);
  } else if (ov.algo == "best-single") {
    algo = manet::best_single_algorithm();
  } else if (ov.algo == "equal-split") {
    algo = manet::equal_split_algorithm();
  } else {
    throw manet::ConfigError("baseline: unknown algorithm '" + ov.algo + "'");
  }

  std::vector<manet::CsiTensor> views;
  views.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    views.push_back(manet::csi_view(data.samples[i].csi, cfg.csi_mode,
                                    cfg.pilot_count, cfg.csi_sigma,
                                    manet::mix_seed(cfg.seed, 0x76696577ULL, i)));

  const int threads = cfg.deterministic ? 1 : cfg.threads;
  std::vector<manet::PowerAllocation> allocs(data.samples.size());
  manet::parallel_for(data.samples.size(), threads, [&](std::size_t i) {
    allocs[i] = algo.run(views[i], data.samples[i].topo, i);
    manet::check_feasible(allocs[i], data.samples[i].topo);
  });

  manet::json root;
  root["format"] = "manet-allocations";
  root["version"] = 1;
  root["algorithm"] = algo.name;
  root["snr_db"] = data.snr_db;
  manet::json samples = manet::json::array();
  double mean = 0.0;
  for (std::size_t i = 0; i < allocs.size(); ++i) {
    const double score =
        manet::true_objective(allocs[i], data.samples[i].csi,
                              data.samples[i].topo)
            .total;
    mean += score;
    manet::json rec;
    rec["objective"] = score;
    rec["bands"] = allocs[i].bands;
    rec["n"] = allocs[i].n;
    rec["p"] = allocs[i].p;
    samples.push_back(std::move(rec));
  }
  root["samples"] = std::move(samples);
  mean /= static_cast<double>(allocs.size());

  const std::string out =
      ov.out_path.empty()
          ? in_output_dir(cfg, "allocations_" + algo.name + ".json").string()
          : ov.out_path;
  manet::write_text_file(out, root.dump(1) + "\n");
  std::cout << out << "\nmean objective " << mean << "\n";
  return 0;
}

void add_common_flags(CLI::App* sub, Overrides& ov) {
  sub->add_option("-c,--config", ov.config_path, "JSON config file");
  sub->add_option("--seed", ov.seed, "override the experiment seed");
  sub->add_option("--output-dir", ov.output_dir, "override the output directory");
  sub->add_option("--threads", ov.threads, "override the worker thread count");
  sub->add_flag("--deterministic", ov.deterministic,
                "serial evaluation, zeroed timings, byte-stable output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"power allocation experiments for multi-band ad hoc networks"};
  app.require_subcommand(1);
  Overrides ov;

  CLI::App* gen = app.add_subcommand("gen-data", "write dataset files");
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  CLI::App* sweep = app.add_subcommand("sweep", "mean rate vs SNR table");
  CLI::App* scale =
      app.add_subcommand("scale", "transfer across graph sizes table");
  CLI::App* robust =
      app.add_subcommand("robust", "clean vs noise-aware training table");
  CLI::App* baseline =
      app.add_subcommand("baseline", "run one algorithm over a dataset");

  for (CLI::App* sub : {gen, train, sweep, scale, robust, baseline})
    add_common_flags(sub, ov);
  train->add_option("--data", ov.data_path, "training dataset file");
  train->add_option("--out", ov.out_path, "checkpoint output path");
  train->add_option("--trace", ov.trace_path, "training trace CSV path");
  train->add_option("--epochs", ov.epochs, "override the epoch count");
  for (CLI::App* sub : {sweep, scale, robust})
    sub->add_option("--out", ov.out_path, "CSV output path");
  baseline->add_option("--algo", ov.algo,
                       "gnn | centralized | best-single | equal-split");
  baseline->add_option("--data", ov.data_path, "dataset file to evaluate");
  baseline->add_option("--checkpoint", ov.checkpoint, "model for --algo gnn");
  baseline->add_option("--out", ov.out_path, "allocation output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const ExperimentConfig cfg = load_config(ov, sub);
    if (sub == gen) return cmd_gen_data(cfg);
    if (sub == train) return cmd_train(cfg, ov);
    if (sub == sweep) return cmd_table(cfg, ov, "sweep.csv", manet::run_sweep(cfg));
    if (sub == scale)
      return cmd_table(cfg, ov, "scale.csv", manet::run_scalability(cfg));
    if (sub == robust)
      return cmd_table(cfg, ov, "robust.csv", manet::run_csi_robustness(cfg));
    if (sub == baseline) return cmd_baseline(cfg, ov);
    throw manet::ConfigError("no subcommand selected");
  } catch (const manet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
