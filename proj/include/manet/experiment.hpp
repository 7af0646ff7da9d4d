// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "manet/baselines.hpp"
#include "manet/channel.hpp"
#include "manet/common.hpp"
#include "manet/gnn.hpp"
#include "manet/rateops.hpp"
#include "manet/serialize.hpp"
#include "manet/topology.hpp"
#include "manet/training.hpp"

namespace manet {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class CsiMode { kTrue, kPerturbed, kLmmse };

inline CsiMode csi_mode_from_string(const std::string& s) {
  if (s == "true") return CsiMode::kTrue;
  if (s == "perturbed") return CsiMode::kPerturbed;
  if (s == "lmmse") return CsiMode::kLmmse;
  throw ConfigError("csi_mode must be one of: true, perturbed, lmmse");
}

inline std::string to_string(CsiMode m) {
  switch (m) {
    case CsiMode::kTrue: return "true";
    case CsiMode::kPerturbed: return "perturbed";
    case CsiMode::kLmmse: return "lmmse";
  }
  throw ContractError("csi mode: unknown enumerator");
}

struct ExperimentConfig {
  int n = 10;
  int bands = 6;
  double edge_prob = 0.5;
  std::vector<double> snr_grid{-10.0, -5.0, 0.0, 5.0, 10.0};
  int train_size = 4000;
  int test_size = 500;
  std::vector<std::string> algorithms{"gnn", "centralized", "best-single",
                                      "equal-split"};
  CsiMode csi_mode = CsiMode::kTrue;
  int pilot_count = 4;
  double csi_sigma = 0.1;  // perturbed-mode estimation noise std dev
  std::uint64_t seed = 0;
  // One checkpoint shared across the grid, or one per SNR point. Paired
  // studies (scalability, robustness) require exactly two.
  std::vector<std::string> checkpoints;
  std::string output_dir = ".";
  int threads = 1;
  bool deterministic = false;
  SolverConfig solver;
  TrainingConfig training;

  void validate() const {
    if (n < 2) throw ConfigError("experiment: n must be >= 2");
    if (bands < 1) throw ConfigError("experiment: bands must be >= 1");
    if (edge_prob < 0.0 || edge_prob > 1.0)
      throw ConfigError("experiment: edge probability must be in [0, 1]");
    if (snr_grid.empty()) throw ConfigError("experiment: SNR grid is empty");
    if (train_size < 1 || test_size < 1)
      throw ConfigError("experiment: dataset sizes must be >= 1");
    if (algorithms.empty())
      throw ConfigError("experiment: algorithm list is empty");
    if (csi_mode == CsiMode::kLmmse && pilot_count < 1)
      throw ConfigError("experiment: lmmse mode needs pilot count >= 1");
    if (csi_sigma < 0.0)
      throw ConfigError("experiment: csi sigma must be >= 0");
    if (threads < 1) throw ConfigError("experiment: threads must be >= 1");
    solver.validate();
    training.validate();
  }
};

inline ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> kKnown{
      "n",          "bands",       "edge_prob",   "snr_grid",
      "train_size", "test_size",   "algorithms",  "csi_mode",
      "pilot_count", "csi_sigma",  "seed",        "checkpoints",
      "output_dir", "threads",     "deterministic", "solver",
      "training"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const std::string& k : kKnown) known = known || k == key;
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }

  ExperimentConfig cfg;
  cfg.n = j.value("n", cfg.n);
  cfg.bands = j.value("bands", cfg.bands);
  cfg.edge_prob = j.value("edge_prob", cfg.edge_prob);
  if (j.contains("snr_grid"))
    cfg.snr_grid = j.at("snr_grid").get<std::vector<double>>();
  cfg.train_size = j.value("train_size", cfg.train_size);
  cfg.test_size = j.value("test_size", cfg.test_size);
  if (j.contains("algorithms"))
    cfg.algorithms = j.at("algorithms").get<std::vector<std::string>>();
  if (j.contains("csi_mode"))
    cfg.csi_mode = csi_mode_from_string(j.at("csi_mode").get<std::string>());
  cfg.pilot_count = j.value("pilot_count", cfg.pilot_count);
  cfg.csi_sigma = j.value("csi_sigma", cfg.csi_sigma);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("checkpoints"))
    cfg.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.deterministic = j.value("deterministic", cfg.deterministic);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
    cfg.solver.step = s.value("step", cfg.solver.step);
    cfg.solver.tau = s.value("tau", cfg.solver.tau);
    cfg.solver.tol = s.value("tol", cfg.solver.tol);
    cfg.solver.restarts = s.value("restarts", cfg.solver.restarts);
    cfg.solver.seed = s.value("seed", cfg.solver.seed);
    cfg.solver.beta1 = s.value("beta1", cfg.solver.beta1);
    cfg.solver.beta2 = s.value("beta2", cfg.solver.beta2);
    cfg.solver.warm_start = s.value("warm_start", cfg.solver.warm_start);
  }
  if (j.contains("training"))
    cfg.training = training_config_from_json(j.at("training"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

// Each sample draws from its own generator keyed by (seed, index), so the
// first k records of a larger dataset equal the k-record dataset, and the
// gain tensors for a fixed seed are identical across SNR points (only the
// noise floor depends on snr_db).
inline Dataset generate_dataset(int n, int bands, double edge_prob,
                                double snr_db, int count,
                                std::uint64_t seed) {
  if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
  Dataset data;
  data.bands = bands;
  data.snr_db = snr_db;
  data.seed = seed;
  data.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Sample s;
    s.topo = generate_erdos_renyi(n, edge_prob, rng);
    s.csi = sample_rayleigh(s.topo, bands, SnrPoint{snr_db}, rng);
    data.samples.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kTestStream = 0x74657374ULL;   // "test"
inline constexpr std::uint64_t kTrainStream = 0x7472616eULL;  // "tran"
inline constexpr std::uint64_t kViewStream = 0x76696577ULL;   // "view"
inline constexpr std::uint64_t kSolveStream = 0x736f6c76ULL;  // "solv"

}  // namespace detail

// What an algorithm saw versus what it is scored on. The view is computed
// once per sample so every algorithm competes on the same estimate.
inline CsiTensor csi_view(const CsiTensor& csi, CsiMode mode, int pilots,
                          double sigma, std::uint64_t key) {
  switch (mode) {
    case CsiMode::kTrue: return csi;
    case CsiMode::kPerturbed: {
      Rng rng(key);
      return perturb_csi(csi, sigma, rng);
    }
    case CsiMode::kLmmse: {
      Rng rng(key);
      return lmmse_estimate(csi, pilots, rng);
    }
  }
  throw ContractError("csi_view: unknown mode");
}

// A named allocation policy. The sample index feeds per-sample seed streams
// (the solver's restarts) and nothing else.
struct Algorithm {
  std::string name;
  std::function<PowerAllocation(const CsiTensor& view, const Topology& t,
                                std::size_t sample_index)>
      run;
};

inline Algorithm gnn_algorithm(std::string name, GnnParams params) {
  Algorithm a;
  a.name = std::move(name);
  a.run = [params = std::move(params)](const CsiTensor& view,
                                       const Topology& t, std::size_t) {
    return gnn_allocate(params, t, view);
  };
  return a;
}

inline Algorithm centralized_algorithm(const SolverConfig& solver,
                                       std::uint64_t seed) {
  Algorithm a;
  a.name = "centralized";
  a.run = [solver, seed](const CsiTensor& view, const Topology& t,
                         std::size_t i) {
    SolverConfig cfg = solver;
    cfg.seed = mix_seed(seed, detail::kSolveStream, i);
    return centralized_solve(view, t, cfg).alloc;
  };
  return a;
}

inline Algorithm best_single_algorithm() {
  Algorithm a;
  a.name = "best-single";
  a.run = [](const CsiTensor& view, const Topology& t, std::size_t) {
    return best_single_channel(view, t).alloc;
  };
  return a;
}

inline Algorithm equal_split_algorithm() {
  Algorithm a;
  a.name = "equal-split";
  a.run = [](const CsiTensor& view, const Topology& t, std::size_t) {
    return equal_split(t, view.bands);
  };
  return a;
}

struct EvalResult {
  double mean = 0.0;
  double std_error = 0.0;
  double wall_ms = 0.0;
  std::vector<double> per_sample;
};

// Runs one algorithm over a dataset: allocate from the per-sample view,
// verify feasibility, score against the TRUE gains. Per-sample work runs in
// parallel into index slots; the fold afterwards is serial, so results do
// not depend on the thread count.
inline EvalResult evaluate_algorithm(const Algorithm& algo,
                                     const Dataset& data,
                                     const std::vector<CsiTensor>& views,
                                     int threads) {
  const std::size_t count = data.samples.size();
  if (views.size() != count)
    throw ContractError("evaluate: one view per sample required");
  EvalResult out;
  out.per_sample.assign(count, 0.0);

  const auto start = std::chrono::steady_clock::now();
  parallel_for(count, threads, [&](std::size_t i) {
    const Sample& s = data.samples[i];
    const PowerAllocation alloc = algo.run(views[i], s.topo, i);
    check_feasible(alloc, s.topo);
    out.per_sample[i] = true_objective(alloc, s.csi, s.topo).total;
  });
  const auto stop = std::chrono::steady_clock::now();
  out.wall_ms =
      std::chrono::duration<double, std::milli>(stop - start).count();

  double sum = 0.0;
  for (double v : out.per_sample) sum += v;
  out.mean = sum / static_cast<double>(count);
  if (count > 1) {
    double sq = 0.0;
    for (double v : out.per_sample) sq += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(sq / (static_cast<double>(count) *
                                    static_cast<double>(count - 1)));
  }
  return out;
}

// The test set for one grid point. Keyed by the experiment seed only, so
// every SNR point shares topologies and gains and curves are paired.
inline Dataset test_dataset(const ExperimentConfig& cfg, double snr_db) {
  return generate_dataset(cfg.n, cfg.bands, cfg.edge_prob, snr_db,
                          cfg.test_size, mix_seed(cfg.seed,
                                                  detail::kTestStream));
}

// Training sets use an independent stream per grid point, disjoint from the
// shared test stream.
inline Dataset train_dataset(const ExperimentConfig& cfg, double snr_db,
                             std::size_t snr_index) {
  return generate_dataset(
      cfg.n, cfg.bands, cfg.edge_prob, snr_db, cfg.train_size,
      mix_seed(cfg.seed, detail::kTrainStream, snr_index));
}

inline std::vector<CsiTensor> views_for(const ExperimentConfig& cfg,
                                        const Dataset& data,
                                        std::size_t snr_index) {
  std::vector<CsiTensor> views;
  views.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    views.push_back(csi_view(
        data.samples[i].csi, cfg.csi_mode, cfg.pilot_count, cfg.csi_sigma,
        mix_seed(cfg.seed, detail::kViewStream + snr_index, i)));
  return views;
}

namespace detail {

inline GnnParams load_model(const std::string& path,
                            const ExperimentConfig& cfg) {
  GnnParams params;
  try {
    params = load_checkpoint(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("missing checkpoint: ") + e.what());
  }
  if (params.bands != cfg.bands)
    throw ConfigError("checkpoint band count does not match experiment");
  return params;
}

inline ResultRow make_row(const std::string& name, double snr_db,
                          const EvalResult& r, bool deterministic) {
  ResultRow row;
  row.algorithm = name;
  row.snr_db = snr_db;
  row.mean_rate = r.mean;
  row.std_error = r.std_error;
  row.n_samples = static_cast<int>(r.per_sample.size());
  row.wall_ms = deterministic ? 0.0 : r.wall_ms;
  return row;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

// Mean achievable rate per algorithm across the SNR grid. Learned rows use
// one checkpoint for the whole grid or one per grid point.
inline ResultTable run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const int threads = cfg.deterministic ? 1 : cfg.threads;

  bool wants_gnn = false;
  for (const std::string& a : cfg.algorithms)
    wants_gnn = wants_gnn || a == "gnn";
  std::vector<GnnParams> models;
  if (wants_gnn) {
    if (cfg.checkpoints.size() != 1 &&
        cfg.checkpoints.size() != cfg.snr_grid.size())
      throw ConfigError(
          "sweep: need one checkpoint, or one per SNR grid point");
    for (const std::string& path : cfg.checkpoints)
      models.push_back(detail::load_model(path, cfg));
  }

  ResultTable table;
  for (std::size_t s = 0; s < cfg.snr_grid.size(); ++s) {
    const double snr_db = cfg.snr_grid[s];
    const Dataset data = test_dataset(cfg, snr_db);
    const std::vector<CsiTensor> views = views_for(cfg, data, s);

    for (const std::string& name : cfg.algorithms) {
      Algorithm algo;
      if (name == "gnn") {
        algo = gnn_algorithm(
            "gnn", models.size() == 1 ? models[0] : models[s]);
      } else if (name == "centralized") {
        algo = centralized_algorithm(cfg.solver, cfg.seed);
      } else if (name == "best-single") {
        algo = best_single_algorithm();
      } else if (name == "equal-split") {
        algo = equal_split_algorithm();
      } else {
        throw ConfigError("sweep: unknown algorithm '" + name + "'");
      }
      const EvalResult r = evaluate_algorithm(algo, data, views, threads);
      table.rows.push_back(
          detail::make_row(algo.name, snr_db, r, cfg.deterministic));
    }
  }
  return table;
}

// Two checkpoints on one shared test grid: the model trained at the test
// size ("gnn-native") versus the model trained on smaller graphs
// ("gnn-transfer"), plus their relative gap per SNR point.
inline ResultTable run_scalability(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoints.size() != 2)
    throw ConfigError("scale: need exactly two checkpoints (native, transfer)");
  const GnnParams native = detail::load_model(cfg.checkpoints[0], cfg);
  const GnnParams transfer = detail::load_model(cfg.checkpoints[1], cfg);
  if (native.rounds != transfer.rounds)
    throw ConfigError("scale: checkpoint round counts differ");
  const int threads = cfg.deterministic ? 1 : cfg.threads;

  ResultTable table;
  for (std::size_t s = 0; s < cfg.snr_grid.size(); ++s) {
    const double snr_db = cfg.snr_grid[s];
    const Dataset data = test_dataset(cfg, snr_db);
    const std::vector<CsiTensor> views = views_for(cfg, data, s);

    const EvalResult rn = evaluate_algorithm(gnn_algorithm("gnn-native", native),
                                             data, views, threads);
    const EvalResult rt = evaluate_algorithm(
        gnn_algorithm("gnn-transfer", transfer), data, views, threads);
    table.rows.push_back(
        detail::make_row("gnn-native", snr_db, rn, cfg.deterministic));
    table.rows.push_back(
        detail::make_row("gnn-transfer", snr_db, rt, cfg.deterministic));

    ResultRow gap;
    gap.algorithm = "relative-gap";
    gap.snr_db = snr_db;
    gap.mean_rate = std::abs(rt.mean - rn.mean) / rn.mean;
    gap.n_samples = static_cast<int>(data.samples.size());
    table.rows.push_back(gap);
  }
  return table;
}

// Clean-trained versus noise-aware-trained model, both judged on true CSI.
// The ratio row is noisy over clean, per SNR point.
inline ResultTable run_csi_robustness(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoints.size() != 2)
    throw ConfigError("robust: need exactly two checkpoints (clean, noisy)");
  const GnnParams clean = detail::load_model(cfg.checkpoints[0], cfg);
  const GnnParams noisy = detail::load_model(cfg.checkpoints[1], cfg);
  const int threads = cfg.deterministic ? 1 : cfg.threads;

  ExperimentConfig true_cfg = cfg;
  true_cfg.csi_mode = CsiMode::kTrue;

  ResultTable table;
  for (std::size_t s = 0; s < cfg.snr_grid.size(); ++s) {
    const double snr_db = cfg.snr_grid[s];
    const Dataset data = test_dataset(cfg, snr_db);
    const std::vector<CsiTensor> views = views_for(true_cfg, data, s);

    const EvalResult rc = evaluate_algorithm(gnn_algorithm("gnn-clean", clean),
                                             data, views, threads);
    const EvalResult rn = evaluate_algorithm(gnn_algorithm("gnn-noisy", noisy),
                                             data, views, threads);
    table.rows.push_back(
        detail::make_row("gnn-clean", snr_db, rc, cfg.deterministic));
    table.rows.push_back(
        detail::make_row("gnn-noisy", snr_db, rn, cfg.deterministic));

    ResultRow ratio;
    ratio.algorithm = "ratio";
    ratio.snr_db = snr_db;
    ratio.mean_rate = rn.mean / rc.mean;
    ratio.n_samples = static_cast<int>(data.samples.size());
    table.rows.push_back(ratio);
  }
  return table;
}

}  // namespace manet
