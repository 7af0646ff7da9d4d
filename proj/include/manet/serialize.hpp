// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "manet/channel.hpp"
#include "manet/common.hpp"
#include "manet/gnn.hpp"
#include "manet/topology.hpp"
#include "manet/training.hpp"

namespace manet {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Plain text IO
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in && !in.eof()) throw IoError("read failed: " + path);
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// Shortest representation that parses back to the same double. Used for all
// CSV output so emitted tables are byte-stable and loss-free.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

inline json dataset_to_json(const Dataset& data) {
  json root;
  root["format"] = "manet-dataset";
  root["version"] = kDatasetVersion;
  root["bands"] = data.bands;
  root["snr_db"] = data.snr_db;
  root["seed"] = data.seed;
  json samples = json::array();
  for (const Sample& s : data.samples) {
    json rec;
    rec["n"] = s.topo.n;
    rec["source"] = s.topo.source;
    rec["destination"] = s.topo.destination;
    json edges = json::array();
    for (auto [i, j] : s.topo.edges) edges.push_back(json::array({i, j}));
    rec["edges"] = std::move(edges);
    json gains = json::array();
    for (const std::complex<double>& h : s.csi.gains)
      gains.push_back(json::array({h.real(), h.imag()}));
    rec["gains"] = std::move(gains);
    rec["noise_variance"] = s.csi.noise_variance;
    samples.push_back(std::move(rec));
  }
  root["samples"] = std::move(samples);
  return root;
}

namespace detail {

inline void expect_format(const json& root, const std::string& format,
                          int version, const std::string& what) {
  if (!root.is_object() || root.value("format", "") != format)
    throw ConfigError(what + ": not a " + format + " file");
  if (root.value("version", 0) != version)
    throw ConfigError(what + ": unsupported version");
}

}  // namespace detail

inline Dataset dataset_from_json(const json& root) {
  detail::expect_format(root, "manet-dataset", kDatasetVersion, "dataset");
  Dataset data;
  data.bands = root.at("bands").get<int>();
  data.snr_db = root.at("snr_db").get<double>();
  data.seed = root.at("seed").get<std::uint64_t>();
  for (const json& rec : root.at("samples")) {
    std::vector<std::pair<int, int>> edges;
    for (const json& e : rec.at("edges"))
      edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    Sample s;
    s.topo = make_topology(rec.at("n").get<int>(), std::move(edges),
                           rec.at("source").get<int>(),
                           rec.at("destination").get<int>());
    s.csi.bands = data.bands;
    for (const json& g : rec.at("gains"))
      s.csi.gains.emplace_back(g.at(0).get<double>(), g.at(1).get<double>());
    s.csi.noise_variance =
        rec.at("noise_variance").get<std::vector<double>>();
    check_csi(s.csi, s.topo);
    data.samples.push_back(std::move(s));
  }
  return data;
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  write_text_file(path, dataset_to_json(data).dump(1) + "\n");
}

inline Dataset load_dataset(const std::string& path) {
  return dataset_from_json(json::parse(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// Training config block (embedded in checkpoints)
// ---------------------------------------------------------------------------

inline json training_config_to_json(const TrainingConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["lambda"] = cfg.lambda;
  j["margin"] = cfg.margin;
  j["tau"] = cfg.tau;
  j["rounds"] = cfg.rounds;
  j["batches"] = cfg.batches;
  j["csi_noise"] = cfg.csi_noise;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["adam"] = cfg.adam;
  j["grad_clip"] = cfg.grad_clip;
  j["threads"] = cfg.threads;
  return j;
}

inline TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.margin = j.value("margin", cfg.margin);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.rounds = j.value("rounds", cfg.rounds);
  cfg.batches = j.value("batches", cfg.batches);
  cfg.csi_noise = j.value("csi_noise", cfg.csi_noise);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.adam = j.value("adam", cfg.adam);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

inline json checkpoint_to_json(const GnnParams& params,
                               const json& training = json::object()) {
  json root;
  root["format"] = "manet-checkpoint";
  root["version"] = kCheckpointVersion;
  root["bands"] = params.bands;
  root["rounds"] = params.rounds;
  json tensors = json::array();
  for_each_tensor(const_cast<GnnParams&>(params),
                  [&](const std::string& name, const std::vector<double>& v,
                      const std::vector<int>& shape) {
                    json t;
                    t["name"] = name;
                    t["shape"] = shape;
                    t["values"] = v;
                    tensors.push_back(std::move(t));
                  });
  root["params"] = std::move(tensors);
  root["training"] = training;
  return root;
}

// Rebuilds the parameter struct from its canonical tensor walk. The file
// must list tensors in the same order with matching names and shapes; any
// divergence means the architecture differs and loading refuses.
inline GnnParams checkpoint_from_json(const json& root) {
  detail::expect_format(root, "manet-checkpoint", kCheckpointVersion,
                        "checkpoint");
  const int bands = root.at("bands").get<int>();
  const int rounds = root.at("rounds").get<int>();
  Rng scratch(0);
  GnnParams params = init_gnn_params(bands, rounds, scratch);

  const json& tensors = root.at("params");
  std::size_t idx = 0;
  for_each_tensor(params, [&](const std::string& name, std::vector<double>& v,
                              const std::vector<int>& shape) {
    if (idx >= tensors.size())
      throw ConfigError("checkpoint: missing tensor " + name);
    const json& t = tensors.at(idx++);
    if (t.at("name").get<std::string>() != name)
      throw ConfigError("checkpoint: expected tensor " + name + ", found " +
                        t.at("name").get<std::string>());
    if (t.at("shape").get<std::vector<int>>() != shape)
      throw ConfigError("checkpoint: shape mismatch for " + name);
    const auto values = t.at("values").get<std::vector<double>>();
    if (values.size() != v.size())
      throw ConfigError("checkpoint: value count mismatch for " + name);
    v = values;
  });
  if (idx != tensors.size())
    throw ConfigError("checkpoint: extra tensors after canonical walk");
  return params;
}

inline void save_checkpoint(const GnnParams& params, const std::string& path,
                            const json& training = json::object()) {
  write_text_file(path, checkpoint_to_json(params, training).dump(1) + "\n");
}

inline GnnParams load_checkpoint(const std::string& path) {
  return checkpoint_from_json(json::parse(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// Result tables and trace CSV
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string algorithm;
  double snr_db = 0.0;
  double mean_rate = 0.0;
  double std_error = 0.0;
  int n_samples = 0;
  double wall_ms = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

inline std::string to_csv(const ResultTable& table) {
  std::string out = "algorithm,snr_db,mean_rate,stderr,n_samples,wall_ms\n";
  for (const ResultRow& r : table.rows) {
    out += r.algorithm;
    out += ',';
    out += format_double(r.snr_db);
    out += ',';
    out += format_double(r.mean_rate);
    out += ',';
    out += format_double(r.std_error);
    out += ',';
    out += std::to_string(r.n_samples);
    out += ',';
    out += format_double(r.wall_ms);
    out += '\n';
  }
  return out;
}

inline std::string trace_to_csv(const std::vector<EpochStats>& trace) {
  std::string out = "epoch,rate_loss,mono_loss,wall_ms\n";
  for (const EpochStats& e : trace) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_double(e.rate);
    out += ',';
    out += format_double(e.mono);
    out += ',';
    out += format_double(e.wall_ms);
    out += '\n';
  }
  return out;
}

}  // namespace manet
