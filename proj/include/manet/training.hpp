// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "manet/autodiff.hpp"
#include "manet/channel.hpp"
#include "manet/common.hpp"
#include "manet/gnn.hpp"
#include "manet/rateops.hpp"
#include "manet/rng.hpp"
#include "manet/topology.hpp"

namespace manet {

// ---------------------------------------------------------------------------
// Configuration and data
// ---------------------------------------------------------------------------

struct TrainingConfig {
  double learning_rate = 1e-3;
  double lambda = 0.1;    // weight of the monotonicity penalty
  double margin = 0.01;   // required per-layer rate improvement
  double tau = 0.1;       // smooth-min temperature
  int rounds = 3;         // L, must match the model
  int batches = 1;        // Q, batches per epoch
  double csi_noise = 0.1; // std dev of the training-time CSI perturbation
  int epochs = 100;
  std::uint64_t seed = 0;
  bool adam = false;      // default is plain SGD
  double grad_clip = 10.0;  // global-norm ceiling, 0 disables
  int threads = 1;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw ConfigError("training: learning rate must be > 0");
    if (lambda < 0.0) throw ConfigError("training: lambda must be >= 0");
    if (margin < 0.0) throw ConfigError("training: margin must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("training: tau must be > 0");
    if (rounds < 2) throw ConfigError("training: rounds must be >= 2");
    if (batches < 1) throw ConfigError("training: batches must be >= 1");
    if (csi_noise < 0.0) throw ConfigError("training: csi noise must be >= 0");
    if (epochs < 0) throw ConfigError("training: epochs must be >= 0");
    if (grad_clip < 0.0) throw ConfigError("training: grad clip must be >= 0");
    if (threads < 1) throw ConfigError("training: threads must be >= 1");
  }
};

// One unlabeled instance: a topology plus its true channel state.
struct Sample {
  Topology topo;
  CsiTensor csi;
};

struct Dataset {
  std::vector<Sample> samples;
  int bands = 0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

inline void check_dataset(const Dataset& data) {
  if (data.samples.empty()) throw ContractError("dataset: empty");
  for (const Sample& s : data.samples) {
    check_csi(s.csi, s.topo);
    if (s.csi.bands != data.bands)
      throw ContractError("dataset: sample band count mismatch");
  }
}

struct LossBreakdown {
  double rate = 0.0;
  double mono = 0.0;
  double total = 0.0;
  std::vector<double> layer_rates;  // batch-mean surrogate rate per layer
};

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

// Unscaled monotonicity penalty over a ladder of per-layer rates:
// sum_l relu(margin - (r[l+1] - r[l])). The tape build in sample_loss
// replays this fold bit for bit.
inline double mono_penalty(std::span<const double> layer_rates,
                           double margin) {
  double acc = 0.0;
  for (std::size_t l = 0; l + 1 < layer_rates.size(); ++l) {
    const double gain = layer_rates[l + 1] - layer_rates[l];
    acc += std::max(-1.0 * gain + margin, 0.0);
  }
  return acc;
}

struct SampleLoss {
  ad::Tensor loss;  // scalar: -rate + (lambda/(L-2)) * mono penalty
  double rate = 0.0;
  double mono_raw = 0.0;
  std::vector<double> layer_rates;  // surrogate rate per layer, eval CSI
};

// Forward runs on forward_csi; every rate in the loss is scored against
// eval_csi. Keeping the two apart is the whole point of noisy training.
inline SampleLoss sample_loss(ad::Tape& tape, const TapeParams& tp,
                              const Topology& topo,
                              const CsiTensor& forward_csi,
                              const CsiTensor& eval_csi, double tau,
                              double margin, double lambda) {
  const TapeStates states = gnn_forward(tape, tp, topo, forward_csi);
  const std::vector<TapeAllocation> per_layer =
      gnn_decode_all_layers(tape, tp, topo, states);

  SampleLoss out;
  std::vector<ad::Tensor> rates;
  rates.reserve(per_layer.size());
  for (const TapeAllocation& q : per_layer) {
    ad::Tensor r = surrogate_objective(tape, q, eval_csi, topo, tau);
    out.layer_rates.push_back(r.value());
    rates.push_back(r);
  }
  out.rate = out.layer_rates.back();
  ad::Tensor loss = tape.affine(rates.back(), -1.0, 0.0);

  const int L = tp.rounds;
  if (L >= 3) {
    ad::Tensor penalty;
    for (std::size_t l = 0; l + 1 < rates.size(); ++l) {
      ad::Tensor term = tape.relu(
          tape.affine(tape.sub(rates[l + 1], rates[l]), -1.0, margin));
      penalty = l == 0 ? term : tape.add(penalty, term);
    }
    out.mono_raw = penalty.value();
    loss = tape.add(
        loss, tape.affine(penalty, lambda / static_cast<double>(L - 2), 0.0));
  }
  out.loss = loss;
  return out;
}

// ---------------------------------------------------------------------------
// Batch evaluation with gradients
// ---------------------------------------------------------------------------

struct BatchEval {
  LossBreakdown loss;
  std::vector<double> grad;  // flat, canonical parameter order
  std::size_t count = 0;
};

namespace detail {

struct SampleEval {
  double rate = 0.0;
  double mono_raw = 0.0;
  std::vector<double> layer_rates;
  std::vector<double> grad;
};

inline SampleEval eval_one(const GnnParams& params, const Sample& s,
                           const CsiTensor& forward_csi,
                           const TrainingConfig& cfg, bool with_grad) {
  ad::Tape tape;
  const TapeParams tp = register_params(tape, params);
  const SampleLoss sl = sample_loss(tape, tp, s.topo, forward_csi, s.csi,
                                    cfg.tau, cfg.margin, cfg.lambda);
  SampleEval out;
  out.rate = sl.rate;
  out.mono_raw = sl.mono_raw;
  out.layer_rates = sl.layer_rates;
  if (with_grad) {
    tape.backward(sl.loss);
    out.grad.reserve(parameter_count(params));
    for (const ad::Tensor& t : tp.flat) {
      const auto g = t.grad();
      out.grad.insert(out.grad.end(), g.begin(), g.end());
    }
  }
  return out;
}

}  // namespace detail

// Evaluates a batch given by dataset indices. Samples are processed in
// ascending dataset order no matter how the indices arrive, and the
// perturbation for sample i is keyed by (noise_key, i); together these make
// the result independent of batch ordering.
inline BatchEval batch_eval(const GnnParams& params, const Dataset& data,
                            std::span<const int> indices,
                            std::uint64_t noise_key, const TrainingConfig& cfg,
                            bool with_grad = true) {
  if (indices.empty()) throw ContractError("batch_eval: empty batch");
  std::vector<int> order(indices.begin(), indices.end());
  std::sort(order.begin(), order.end());
  for (int idx : order)
    if (idx < 0 || static_cast<std::size_t>(idx) >= data.samples.size())
      throw ContractError("batch_eval: index out of range");

  std::vector<detail::SampleEval> evals(order.size());
  parallel_for(order.size(), cfg.threads,
               [&](std::size_t k) {
                 const int idx = order[k];
                 const Sample& s = data.samples[static_cast<std::size_t>(idx)];
                 Rng noise_rng(mix_seed(noise_key,
                                        static_cast<std::uint64_t>(idx)));
                 const CsiTensor forward_csi =
                     perturb_csi(s.csi, cfg.csi_noise, noise_rng);
                 evals[k] = detail::eval_one(params, s, forward_csi, cfg,
                                             with_grad);
               });

  BatchEval out;
  out.count = order.size();
  const double n = static_cast<double>(order.size());
  const int L = cfg.rounds;

  double rate_sum = 0.0, mono_sum = 0.0;
  out.loss.layer_rates.assign(evals[0].layer_rates.size(), 0.0);
  for (const detail::SampleEval& e : evals) {
    rate_sum += e.rate;
    mono_sum += e.mono_raw;
    for (std::size_t l = 0; l < e.layer_rates.size(); ++l)
      out.loss.layer_rates[l] += e.layer_rates[l];
  }
  out.loss.rate = -(rate_sum / n);
  out.loss.mono =
      L >= 3 ? mono_sum / (n * static_cast<double>(L - 2)) : 0.0;
  out.loss.total = out.loss.rate + cfg.lambda * out.loss.mono;
  for (double& r : out.loss.layer_rates) r /= n;

  if (with_grad) {
    out.grad.assign(parameter_count(params), 0.0);
    for (const detail::SampleEval& e : evals)
      for (std::size_t k = 0; k < out.grad.size(); ++k)
        out.grad[k] += e.grad[k];
    const double inv = 1.0 / n;
    for (double& g : out.grad) g *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spec-level loss entry points (clean forward: the network sees true CSI)
// ---------------------------------------------------------------------------

namespace detail {

inline TrainingConfig loss_config(const GnnParams& params, double tau,
                                  double margin, double lambda) {
  TrainingConfig cfg;
  cfg.tau = tau;
  cfg.margin = margin;
  cfg.lambda = lambda;
  cfg.rounds = params.rounds;
  cfg.csi_noise = 0.0;
  return cfg;
}

inline Dataset wrap(std::span<const Sample> batch) {
  Dataset d;
  d.samples.assign(batch.begin(), batch.end());
  d.bands = batch.empty() ? 0 : batch.front().csi.bands;
  return d;
}

inline std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace detail

inline double rate_loss(const GnnParams& params, std::span<const Sample> batch,
                        double tau) {
  if (batch.empty()) throw ContractError("rate_loss: empty batch");
  const Dataset d = detail::wrap(batch);
  const TrainingConfig cfg = detail::loss_config(params, tau, 0.0, 0.0);
  return batch_eval(params, d, detail::all_indices(batch.size()), 0, cfg,
                    /*with_grad=*/false)
      .loss.rate;
}

inline double mono_loss(const GnnParams& params, std::span<const Sample> batch,
                        double tau, double margin) {
  if (batch.empty()) throw ContractError("mono_loss: empty batch");
  const Dataset d = detail::wrap(batch);
  const TrainingConfig cfg = detail::loss_config(params, tau, margin, 0.0);
  return batch_eval(params, d, detail::all_indices(batch.size()), 0, cfg,
                    /*with_grad=*/false)
      .loss.mono;
}

inline LossBreakdown total_loss(const GnnParams& params,
                                std::span<const Sample> batch,
                                const TrainingConfig& cfg) {
  if (batch.empty()) throw ContractError("total_loss: empty batch");
  cfg.validate();
  if (cfg.rounds != params.rounds)
    throw ConfigError("total_loss: config rounds must match the model");
  const Dataset d = detail::wrap(batch);
  TrainingConfig clean = cfg;
  clean.csi_noise = 0.0;
  return batch_eval(params, d, detail::all_indices(batch.size()), 0, clean,
                    /*with_grad=*/false)
      .loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double rate = 0.0;   // sample-weighted mean over the epoch's batches
  double mono = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm
  double wall_ms = 0.0;
};

struct TrainResult {
  GnnParams params;
  std::vector<EpochStats> trace;
};

inline TrainResult train(GnnParams params, const Dataset& data,
                         const TrainingConfig& cfg) {
  cfg.validate();
  check_dataset(data);
  if (cfg.rounds != params.rounds)
    throw ConfigError("train: config rounds must match the model");
  if (data.bands != params.bands)
    throw ConfigError("train: dataset band count must match the model");

  const std::size_t n_samples = data.samples.size();
  const std::size_t n_params = parameter_count(params);
  const int Q = cfg.batches;

  Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566ULL));
  const std::uint64_t noise_root = mix_seed(cfg.seed, 0x6e6f6973ULL);

  // Adam moments; untouched in plain-SGD mode.
  std::vector<double> m, v;
  if (cfg.adam) {
    m.assign(n_params, 0.0);
    v.assign(n_params, 0.0);
  }
  std::int64_t step = 0;

  TrainResult result;
  result.params = std::move(params);
  std::vector<int> perm = detail::all_indices(n_samples);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto tick = std::chrono::steady_clock::now();
    shuffle(perm, shuffle_rng);
    const std::uint64_t noise_key =
        mix_seed(noise_root, static_cast<std::uint64_t>(epoch));

    EpochStats stats;
    stats.epoch = epoch;
    std::size_t seen = 0;
    int updates = 0;

    for (int q = 0; q < Q; ++q) {
      const std::size_t lo = static_cast<std::size_t>(q) * n_samples /
                             static_cast<std::size_t>(Q);
      const std::size_t hi = static_cast<std::size_t>(q + 1) * n_samples /
                             static_cast<std::size_t>(Q);
      if (lo == hi) continue;
      const std::span<const int> batch(perm.data() + lo, hi - lo);

      BatchEval be =
          batch_eval(result.params, data, batch, noise_key, cfg, true);

      double sq = 0.0;
      for (double g : be.grad) sq += g * g;
      const double gnorm = std::sqrt(sq);
      if (!std::isfinite(be.loss.total) || !std::isfinite(gnorm)) {
        std::ostringstream diag;
        diag << "train: non-finite loss at epoch " << epoch << " batch " << q
             << " (rate=" << be.loss.rate << ", mono=" << be.loss.mono
             << ", grad_norm=" << gnorm << ")";
        throw GenerationError(diag.str());
      }
      if (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip) {
        const double scale = cfg.grad_clip / gnorm;
        for (double& g : be.grad) g *= scale;
      }

      step += 1;
      std::size_t k = 0;
      if (cfg.adam) {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        const double c1 =
            1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double c2 =
            1.0 - std::pow(kBeta2, static_cast<double>(step));
        for_each_tensor(result.params,
                        [&](const std::string&, std::vector<double>& w,
                            const std::vector<int>&) {
                          for (double& x : w) {
                            const double g = be.grad[k];
                            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
                            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
                            const double mh = m[k] / c1;
                            const double vh = v[k] / c2;
                            x -= cfg.learning_rate * mh /
                                 (std::sqrt(vh) + kEps);
                            ++k;
                          }
                        });
      } else {
        for_each_tensor(result.params,
                        [&](const std::string&, std::vector<double>& w,
                            const std::vector<int>&) {
                          for (double& x : w) {
                            x -= cfg.learning_rate * be.grad[k];
                            ++k;
                          }
                        });
      }

      const double bn = static_cast<double>(be.count);
      stats.rate += be.loss.rate * bn;
      stats.mono += be.loss.mono * bn;
      stats.total += be.loss.total * bn;
      stats.grad_norm += gnorm;
      seen += be.count;
      updates += 1;
    }

    if (seen > 0) {
      stats.rate /= static_cast<double>(seen);
      stats.mono /= static_cast<double>(seen);
      stats.total /= static_cast<double>(seen);
      stats.grad_norm /= static_cast<double>(updates);
    }
    stats.wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - tick)
            .count();
    result.trace.push_back(stats);
  }
  return result;
}

}  // namespace manet
