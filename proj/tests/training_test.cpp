// SPDX-License-Identifier: Apache-2.0
//
// Unsupervised losses and the noisy-CSI training loop: closed-form loss
// examples, cross-module recomputation, finite-difference gradients, and
// end-to-end convergence on a tiny dataset.

#include "manet/training.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "manet/gnn.hpp"
#include "manet/rateops.hpp"
#include "test_util.hpp"

namespace manet {
namespace {

Sample make_sample(std::uint64_t seed, int n, double edge_p, int bands,
                   double snr_db) {
  testutil::Instance inst =
      testutil::random_instance(seed, n, edge_p, bands, snr_db);
  return Sample{std::move(inst.topo), std::move(inst.csi)};
}

Dataset make_dataset(std::uint64_t seed, std::size_t count, int n,
                     double edge_p, int bands, double snr_db) {
  Dataset d;
  d.bands = bands;
  d.snr_db = snr_db;
  d.seed = seed;
  for (std::size_t k = 0; k < count; ++k)
    d.samples.push_back(
        make_sample(mix_seed(seed, k), n, edge_p, bands, snr_db));
  return d;
}

GnnParams make_params(int bands, int rounds, std::uint64_t seed = 17) {
  Rng rng(seed);
  return init_gnn_params(bands, rounds, rng);
}

// Final-layer surrogate rate recomputed without the training module: run the
// plain-double pipeline and score the decoded allocation.
double independent_rate(const GnnParams& p, const Sample& s, double tau) {
  const PowerAllocation P = gnn_allocate(p, s.topo, s.csi);
  return surrogate_objective_value(P, s.csi, s.topo, tau);
}

// ---------------------------------------------------------------------------
// Loss definitions
// ---------------------------------------------------------------------------

TEST(RateLossTest, SingleSampleIsNegatedRate) {
  const GnnParams p = make_params(2, 3);
  const Sample s = make_sample(1, 5, 0.8, 2, 0.0);
  const double r = independent_rate(p, s, 0.1);
  const std::vector<Sample> batch = {s};
  EXPECT_EQ(rate_loss(p, batch, 0.1), -r);
}

TEST(RateLossTest, DuplicatedSampleKeepsLoss) {
  const GnnParams p = make_params(2, 3);
  const Sample s = make_sample(2, 5, 0.8, 2, 0.0);
  const std::vector<Sample> once = {s};
  const std::vector<Sample> twice = {s, s};
  EXPECT_EQ(rate_loss(p, once, 0.1), rate_loss(p, twice, 0.1));
}

TEST(RateLossTest, MatchesIndependentRecomputation) {
  const GnnParams p = make_params(2, 3, 23);
  std::vector<Sample> batch;
  for (std::uint64_t k = 0; k < 5; ++k)
    batch.push_back(make_sample(10 + k, 6, 0.6, 2, 5.0));
  double sum = 0.0;
  for (const Sample& s : batch) sum += independent_rate(p, s, 0.1);
  EXPECT_EQ(rate_loss(p, batch, 0.1), -(sum / 5.0));
}

TEST(MonoPenaltyTest, LadderExamples) {
  // Flat ladder at margin 0.1: one pair, relu(0.1 - 0) = 0.1.
  const std::vector<double> flat = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(mono_penalty(flat, 0.1), 0.1);
  // Every step improves by at least the margin: penalty vanishes.
  const std::vector<double> rising = {0.0, 0.5, 1.0};
  EXPECT_EQ(mono_penalty(rising, 0.1), 0.0);
  // A regression pays the full gap plus margin.
  const std::vector<double> falling = {2.0, 1.5};
  EXPECT_DOUBLE_EQ(mono_penalty(falling, 0.1), 0.6);
  // Single layer: no pairs, no penalty.
  const std::vector<double> single = {3.0};
  EXPECT_EQ(mono_penalty(single, 0.1), 0.0);
}

TEST(MonoLossTest, TwoRoundsIsZero) {
  const GnnParams p = make_params(2, 2);
  const std::vector<Sample> batch = {make_sample(3, 5, 0.8, 2, 0.0)};
  EXPECT_EQ(mono_loss(p, batch, 0.1, 0.1), 0.0);
}

TEST(MonoLossTest, NonNegativeAndMatchesPenaltyFormula) {
  const GnnParams p = make_params(2, 4, 29);
  std::vector<Sample> batch;
  for (std::uint64_t k = 0; k < 4; ++k)
    batch.push_back(make_sample(30 + k, 6, 0.6, 2, 0.0));
  const double mono = mono_loss(p, batch, 0.1, 0.05);
  EXPECT_GE(mono, 0.0);

  // Recompute from per-layer rates via the plain-double pipeline.
  double acc = 0.0;
  for (const Sample& s : batch) {
    const GnnStates states = gnn_forward(p, s.topo, s.csi);
    std::vector<double> rates;
    for (int round = 1; round < p.rounds; ++round) {
      const PowerAllocation P = gnn_decode(p, s.topo, states, round);
      rates.push_back(surrogate_objective_value(P, s.csi, s.topo, 0.1));
    }
    acc += mono_penalty(rates, 0.05);
  }
  EXPECT_EQ(mono, acc / (4.0 * 2.0));
}

TEST(TotalLossTest, CombinesComponents) {
  const GnnParams p = make_params(2, 3, 31);
  std::vector<Sample> batch;
  for (std::uint64_t k = 0; k < 3; ++k)
    batch.push_back(make_sample(40 + k, 5, 0.8, 2, 0.0));

  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.tau = 0.1;
  cfg.margin = 0.05;
  cfg.lambda = 0.7;
  const LossBreakdown bd = total_loss(p, batch, cfg);
  EXPECT_EQ(bd.rate, rate_loss(p, batch, cfg.tau));
  EXPECT_EQ(bd.mono, mono_loss(p, batch, cfg.tau, cfg.margin));
  EXPECT_EQ(bd.total, bd.rate + cfg.lambda * bd.mono);
  ASSERT_EQ(bd.layer_rates.size(), 2u);
  EXPECT_EQ(bd.rate, -bd.layer_rates.back());

  cfg.lambda = 0.0;
  EXPECT_EQ(total_loss(p, batch, cfg).total, bd.rate);
}

TEST(TotalLossTest, ArithmeticExample) {
  // lambda = 1 with components (-2.0, 0.3) must combine to -1.7.
  const double rate = -2.0, mono = 0.3, lambda = 1.0;
  EXPECT_DOUBLE_EQ(rate + lambda * mono, -1.7);
}

TEST(TotalLossTest, RateLossNonPositiveWhenRatesNonNegative) {
  // With |h| in [0.5, 2], noise 0.1, and a small temperature, every link
  // rate is comfortably positive and the smooth-min correction tau*ln(K)
  // cannot push a band total negative; the premise of the property holds
  // in this regime by construction.
  const Topology t = make_topology(4, {{0, 1}, {1, 2}, {2, 3}, {0, 2}}, 0, 3);
  CsiTensor csi;
  csi.bands = 2;
  csi.noise_variance = {0.1, 0.1};
  Rng rng(77);
  for (int b = 0; b < 2; ++b)
    for (std::size_t e = 0; e < t.edges.size(); ++e) {
      const double mag = rng.uniform(0.5, 2.0);
      const double phase = rng.uniform(0.0, 6.283185307179586);
      csi.gains.push_back(std::polar(mag, phase));
    }
  const std::vector<Sample> batch = {Sample{t, csi}};
  const GnnParams p = make_params(2, 3, 41);

  const PowerAllocation P = gnn_allocate(p, t, csi);
  EXPECT_GE(surrogate_objective_value(P, csi, t, 0.01), 0.0);
  EXPECT_LE(rate_loss(p, batch, 0.01), 0.0);
}

// ---------------------------------------------------------------------------
// True-CSI evaluation under perturbed forward passes
// ---------------------------------------------------------------------------

TEST(NoisyTrainingTest, LossScoresAgainstTrueCsi) {
  const GnnParams p = make_params(2, 3, 43);
  const Sample s = make_sample(50, 6, 0.7, 2, 0.0);
  Rng noise(51);
  const CsiTensor noisy = perturb_csi(s.csi, 0.5, noise);

  ad::Tape tape;
  const TapeParams tp = register_params(tape, p);
  const SampleLoss honest =
      sample_loss(tape, tp, s.topo, noisy, s.csi, 0.1, 0.01, 0.1);

  ad::Tape tape2;
  const TapeParams tp2 = register_params(tape2, p);
  const SampleLoss swapped =
      sample_loss(tape2, tp2, s.topo, noisy, noisy, 0.1, 0.01, 0.1);

  // Same forward pass, different scoring channel: values must differ.
  EXPECT_NE(honest.rate, swapped.rate);

  // Scoring on truth while forwarding on noise differs from the clean run.
  ad::Tape tape3;
  const TapeParams tp3 = register_params(tape3, p);
  const SampleLoss clean =
      sample_loss(tape3, tp3, s.topo, s.csi, s.csi, 0.1, 0.01, 0.1);
  EXPECT_NE(honest.rate, clean.rate);
}

TEST(NoisyTrainingTest, ZeroNoiseMatchesCleanForward) {
  const GnnParams p = make_params(2, 3, 44);
  Dataset d = make_dataset(60, 4, 5, 0.8, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.csi_noise = 0.0;
  const std::vector<int> idx = {0, 1, 2, 3};
  const BatchEval a = batch_eval(p, d, idx, /*noise_key=*/123, cfg);
  const BatchEval b = batch_eval(p, d, idx, /*noise_key=*/456, cfg);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_EQ(a.grad, b.grad);

  TrainingConfig noisy = cfg;
  noisy.csi_noise = 0.3;
  const BatchEval c = batch_eval(p, d, idx, /*noise_key=*/123, noisy);
  EXPECT_NE(a.loss.total, c.loss.total);
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

// Paths inside the surrogate are re-selected every forward pass; a finite
// difference straddling a selection change is meaningless. This helper
// fingerprints the selected paths of every decoded layer.
std::vector<std::vector<int>> path_signature(const GnnParams& p,
                                             const Sample& s) {
  std::vector<std::vector<int>> sig;
  const GnnStates states = gnn_forward(p, s.topo, s.csi);
  for (int round = 1; round < p.rounds; ++round) {
    const PowerAllocation P = gnn_decode(p, s.topo, states, round);
    for (int b = 0; b < p.bands; ++b) {
      const auto rates = directed_band_rates(P, s.csi, s.topo, b);
      sig.push_back(widest_path(s.topo, rates).path);
    }
  }
  return sig;
}

TEST(GradientTest, MatchesFiniteDifferences) {
  const int B = 2;
  GnnParams p = make_params(B, 3, 47);
  Dataset d;
  d.bands = B;
  d.samples.push_back(make_sample(70, 4, 0.9, B, 0.0));
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.csi_noise = 0.0;
  cfg.lambda = 0.1;
  cfg.margin = 0.01;
  cfg.tau = 0.1;
  const std::vector<int> idx = {0};

  const BatchEval base = batch_eval(p, d, idx, 0, cfg);
  const std::vector<std::vector<int>> sig0 =
      path_signature(p, d.samples[0]);

  // Skip coordinates whose perturbation crosses a relu kink in the
  // monotonicity penalty.
  auto near_kink = [&](const GnnParams& params) {
    ad::Tape tape;
    const TapeParams tp = register_params(tape, params);
    const SampleLoss sl =
        sample_loss(tape, tp, d.samples[0].topo, d.samples[0].csi,
                    d.samples[0].csi, cfg.tau, cfg.margin, cfg.lambda);
    for (std::size_t l = 0; l + 1 < sl.layer_rates.size(); ++l) {
      const double gap =
          cfg.margin - (sl.layer_rates[l + 1] - sl.layer_rates[l]);
      if (std::abs(gap) < 1e-4) return true;
    }
    return false;
  };

  const double h = 1e-5;
  std::size_t checked = 0, flat_index = 0, skipped = 0;
  for_each_tensor(p, [&](const std::string& name, std::vector<double>& w,
                         const std::vector<int>&) {
    for (std::size_t k = 0; k < w.size(); ++k, ++flat_index) {
      const double saved = w[k];
      w[k] = saved + h;
      const double up = batch_eval(p, d, idx, 0, cfg, false).loss.total;
      const bool sig_up = path_signature(p, d.samples[0]) == sig0;
      const bool kink_up = near_kink(p);
      w[k] = saved - h;
      const double down = batch_eval(p, d, idx, 0, cfg, false).loss.total;
      const bool sig_down = path_signature(p, d.samples[0]) == sig0;
      const bool kink_down = near_kink(p);
      w[k] = saved;
      if (!sig_up || !sig_down || kink_up || kink_down) {
        ++skipped;
        continue;
      }
      const double fd = (up - down) / (2.0 * h);
      const double an = base.grad[flat_index];
      const double err = std::abs(fd - an);
      const double scale = std::max(std::abs(fd), std::abs(an));
      if (err > 1e-6) {
        EXPECT_LE(err / scale, 1e-4) << name << "[" << k << "]";
      }
      ++checked;
    }
  });
  EXPECT_GT(checked, 100u);
  // The guard should fire rarely; if it wipes out the test something is
  // structurally wrong.
  EXPECT_LT(skipped, checked);
}

TEST(GradientTest, FullBatchGradientIsShuffleInvariant) {
  const GnnParams p = make_params(2, 3, 53);
  Dataset d = make_dataset(90, 6, 5, 0.8, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.lambda = 0.0;
  cfg.csi_noise = 0.1;
  const std::vector<int> forward = {0, 1, 2, 3, 4, 5};
  const std::vector<int> scrambled = {4, 2, 5, 0, 3, 1};
  const BatchEval a = batch_eval(p, d, forward, 7, cfg);
  const BatchEval b = batch_eval(p, d, scrambled, 7, cfg);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_EQ(a.grad, b.grad);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(TrainTest, DeterministicTrajectories) {
  Dataset d = make_dataset(100, 6, 5, 0.7, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.epochs = 3;
  cfg.batches = 2;
  cfg.seed = 5;
  cfg.csi_noise = 0.1;

  const GnnParams p0 = make_params(2, 3, 55);
  TrainResult a = train(p0, d, cfg);
  TrainResult b = train(p0, d, cfg);
  ASSERT_EQ(a.trace.size(), 3u);
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    EXPECT_EQ(a.trace[e].rate, b.trace[e].rate);
    EXPECT_EQ(a.trace[e].mono, b.trace[e].mono);
    EXPECT_EQ(a.trace[e].total, b.trace[e].total);
  }
  std::vector<double> flat_a, flat_b;
  for_each_tensor(a.params, [&](const std::string&, std::vector<double>& w,
                                const std::vector<int>&) {
    flat_a.insert(flat_a.end(), w.begin(), w.end());
  });
  for_each_tensor(b.params, [&](const std::string&, std::vector<double>& w,
                                const std::vector<int>&) {
    flat_b.insert(flat_b.end(), w.begin(), w.end());
  });
  EXPECT_EQ(flat_a, flat_b);

  TrainingConfig other_seed = cfg;
  other_seed.seed = 6;
  const TrainResult c = train(p0, d, other_seed);
  EXPECT_NE(a.trace.back().total, c.trace.back().total);
}

TEST(TrainTest, ThreadCountDoesNotChangeResults) {
  Dataset d = make_dataset(110, 4, 5, 0.8, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.epochs = 2;
  cfg.seed = 9;
  const GnnParams p0 = make_params(2, 3, 57);
  TrainingConfig two = cfg;
  two.threads = 2;
  const TrainResult a = train(p0, d, cfg);
  const TrainResult b = train(p0, d, two);
  EXPECT_EQ(a.trace.back().total, b.trace.back().total);
}

TEST(TrainTest, TinyDatasetConverges) {
  Dataset d = make_dataset(120, 8, 6, 0.6, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.epochs = 200;
  cfg.batches = 1;
  cfg.seed = 3;
  cfg.csi_noise = 0.0;
  cfg.adam = true;
  cfg.learning_rate = 1e-3;

  const GnnParams p0 = make_params(2, 3, 59);
  const std::vector<Sample> batch(d.samples.begin(), d.samples.end());
  const double initial = rate_loss(p0, batch, cfg.tau);
  const TrainResult r = train(p0, d, cfg);
  const double final_loss = rate_loss(r.params, batch, cfg.tau);
  EXPECT_LT(final_loss, initial);
  EXPECT_LE(final_loss, initial - 0.10 * std::abs(initial));
}

TEST(TrainTest, ValidationRejectsBadConfigs) {
  Dataset d = make_dataset(130, 2, 4, 0.9, 2, 0.0);
  const GnnParams p = make_params(2, 3, 61);
  TrainingConfig cfg;
  cfg.rounds = 3;

  TrainingConfig bad = cfg;
  bad.learning_rate = 0.0;
  EXPECT_THROW(train(p, d, bad), ConfigError);
  bad = cfg;
  bad.tau = -1.0;
  EXPECT_THROW(train(p, d, bad), ConfigError);
  bad = cfg;
  bad.rounds = 4;  // model was built with L = 3
  EXPECT_THROW(train(p, d, bad), ConfigError);

  Dataset empty;
  empty.bands = 2;
  EXPECT_THROW(train(p, empty, cfg), ContractError);

  const GnnParams wrong_bands = make_params(3, 3, 62);
  EXPECT_THROW(train(wrong_bands, d, cfg), ConfigError);
}

TEST(TrainTest, TraceShapeAndEpochNumbers) {
  Dataset d = make_dataset(140, 5, 5, 0.8, 2, 0.0);
  TrainingConfig cfg;
  cfg.rounds = 3;
  cfg.epochs = 4;
  cfg.batches = 3;
  const GnnParams p = make_params(2, 3, 63);
  const TrainResult r = train(p, d, cfg);
  ASSERT_EQ(r.trace.size(), 4u);
  for (int e = 0; e < 4; ++e) {
    EXPECT_EQ(r.trace[static_cast<std::size_t>(e)].epoch, e);
    EXPECT_GE(r.trace[static_cast<std::size_t>(e)].grad_norm, 0.0);
    EXPECT_GE(r.trace[static_cast<std::size_t>(e)].mono, 0.0);
  }
}

}  // namespace
}  // namespace manet
