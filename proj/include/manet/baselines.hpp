// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
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
// Best single channel (centralized and distributed variants)
// ---------------------------------------------------------------------------

// Rates every single-band scheme is judged by: amplitude 1 on each
// direction of every edge, -infinity off the edge set.
inline std::vector<double> full_power_band_rates(const CsiTensor& csi,
                                                 const Topology& t, int band) {
  const int n = t.n;
  std::vector<double> rates(static_cast<std::size_t>(n) * n, kNegInf);
  const double sigma2 = csi.noise_variance[static_cast<std::size_t>(band)];
  for (int i = 0; i < n; ++i)
    for (int j : t.adjacency[static_cast<std::size_t>(i)])
      rates[static_cast<std::size_t>(i) * n + j] =
          link_rate(link_gain(csi, t, band, i, j), 1.0, sigma2);
  return rates;
}

namespace detail {

inline PowerAllocation path_allocation(const Topology& t, int bands, int band,
                                       const std::vector<int>& path) {
  PowerAllocation P = zero_allocation(bands, t.n);
  for (std::size_t k = 0; k + 1 < path.size(); ++k)
    P.at(band, path[k], path[k + 1]) = 1.0;
  return P;
}

}  // namespace detail

struct SingleChannelResult {
  PowerAllocation alloc;
  int band = -1;  // -1 when no usable route exists on any band
  double bottleneck = 0.0;
  std::vector<int> path;
};

// Commits the whole network to one band: full amplitude on the edges of
// that band's widest path, nothing anywhere else. Ties go to the lowest
// band index.
inline SingleChannelResult best_single_channel(const CsiTensor& csi,
                                               const Topology& t) {
  check_csi(csi, t);
  SingleChannelResult out;
  for (int b = 0; b < csi.bands; ++b) {
    const PathResult pr = widest_path(t, full_power_band_rates(csi, t, b));
    if (!pr.found) continue;
    if (out.band < 0 || pr.bottleneck > out.bottleneck) {
      out.band = b;
      out.bottleneck = pr.bottleneck;
      out.path = pr.path;
    }
  }
  if (out.band < 0) {
    out.alloc = zero_allocation(csi.bands, t.n);
    return out;
  }
  out.alloc = detail::path_allocation(t, csi.bands, out.band, out.path);
  return out;
}

struct BellmanFordResult {
  SingleChannelResult result;
  std::vector<int> rounds;  // per band: rounds in which any label changed
};

// Distributed variant: per band, every node repeatedly announces its best
// known (bottleneck, hops, next hop) to the destination; neighbors relax
// through their incident links. Labels only improve, and the fixed point is
// reached within n-1 changed rounds. Nodes use only their own incident
// gains plus the per-band noise floor.
inline BellmanFordResult best_single_channel_bellman_ford(
    const std::vector<LocalView>& views, const Topology& t,
    const std::vector<double>& noise_variance) {
  const int n = static_cast<int>(views.size());
  if (n != t.n)
    throw ContractError("bellman_ford: view count does not match topology");
  const int bands = n > 0 ? views[0].bands : 0;
  if (noise_variance.size() != static_cast<std::size_t>(bands))
    throw ContractError("bellman_ford: need one noise value per band");

  struct Label {
    double width = kNegInf;
    int hops = std::numeric_limits<int>::max();
    int next = -1;
  };
  const auto better = [](const Label& a, const Label& b) {
    if (a.width != b.width) return a.width > b.width;
    if (a.hops != b.hops) return a.hops < b.hops;
    return a.next < b.next;
  };

  BellmanFordResult out;
  out.rounds.assign(static_cast<std::size_t>(bands), 0);
  SingleChannelResult& res = out.result;

  std::vector<std::vector<Label>> final_labels(
      static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    std::vector<Label> label(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      if (views[static_cast<std::size_t>(i)].role[1] == 1.0)
        label[static_cast<std::size_t>(i)] =
            Label{std::numeric_limits<double>::infinity(), 0, i};

    for (int round = 0; round < n; ++round) {
      bool changed = false;
      std::vector<Label> next = label;
      for (int i = 0; i < n; ++i) {
        const LocalView& v = views[static_cast<std::size_t>(i)];
        if (v.role[1] == 1.0) continue;
        Label cand = label[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < v.neighbors.size(); ++k) {
          const int j = v.neighbors[k];
          const Label& lj = label[static_cast<std::size_t>(j)];
          if (lj.width == kNegInf) continue;
          const double r =
              link_rate(v.incident_gains[k][static_cast<std::size_t>(b)], 1.0,
                        noise_variance[static_cast<std::size_t>(b)]);
          Label through;
          through.width = std::min(r, lj.width);
          through.hops = lj.hops == std::numeric_limits<int>::max()
                             ? std::numeric_limits<int>::max()
                             : lj.hops + 1;
          through.next = j;
          if (better(through, cand)) cand = through;
        }
        if (better(cand, label[static_cast<std::size_t>(i)])) {
          next[static_cast<std::size_t>(i)] = cand;
          changed = true;
        }
      }
      label = std::move(next);
      if (!changed) break;
      out.rounds[static_cast<std::size_t>(b)] = round + 1;
    }
    final_labels[static_cast<std::size_t>(b)] = std::move(label);
  }

  // Band selection happens at the source from its own labels.
  int source = -1;
  for (int i = 0; i < n; ++i)
    if (views[static_cast<std::size_t>(i)].role[0] == 1.0) source = i;
  if (source < 0) throw ContractError("bellman_ford: no source among views");

  for (int b = 0; b < bands; ++b) {
    const Label& ls = final_labels[static_cast<std::size_t>(b)]
                                  [static_cast<std::size_t>(source)];
    if (ls.width == kNegInf) continue;
    if (res.band < 0 || ls.width > res.bottleneck) {
      res.band = b;
      res.bottleneck = ls.width;
    }
  }
  if (res.band < 0) {
    res.alloc = zero_allocation(bands, n);
    return out;
  }

  // Walk the next pointers of the chosen band; hop counts strictly decrease
  // so the walk terminates at the destination.
  const auto& labels = final_labels[static_cast<std::size_t>(res.band)];
  int u = source;
  res.path.push_back(u);
  while (views[static_cast<std::size_t>(u)].role[1] != 1.0) {
    u = labels[static_cast<std::size_t>(u)].next;
    if (u < 0 || res.path.size() > static_cast<std::size_t>(n))
      throw ContractError("bellman_ford: inconsistent next pointers");
    res.path.push_back(u);
  }
  res.alloc = detail::path_allocation(t, bands, res.band, res.path);
  return out;
}

// ---------------------------------------------------------------------------
// Centralized gradient solver
// ---------------------------------------------------------------------------

struct SolverConfig {
  int max_iters = 500;
  double step = 0.05;
  double tau = 0.1;
  double tol = 0.0;  // early stop when the surrogate moves less than this
  int restarts = 3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  // Second-moment decay. Near the feasible boundary the useful gradients
  // shrink by orders of magnitude within tens of iterations; the moment
  // estimate has to forget at a comparable rate or updates stall.
  double beta2 = 0.9;
  // Optional: seed the first restart from the best single-band widest path
  // instead of a random point. Guarantees the result never scores below that
  // feasible point, at the cost of one random restart.
  bool warm_start = false;

  void validate() const {
    if (max_iters < 1) throw ConfigError("solver: max iters must be >= 1");
    if (!(step > 0.0)) throw ConfigError("solver: step must be > 0");
    if (!(tau > 0.0)) throw ConfigError("solver: tau must be > 0");
    if (tol < 0.0) throw ConfigError("solver: tol must be >= 0");
    if (restarts < 1) throw ConfigError("solver: restarts must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0)
      throw ConfigError("solver: beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("solver: beta2 must be in [0, 1)");
  }
};

namespace detail {

// Raw-variable layout for the solver: one block per node, band-major inside
// the block, neighbor-minor, matching the order node_slice_norm folds in.
struct SolverLayout {
  std::vector<int> offset;  // per node
  int total = 0;
};

inline SolverLayout solver_layout(const Topology& t, int bands) {
  SolverLayout ly;
  ly.offset.resize(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i) {
    ly.offset[static_cast<std::size_t>(i)] = ly.total;
    ly.total +=
        bands *
        static_cast<int>(t.adjacency[static_cast<std::size_t>(i)].size());
  }
  return ly;
}

// One ascent-side evaluation: raw -> softplus -> per-node division by
// max(1, norm) -> surrogate. Returns the surrogate value and, through the
// tape, its gradient with respect to raw.
struct SolverStep {
  double surrogate = 0.0;
  PowerAllocation projected;
  std::vector<double> grad;
};

inline SolverStep solver_eval(const std::vector<double>& raw,
                              const SolverLayout& ly, const CsiTensor& csi,
                              const Topology& t, double tau, bool with_grad) {
  const int B = csi.bands;
  ad::Tape tape;
  ad::Tensor rv = tape.leaf(raw, {ly.total});
  ad::Tensor amp = tape.softplus(rv);

  TapeAllocation q;
  q.bands = B;
  q.directed.resize(2 * t.edges.size());
  for (int i = 0; i < t.n; ++i) {
    const auto& nbrs = t.adjacency[static_cast<std::size_t>(i)];
    if (nbrs.empty()) continue;
    const int deg = static_cast<int>(nbrs.size());
    ad::Tensor block =
        tape.slice(amp, ly.offset[static_cast<std::size_t>(i)], B * deg);
    ad::Tensor norm = tape.sqrt(tape.sum(tape.mul(block, block)));
    // max(1, norm) written as 1 + relu(norm - 1), differentiable off the
    // boundary and exactly 1 inside the ball.
    ad::Tensor denom =
        tape.add(tape.scalar(1.0), tape.relu(tape.affine(norm, 1.0, -1.0)));
    ad::Tensor scaled = tape.div(block, denom);
    for (int k = 0; k < deg; ++k) {
      const int slot = directed_slot(t, i, nbrs[static_cast<std::size_t>(k)]);
      std::vector<ad::Tensor> bands_of_slot;
      bands_of_slot.reserve(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b)
        bands_of_slot.push_back(tape.index(scaled, b * deg + k));
      q.directed[static_cast<std::size_t>(slot)] =
          tape.concat(std::span<const ad::Tensor>(bands_of_slot));
    }
  }

  ad::Tensor obj = surrogate_objective(tape, q, csi, t, tau);
  SolverStep out;
  out.surrogate = obj.value();
  out.projected = project_feasible(materialize(q, t), t);
  if (with_grad) {
    tape.backward(obj);
    const auto g = rv.grad();
    out.grad.assign(g.begin(), g.end());
  }
  return out;
}

// Raw values whose softplus reproduces the single-band path allocation:
// ln(e - 1) maps to amplitude 1, a large negative value maps to nearly 0.
inline std::vector<double> warm_start_raw(const SolverLayout& ly,
                                          const Topology& t, int bands,
                                          const PowerAllocation& alloc) {
  constexpr double kOn = 0.5413248546129181;  // softplus(kOn) = 1
  constexpr double kOff = -40.0;
  std::vector<double> raw(static_cast<std::size_t>(ly.total), kOff);
  for (int i = 0; i < t.n; ++i) {
    const auto& nbrs = t.adjacency[static_cast<std::size_t>(i)];
    const int deg = static_cast<int>(nbrs.size());
    for (int b = 0; b < bands; ++b)
      for (int k = 0; k < deg; ++k)
        if (alloc.at(b, i, nbrs[static_cast<std::size_t>(k)]) > 0.0)
          raw[static_cast<std::size_t>(ly.offset[static_cast<std::size_t>(i)] +
                                       b * deg + k)] = kOn;
  }
  return raw;
}

}  // namespace detail

struct SolverResult {
  PowerAllocation alloc;
  double objective = 0.0;  // true objective of the returned allocation
  int iterations = 0;      // total across restarts
};

// Gradient ascent on the smooth surrogate over all power variables at once,
// keeping whichever iterate scored best on the true objective. Multi-start
// because the landscape is non-convex.
inline SolverResult centralized_solve(const CsiTensor& csi, const Topology& t,
                                      const SolverConfig& cfg) {
  cfg.validate();
  check_csi(csi, t);
  const detail::SolverLayout ly = detail::solver_layout(t, csi.bands);

  SolverResult best;
  best.objective = -std::numeric_limits<double>::infinity();

  for (int r = 0; r < cfg.restarts; ++r) {
    std::vector<double> raw;
    if (r == 0 && cfg.warm_start) {
      const SingleChannelResult single = best_single_channel(csi, t);
      raw = detail::warm_start_raw(ly, t, csi.bands, single.alloc);
    } else {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      raw.resize(static_cast<std::size_t>(ly.total));
      for (double& v : raw) v = rng.uniform(-1.0, 0.5);
    }

    // Adam moments for this restart.
    std::vector<double> m(raw.size(), 0.0), v2(raw.size(), 0.0);
    constexpr double kEps = 1e-8;
    double prev = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < cfg.max_iters; ++it) {
      detail::SolverStep step;
      try {
        step = detail::solver_eval(raw, ly, csi, t, cfg.tau, true);
      } catch (const std::domain_error& e) {
        std::ostringstream diag;
        diag << "centralized_solve: numeric failure at restart " << r
             << " iteration " << it << ": " << e.what();
        throw GenerationError(diag.str());
      }
      if (!std::isfinite(step.surrogate)) {
        std::ostringstream diag;
        diag << "centralized_solve: non-finite surrogate at restart " << r
             << " iteration " << it;
        throw GenerationError(diag.str());
      }
      const double truth = true_objective(step.projected, csi, t).total;
      if (truth > best.objective) {
        best.objective = truth;
        best.alloc = step.projected;
      }
      best.iterations += 1;

      const double t1 =
          1.0 - std::pow(cfg.beta1, static_cast<double>(it + 1));
      const double t2 =
          1.0 - std::pow(cfg.beta2, static_cast<double>(it + 1));
      for (std::size_t k = 0; k < raw.size(); ++k) {
        const double g = step.grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v2[k] = cfg.beta2 * v2[k] + (1.0 - cfg.beta2) * g * g;
        raw[k] += cfg.step * (m[k] / t1) / (std::sqrt(v2[k] / t2) + kEps);
      }

      if (cfg.tol > 0.0 && std::abs(step.surrogate - prev) < cfg.tol) break;
      prev = step.surrogate;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Equal split
// ---------------------------------------------------------------------------

// Every node spreads its unit power budget uniformly over its incident
// (edge, band) slots: amplitude 1/sqrt(degree * bands) each.
inline PowerAllocation equal_split(const Topology& t, int bands) {
  if (bands < 1) throw ContractError("equal_split: bands must be >= 1");
  PowerAllocation P = zero_allocation(bands, t.n);
  for (int i = 0; i < t.n; ++i) {
    const auto& nbrs = t.adjacency[static_cast<std::size_t>(i)];
    if (nbrs.empty()) continue;
    const double amp = 1.0 / std::sqrt(static_cast<double>(nbrs.size()) *
                                       static_cast<double>(bands));
    for (int b = 0; b < bands; ++b)
      for (int j : nbrs) P.at(b, i, j) = amp;
  }
  return P;
}

}  // namespace manet
