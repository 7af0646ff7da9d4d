// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "manet/autodiff.hpp"
#include "manet/channel.hpp"
#include "manet/common.hpp"
#include "manet/topology.hpp"

namespace manet {

constexpr double kInvLn2 = 1.4426950408889634;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Transmit power amplitudes per (band, from, to). Entries are zero off the
// topology's edges; a node's whole slice is limited to unit L2 norm.
struct PowerAllocation {
  int bands = 0;
  int n = 0;
  std::vector<double> p;  // bands * n * n, row-major [band][from][to]

  double& at(int band, int from, int to) {
    return p[(static_cast<std::size_t>(band) * n + from) * n + to];
  }
  double at(int band, int from, int to) const {
    return p[(static_cast<std::size_t>(band) * n + from) * n + to];
  }
};

inline PowerAllocation zero_allocation(int bands, int n) {
  PowerAllocation P;
  P.bands = bands;
  P.n = n;
  P.p.assign(static_cast<std::size_t>(bands) * n * n, 0.0);
  return P;
}

// L2 norm of everything node i transmits, over all bands and neighbors.
// Summation order (band outer, target inner) is fixed for reproducibility.
inline double node_slice_norm(const PowerAllocation& P, int i) {
  double sq = 0.0;
  for (int b = 0; b < P.bands; ++b)
    for (int j = 0; j < P.n; ++j) {
      const double v = P.at(b, i, j);
      sq += v * v;
    }
  return std::sqrt(sq);
}

inline std::string feasibility_violation(const PowerAllocation& P,
                                         const Topology& t,
                                         double tol = 1e-9) {
  if (P.n != t.n || P.bands < 1) return "allocation shape mismatch";
  if (P.p.size() != static_cast<std::size_t>(P.bands) * P.n * P.n)
    return "allocation storage size mismatch";
  for (int b = 0; b < P.bands; ++b)
    for (int i = 0; i < P.n; ++i)
      for (int j = 0; j < P.n; ++j) {
        const double v = P.at(b, i, j);
        if (!(v >= 0.0)) return "negative or non-finite amplitude";
        if (v > 1.0 + tol) return "amplitude above 1";
        if (i == j && v != 0.0) return "self-loop amplitude";
        if (i != j && !t.has_edge(i, j) && v != 0.0)
          return "amplitude on a non-edge";
      }
  for (int i = 0; i < P.n; ++i)
    if (node_slice_norm(P, i) > 1.0 + tol)
      return "node " + std::to_string(i) + " exceeds its power budget";
  return {};
}

inline bool is_feasible(const PowerAllocation& P, const Topology& t,
                        double tol = 1e-9) {
  return feasibility_violation(P, t, tol).empty();
}

inline void check_feasible(const PowerAllocation& P, const Topology& t,
                           double tol = 1e-9) {
  const std::string msg = feasibility_violation(P, t, tol);
  if (!msg.empty()) throw ContractError("infeasible allocation: " + msg);
}

// Rate of a single link given gain_over_noise = |h|^2 / sigma^2. Kept as the
// one shared scalar kernel: the tape build in surrogate_objective replays
// exactly this operation sequence, and several tests rely on bit equality
// between the two.
inline double rate_value(double gain_over_noise, double amplitude) {
  return std::log(gain_over_noise * (amplitude * amplitude) + 1.0) * kInvLn2;
}

// log2(1 + |h|^2 p^2 / sigma^2), bits per channel use.
inline double link_rate(std::complex<double> h, double p,
                        double noise_variance) {
  if (!(noise_variance > 0.0))
    throw DomainError("link_rate: noise variance must be positive");
  if (p < 0.0) throw ContractError("link_rate: negative amplitude");
  return rate_value(std::norm(h) / noise_variance, p);
}

struct PathResult {
  std::vector<int> path;  // node sequence source..destination; empty if none
  double bottleneck = 0.0;
  bool found = false;
};

// Maximum-bottleneck route between the topology's source and destination.
// directed_rate is a dense n*n matrix; entries of -infinity mark directions
// that must not be used (non-edges, or links excluded by zero gain).
// Tie-break: fewest hops, then lexicographically smallest node sequence.
inline PathResult widest_path(const Topology& t,
                              const std::vector<double>& directed_rate) {
  const int n = t.n;
  if (directed_rate.size() != static_cast<std::size_t>(n) * n)
    throw DimensionError("widest_path: rate matrix must be n*n");
  const auto rate = [&](int u, int v) {
    return directed_rate[static_cast<std::size_t>(u) * n + v];
  };

  // Best-first search maximizing the path bottleneck.
  std::vector<double> best(static_cast<std::size_t>(n), kNegInf);
  best[static_cast<std::size_t>(t.source)] =
      std::numeric_limits<double>::infinity();
  std::priority_queue<std::pair<double, int>> frontier;
  frontier.emplace(best[static_cast<std::size_t>(t.source)], t.source);
  while (!frontier.empty()) {
    const auto [width, u] = frontier.top();
    frontier.pop();
    if (width < best[static_cast<std::size_t>(u)]) continue;
    for (int v : t.adjacency[static_cast<std::size_t>(u)]) {
      const double r = rate(u, v);
      if (r == kNegInf) continue;
      const double cand = std::min(width, r);
      if (cand > best[static_cast<std::size_t>(v)]) {
        best[static_cast<std::size_t>(v)] = cand;
        frontier.emplace(cand, v);
      }
    }
  }

  PathResult result;
  const double target = best[static_cast<std::size_t>(t.destination)];
  if (target == kNegInf) return result;  // degenerate: no usable route

  // Hop distances to the destination inside the subgraph of links whose
  // rate reaches the optimum; every optimal path lives in this subgraph.
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(n), kUnreached);
  dist[static_cast<std::size_t>(t.destination)] = 0;
  std::queue<int> bfs;
  bfs.push(t.destination);
  while (!bfs.empty()) {
    const int w = bfs.front();
    bfs.pop();
    for (int u : t.adjacency[static_cast<std::size_t>(w)]) {
      if (dist[static_cast<std::size_t>(u)] != kUnreached) continue;
      if (rate(u, w) >= target) {
        dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(w)] + 1;
        bfs.push(u);
      }
    }
  }
  if (dist[static_cast<std::size_t>(t.source)] == kUnreached)
    throw ContractError("widest_path: optimum unreachable in threshold graph");

  // Greedy walk choosing the smallest next node keeps the sequence
  // lexicographically minimal among minimum-hop optimal paths.
  result.found = true;
  result.bottleneck = target;
  result.path.push_back(t.source);
  int v = t.source;
  while (v != t.destination) {
    int next = -1;
    for (int w : t.adjacency[static_cast<std::size_t>(v)]) {
      if (rate(v, w) >= target &&
          dist[static_cast<std::size_t>(w)] ==
              dist[static_cast<std::size_t>(v)] - 1) {
        next = w;
        break;  // adjacency is sorted ascending
      }
    }
    if (next < 0) throw ContractError("widest_path: walk lost the route");
    result.path.push_back(next);
    v = next;
  }
  return result;
}

// Dense directed rate matrix for one band under allocation P. Non-edges and
// zero-gain links come back as -infinity.
inline std::vector<double> directed_band_rates(const PowerAllocation& P,
                                               const CsiTensor& csi,
                                               const Topology& t, int band) {
  const int n = t.n;
  std::vector<double> m(static_cast<std::size_t>(n) * n, kNegInf);
  const double noise = csi.noise_variance[static_cast<std::size_t>(band)];
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    const auto [a, b] = t.edges[e];
    const double g = std::norm(csi.gain(band, static_cast<int>(e))) / noise;
    if (!(g > 0.0)) continue;
    m[static_cast<std::size_t>(a) * n + b] = rate_value(g, P.at(band, a, b));
    m[static_cast<std::size_t>(b) * n + a] = rate_value(g, P.at(band, b, a));
  }
  return m;
}

struct RateReport {
  std::vector<std::vector<int>> band_path;
  std::vector<double> band_rate;
  double total = 0.0;
};

// Sum over bands of the widest-path bottleneck under P, the quantity every
// algorithm is ultimately scored on.
inline RateReport true_objective(const PowerAllocation& P,
                                 const CsiTensor& csi, const Topology& t) {
  check_feasible(P, t);
  check_csi(csi, t);
  if (P.bands != csi.bands)
    throw DimensionError("true_objective: band count mismatch");
  RateReport report;
  report.band_path.resize(static_cast<std::size_t>(P.bands));
  report.band_rate.assign(static_cast<std::size_t>(P.bands), 0.0);
  for (int b = 0; b < P.bands; ++b) {
    const PathResult r = widest_path(t, directed_band_rates(P, csi, t, b));
    if (r.found) {
      report.band_path[static_cast<std::size_t>(b)] = r.path;
      report.band_rate[static_cast<std::size_t>(b)] = r.bottleneck;
    }
    report.total += report.band_rate[static_cast<std::size_t>(b)];
  }
  return report;
}

// Differentiable lower bound on min(values): -tau ln sum exp(-v/tau),
// evaluated with a min shift so the result never exceeds the true minimum
// even in floating point.
inline double smooth_min(std::span<const double> values, double tau) {
  if (values.empty()) throw ContractError("smooth_min: empty input");
  if (!(tau > 0.0)) throw ContractError("smooth_min: tau must be positive");
  const double m = *std::min_element(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += std::exp((m - v) / tau);
  return m - tau * std::log(s);
}

inline double smooth_min(const std::vector<double>& values, double tau) {
  return smooth_min(std::span<const double>(values), tau);
}

// Tape counterpart; bit-identical to the scalar version at equal inputs.
inline ad::Tensor smooth_min(ad::Tape& tape, ad::Tensor values, double tau) {
  if (values.size() == 0) throw ContractError("smooth_min: empty input");
  if (!(tau > 0.0)) throw ContractError("smooth_min: tau must be positive");
  std::span<const double> v = values.values();
  const double m = *std::min_element(v.begin(), v.end());
  // The shift is treated as a constant: the exact smooth-min gradient is the
  // softmax of -v/tau, which is what differentiating the shifted form with a
  // frozen m yields.
  ad::Tensor shifted = tape.affine(values, -1.0, m);
  ad::Tensor scaled = tape.div(shifted, tape.scalar(tau));
  ad::Tensor expsum = tape.sum(tape.exp(scaled));
  return tape.affine(tape.log(expsum), -tau, m);
}

// Power amplitudes as tape tensors, one length-B vector per directed edge.
// Slot layout: 2 * edge_id + (1 if from > to).
struct TapeAllocation {
  int bands = 0;
  std::vector<ad::Tensor> directed;

  ad::Tensor at(const Topology& t, int from, int to) const {
    const int e = t.edge_id(from, to);
    if (e < 0) throw ContractError("TapeAllocation: nodes are not adjacent");
    return directed[static_cast<std::size_t>(2 * e + (from > to ? 1 : 0))];
  }
};

// Snapshot of the current tape values as a plain allocation.
inline PowerAllocation materialize(const TapeAllocation& q,
                                   const Topology& t) {
  PowerAllocation P = zero_allocation(q.bands, t.n);
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    const auto [a, b] = t.edges[e];
    std::span<const double> fwd = q.directed[2 * e].values();
    std::span<const double> rev = q.directed[2 * e + 1].values();
    for (int band = 0; band < q.bands; ++band) {
      P.at(band, a, b) = fwd[static_cast<std::size_t>(band)];
      P.at(band, b, a) = rev[static_cast<std::size_t>(band)];
    }
  }
  return P;
}

// Differentiable surrogate: per band, the path is fixed by the exact widest
// path at the current amplitudes (no gradient through the selection), and
// the band's contribution is the smooth-min of that path's link rates.
inline ad::Tensor surrogate_objective(ad::Tape& tape, const TapeAllocation& q,
                                      const CsiTensor& csi, const Topology& t,
                                      double tau) {
  check_csi(csi, t);
  if (q.bands != csi.bands)
    throw DimensionError("surrogate_objective: band count mismatch");
  if (q.directed.size() != 2 * t.edges.size())
    throw DimensionError("surrogate_objective: directed slot count mismatch");

  const PowerAllocation now = materialize(q, t);
  ad::Tensor total;
  for (int b = 0; b < csi.bands; ++b) {
    const PathResult sel = widest_path(t, directed_band_rates(now, csi, t, b));
    if (!sel.found) continue;
    const double noise = csi.noise_variance[static_cast<std::size_t>(b)];
    std::vector<ad::Tensor> rates;
    rates.reserve(sel.path.size() - 1);
    for (std::size_t k = 0; k + 1 < sel.path.size(); ++k) {
      const int u = sel.path[k];
      const int v = sel.path[k + 1];
      const double g =
          std::norm(link_gain(csi, t, b, u, v)) / noise;
      ad::Tensor p = tape.index(q.at(t, u, v), b);
      ad::Tensor snr = tape.affine(tape.mul(p, p), g, 1.0);
      rates.push_back(tape.affine(tape.log(snr), kInvLn2, 0.0));
    }
    ad::Tensor band_value =
        smooth_min(tape, tape.concat(std::span<const ad::Tensor>(rates)), tau);
    total = total.valid() ? tape.add(total, band_value) : band_value;
  }
  return total.valid() ? total : tape.scalar(0.0);
}

// Scalar twin of the tape surrogate, same selection and same arithmetic.
inline double surrogate_objective_value(const PowerAllocation& P,
                                        const CsiTensor& csi,
                                        const Topology& t, double tau) {
  check_csi(csi, t);
  if (P.bands != csi.bands)
    throw DimensionError("surrogate_objective_value: band count mismatch");
  double total = 0.0;
  bool any = false;
  for (int b = 0; b < csi.bands; ++b) {
    const std::vector<double> m = directed_band_rates(P, csi, t, b);
    const PathResult sel = widest_path(t, m);
    if (!sel.found) continue;
    std::vector<double> rates;
    rates.reserve(sel.path.size() - 1);
    for (std::size_t k = 0; k + 1 < sel.path.size(); ++k)
      rates.push_back(m[static_cast<std::size_t>(sel.path[k]) * t.n +
                        sel.path[k + 1]]);
    const double band_value = smooth_min(rates, tau);
    total = any ? total + band_value : band_value;
    any = true;
  }
  return any ? total : 0.0;
}

// Scales each node's slice by 1/max(1, norm) so the budget holds; feasible
// inputs pass through unchanged, directions are preserved.
inline PowerAllocation project_feasible(const PowerAllocation& raw,
                                        const Topology& t) {
  if (raw.n != t.n)
    throw DimensionError("project_feasible: node count mismatch");
  for (int b = 0; b < raw.bands; ++b)
    for (int i = 0; i < raw.n; ++i)
      for (int j = 0; j < raw.n; ++j) {
        const double v = raw.at(b, i, j);
        if (!(v >= 0.0))
          throw ContractError("project_feasible: negative amplitude");
        if ((i == j || !t.has_edge(i, j)) && v != 0.0)
          throw ContractError("project_feasible: amplitude off the edge set");
      }
  PowerAllocation P = raw;
  for (int i = 0; i < P.n; ++i) {
    const double norm = node_slice_norm(P, i);
    if (norm <= 1.0) continue;
    const double scale = 1.0 / norm;
    for (int b = 0; b < P.bands; ++b)
      for (int j = 0; j < P.n; ++j) P.at(b, i, j) *= scale;
  }
  return P;
}

// Node-relabeled copy: entry (b, i, j) moves to (b, perm[i], perm[j]).
inline PowerAllocation relabel(const PowerAllocation& P,
                               const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != P.n)
    throw ContractError("relabel: permutation size mismatch");
  PowerAllocation out = zero_allocation(P.bands, P.n);
  for (int b = 0; b < P.bands; ++b)
    for (int i = 0; i < P.n; ++i)
      for (int j = 0; j < P.n; ++j)
        out.at(b, perm[static_cast<std::size_t>(i)],
               perm[static_cast<std::size_t>(j)]) = P.at(b, i, j);
  return out;
}

}  // namespace manet
