// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "manet/autodiff.hpp"
#include "manet/channel.hpp"
#include "manet/common.hpp"
#include "manet/rateops.hpp"
#include "manet/rng.hpp"
#include "manet/topology.hpp"

namespace manet {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct FcParam {
  int out = 0, in = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

struct LayerNormParam {
  std::vector<double> gain;
  std::vector<double> shift;
};

// One message-passing layer: the edge/message encoder and the residual
// node update. All nodes share these weights.
struct LayerParams {
  LayerNormParam norm;  // over [x_i || e_ij]
  FcParam gate;         // z -> B, sigmoid gate
  FcParam edge;         // z -> B, new edge state (gated)
  FcParam scale;        // B -> B, modulation scale from edge state
  FcParam shift;        // B -> B, modulation shift from edge state
  FcParam node;         // node state -> B, transformed node feature
  FcParam update;       // B -> B, applied to the mean received message
};

struct GnnParams {
  int bands = 0;   // B, also the hidden width and message length
  int rounds = 0;  // L; the network stacks L-1 message-passing layers
  std::vector<LayerParams> layers;  // size rounds - 1
  FcParam decoder;                  // 3B -> B, shared across edges

  int node_input_dim() const { return bands + 3; }
  int edge_input_dim() const { return 2 * bands; }
};

// Canonical flat traversal; checkpointing, gradient updates, and the tape
// registration below all rely on this exact order.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  auto visit_fc = [&](const std::string& name, auto& f) {
    fn(name + ".w", f.w, std::vector<int>{f.out, f.in});
    fn(name + ".b", f.b, std::vector<int>{f.out});
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string base = "layer" + std::to_string(l + 1);
    const int z = static_cast<int>(layer.norm.gain.size());
    fn(base + ".norm.gain", layer.norm.gain, std::vector<int>{z});
    fn(base + ".norm.shift", layer.norm.shift, std::vector<int>{z});
    visit_fc(base + ".gate", layer.gate);
    visit_fc(base + ".edge", layer.edge);
    visit_fc(base + ".scale", layer.scale);
    visit_fc(base + ".shift", layer.shift);
    visit_fc(base + ".node", layer.node);
    visit_fc(base + ".update", layer.update);
  }
  visit_fc("decoder", p.decoder);
}

inline std::size_t parameter_count(const GnnParams& p) {
  std::size_t total = 0;
  for_each_tensor(const_cast<GnnParams&>(p),
                  [&](const std::string&, const std::vector<double>& v,
                      const std::vector<int>&) { total += v.size(); });
  return total;
}

namespace detail {

inline FcParam init_fc(int out, int in, Rng& rng, double bias_value = 0.0) {
  FcParam f;
  f.out = out;
  f.in = in;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  f.w.resize(static_cast<std::size_t>(out) * in);
  for (double& v : f.w) v = rng.uniform(-bound, bound);
  f.b.assign(static_cast<std::size_t>(out), bias_value);
  return f;
}

}  // namespace detail

// Fresh parameters; shapes depend only on B and L, never on the node count.
// The gate bias starts at +1 so gates begin mostly open.
inline GnnParams init_gnn_params(int bands, int rounds, Rng& rng) {
  if (bands < 1) throw ConfigError("init_gnn_params: bands must be >= 1");
  if (rounds < 2) throw ConfigError("init_gnn_params: rounds must be >= 2");
  GnnParams p;
  p.bands = bands;
  p.rounds = rounds;
  const int B = bands;
  for (int l = 1; l < rounds; ++l) {
    const int node_in = l == 1 ? B + 3 : B;
    const int edge_in = l == 1 ? 2 * B : B;
    const int z = node_in + edge_in;
    LayerParams layer;
    layer.norm.gain.assign(static_cast<std::size_t>(z), 1.0);
    layer.norm.shift.assign(static_cast<std::size_t>(z), 0.0);
    layer.gate = detail::init_fc(B, z, rng, 1.0);
    layer.edge = detail::init_fc(B, z, rng);
    layer.scale = detail::init_fc(B, B, rng);
    layer.shift = detail::init_fc(B, B, rng);
    layer.node = detail::init_fc(B, node_in, rng);
    layer.update = detail::init_fc(B, B, rng);
    p.layers.push_back(std::move(layer));
  }
  p.decoder = detail::init_fc(B, 3 * B, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Plain-double kernels. The tape forward below replays these operation for
// operation; keep both sides in sync or the decentralized-equality and
// parity tests will fail.
// ---------------------------------------------------------------------------

inline std::vector<double> fc_value(const FcParam& f,
                                    std::span<const double> x) {
  if (static_cast<int>(x.size()) != f.in)
    throw ContractError("fc_value: input length mismatch");
  std::vector<double> y(static_cast<std::size_t>(f.out));
  for (int o = 0; o < f.out; ++o) {
    double acc = f.b[static_cast<std::size_t>(o)];
    const double* row = f.w.data() + static_cast<std::size_t>(o) * f.in;
    for (int k = 0; k < f.in; ++k) acc += row[k] * x[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

inline std::vector<double> layer_norm_value(const LayerNormParam& n,
                                            std::span<const double> x,
                                            double eps = 1e-5) {
  const std::size_t k = x.size();
  if (n.gain.size() != k || n.shift.size() != k)
    throw ContractError("layer_norm_value: gain/shift length mismatch");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double v : x) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(k);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(k);
  for (std::size_t i = 0; i < k; ++i)
    y[i] = n.gain[i] * ((x[i] - mean) * inv) + n.shift[i];
  return y;
}

struct EncoderOutput {
  std::vector<double> edge;     // updated e_{i->j}, length B
  std::vector<double> message;  // m_{i->j}, length B
};

// z = layer_norm([x_i || e_ij]); gated edge update, then the transformed
// node feature modulated (scaled and shifted) by the new edge state.
inline EncoderOutput encoder_step(const LayerParams& layer,
                                  std::span<const double> x_i,
                                  std::span<const double> e_ij) {
  if (static_cast<int>(x_i.size()) + static_cast<int>(e_ij.size()) !=
      layer.gate.in)
    throw ContractError("encoder_step: state lengths do not match this layer");
  std::vector<double> z;
  z.reserve(x_i.size() + e_ij.size());
  z.insert(z.end(), x_i.begin(), x_i.end());
  z.insert(z.end(), e_ij.begin(), e_ij.end());
  const std::vector<double> zn = layer_norm_value(layer.norm, z);

  EncoderOutput out;
  const std::vector<double> gate_pre = fc_value(layer.gate, zn);
  const std::vector<double> edge_pre = fc_value(layer.edge, zn);
  out.edge.resize(edge_pre.size());
  for (std::size_t i = 0; i < edge_pre.size(); ++i)
    out.edge[i] = ad::sigmoid_value(gate_pre[i]) * edge_pre[i];

  const std::vector<double> mod_scale = fc_value(layer.scale, out.edge);
  const std::vector<double> mod_shift = fc_value(layer.shift, out.edge);
  const std::vector<double> node_feat = fc_value(layer.node, x_i);
  out.message.resize(node_feat.size());
  for (std::size_t i = 0; i < node_feat.size(); ++i)
    out.message[i] = mod_scale[i] * node_feat[i] + mod_shift[i];
  return out;
}

// Residual node update from the mean received message. When the incoming
// state is longer than B (layer 1), the residual uses its first B entries,
// the initial power-division block.
inline std::vector<double> aggregator_step(
    const LayerParams& layer, std::span<const double> x_i,
    const std::vector<std::vector<double>>& messages) {
  const int B = layer.update.out;
  std::vector<double> mean(static_cast<std::size_t>(B), 0.0);
  for (const auto& m : messages) {
    if (static_cast<int>(m.size()) != B)
      throw ContractError("aggregator_step: message length must be B");
    for (int d = 0; d < B; ++d) mean[static_cast<std::size_t>(d)] += m[static_cast<std::size_t>(d)];
  }
  if (!messages.empty()) {
    const double scale = 1.0 / static_cast<double>(messages.size());
    for (double& v : mean) v *= scale;
  }
  const std::vector<double> delta = fc_value(layer.update, mean);
  if (static_cast<int>(x_i.size()) < B)
    throw ContractError("aggregator_step: node state shorter than B");
  std::vector<double> x_new(static_cast<std::size_t>(B));
  for (int d = 0; d < B; ++d)
    x_new[static_cast<std::size_t>(d)] =
        x_i[static_cast<std::size_t>(d)] + delta[static_cast<std::size_t>(d)];
  return x_new;
}

// ---------------------------------------------------------------------------
// Input features
// ---------------------------------------------------------------------------

struct InitialFeatures {
  std::vector<std::vector<double>> node;  // per node, length B+3
  std::vector<std::vector<double>> edge;  // per directed slot, length 2B
};

// Node: B entries of 1/B (initial power division) then the role one-hot.
// Directed edge: interleaved real/imag of the B estimated gains; both
// directions of an edge start from the same values.
inline InitialFeatures init_features(const Topology& t,
                                     const CsiTensor& csi_est) {
  check_csi(csi_est, t);
  const int B = csi_est.bands;
  InitialFeatures f;
  f.node.resize(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i) {
    std::vector<double>& x = f.node[static_cast<std::size_t>(i)];
    x.assign(static_cast<std::size_t>(B), 1.0 / static_cast<double>(B));
    const std::array<double, 3> role = role_one_hot(t, i);
    x.insert(x.end(), role.begin(), role.end());
  }
  f.edge.resize(2 * t.edges.size());
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    std::vector<double> feat;
    feat.reserve(2 * static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      const std::complex<double> h = csi_est.gain(b, static_cast<int>(e));
      feat.push_back(h.real());
      feat.push_back(h.imag());
    }
    f.edge[2 * e] = feat;
    f.edge[2 * e + 1] = std::move(feat);
  }
  return f;
}

inline int directed_slot(const Topology& t, int from, int to) {
  const int e = t.edge_id(from, to);
  if (e < 0) throw ContractError("directed_slot: nodes are not adjacent");
  return 2 * e + (from > to ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Centralized forward and decode on plain doubles
// ---------------------------------------------------------------------------

struct GnnStates {
  // States after each message round r = 1..L-1; index r-1. Node states are
  // length B, directed-edge states length B.
  std::vector<std::vector<std::vector<double>>> node;
  std::vector<std::vector<std::vector<double>>> edge;
};

inline GnnStates gnn_forward(const GnnParams& p, const Topology& t,
                             const CsiTensor& csi_est) {
  if (csi_est.bands != p.bands)
    throw ContractError("gnn_forward: band count mismatch");
  InitialFeatures f = init_features(t, csi_est);
  GnnStates states;
  std::vector<std::vector<double>> x = std::move(f.node);
  std::vector<std::vector<double>> e = std::move(f.edge);

  for (const LayerParams& layer : p.layers) {
    std::vector<std::vector<double>> e_next(e.size());
    std::vector<std::vector<std::vector<double>>> inbox(
        static_cast<std::size_t>(t.n));
    for (int i = 0; i < t.n; ++i)
      for (int j : t.adjacency[static_cast<std::size_t>(i)]) {
        const int slot = directed_slot(t, i, j);
        EncoderOutput out = encoder_step(
            layer, x[static_cast<std::size_t>(i)],
            e[static_cast<std::size_t>(slot)]);
        e_next[static_cast<std::size_t>(slot)] = std::move(out.edge);
        // Ascending sender order: adjacency lists are sorted, so pushing in
        // this loop order delivers messages sorted by sender id.
        inbox[static_cast<std::size_t>(j)].push_back(std::move(out.message));
      }
    std::vector<std::vector<double>> x_next(static_cast<std::size_t>(t.n));
    for (int i = 0; i < t.n; ++i)
      x_next[static_cast<std::size_t>(i)] = aggregator_step(
          layer, x[static_cast<std::size_t>(i)],
          inbox[static_cast<std::size_t>(i)]);
    x = std::move(x_next);
    e = std::move(e_next);
    states.node.push_back(x);
    states.edge.push_back(e);
  }
  return states;
}

inline std::vector<double> decode_edge_raw(const FcParam& decoder,
                                           std::span<const double> e_ij,
                                           std::span<const double> x_i,
                                           std::span<const double> x_j) {
  std::vector<double> input;
  input.reserve(e_ij.size() + x_i.size() + x_j.size());
  input.insert(input.end(), e_ij.begin(), e_ij.end());
  input.insert(input.end(), x_i.begin(), x_i.end());
  input.insert(input.end(), x_j.begin(), x_j.end());
  std::vector<double> raw = fc_value(decoder, input);
  for (double& v : raw) v = ad::softplus_value(v);
  return raw;
}

// Decoder over the states of one round (1-based). Every node with neighbors
// spends its whole budget: the outgoing slice is scaled to unit L2 norm.
inline PowerAllocation gnn_decode(const GnnParams& p, const Topology& t,
                                  const GnnStates& states, int round) {
  if (round < 1 || round >= p.rounds)
    throw ContractError("gnn_decode: round outside 1..L-1");
  const auto& x = states.node[static_cast<std::size_t>(round - 1)];
  const auto& e = states.edge[static_cast<std::size_t>(round - 1)];
  const int B = p.bands;
  PowerAllocation P = zero_allocation(B, t.n);
  for (int i = 0; i < t.n; ++i) {
    const auto& nbrs = t.adjacency[static_cast<std::size_t>(i)];
    if (nbrs.empty()) continue;
    std::vector<std::vector<double>> raws;
    raws.reserve(nbrs.size());
    double sq = 0.0;
    for (int j : nbrs) {
      const int slot = directed_slot(t, i, j);
      raws.push_back(decode_edge_raw(p.decoder,
                                     e[static_cast<std::size_t>(slot)],
                                     x[static_cast<std::size_t>(i)],
                                     x[static_cast<std::size_t>(j)]));
      for (double v : raws.back()) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      for (int b = 0; b < B; ++b)
        P.at(b, i, nbrs[k]) =
            raws[k][static_cast<std::size_t>(b)] / norm;
  }
  return P;
}

// Forward plus final-round decode, the deployed policy.
inline PowerAllocation gnn_allocate(const GnnParams& p, const Topology& t,
                                    const CsiTensor& csi_est) {
  const GnnStates states = gnn_forward(p, t, csi_est);
  return gnn_decode(p, t, states, p.rounds - 1);
}

// ---------------------------------------------------------------------------
// Tape mirror for training
// ---------------------------------------------------------------------------

struct TapeFc {
  ad::Tensor w, b;
};

struct TapeLayer {
  ad::Tensor norm_gain, norm_shift;
  TapeFc gate, edge, scale, shift, node, update;
};

struct TapeParams {
  int bands = 0;
  int rounds = 0;
  std::vector<TapeLayer> layers;
  TapeFc decoder;
  std::vector<ad::Tensor> flat;  // same order as for_each_tensor
};

inline TapeParams register_params(ad::Tape& tape, const GnnParams& p) {
  TapeParams tp;
  tp.bands = p.bands;
  tp.rounds = p.rounds;
  auto reg = [&](const std::vector<double>& v, std::vector<int> shape) {
    ad::Tensor t = tape.leaf(v, std::move(shape));
    tp.flat.push_back(t);
    return t;
  };
  auto reg_fc = [&](const FcParam& f) {
    TapeFc tf;
    tf.w = reg(f.w, {f.out, f.in});
    tf.b = reg(f.b, {f.out});
    return tf;
  };
  for (const LayerParams& layer : p.layers) {
    TapeLayer tl;
    const int z = static_cast<int>(layer.norm.gain.size());
    tl.norm_gain = reg(layer.norm.gain, {z});
    tl.norm_shift = reg(layer.norm.shift, {z});
    tl.gate = reg_fc(layer.gate);
    tl.edge = reg_fc(layer.edge);
    tl.scale = reg_fc(layer.scale);
    tl.shift = reg_fc(layer.shift);
    tl.node = reg_fc(layer.node);
    tl.update = reg_fc(layer.update);
    tp.layers.push_back(tl);
  }
  tp.decoder = reg_fc(p.decoder);
  return tp;
}

struct TapeStates {
  std::vector<std::vector<ad::Tensor>> node;  // [round-1][node]
  std::vector<std::vector<ad::Tensor>> edge;  // [round-1][directed slot]
};

inline TapeStates gnn_forward(ad::Tape& tape, const TapeParams& tp,
                              const Topology& t, const CsiTensor& csi_est) {
  if (csi_est.bands != tp.bands)
    throw ContractError("gnn_forward: band count mismatch");
  InitialFeatures f = init_features(t, csi_est);
  const int B = tp.bands;

  std::vector<ad::Tensor> x(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i)
    x[static_cast<std::size_t>(i)] =
        tape.constant(f.node[static_cast<std::size_t>(i)]);
  std::vector<ad::Tensor> e(f.edge.size());
  for (std::size_t s = 0; s < f.edge.size(); ++s)
    e[s] = tape.constant(f.edge[s]);

  TapeStates states;
  for (const TapeLayer& layer : tp.layers) {
    std::vector<ad::Tensor> e_next(e.size());
    std::vector<std::vector<ad::Tensor>> inbox(static_cast<std::size_t>(t.n));
    for (int i = 0; i < t.n; ++i)
      for (int j : t.adjacency[static_cast<std::size_t>(i)]) {
        const int slot = directed_slot(t, i, j);
        ad::Tensor z = tape.concat(
            {x[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(slot)]});
        ad::Tensor zn = tape.layer_norm(z, layer.norm_gain, layer.norm_shift);
        ad::Tensor g = tape.sigmoid(tape.fc(layer.gate.w, layer.gate.b, zn));
        ad::Tensor e_new =
            tape.mul(g, tape.fc(layer.edge.w, layer.edge.b, zn));
        ad::Tensor msg = tape.add(
            tape.mul(tape.fc(layer.scale.w, layer.scale.b, e_new),
                     tape.fc(layer.node.w, layer.node.b,
                             x[static_cast<std::size_t>(i)])),
            tape.fc(layer.shift.w, layer.shift.b, e_new));
        e_next[static_cast<std::size_t>(slot)] = e_new;
        inbox[static_cast<std::size_t>(j)].push_back(msg);
      }
    std::vector<ad::Tensor> x_next(static_cast<std::size_t>(t.n));
    for (int i = 0; i < t.n; ++i) {
      const auto& msgs = inbox[static_cast<std::size_t>(i)];
      ad::Tensor mean;
      if (msgs.empty()) {
        mean = tape.constant(std::vector<double>(static_cast<std::size_t>(B), 0.0));
      } else {
        ad::Tensor acc = msgs[0];
        for (std::size_t k = 1; k < msgs.size(); ++k)
          acc = tape.add(acc, msgs[k]);
        mean = tape.affine(acc, 1.0 / static_cast<double>(msgs.size()), 0.0);
      }
      ad::Tensor delta = tape.fc(layer.update.w, layer.update.b, mean);
      ad::Tensor residual =
          x[static_cast<std::size_t>(i)].size() == static_cast<std::size_t>(B)
              ? x[static_cast<std::size_t>(i)]
              : tape.slice(x[static_cast<std::size_t>(i)], 0, B);
      x_next[static_cast<std::size_t>(i)] = tape.add(residual, delta);
    }
    x = std::move(x_next);
    e = std::move(e_next);
    states.node.push_back(x);
    states.edge.push_back(e);
  }
  return states;
}

inline TapeAllocation gnn_decode(ad::Tape& tape, const TapeParams& tp,
                                 const Topology& t, const TapeStates& states,
                                 int round) {
  if (round < 1 || round >= tp.rounds)
    throw ContractError("gnn_decode: round outside 1..L-1");
  const auto& x = states.node[static_cast<std::size_t>(round - 1)];
  const auto& e = states.edge[static_cast<std::size_t>(round - 1)];

  TapeAllocation q;
  q.bands = tp.bands;
  q.directed.resize(2 * t.edges.size());
  for (int i = 0; i < t.n; ++i) {
    const auto& nbrs = t.adjacency[static_cast<std::size_t>(i)];
    if (nbrs.empty()) continue;
    std::vector<ad::Tensor> raws;
    raws.reserve(nbrs.size());
    for (int j : nbrs) {
      const int slot = directed_slot(t, i, j);
      ad::Tensor input = tape.concat({e[static_cast<std::size_t>(slot)],
                                      x[static_cast<std::size_t>(i)],
                                      x[static_cast<std::size_t>(j)]});
      raws.push_back(tape.softplus(
          tape.fc(tp.decoder.w, tp.decoder.b, input)));
    }
    ad::Tensor cat = tape.concat(std::span<const ad::Tensor>(raws));
    ad::Tensor norm = tape.sqrt(tape.sum(tape.mul(cat, cat)));
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const int slot = directed_slot(t, i, nbrs[k]);
      q.directed[static_cast<std::size_t>(slot)] = tape.div(raws[k], norm);
    }
  }
  return q;
}

inline std::vector<TapeAllocation> gnn_decode_all_layers(
    ad::Tape& tape, const TapeParams& tp, const Topology& t,
    const TapeStates& states) {
  std::vector<TapeAllocation> out;
  for (int round = 1; round < tp.rounds; ++round)
    out.push_back(gnn_decode(tape, tp, t, states, round));
  return out;
}

// ---------------------------------------------------------------------------
// Decentralized execution
// ---------------------------------------------------------------------------

// Everything a node may legally see: its own role, its neighbor ids, and
// the estimated gains of its incident edges. Holding only this (no topology
// pointer, no global CSI) is what enforces locality.
struct LocalView {
  int id = -1;
  int bands = 0;
  std::array<double, 3> role{};
  std::vector<int> neighbors;  // ascending
  std::vector<std::vector<std::complex<double>>> incident_gains;  // [nbr][band]
};

inline LocalView local_view(const Topology& t, const CsiTensor& csi_est,
                            int i) {
  check_csi(csi_est, t);
  LocalView v;
  v.id = i;
  v.bands = csi_est.bands;
  v.role = role_one_hot(t, i);
  v.neighbors = neighbors(t, i);
  for (int j : v.neighbors) {
    std::vector<std::complex<double>> g;
    g.reserve(static_cast<std::size_t>(csi_est.bands));
    for (int b = 0; b < csi_est.bands; ++b)
      g.push_back(link_gain(csi_est, t, b, i, j));
    v.incident_gains.push_back(std::move(g));
  }
  return v;
}

inline std::vector<LocalView> local_views(const Topology& t,
                                          const CsiTensor& csi_est) {
  std::vector<LocalView> views;
  views.reserve(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i) views.push_back(local_view(t, csi_est, i));
  return views;
}

struct DecentralizedTrace {
  std::vector<int> rounds_sent;           // per node; must equal L
  std::size_t payload_floats = 0;          // every payload length seen
  bool payload_uniform = true;             // all payloads length B
};

// Round-synchronous execution against message queues: L-1 encoder rounds
// followed by one broadcast of the final embedding, which neighbors need
// for their decoder inputs. Output matches the centralized pipeline.
inline PowerAllocation simulate_decentralized(
    const GnnParams& p, const std::vector<LocalView>& views,
    DecentralizedTrace* trace = nullptr) {
  const int n = static_cast<int>(views.size());
  const int B = p.bands;

  struct NodeInstance {
    std::vector<double> x;
    std::vector<std::vector<double>> edge_state;  // aligned with neighbors
    std::vector<std::vector<double>> inbox;
    std::vector<double> neighbor_embedding_storage;
    int sent_rounds = 0;
  };

  std::vector<NodeInstance> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const LocalView& v = views[static_cast<std::size_t>(i)];
    if (v.bands != B)
      throw ContractError("simulate_decentralized: band count mismatch");
    NodeInstance& inst = nodes[static_cast<std::size_t>(i)];
    inst.x.assign(static_cast<std::size_t>(B), 1.0 / static_cast<double>(B));
    inst.x.insert(inst.x.end(), v.role.begin(), v.role.end());
    for (const auto& gains : v.incident_gains) {
      std::vector<double> feat;
      feat.reserve(2 * static_cast<std::size_t>(B));
      for (const auto& h : gains) {
        feat.push_back(h.real());
        feat.push_back(h.imag());
      }
      inst.edge_state.push_back(std::move(feat));
    }
  }

  DecentralizedTrace local_trace;
  DecentralizedTrace& tr = trace ? *trace : local_trace;
  tr.rounds_sent.assign(static_cast<std::size_t>(n), 0);
  tr.payload_uniform = true;
  tr.payload_floats = static_cast<std::size_t>(B);

  // Mailboxes keyed by (receiver, sender position in receiver's list).
  auto deliver = [&](int to, int from, std::vector<double> payload) {
    if (payload.size() != static_cast<std::size_t>(B))
      tr.payload_uniform = false;
    const LocalView& rv = views[static_cast<std::size_t>(to)];
    const auto it =
        std::lower_bound(rv.neighbors.begin(), rv.neighbors.end(), from);
    if (it == rv.neighbors.end() || *it != from)
      throw ContractError("simulate_decentralized: message from non-neighbor");
    const std::size_t pos =
        static_cast<std::size_t>(it - rv.neighbors.begin());
    auto& inbox = nodes[static_cast<std::size_t>(to)].inbox;
    if (inbox.size() != rv.neighbors.size()) inbox.resize(rv.neighbors.size());
    inbox[pos] = std::move(payload);
  };

  const int layer_rounds = p.rounds - 1;
  for (int round = 0; round < layer_rounds; ++round) {
    const LayerParams& layer = p.layers[static_cast<std::size_t>(round)];
    // Send phase: every node encodes each incident edge and emits the
    // message; edge states update locally.
    for (int i = 0; i < n; ++i) {
      const LocalView& v = views[static_cast<std::size_t>(i)];
      NodeInstance& inst = nodes[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < v.neighbors.size(); ++k) {
        EncoderOutput out = encoder_step(layer, inst.x, inst.edge_state[k]);
        inst.edge_state[k] = std::move(out.edge);
        deliver(v.neighbors[k], i, std::move(out.message));
      }
      inst.sent_rounds += 1;
      tr.rounds_sent[static_cast<std::size_t>(i)] += 1;
    }
    // Receive phase: aggregate after the whole round has been delivered.
    for (int i = 0; i < n; ++i) {
      NodeInstance& inst = nodes[static_cast<std::size_t>(i)];
      inst.x = aggregator_step(p.layers[static_cast<std::size_t>(round)],
                               inst.x, inst.inbox);
      for (auto& m : inst.inbox) m.clear();
    }
  }

  // Final broadcast: neighbors exchange their final embeddings once.
  for (int i = 0; i < n; ++i) {
    const LocalView& v = views[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < v.neighbors.size(); ++k)
      deliver(v.neighbors[k], i, nodes[static_cast<std::size_t>(i)].x);
    nodes[static_cast<std::size_t>(i)].sent_rounds += 1;
    tr.rounds_sent[static_cast<std::size_t>(i)] += 1;
  }

  PowerAllocation P = zero_allocation(B, n);
  for (int i = 0; i < n; ++i) {
    const LocalView& v = views[static_cast<std::size_t>(i)];
    NodeInstance& inst = nodes[static_cast<std::size_t>(i)];
    if (v.neighbors.empty()) continue;
    std::vector<std::vector<double>> raws;
    raws.reserve(v.neighbors.size());
    double sq = 0.0;
    for (std::size_t k = 0; k < v.neighbors.size(); ++k) {
      raws.push_back(decode_edge_raw(p.decoder, inst.edge_state[k], inst.x,
                                     inst.inbox[k]));
      for (double val : raws.back()) sq += val * val;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < v.neighbors.size(); ++k)
      for (int b = 0; b < B; ++b)
        P.at(b, i, v.neighbors[k]) =
            raws[k][static_cast<std::size_t>(b)] / norm;
  }
  return P;
}

}  // namespace manet
