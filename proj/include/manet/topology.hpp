// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "manet/common.hpp"
#include "manet/rng.hpp"

namespace manet {

enum class NodeRole { Tx, Rx, Relay };

// Undirected multi-hop network with one source and one destination.
// Immutable after construction; node ids are dense and 0-based.
struct Topology {
  int n = 0;
  int source = 0;
  int destination = 0;
  // Unordered pairs stored as (lo, hi), sorted lexicographically.
  std::vector<std::pair<int, int>> edges;
  // Sorted neighbor list per node.
  std::vector<std::vector<int>> adjacency;

  int edge_count() const { return static_cast<int>(edges.size()); }

  bool valid_node(int i) const { return i >= 0 && i < n; }

  bool has_edge(int i, int j) const { return edge_id(i, j) >= 0; }

  // Index into `edges` for the unordered pair, or -1.
  int edge_id(int i, int j) const {
    if (!valid_node(i) || !valid_node(j) || i == j) return -1;
    const int lo = i < j ? i : j;
    const int hi = i < j ? j : i;
    return edge_lookup_[static_cast<std::size_t>(lo) *
                            static_cast<std::size_t>(n) +
                        static_cast<std::size_t>(hi)];
  }

  NodeRole role(int i) const {
    if (i == source) return NodeRole::Tx;
    if (i == destination) return NodeRole::Rx;
    return NodeRole::Relay;
  }

 private:
  friend Topology make_topology(int, std::vector<std::pair<int, int>>, int,
                                int);
  std::vector<int> edge_lookup_;
};

inline bool source_destination_connected(int n,
                                         const std::vector<std::vector<int>>& adj,
                                         int source, int destination) {
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<int> frontier;
  frontier.push(source);
  seen[static_cast<std::size_t>(source)] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    if (u == destination) return true;
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        frontier.push(v);
      }
    }
  }
  return false;
}

// Validates and canonicalizes: edges are deduplicated, stored as (lo, hi)
// in lexicographic order, and the source must reach the destination.
inline Topology make_topology(int n, std::vector<std::pair<int, int>> edges,
                              int source, int destination) {
  if (n < 2) throw ContractError("make_topology: need at least two nodes");
  if (source < 0 || source >= n || destination < 0 || destination >= n)
    throw ContractError("make_topology: role node id out of range");
  if (source == destination)
    throw ContractError("make_topology: source equals destination");

  Topology t;
  t.n = n;
  t.source = source;
  t.destination = destination;
  t.edge_lookup_.assign(static_cast<std::size_t>(n) * n, -1);
  t.adjacency.assign(static_cast<std::size_t>(n), {});

  for (auto& [a, b] : edges) {
    if (a == b) throw ContractError("make_topology: self loop");
    if (a < 0 || a >= n || b < 0 || b >= n)
      throw ContractError("make_topology: edge endpoint out of range");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  t.edges = std::move(edges);

  for (int e = 0; e < t.edge_count(); ++e) {
    const auto [a, b] = t.edges[static_cast<std::size_t>(e)];
    t.edge_lookup_[static_cast<std::size_t>(a) * n + b] = e;
    t.adjacency[static_cast<std::size_t>(a)].push_back(b);
    t.adjacency[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& list : t.adjacency) std::sort(list.begin(), list.end());

  if (!source_destination_connected(n, t.adjacency, source, destination))
    throw ContractError("make_topology: source cannot reach destination");
  return t;
}

// Erdos-Renyi draw with uniformly chosen roles, rejected until the source
// can reach the destination. Each attempt consumes the generator in a fixed
// order (pairs in lexicographic order, then source, then destination).
inline Topology generate_erdos_renyi(int n, double p, Rng& rng,
                                     int max_attempts = 10000) {
  if (n < 2) throw ContractError("generate_erdos_renyi: n must be >= 2");
  if (p < 0.0 || p > 1.0)
    throw ContractError("generate_erdos_renyi: p outside [0, 1]");

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(p)) edges.emplace_back(i, j);

    const int source = static_cast<int>(rng.integer(static_cast<std::uint64_t>(n)));
    int destination =
        static_cast<int>(rng.integer(static_cast<std::uint64_t>(n - 1)));
    if (destination >= source) ++destination;

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (auto [a, b] : edges) {
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
    }
    if (!source_destination_connected(n, adj, source, destination)) continue;
    return make_topology(n, std::move(edges), source, destination);
  }
  throw GenerationError(
      "generate_erdos_renyi: no connected draw within " +
      std::to_string(max_attempts) + " attempts (n=" + std::to_string(n) +
      ", p=" + std::to_string(p) + ")");
}

inline const std::vector<int>& neighbors(const Topology& t, int i) {
  if (!t.valid_node(i)) throw ContractError("neighbors: invalid node id");
  return t.adjacency[static_cast<std::size_t>(i)];
}

inline std::array<double, 3> role_one_hot(const Topology& t, int i) {
  if (!t.valid_node(i)) throw ContractError("role_one_hot: invalid node id");
  switch (t.role(i)) {
    case NodeRole::Tx:
      return {1.0, 0.0, 0.0};
    case NodeRole::Rx:
      return {0.0, 1.0, 0.0};
    case NodeRole::Relay:
      return {0.0, 0.0, 1.0};
  }
  return {0.0, 0.0, 1.0};
}

// Relabels every node id through perm (new id = perm[old id]). Used to
// check that downstream computations commute with node renumbering.
inline Topology relabel(const Topology& t, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != t.n)
    throw ContractError("relabel: permutation size mismatch");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(t.edges.size());
  for (auto [a, b] : t.edges)
    edges.emplace_back(perm[static_cast<std::size_t>(a)],
                       perm[static_cast<std::size_t>(b)]);
  return make_topology(t.n, std::move(edges),
                       perm[static_cast<std::size_t>(t.source)],
                       perm[static_cast<std::size_t>(t.destination)]);
}

}  // namespace manet
