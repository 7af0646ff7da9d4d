// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "manet/rng.hpp"
#include "manet/topology.hpp"

namespace {

using manet::generate_erdos_renyi;
using manet::make_topology;
using manet::neighbors;
using manet::role_one_hot;
using manet::Rng;
using manet::Topology;

TEST(Generate, FullProbabilityGivesCompleteGraph) {
  Rng rng(1);
  Topology t = generate_erdos_renyi(4, 1.0, rng);
  EXPECT_EQ(t.edge_count(), 6);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) EXPECT_TRUE(t.has_edge(i, j));
}

TEST(Generate, ZeroProbabilityFailsAfterBoundedRetries) {
  Rng rng(1);
  EXPECT_THROW(generate_erdos_renyi(2, 0.0, rng, 100), manet::GenerationError);
}

TEST(Generate, MeanEdgeCountMatchesExpectation) {
  // E[edges] = p * n(n-1)/2 = 0.5 * 45 = 22.5. Connectivity rejection
  // biases the count upward only negligibly at this density.
  double total = 0.0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    Rng rng(static_cast<std::uint64_t>(s) + 1000);
    total += generate_erdos_renyi(10, 0.5, rng).edge_count();
  }
  EXPECT_NEAR(total / trials, 22.5, 0.5);
}

TEST(Generate, SameSeedSameTopology) {
  Rng a(77), b(77);
  Topology ta = generate_erdos_renyi(10, 0.5, a);
  Topology tb = generate_erdos_renyi(10, 0.5, b);
  EXPECT_EQ(ta.edges, tb.edges);
  EXPECT_EQ(ta.source, tb.source);
  EXPECT_EQ(ta.destination, tb.destination);
}

TEST(Generate, RolesAreDistinctAndConnected) {
  for (int s = 0; s < 200; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    Topology t = generate_erdos_renyi(10, 0.3, rng);
    EXPECT_NE(t.source, t.destination);
    EXPECT_TRUE(manet::source_destination_connected(t.n, t.adjacency, t.source,
                                                    t.destination));
  }
}

TEST(Neighbors, PathGraph) {
  Topology t = make_topology(3, {{0, 1}, {1, 2}}, 0, 2);
  EXPECT_EQ(neighbors(t, 1), (std::vector<int>{0, 2}));
  EXPECT_EQ(neighbors(t, 0), (std::vector<int>{1}));
  EXPECT_THROW(neighbors(t, 3), manet::ContractError);
  EXPECT_THROW(neighbors(t, -1), manet::ContractError);
}

TEST(Neighbors, CompleteGraphAndSymmetry) {
  Rng rng(5);
  Topology complete = generate_erdos_renyi(4, 1.0, rng);
  EXPECT_EQ(neighbors(complete, 0), (std::vector<int>{1, 2, 3}));

  for (int s = 0; s < 50; ++s) {
    Rng r(static_cast<std::uint64_t>(s) + 99);
    Topology t = generate_erdos_renyi(8, 0.4, r);
    for (int i = 0; i < t.n; ++i) {
      EXPECT_FALSE(t.has_edge(i, i));
      for (int j : neighbors(t, i)) {
        const auto& back = neighbors(t, j);
        EXPECT_TRUE(std::binary_search(back.begin(), back.end(), i));
      }
    }
  }
}

TEST(Roles, OneHotEncoding) {
  Topology t = make_topology(4, {{0, 1}, {1, 2}, {2, 3}}, 1, 3);
  EXPECT_EQ(role_one_hot(t, 1), (std::array<double, 3>{1.0, 0.0, 0.0}));
  EXPECT_EQ(role_one_hot(t, 3), (std::array<double, 3>{0.0, 1.0, 0.0}));
  EXPECT_EQ(role_one_hot(t, 0), (std::array<double, 3>{0.0, 0.0, 1.0}));
  EXPECT_EQ(role_one_hot(t, 2), (std::array<double, 3>{0.0, 0.0, 1.0}));
}

TEST(MakeTopology, RejectsInvalidInputs) {
  EXPECT_THROW(make_topology(3, {{0, 0}}, 0, 1), manet::ContractError);
  EXPECT_THROW(make_topology(3, {{0, 3}}, 0, 1), manet::ContractError);
  EXPECT_THROW(make_topology(3, {{0, 1}}, 0, 0), manet::ContractError);
  // Source and destination in different components.
  EXPECT_THROW(make_topology(4, {{0, 1}, {2, 3}}, 0, 3), manet::ContractError);
}

TEST(MakeTopology, IsolatedRelayIsAllowed) {
  Topology t = make_topology(4, {{0, 1}, {1, 3}}, 0, 3);
  EXPECT_TRUE(neighbors(t, 2).empty());
}

TEST(MakeTopology, NormalizesEdgeOrder) {
  Topology t = make_topology(3, {{2, 1}, {1, 0}, {0, 1}}, 0, 2);
  EXPECT_EQ(t.edges, (std::vector<std::pair<int, int>>{{0, 1}, {1, 2}}));
  EXPECT_EQ(t.edge_id(2, 1), 1);
  EXPECT_EQ(t.edge_id(1, 2), 1);
  EXPECT_EQ(t.edge_id(0, 2), -1);
}

TEST(Relabel, PreservesStructure) {
  Topology t = make_topology(4, {{0, 1}, {1, 2}, {2, 3}}, 0, 3);
  const std::vector<int> perm = {2, 0, 3, 1};
  Topology r = manet::relabel(t, perm);
  EXPECT_EQ(r.source, 2);
  EXPECT_EQ(r.destination, 1);
  EXPECT_EQ(r.edge_count(), t.edge_count());
  for (auto [a, b] : t.edges)
    EXPECT_TRUE(r.has_edge(perm[static_cast<std::size_t>(a)],
                           perm[static_cast<std::size_t>(b)]));
}

}  // namespace
