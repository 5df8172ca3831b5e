#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "ideotrace/graph.hpp"
#include "oracles.hpp"

using namespace ideotrace;
using namespace ideotrace::graph;

namespace {

linkage::LinkageNetwork network_with(const std::vector<std::vector<double>>& r) {
  linkage::LinkageNetwork net;
  const std::size_t t = r.size();
  net.marginal.assign(t, 1.0 / static_cast<double>(t));
  net.defined.assign(t, true);
  net.joint = Matrix(t, t, 0.0);
  net.linkage = Matrix(t, t);
  for (std::size_t i = 0; i < t; ++i) {
    net.topic_ids.push_back(static_cast<int>(i + 1));
    for (std::size_t j = 0; j < t; ++j) net.linkage(i, j) = r[i][j];
  }
  return net;
}

TopicGraph graph_of(std::size_t n, const std::vector<Edge>& edges) {
  TopicGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    g.topic_ids.push_back(static_cast<int>(i));
    g.sizes.push_back(1.0 / static_cast<double>(n));
  }
  g.edges = edges;
  return g;
}

std::vector<std::tuple<std::size_t, std::size_t, double>> oracle_edges(const TopicGraph& g) {
  std::vector<std::tuple<std::size_t, std::size_t, double>> out;
  for (const auto& e : g.edges) out.emplace_back(e.source, e.target, e.weight);
  return out;
}

TopicGraph planted_blocks(std::size_t blocks, std::size_t size, double within, double between) {
  std::vector<Edge> edges;
  const std::size_t n = blocks * size;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, i / size == j / size ? within : between});
  return graph_of(n, edges);
}

}  // namespace

TEST(BuildGraph, ThresholdFilter) {
  const double ninf = linkage::kUnlinked;
  auto g = build_linkage_graph(network_with({{1.0, 0.5, -0.2}, {0.5, 2.0, ninf}, {-0.2, ninf, 0.3}}));
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0], (Edge{0, 1, 0.5}));
  EXPECT_EQ(g.topic_ids, (std::vector<int>{1, 2, 3}));
}

TEST(BuildGraph, IndependenceHasNoEdges) {
  auto net = linkage::text_linkage(testing_helpers::to_matrix({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_TRUE(build_linkage_graph(net).edges.empty());
}

TEST(BuildGraph, MatchesDirectFilterOnRandomNetwork) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> r(10, std::vector<double>(10));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = i; j < 10; ++j) r[i][j] = r[j][i] = nd(rng);
  for (double threshold : {-0.5, 0.0, 0.7}) {
    auto g = build_linkage_graph(network_with(r), threshold);
    std::set<std::pair<std::size_t, std::size_t>> got, want;
    for (const auto& e : g.edges) {
      EXPECT_GT(e.weight, threshold);
      EXPECT_LT(e.source, e.target);
      got.emplace(e.source, e.target);
    }
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j)
        if (i < j && r[i][j] > threshold) want.emplace(i, j);
    EXPECT_EQ(got, want);
  }
}

TEST(Louvain, TwoCliquesSeparate) {
  std::vector<Edge> edges;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) edges.push_back({b * 5 + i, b * 5 + j, 1.0});
  edges.push_back({4, 5, 0.1});
  auto g = graph_of(10, edges);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto p = louvain_partition(g, 1.0, seed);
    ASSERT_EQ(p.n_clusters(), 2u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p.assignment[i] == p.assignment[0], i < 5);
  }
}

TEST(Louvain, TriangleIsOneCluster) {
  auto p = louvain_partition(graph_of(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}), 1.0, 4);
  EXPECT_EQ(p.assignment, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_NEAR(p.modularity, 0.0, 1e-12);
}

TEST(Louvain, EdgelessGraphIsSingletons) {
  auto p = louvain_partition(graph_of(4, {}), 1.0, 1);
  EXPECT_EQ(p.assignment, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(p.modularity, 0.0);
}

TEST(Louvain, ModularityMatchesOracle) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6 + trial % 10;
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (u(rng) < 0.35) edges.push_back({i, j, 0.05 + u(rng)});
    if (edges.empty()) continue;
    auto g = graph_of(n, edges);
    for (double gamma : {0.5, 1.0, 1.5}) {
      auto p = louvain_partition(g, gamma, static_cast<std::uint64_t>(trial));
      EXPECT_NEAR(p.modularity, oracle::modularity(n, oracle_edges(g), p.assignment, gamma), 1e-9);
      std::vector<std::size_t> singletons(n);
      std::iota(singletons.begin(), singletons.end(), 0);
      EXPECT_GE(p.modularity, oracle::modularity(n, oracle_edges(g), singletons, gamma) - 1e-12);
      // contiguous ids
      std::set<std::size_t> ids(p.assignment.begin(), p.assignment.end());
      EXPECT_EQ(*ids.rbegin() + 1, ids.size());
    }
  }
}

TEST(Louvain, RecoversPlantedBlocks) {
  auto g = planted_blocks(5, 6, 1.0, 0.05);
  std::vector<std::size_t> planted;
  for (std::size_t i = 0; i < 30; ++i) planted.push_back(i / 6);
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    hits += oracle::node_agreement(louvain_partition(g, 1.0, seed).assignment, planted) == 1.0;
  EXPECT_GE(hits, 19u);
}

TEST(Louvain, BestOfNeverWorseThanFirst) {
  auto g = planted_blocks(4, 5, 1.0, 0.3);
  const auto first = louvain_partition(g, 1.0, derive_seed(9, 0));
  EXPECT_GE(louvain_best_of(g, 5, 1.0, 9).modularity, first.modularity);
}

TEST(ClusterShares, DominantTopicCounts) {
  auto m = testing_helpers::to_matrix({{0.9, 0.1, 0.0}, {0.2, 0.7, 0.1}, {0.1, 0.1, 0.8}, {0.4, 0.4, 0.2}});
  ClusterPartition p{{0, 1, 1}, 0.0, 1.0};
  auto shares = cluster_shares(m, p);
  // dominants: t0, t1, t2, t0 (tie -> lower id)
  EXPECT_DOUBLE_EQ(shares.at(0), 0.5);
  EXPECT_DOUBLE_EQ(shares.at(1), 0.5);

  std::mt19937_64 rng(23);
  auto big = testing_helpers::to_matrix(oracle::random_simplex_rows(rng, 200, 6));
  double total = 0.0;
  for (const auto& [c, s] : cluster_shares(big, ClusterPartition{{0, 1, 2, 0, 1, 2}, 0, 1})) total += s;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_THROW(cluster_shares(m, ClusterPartition{{0, 1}, 0, 1}), DataError);
}

TEST(ClusterShares, SingleClusterTakesEverything) {
  auto m = testing_helpers::to_matrix({{0.9, 0.1}, {0.3, 0.7}});
  auto shares = cluster_shares(m, ClusterPartition{{0, 0}, 0, 1});
  EXPECT_EQ(shares, (std::map<std::size_t, double>{{0, 1.0}}));
}

TEST(Export, GraphMlCounts) {
  auto g = graph_of(2, {{0, 1, 0.75}});
  std::ostringstream out;
  export_graph(out, g, ClusterPartition{{0, 0}, 0, 1}, Format::graphml);
  const std::string s = out.str();
  const std::regex node("<node "), edge("<edge ");
  EXPECT_EQ(std::distance(std::sregex_iterator(s.begin(), s.end(), node), std::sregex_iterator()), 2);
  EXPECT_EQ(std::distance(std::sregex_iterator(s.begin(), s.end(), edge), std::sregex_iterator()), 1);
}

TEST(Export, JsonRoundTrip) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j)
      if (u(rng) < 0.5) edges.push_back({i, j, u(rng) * 3.0});
  auto g = graph_of(8, edges);
  g.sizes[3] = u(rng) / 7.0;
  g.threshold = 0.125;
  auto p = louvain_partition(g, 1.0, 5);
  std::ostringstream out;
  export_graph(out, g, p, Format::json);
  std::istringstream in(out.str());
  auto [g2, p2] = import_graph_json(in);
  EXPECT_EQ(g2, g);
  EXPECT_EQ(p2.assignment, p.assignment);
  EXPECT_EQ(p2.modularity, p.modularity);
}

TEST(Export, DotColorsFiveClusters) {
  auto g = planted_blocks(5, 6, 1.0, 0.05);
  auto p = louvain_partition(g, 1.0, 3);
  std::ostringstream out;
  export_graph(out, g, p, Format::dot);
  const std::string s = out.str();
  const std::regex cluster(R"(cluster=(\d+), style=filled, fillcolor="(#[0-9a-f]{6})\")");
  std::set<std::string> clusters, colors;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), cluster); it != std::sregex_iterator(); ++it) {
    clusters.insert((*it)[1]);
    colors.insert((*it)[2]);
  }
  EXPECT_EQ(clusters.size(), 5u);
  EXPECT_EQ(colors.size(), 5u);
}

TEST(Export, UnknownFormatFatal) {
  EXPECT_THROW(parse_format("svg"), UsageError);
  EXPECT_EQ(parse_format("dot"), Format::dot);
}

TEST(PartitionFile, RoundTripAndLabels) {
  ClusterPartition p{{0, 1, 0, 2}, 0.3, 1.0};
  const std::vector<int> ids{5, 6, 7, 8};
  const auto labels = label_clusters(ids, p, {{5, "status"}, {7, "status"}, {6, "nrx"}});
  EXPECT_EQ(labels, (std::vector<std::string>{"status", "nrx", "c2"}));
  std::ostringstream out;
  write_partition(out, ids, p, labels);
  std::istringstream in(out.str());
  auto back = read_partition(in);
  EXPECT_EQ(back.topic_ids, ids);
  EXPECT_EQ(back.partition.assignment, p.assignment);
  EXPECT_EQ(back.labels, labels);
}
