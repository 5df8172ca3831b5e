#include <gtest/gtest.h>

#include <sstream>

#include "ideotrace/linkage.hpp"
#include "ideotrace/synth.hpp"
#include "oracles.hpp"

using namespace ideotrace;
using namespace ideotrace::synth;

TEST(Presets, PlantedSharesHitTargets) {
  const auto spec = full_preset();
  spec.validate();
  const auto shares = planted_shares(spec);
  const std::vector<double> target{0.47, 0.19, 0.14, 0.14, 0.06};
  for (std::size_t c = 0; c < target.size(); ++c) EXPECT_NEAR(shares[c], target[c], 1e-9);
  EXPECT_NEAR(sum(expected_visits(spec.tourist.model)), 4.0 / 3.0, 1e-12);
  EXPECT_THROW(preset("huge"), UsageError);
}

TEST(Presets, ExpectedVisitsMatchSimulation) {
  const auto spec = micro_preset();
  const auto visits = expected_visits(spec.resident.model);
  const auto s = trajectories::sample_trajectories(spec.resident.model, 3, 20000, 3);
  std::vector<double> seen(3, 0.0);
  for (const auto& st : s.states)
    for (std::size_t k = 1; k + 1 < st.size(); ++k) seen[st[k] - 1] += 1.0 / 20000.0;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(seen[i], visits[i], 0.05 * visits[i]);
}

TEST(Generate, RowsOnSimplex) {
  auto spec = micro_preset();
  spec.seed = 5;
  const auto g = generate_corpus(spec);
  g.matrix.validate();
  EXPECT_EQ(g.matrix.n_docs(), g.posts.size());
  EXPECT_EQ(g.planted.assignment.size(), 9u);
  for (std::size_t d = 0; d < g.matrix.n_docs(); ++d)
    for (double w : g.matrix.weights.row(d)) EXPECT_GE(w, 0.0);
}

TEST(Generate, ZeroLeakageLinksOnlyWithinClusters) {
  auto spec = micro_preset();
  spec.leakage = 0.0;
  spec.seed = 6;
  const auto g = generate_corpus(spec);
  const auto net = linkage::text_linkage(g.matrix);
  std::size_t positive_within = 0;
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::size_t j = 0; j < net.size(); ++j) {
      if (i == j) continue;
      const bool same = g.planted.assignment[i] == g.planted.assignment[j];
      if (net.linkage(i, j) > 0.0) {
        EXPECT_TRUE(same) << i << "," << j;
        ++positive_within;
      }
      if (!same) {
        EXPECT_EQ(net.linkage(i, j), linkage::kUnlinked);
      }
    }
  EXPECT_GT(positive_within, 0u);
}

TEST(Generate, LouvainRecoversPlantedClusters) {
  auto spec = micro_preset();
  spec.n_users = 300;
  spec.leakage = 0.05;
  spec.seed = 7;
  const auto g = generate_corpus(spec);
  const auto graph = graph::build_linkage_graph(linkage::text_linkage(g.matrix));
  const auto p = graph::louvain_best_of(graph, 5, 1.0, 1);
  EXPECT_GE(oracle::node_agreement(p.assignment, g.planted.assignment), 0.95);
}

// Reference sampler: same stream layout, written from the generator's
// documented draw order (class, type, then state/cluster pairs until exit).
TEST(Generate, MatchesReferenceSampler) {
  auto spec = micro_preset();
  spec.n_users = 10;
  spec.seed = 42;
  const auto g = generate_corpus(spec);
  ASSERT_EQ(g.users.size(), 10u);
  for (std::size_t u = 0; u < 10; ++u) {
    Rng rng(derive_seed(spec.seed, u));
    const double r = uniform01(rng);
    const auto cls = r < 0.10 ? corpus::UserClass::special : r < 0.25 ? corpus::UserClass::other : corpus::UserClass::clean;
    const bool tourist = uniform01(rng) < 0.7;
    const auto& m = tourist ? spec.tourist.model : spec.resident.model;
    std::vector<std::size_t> states, clusters;
    std::size_t s = 0;
    while ((s = sample_index(m.transition.row(s), rng)) != 0) {
      std::vector<double> e{m.emission(s, 0), m.emission(s, 1), m.emission(s, 2)};
      states.push_back(s);
      clusters.push_back(sample_index(e, rng));
    }
    ASSERT_FALSE(states.empty());
    EXPECT_EQ(g.users[u].sample_class, cls);
    EXPECT_EQ(g.users[u].type == trajectories::UserType::tourist, tourist);
    EXPECT_EQ(g.users[u].states, states);
    EXPECT_EQ(g.users[u].clusters, clusters);
  }
}

TEST(Generate, SameSeedByteIdentical) {
  auto spec = micro_preset();
  spec.seed = 8;
  auto dump = [&] {
    const auto g = generate_corpus(spec);
    std::ostringstream out;
    corpus::write_archive(out, g.posts);
    corpus::write_archive(out, g.history);
    topics::write_doc_topics(out, g.matrix);
    write_truth(out, g);
    return out.str();
  };
  const auto a = dump();
  EXPECT_EQ(a, dump());
  spec.seed = 9;
  EXPECT_NE(a, dump());
}

TEST(Generate, SampleClassesBehaveAsPlanted) {
  auto spec = micro_preset();
  spec.n_users = 200;
  spec.seed = 10;
  const auto g = generate_corpus(spec);
  std::set<std::string> blocked(spec.blocked_forums.begin(), spec.blocked_forums.end());
  const auto sample = corpus::build_clean_sample(g.posts, g.history, blocked, {spec.window_start, spec.window_end});
  for (const auto& u : g.users) EXPECT_EQ(sample.classify(u.author), u.sample_class) << u.author;
}

TEST(Generate, InvalidSpecFatal) {
  auto spec = micro_preset();
  spec.tourist_fraction = 1.5;
  EXPECT_THROW(generate_corpus(spec), DataError);
  spec = micro_preset();
  spec.topics_per_cluster = {3, 3};
  EXPECT_THROW(generate_corpus(spec), DataError);
}
