#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "ideotrace/linkage.hpp"
#include "oracles.hpp"

using namespace ideotrace;
using namespace ideotrace::linkage;
using testing_helpers::to_matrix;

namespace {

void expect_same_entry(double a, double b, double tol) {
  if (std::isnan(b)) {
    EXPECT_TRUE(std::isnan(a));
  } else if (std::isinf(b)) {
    EXPECT_EQ(a, b);
  } else {
    EXPECT_NEAR(a, b, tol);
  }
}

void expect_matches_oracle(const LinkageNetwork& net, const oracle::Linkage& o, double tol) {
  const std::size_t t = o.marginal.size();
  ASSERT_EQ(net.size(), t);
  for (std::size_t i = 0; i < t; ++i) {
    EXPECT_NEAR(net.marginal[i], o.marginal[i], tol);
    for (std::size_t j = 0; j < t; ++j) {
      EXPECT_NEAR(net.joint(i, j), o.joint[i][j], tol);
      expect_same_entry(net.linkage(i, j), o.linkage[i][j], tol);
    }
  }
}

}  // namespace

TEST(TextLinkage, IndependenceGivesZero) {
  auto net = text_linkage(to_matrix({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_DOUBLE_EQ(net.joint(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(net.marginal[0], 0.5);
  EXPECT_DOUBLE_EQ(net.linkage(0, 1), 0.0);
  EXPECT_NEAR(mutual_information(net), 0.0, 1e-15);
}

TEST(TextLinkage, ThreeDocumentFixture) {
  const oracle::Rows rows{{1, 0}, {0, 1}, {0.5, 0.5}};
  auto net = text_linkage(to_matrix(rows));
  EXPECT_DOUBLE_EQ(net.marginal[0], 0.5);
  EXPECT_DOUBLE_EQ(net.joint(0, 1), 1.0 / 12.0);
  EXPECT_NEAR(net.linkage(0, 1), std::log2(1.0 / 3.0), 1e-12);
  EXPECT_NEAR(mutual_information(net), oracle::mutual_information(oracle::linkage(rows)), 1e-12);
}

TEST(TextLinkage, EmptyTopicUndefined) {
  auto net = text_linkage(to_matrix({{1, 0, 0}, {1, 0, 0}, {0, 1, 0}}));
  EXPECT_FALSE(net.defined[2]);
  EXPECT_TRUE(net.defined[0]);
  EXPECT_TRUE(std::isnan(net.linkage(2, 0)));
  EXPECT_TRUE(std::isnan(net.linkage(2, 2)));
  EXPECT_EQ(net.linkage(0, 1), kUnlinked);
  EXPECT_EQ(net.warnings.size(), 1u);
}

TEST(TextLinkage, PreconditionsAndSimplexAssertion) {
  EXPECT_THROW(text_linkage(to_matrix({{0.5, 0.5}})), DataError);
  EXPECT_THROW(text_linkage(to_matrix({{1.0}, {1.0}})), DataError);
  EXPECT_THROW(text_linkage(to_matrix({{0.5, 0.4}, {0.5, 0.5}})), DataError);
}

TEST(TextLinkage, CoupledCorpusHasOneBit) {
  auto net = text_linkage(to_matrix({{1, 0}, {0, 1}, {1, 0}, {0, 1}}));
  EXPECT_NEAR(mutual_information(net), 1.0, 1e-12);
}

TEST(TextLinkage, MatchesOracleOnRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = oracle::random_simplex_rows(rng, 2 + trial % 9, 2 + trial % 5);
    expect_matches_oracle(text_linkage(to_matrix(rows)), oracle::linkage(rows), 1e-12);
  }
}

TEST(TextLinkage, ExactlySymmetric) {
  std::mt19937_64 rng(12);
  auto net = text_linkage(to_matrix(oracle::random_simplex_rows(rng, 15, 6, 0.0)));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(net.joint(i, j), net.joint(j, i));
      EXPECT_EQ(net.linkage(i, j), net.linkage(j, i));
    }
}

TEST(TextLinkage, InvariantUnderPermutationAndDuplication) {
  std::mt19937_64 rng(13);
  auto rows = oracle::random_simplex_rows(rng, 12, 5);
  const auto base = text_linkage(to_matrix(rows));

  auto shuffled = rows;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = text_linkage(to_matrix(shuffled));

  auto doubled = rows;
  doubled.insert(doubled.end(), rows.begin(), rows.end());
  const auto dup = text_linkage(to_matrix(doubled));

  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      expect_same_entry(perm.linkage(i, j), base.linkage(i, j), 1e-12);
      expect_same_entry(dup.linkage(i, j), base.linkage(i, j), 1e-12);
      EXPECT_NEAR(dup.joint(i, j), base.joint(i, j), 1e-15);
    }
}

TEST(MutualInformation, NonNegative) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    auto net = text_linkage(to_matrix(oracle::random_simplex_rows(rng, 2 + trial % 7, 2 + trial % 4)));
    EXPECT_GE(mutual_information(net), -1e-12);
  }
}

TEST(UserLinkage, AveragesUserRows) {
  auto m = to_matrix({{1, 0}, {0, 1}, {1, 0}});
  auto rows = user_rows(m, {{"d0", "u"}, {"d1", "u"}, {"d2", "v"}});
  EXPECT_DOUBLE_EQ(rows(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(rows(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(rows(1, 0), 1.0);
}

TEST(UserLinkage, BijectionEqualsTextLinkage) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = to_matrix(oracle::random_simplex_rows(rng, 8, 4));
    std::unordered_map<std::string, std::string> authors;
    // author names sort in document order
    for (std::size_t d = 0; d < m.n_docs(); ++d) authors[m.doc_ids[d]] = "u" + std::to_string(d);
    const auto t = text_linkage(m);
    const auto u = user_linkage(m, authors);
    EXPECT_EQ(u.level, Level::user);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        expect_same_entry(u.linkage(i, j), t.linkage(i, j), 0.0);
        EXPECT_EQ(u.joint(i, j), t.joint(i, j));
      }
  }
}

TEST(UserLinkage, MatchesBruteForceOverUsers) {
  const oracle::Rows docs{{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}, {0.3, 0.3, 0.4}, {0, 1, 0}, {0.5, 0, 0.5}, {1, 0, 0}};
  const std::vector<std::string> who{"b", "a", "b", "c", "a", "b"};
  std::unordered_map<std::string, std::string> authors;
  for (std::size_t d = 0; d < docs.size(); ++d) authors["d" + std::to_string(d)] = who[d];
  oracle::Rows users;
  for (const std::string u : {"a", "b", "c"}) {
    std::vector<double> acc(3, 0.0);
    double n = 0;
    for (std::size_t d = 0; d < docs.size(); ++d)
      if (who[d] == u) {
        for (std::size_t t = 0; t < 3; ++t) acc[t] += docs[d][t];
        ++n;
      }
    for (auto& x : acc) x /= n;
    users.push_back(acc);
  }
  expect_matches_oracle(user_linkage(to_matrix(docs), authors), oracle::linkage(users), 1e-12);
}

TEST(UserLinkage, MissingAuthorFatal) {
  EXPECT_THROW(user_linkage(to_matrix({{1, 0}, {0, 1}}), {{"d0", "u"}}), DataError);
}

TEST(NetworkFile, RoundTrip) {
  auto net = text_linkage(to_matrix({{1, 0, 0}, {0.25, 0.75, 0}, {0.5, 0.5, 0}}));
  std::ostringstream out;
  write_network(out, net);
  std::istringstream in(out.str());
  auto back = read_network(in);
  EXPECT_EQ(back.topic_ids, net.topic_ids);
  EXPECT_EQ(back.marginal, net.marginal);
  EXPECT_EQ(back.joint, net.joint);
  EXPECT_EQ(back.n_units, 3u);
  EXPECT_EQ(back.defined, net.defined);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) expect_same_entry(back.linkage(i, j), net.linkage(i, j), 0.0);
}

TEST(LinkageCorrelation, IdenticalNetworksCorrelatePerfectly) {
  std::mt19937_64 rng(16);
  auto net = text_linkage(to_matrix(oracle::random_simplex_rows(rng, 20, 5, 0.0)));
  EXPECT_NEAR(linkage_correlation(net, net), 1.0, 1e-12);
}
