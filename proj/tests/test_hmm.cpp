#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "ideotrace/hmm.hpp"
#include "oracles.hpp"

using namespace ideotrace;
using namespace ideotrace::hmm;
using testing_helpers::make_hmm;
using testing_helpers::to_hmm;

namespace {

Hmm cycle_model() {
  return make_hmm({0.25, 0.75, 0.0}, {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
}

SymbolSequenceSet single(Sequence s) { return {{std::move(s)}, {}}; }

std::vector<double> frequencies(const SymbolSequenceSet& d, std::size_t m) {
  std::vector<double> f(m, 0.0);
  for (const auto& s : d.sequences)
    for (auto x : s) f[x] += 1.0;
  const double n = static_cast<double>(d.total_symbols());
  for (auto& x : f) x /= n;
  return f;
}

}  // namespace

TEST(Likelihood, SingleStateIsProductOfEmissions) {
  auto m = make_hmm({1.0}, {{1.0}}, {{0.3, 0.7}});
  EXPECT_NEAR(log_likelihood(m, Sequence{1, 1}), std::log(0.49), 1e-14);
}

TEST(Likelihood, MatchesEnumeration) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto o = oracle::random_model(rng, 2 + trial % 2, 2 + trial % 3);
    const auto m = to_hmm(o);
    const std::size_t len = 1 + trial % 5;
    Sequence seq(len);
    for (auto& x : seq) x = rng() % o.emission[0].size();
    EXPECT_NEAR(log_likelihood(m, seq), std::log(oracle::likelihood(o, seq)), 1e-10);
  }
}

TEST(Likelihood, DeterministicCycle) {
  const auto m = cycle_model();
  EXPECT_NEAR(log_likelihood(m, Sequence{1, 2, 0, 1, 2}), std::log(0.75), 1e-14);
  EXPECT_EQ(log_likelihood(m, Sequence{1, 0}), -std::numeric_limits<double>::infinity());
}

TEST(Likelihood, SumsToOneOverAllSequences) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = to_hmm(oracle::random_model(rng, 2, 3));
    for (std::size_t len = 1; len <= 4; ++len) {
      double total = 0.0;
      oracle::for_each_sequence(3, len, [&](const Sequence& s) { total += std::exp(log_likelihood(m, s)); });
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Likelihood, RejectsOutOfAlphabetSymbols) {
  EXPECT_THROW(log_likelihood(cycle_model(), Sequence{0, 3}), DataError);
  EXPECT_THROW(log_likelihood(cycle_model(), Sequence{}), DataError);
}

TEST(ForwardBackward, PosteriorsSumToOne) {
  std::mt19937_64 rng(33);
  const auto m = to_hmm(oracle::random_model(rng, 3, 4));
  Sequence seq(40);
  for (auto& x : seq) x = rng() % 4;
  const auto fb = forward_backward(m, seq);
  for (std::size_t t = 0; t < seq.size(); ++t) EXPECT_NEAR(sum(fb.posterior(t)), 1.0, 1e-9);
}

TEST(Fit, SingleStateRecoversFrequencies) {
  auto m = make_hmm({1.0}, {{1.0}}, {{0.2, 0.8}});
  auto data = sample_sequences(m, 100, LengthLaw::fixed(100), 5).data;
  auto fit = fit_baum_welch(data, 1, 2, 9);
  EXPECT_NEAR(fit.model.emission(0, 0), 0.2, 0.02);
  EXPECT_EQ(fit.iterations, 2u);  // the second update changes nothing
  const auto f = frequencies(data, 2);
  auto one = fit_baum_welch(data, 1, 2, 9, FitOptions{1e-6, 1, {}});
  EXPECT_NEAR(one.model.emission(0, 0), f[0], 1e-12);
  EXPECT_NEAR(one.model.emission(0, 1), f[1], 1e-12);
}

TEST(Fit, MonotoneTrace) {
  std::mt19937_64 rng(34);
  const auto gen = to_hmm(oracle::random_model(rng, 3, 4));
  const auto data = sample_sequences(gen, 20, LengthLaw::fixed(30), 6).data;
  const auto fit = fit_baum_welch(data, 3, 4, 7, FitOptions{0.0, 80, {}});
  for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-10);
  fit.model.validate();
}

TEST(Fit, StructuralZerosStayZero) {
  Structure st;
  st.fixed_initial = {1.0, 0.0};
  st.emission_allowed = {1, 0, 0, 1, 1, 1};
  const auto gen = make_hmm({1.0, 0.0}, {{0.6, 0.4}, {0.3, 0.7}}, {{1, 0, 0}, {0, 0.5, 0.5}});
  const auto data = sample_sequences(gen, 30, LengthLaw::fixed(20), 3).data;
  const auto fit = fit_baum_welch(data, 2, 3, 4, FitOptions{1e-8, 200, st});
  EXPECT_EQ(fit.model.initial, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(fit.model.emission(0, 1), 0.0);
  EXPECT_EQ(fit.model.emission(0, 2), 0.0);
  EXPECT_EQ(free_parameters(2, 3, st), 2u + 0u + 2u);
}

TEST(Fit, RefitOwnSamplesIsConsistent) {
  std::mt19937_64 rng(35);
  const auto gen = to_hmm(oracle::random_model(rng, 2, 3));
  const auto data = sample_sequences(gen, 50, LengthLaw::fixed(40), 8).data;
  FitResult best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto fit = fit_baum_welch(data, 2, 3, s, FitOptions{1e-9, 2000, {}});
    if (fit.log_likelihood > best.log_likelihood) best = fit;
  }
  const double per_symbol = 1e-3 * static_cast<double>(data.total_symbols());
  EXPECT_GE(best.log_likelihood, log_likelihood(gen, data) - per_symbol);
}

TEST(Fit, WarnsWhenParametersOutnumberSymbols) {
  // S=3, M=2: 6 + 3 + 2 = 11 free parameters
  EXPECT_EQ(fit_baum_welch(single({0, 1, 1, 0}), 3, 2, 1).warnings.size(), 1u);
  std::vector<Sequence> eleven{{0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1}};
  EXPECT_TRUE(fit_baum_welch({eleven, {}}, 3, 2, 1).warnings.empty());
}

TEST(Fit, Errors) {
  EXPECT_THROW(fit_baum_welch({}, 2, 2, 1), DataError);
  EXPECT_THROW(fit_baum_welch(single({0, 1}), 0, 2, 1), DataError);
  EXPECT_THROW(fit_baum_welch(single({0, 5}), 2, 2, 1), DataError);
}

TEST(Viterbi, DeltaEmissionsReproduceSequence) {
  std::mt19937_64 rng(36);
  auto o = oracle::random_model(rng, 3, 3);
  o.emission = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto m = to_hmm(o);
  const Sequence seq{2, 0, 1, 1, 2};
  EXPECT_EQ(viterbi_decode(m, seq), seq);
  EXPECT_NEAR(path_log_probability(m, seq, seq), log_likelihood(m, seq), 1e-12);
}

TEST(Viterbi, MatchesEnumeration) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    const auto o = oracle::random_model(rng, 2 + trial % 2, 3);
    const auto m = to_hmm(o);
    Sequence seq(1 + trial % 5);
    for (auto& x : seq) x = rng() % 3;
    const auto path = viterbi_decode(m, seq);
    EXPECT_EQ(path, oracle::viterbi(o, seq));
    EXPECT_LE(path_log_probability(m, path, seq), log_likelihood(m, seq) + 1e-12);
  }
}

TEST(Viterbi, SingleStateIsAllZeros) {
  auto m = make_hmm({1.0}, {{1.0}}, {{0.3, 0.7}});
  EXPECT_EQ(viterbi_decode(m, Sequence{1, 0, 1}), (Sequence{0, 0, 0}));
}

TEST(Aic, ParameterCounts) {
  EXPECT_EQ(free_parameters(2, 5), 11u);
  EXPECT_EQ(free_parameters(1, 2), 1u);
  EXPECT_DOUBLE_EQ(aic(-10.0, 1), 22.0);
}

TEST(Aic, OrderingMatchesHandComputation) {
  const auto gen = make_hmm({0.5, 0.5}, {{0.9, 0.1}, {0.1, 0.9}}, {{0.9, 0.1}, {0.1, 0.9}});
  const auto data = sample_sequences(gen, 20, LengthLaw::fixed(50), 2).data;
  const auto a = fit_baum_welch(data, 1, 2, 1);
  const auto b = fit_baum_welch(data, 2, 2, 1);
  const double hand_a = -2.0 * a.log_likelihood + 2.0 * 1.0;
  const double hand_b = -2.0 * b.log_likelihood + 2.0 * 5.0;
  EXPECT_NEAR(aic(a.model, data), hand_a, 1e-9);
  EXPECT_NEAR(aic(b.model, data), hand_b, 1e-9);
  EXPECT_EQ(aic(a.model, data) < aic(b.model, data), hand_a < hand_b);
}

TEST(SelectStates, IidDataSelectsOneState) {
  const auto gen = make_hmm({1.0}, {{1.0}}, {{1.0 / 3, 1.0 / 3, 1.0 / 3}});
  const auto data = sample_sequences(gen, 50, LengthLaw::fixed(40), 11).data;
  const auto sel = select_states(data, 3, {1, 2, 3}, 3, 5, FitOptions{1e-6, 300, {}});
  EXPECT_EQ(sel.table.size(), 3u);
  EXPECT_EQ(sel.table[sel.best_index].n_states, 1u);
  EXPECT_EQ(sel.best.n_states(), 1u);
}

TEST(SelectStates, SingleCandidate) {
  std::mt19937_64 rng(38);
  const auto gen = to_hmm(oracle::random_model(rng, 2, 3));
  const auto data = sample_sequences(gen, 10, LengthLaw::fixed(20), 12).data;
  const auto sel = select_states(data, 3, {4}, 2, 5, FitOptions{1e-4, 50, {}});
  ASSERT_EQ(sel.table.size(), 1u);
  EXPECT_EQ(sel.best.n_states(), 4u);
  EXPECT_NEAR(log_likelihood(sel.best, data), sel.table[0].log_likelihood, 1e-9);
  EXPECT_THROW(select_states(data, 3, {}, 2, 5), DataError);
}

TEST(Dwell, GeometricMean) {
  auto with_self = [](double p) { return make_hmm({1, 0}, {{p, 1 - p}, {0, 1}}, {{1}, {1}}); };
  EXPECT_DOUBLE_EQ(expected_dwell(with_self(0.5), 0), 2.0);
  EXPECT_DOUBLE_EQ(expected_dwell(with_self(0.875), 0), 8.0);
  EXPECT_DOUBLE_EQ(expected_dwell(with_self(0.0), 0), 1.0);
  EXPECT_TRUE(std::isinf(expected_dwell(with_self(0.5), 1)));
}

TEST(Sampling, DeterministicCyclePattern) {
  const auto s = sample_sequences(cycle_model(), 20, LengthLaw::fixed(7), 4);
  for (const auto& seq : s.data.sequences) {
    ASSERT_EQ(seq.size(), 7u);
    EXPECT_NE(seq[0], 2u);
    for (std::size_t t = 1; t < seq.size(); ++t) EXPECT_EQ(seq[t], (seq[t - 1] + 1) % 3);
  }
}

TEST(Sampling, LawOfLargeNumbers) {
  auto m = make_hmm({1.0}, {{1.0}}, {{0.2, 0.8}});
  const auto s = sample_sequences(m, 100, LengthLaw::fixed(1000), 13);
  EXPECT_NEAR(frequencies(s.data, 2)[0], 0.2, 0.01);
}

TEST(Sampling, AbsorbingMeanLength) {
  auto m = make_hmm({1.0, 0.0}, {{0.5, 0.5}, {0.0, 1.0}}, {{1.0}, {1.0}});
  const auto s = sample_sequences(m, 20000, LengthLaw::until_absorbed({1}, false, 1000), 14);
  EXPECT_NEAR(static_cast<double>(s.data.total_symbols()) / 20000.0, 2.0, 0.05);
  EXPECT_EQ(s.truncated, 0u);
}

TEST(Sampling, SameSeedSameOutput) {
  std::mt19937_64 rng(39);
  const auto m = to_hmm(oracle::random_model(rng, 3, 3));
  EXPECT_EQ(sample_sequences(m, 5, LengthLaw::fixed(9), 1).data.sequences,
            sample_sequences(m, 5, LengthLaw::fixed(9), 1).data.sequences);
}

TEST(ModelFile, RoundTrip) {
  std::mt19937_64 rng(40);
  const auto m = to_hmm(oracle::random_model(rng, 3, 4));
  std::ostringstream out;
  write_model(out, m);
  std::istringstream in(out.str());
  EXPECT_EQ(read_model(in), m);
  std::istringstream bad("hmm 2 2\ninitial\n0.5\n");
  EXPECT_THROW(read_model(bad), DataError);
}
