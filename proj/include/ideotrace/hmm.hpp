#pragma once

#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ideotrace/core.hpp"

// Discrete-observation hidden Markov models: scaled forward-backward,
// multi-sequence Baum-Welch with optional structural zeros, Viterbi decoding,
// AIC state-count selection, dwell times and ancestral sampling.
namespace ideotrace::hmm {

using Sequence = std::vector<std::size_t>;

struct Hmm {
  std::vector<double> initial;  // S
  Matrix transition;            // S x S, row-stochastic
  Matrix emission;              // S x M, row-stochastic

  std::size_t n_states() const { return initial.size(); }
  std::size_t n_symbols() const { return emission.cols(); }

  void validate(double tol = 1e-9) const {
    const std::size_t S = n_states();
    if (S == 0) throw DataError("hmm: no states");
    if (transition.rows() != S || transition.cols() != S || emission.rows() != S)
      throw DataError("hmm: matrix shapes disagree with the state count");
    auto check = [tol](std::span<const double> v, const char* what) {
      for (double x : v)
        if (!(x >= 0.0)) throw DataError(std::string("hmm: negative or NaN entry in ") + what);
      if (std::abs(sum(v) - 1.0) > tol) throw DataError(std::string("hmm: ") + what + " row does not sum to 1");
    };
    check(initial, "initial");
    for (std::size_t s = 0; s < S; ++s) {
      check(transition.row(s), "transition");
      check(emission.row(s), "emission");
    }
  }

  friend bool operator==(const Hmm&, const Hmm&) = default;
};

struct SymbolSequenceSet {
  std::vector<Sequence> sequences;
  std::vector<std::string> alphabet;  // symbol id -> label (may be empty)

  std::size_t total_symbols() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
  }

  void validate(std::size_t n_symbols) const {
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      if (sequences[i].empty()) throw DataError("sequence " + std::to_string(i) + " is empty");
      for (auto x : sequences[i])
        if (x >= n_symbols)
          throw DataError("sequence " + std::to_string(i) + ": symbol " + std::to_string(x) +
                          " outside alphabet of size " + std::to_string(n_symbols));
    }
  }
};

// Structural zeros pinned during fitting. Empty members mean "unconstrained".
struct Structure {
  std::vector<double> fixed_initial;   // S, pinned initial distribution
  std::vector<char> emission_allowed;  // S x M, row-major

  bool allowed(std::size_t s, std::size_t m, std::size_t M) const {
    return emission_allowed.empty() || emission_allowed[s * M + m] != 0;
  }
};

// S(S-1) transition parameters, sum over states of (allowed symbols - 1)
// emission parameters, and S-1 initial parameters unless pinned.
inline std::size_t free_parameters(std::size_t S, std::size_t M, const Structure& structure = {}) {
  std::size_t k = S * (S - 1);
  for (std::size_t s = 0; s < S; ++s) {
    std::size_t allowed = 0;
    for (std::size_t m = 0; m < M; ++m) allowed += structure.allowed(s, m, M) ? 1 : 0;
    if (allowed > 0) k += allowed - 1;
  }
  if (structure.fixed_initial.empty()) k += S - 1;
  return k;
}

namespace detail {

inline void check_symbols(const Hmm& model, std::span<const std::size_t> seq) {
  if (seq.empty()) throw DataError("hmm: empty sequence");
  for (auto x : seq)
    if (x >= model.n_symbols())
      throw DataError("hmm: symbol " + std::to_string(x) + " outside alphabet of size " +
                      std::to_string(model.n_symbols()));
}

}  // namespace detail

// Scaled forward-backward quantities. alpha and beta are T x S; each alpha
// row sums to one and gamma_t = alpha_t * beta_t is the posterior.
struct ForwardBackward {
  Matrix alpha;
  Matrix beta;
  std::vector<double> scale;
  double log_likelihood = 0.0;

  std::vector<double> posterior(std::size_t t) const {
    std::vector<double> g(alpha.cols());
    for (std::size_t s = 0; s < g.size(); ++s) g[s] = alpha(t, s) * beta(t, s);
    return g;
  }
};

// Forward pass only; returns log-likelihood and fills alpha/scale.
// Returns -inf if the sequence is impossible under the model.
inline double forward(const Hmm& model, std::span<const std::size_t> seq, Matrix& alpha,
                      std::vector<double>& scale) {
  const std::size_t S = model.n_states();
  const std::size_t T = seq.size();
  if (alpha.rows() != T || alpha.cols() != S) alpha = Matrix(T, S);
  scale.resize(T);
  // Scale factors are multiplied up and logged in batches; one log per symbol
  // dominated the E-step for small S.
  double ll = 0.0;
  double prod = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t o = seq[t];
    double c = 0.0;
    if (t == 0) {
      for (std::size_t s = 0; s < S; ++s) {
        alpha(0, s) = model.initial[s] * model.emission(s, o);
        c += alpha(0, s);
      }
    } else {
      for (std::size_t j = 0; j < S; ++j) alpha(t, j) = 0.0;
      for (std::size_t i = 0; i < S; ++i) {
        const double a = alpha(t - 1, i);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < S; ++j) alpha(t, j) += a * model.transition(i, j);
      }
      for (std::size_t j = 0; j < S; ++j) {
        alpha(t, j) *= model.emission(j, o);
        c += alpha(t, j);
      }
    }
    scale[t] = c;
    if (c <= 0.0) return -std::numeric_limits<double>::infinity();
    const double inv = 1.0 / c;
    for (std::size_t s = 0; s < S; ++s) alpha(t, s) *= inv;
    if (c < 1e-30) {
      ll += std::log(c);
    } else {
      prod *= c;
      if (prod < 1e-250) {
        ll += std::log(prod);
        prod = 1.0;
      }
    }
  }
  return ll + std::log(prod);
}

// Backward pass reusing the forward scale factors.
inline void backward(const Hmm& model, std::span<const std::size_t> seq,
                     const std::vector<double>& scale, Matrix& beta) {
  const std::size_t S = model.n_states();
  const std::size_t T = seq.size();
  if (beta.rows() != T || beta.cols() != S) beta = Matrix(T, S);
  for (std::size_t s = 0; s < S; ++s) beta(T - 1, s) = 1.0;
  std::vector<double> tmp(S);
  for (std::size_t t = T - 1; t-- > 0;) {
    const std::size_t o = seq[t + 1];
    const double inv = 1.0 / scale[t + 1];
    for (std::size_t j = 0; j < S; ++j) tmp[j] = model.emission(j, o) * beta(t + 1, j) * inv;
    for (std::size_t i = 0; i < S; ++i) {
      double b = 0.0;
      for (std::size_t j = 0; j < S; ++j) b += model.transition(i, j) * tmp[j];
      beta(t, i) = b;
    }
  }
}

inline ForwardBackward forward_backward(const Hmm& model, std::span<const std::size_t> seq) {
  detail::check_symbols(model, seq);
  ForwardBackward fb;
  fb.log_likelihood = forward(model, seq, fb.alpha, fb.scale);
  if (std::isfinite(fb.log_likelihood)) backward(model, seq, fb.scale, fb.beta);
  return fb;
}

// Natural-log probability of the sequence under the model.
inline double log_likelihood(const Hmm& model, std::span<const std::size_t> seq) {
  detail::check_symbols(model, seq);
  Matrix alpha;
  std::vector<double> scale;
  return forward(model, seq, alpha, scale);
}

inline double log_likelihood(const Hmm& model, const SymbolSequenceSet& data) {
  Matrix alpha;
  std::vector<double> scale;
  double ll = 0.0;
  for (const auto& seq : data.sequences) {
    detail::check_symbols(model, seq);
    ll += forward(model, seq, alpha, scale);
  }
  return ll;
}

// Most probable state path, computed in log space. Ties go to the lower
// state id, both at each step and at the final state.
inline std::vector<std::size_t> viterbi_decode(const Hmm& model, std::span<const std::size_t> seq) {
  detail::check_symbols(model, seq);
  const std::size_t S = model.n_states();
  const std::size_t T = seq.size();
  auto lg = [](double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); };

  Matrix log_a(S, S);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) log_a(i, j) = lg(model.transition(i, j));

  std::vector<double> delta(S), next(S);
  std::vector<std::size_t> back(T * S, 0);
  for (std::size_t s = 0; s < S; ++s) delta[s] = lg(model.initial[s]) + lg(model.emission(s, seq[0]));
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < S; ++j) {
      std::size_t arg = 0;
      double best = delta[0] + log_a(0, j);
      for (std::size_t i = 1; i < S; ++i) {
        const double v = delta[i] + log_a(i, j);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      back[t * S + j] = arg;
      next[j] = best + lg(model.emission(j, seq[t]));
    }
    std::swap(delta, next);
  }
  std::vector<std::size_t> path(T);
  path[T - 1] = argmax(delta);
  for (std::size_t t = T - 1; t > 0; --t) path[t - 1] = back[t * S + path[t]];
  return path;
}

// Natural-log probability of one joint (state path, sequence) pair.
inline double path_log_probability(const Hmm& model, std::span<const std::size_t> states,
                                   std::span<const std::size_t> seq) {
  double lp = std::log(model.initial[states[0]]) + std::log(model.emission(states[0], seq[0]));
  for (std::size_t t = 1; t < seq.size(); ++t)
    lp += std::log(model.transition(states[t - 1], states[t])) + std::log(model.emission(states[t], seq[t]));
  return lp;
}

// ---------------------------------------------------------------------------
// Baum-Welch

struct FitOptions {
  double tol = 1e-6;  // stop when an iteration improves log-likelihood by less
  std::size_t max_iter = 1000;
  Structure structure;
};

struct FitResult {
  Hmm model;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // log-likelihood before the first and after every update
  std::vector<std::string> warnings;
};

// Random model with Dirichlet(1) rows over the allowed entries.
inline Hmm random_model(std::size_t S, std::size_t M, const Structure& structure, Rng& rng) {
  Hmm m;
  if (structure.fixed_initial.empty())
    m.initial = sample_dirichlet(S, 1.0, rng);
  else
    m.initial = structure.fixed_initial;
  m.transition = Matrix(S, S);
  m.emission = Matrix(S, M);
  for (std::size_t s = 0; s < S; ++s) {
    auto t = sample_dirichlet(S, 1.0, rng);
    std::copy(t.begin(), t.end(), m.transition.row(s).begin());
    std::vector<double> alpha(M);
    for (std::size_t k = 0; k < M; ++k) alpha[k] = structure.allowed(s, k, M) ? 1.0 : 0.0;
    std::vector<double> e(M, 0.0);
    std::vector<double> sub;
    for (std::size_t k = 0; k < M; ++k)
      if (alpha[k] > 0.0) sub.push_back(1.0);
    if (sub.empty()) throw DataError("hmm structure: state " + std::to_string(s) + " may emit nothing");
    auto draw = sample_dirichlet(sub, rng);
    for (std::size_t k = 0, n = 0; k < M; ++k)
      if (alpha[k] > 0.0) e[k] = draw[n++];
    std::copy(e.begin(), e.end(), m.emission.row(s).begin());
  }
  return m;
}

namespace detail {

struct Expectations {
  std::vector<double> initial;
  Matrix transition;
  Matrix emission;
  double log_likelihood = 0.0;
};

inline Expectations expectation(const Hmm& model, const SymbolSequenceSet& data) {
  const std::size_t S = model.n_states();
  const std::size_t M = model.n_symbols();
  Expectations ex{std::vector<double>(S, 0.0), Matrix(S, S, 0.0), Matrix(S, M, 0.0), 0.0};
  Matrix alpha, beta;
  std::vector<double> scale, tmp(S);
  for (std::size_t n = 0; n < data.sequences.size(); ++n) {
    const auto& seq = data.sequences[n];
    const double ll = forward(model, seq, alpha, scale);
    if (!std::isfinite(ll))
      throw DataError("hmm fit: sequence " + std::to_string(n) + " has zero probability under the model structure");
    ex.log_likelihood += ll;
    // Backward recursion fused with the accumulation: beta(t+1) is final by
    // the time step t is counted.
    const std::size_t T = seq.size();
    if (beta.rows() != T || beta.cols() != S) beta = Matrix(T, S);
    for (std::size_t s = 0; s < S; ++s) {
      beta(T - 1, s) = 1.0;
      ex.emission(s, seq[T - 1]) += alpha(T - 1, s);
    }
    for (std::size_t t = T - 1; t-- > 0;) {
      const std::size_t o1 = seq[t + 1];
      const double inv = 1.0 / scale[t + 1];
      for (std::size_t j = 0; j < S; ++j) tmp[j] = model.emission(j, o1) * beta(t + 1, j) * inv;
      const std::size_t o = seq[t];
      for (std::size_t i = 0; i < S; ++i) {
        const double a = alpha(t, i);
        double b = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          const double x = model.transition(i, j) * tmp[j];
          b += x;
          ex.transition(i, j) += a * x;
        }
        beta(t, i) = b;
        ex.emission(i, o) += a * b;
      }
    }
    for (std::size_t s = 0; s < S; ++s) ex.initial[s] += alpha(0, s) * beta(0, s);
  }
  return ex;
}

// Normalizes each row of counts into target; rows with no mass keep their
// previous values.
inline void normalize_into(std::span<const double> counts, std::span<double> target) {
  const double total = sum(counts);
  if (total <= 0.0) return;
  for (std::size_t k = 0; k < counts.size(); ++k) target[k] = counts[k] / total;
}

inline Hmm maximization(const Hmm& current, const Expectations& ex, const Structure& structure) {
  Hmm next = current;
  if (structure.fixed_initial.empty()) normalize_into(ex.initial, next.initial);
  for (std::size_t s = 0; s < current.n_states(); ++s) {
    normalize_into(ex.transition.row(s), next.transition.row(s));
    normalize_into(ex.emission.row(s), next.emission.row(s));
  }
  return next;
}

}  // namespace detail

// EM from a given starting model. Log-likelihood is checked to be
// non-decreasing (1e-10 relative slack for round-off).
inline FitResult fit_baum_welch_from(const SymbolSequenceSet& data, Hmm start,
                                     const FitOptions& options = {}) {
  if (data.sequences.empty()) throw DataError("hmm fit: no sequences");
  data.validate(start.n_symbols());
  FitResult r;
  r.model = std::move(start);
  if (const auto k = free_parameters(r.model.n_states(), r.model.n_symbols(), options.structure);
      data.total_symbols() < k)
    r.warnings.push_back("hmm fit: " + std::to_string(data.total_symbols()) + " symbols for " + std::to_string(k) +
                         " free parameters");
  auto ex = detail::expectation(r.model, data);
  r.log_likelihood = ex.log_likelihood;
  r.trace.push_back(r.log_likelihood);
  for (std::size_t iter = 1; iter <= options.max_iter; ++iter) {
    Hmm next = detail::maximization(r.model, ex, options.structure);
    auto next_ex = detail::expectation(next, data);
    const double ll = next_ex.log_likelihood;
    const double slack = 1e-10 * std::max(1.0, std::abs(r.log_likelihood));
    if (ll < r.log_likelihood - slack)
      throw std::logic_error("Baum-Welch log-likelihood decreased from " + format_double(r.log_likelihood) +
                             " to " + format_double(ll));
    const double gain = ll - r.log_likelihood;
    r.model = std::move(next);
    ex = std::move(next_ex);
    r.log_likelihood = ll;
    r.trace.push_back(ll);
    r.iterations = iter;
    if (gain < options.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

inline FitResult fit_baum_welch(const SymbolSequenceSet& data, std::size_t n_states, std::size_t n_symbols,
                                std::uint64_t seed, const FitOptions& options = {}) {
  if (n_states == 0) throw DataError("hmm fit: n_states must be at least 1");
  if (data.sequences.empty() || data.total_symbols() == 0) throw DataError("hmm fit: empty data");
  Rng rng(seed);
  return fit_baum_welch_from(data, random_model(n_states, n_symbols, options.structure, rng), options);
}

inline double aic(double log_likelihood, std::size_t free_params) {
  return -2.0 * log_likelihood + 2.0 * static_cast<double>(free_params);
}

inline double aic(const Hmm& model, const SymbolSequenceSet& data, const Structure& structure = {}) {
  return aic(log_likelihood(model, data), free_parameters(model.n_states(), model.n_symbols(), structure));
}

struct CandidateScore {
  std::size_t n_states = 0;
  double log_likelihood = 0.0;
  std::size_t free_params = 0;
  double aic = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct Selection {
  Hmm best;
  std::size_t best_index = 0;  // row of the winner in table
  std::vector<CandidateScore> table;
};

// Builds the structure for a candidate state count; called once per candidate.
using StructureFactory = std::function<Structure(std::size_t n_states)>;

// Best-of-restarts fit for every candidate state count; the winner has the
// minimum AIC (ties: fewer states, i.e. earlier in the list).
inline Selection select_states(const SymbolSequenceSet& data, std::size_t n_symbols,
                               const std::vector<std::size_t>& candidates, std::size_t restarts,
                               std::uint64_t seed, FitOptions options = {},
                               const StructureFactory& structure_for = {}) {
  if (candidates.empty()) throw DataError("select_states: no candidate state counts");
  if (restarts == 0) restarts = 1;
  Selection sel;
  double best_aic = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t S = candidates[c];
    if (structure_for) options.structure = structure_for(S);
    std::optional<FitResult> best;
    for (std::size_t r = 0; r < restarts; ++r) {
      auto fit = fit_baum_welch(data, S, n_symbols, derive_seed(derive_seed(seed, S), r), options);
      if (!best || fit.log_likelihood > best->log_likelihood) best = std::move(fit);
    }
    CandidateScore row;
    row.n_states = S;
    row.log_likelihood = best->log_likelihood;
    row.free_params = free_parameters(S, n_symbols, options.structure);
    row.aic = aic(row.log_likelihood, row.free_params);
    row.iterations = best->iterations;
    row.converged = best->converged;
    sel.table.push_back(row);
    if (row.aic < best_aic) {
      best_aic = row.aic;
      sel.best = best->model;
      sel.best_index = c;
    }
  }
  return sel;
}

// Expected run length in a state under geometric holding; infinite when the
// state never leaves.
inline double expected_dwell(const Hmm& model, std::size_t state) {
  const double self = model.transition(state, state);
  if (self >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - self);
}

// ---------------------------------------------------------------------------
// Sampling

struct LengthLaw {
  std::size_t fixed_length = 0;          // used when absorbing is empty
  std::vector<std::size_t> absorbing;    // entering one of these ends the sequence
  bool emit_on_absorb = false;           // include the absorbing state's emission
  std::size_t max_length = 100000;       // cutoff for the absorbing law

  static LengthLaw fixed(std::size_t n) { return LengthLaw{n, {}, false, n}; }
  static LengthLaw until_absorbed(std::vector<std::size_t> states, bool emit, std::size_t max_len) {
    return LengthLaw{0, std::move(states), emit, max_len};
  }
};

struct Samples {
  SymbolSequenceSet data;
  std::vector<Sequence> states;
  std::size_t truncated = 0;  // sequences cut at max_length
};

// Ancestral sampling of one sequence from its own generator.
inline void sample_one(const Hmm& model, const LengthLaw& law, Rng& rng, Sequence& symbols,
                       Sequence& states, bool& truncated) {
  symbols.clear();
  states.clear();
  truncated = false;
  auto is_absorbing = [&](std::size_t s) {
    return std::find(law.absorbing.begin(), law.absorbing.end(), s) != law.absorbing.end();
  };
  std::size_t s = sample_index(model.initial, rng);
  const std::size_t limit = law.absorbing.empty() ? law.fixed_length : law.max_length;
  for (;;) {
    states.push_back(s);
    symbols.push_back(sample_index(model.emission.row(s), rng));
    if (law.absorbing.empty()) {
      if (symbols.size() >= limit) return;
    } else if (symbols.size() >= limit) {
      truncated = true;
      return;
    }
    const std::size_t next = sample_index(model.transition.row(s), rng);
    if (!law.absorbing.empty() && is_absorbing(next)) {
      if (law.emit_on_absorb) {
        states.push_back(next);
        symbols.push_back(sample_index(model.emission.row(next), rng));
      }
      return;
    }
    s = next;
  }
}

// Sequence i is drawn from its own stream derived from (seed, i).
inline Samples sample_sequences(const Hmm& model, std::size_t n_sequences, const LengthLaw& law,
                                std::uint64_t seed) {
  model.validate();
  if (law.absorbing.empty() && law.fixed_length == 0)
    throw DataError("sample_sequences: fixed length must be positive");
  Samples out;
  out.data.sequences.resize(n_sequences);
  out.states.resize(n_sequences);
  for (std::size_t i = 0; i < n_sequences; ++i) {
    Rng rng(derive_seed(seed, i));
    bool truncated = false;
    sample_one(model, law, rng, out.data.sequences[i], out.states[i], truncated);
    if (truncated) ++out.truncated;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file: "hmm S M", then "initial", "transition" and "emission" blocks of
// shortest round-trip decimals.

inline void write_model(std::ostream& out, const Hmm& m) {
  out << "hmm " << m.n_states() << ' ' << m.n_symbols() << "\ninitial\n";
  for (std::size_t s = 0; s < m.n_states(); ++s) out << (s ? " " : "") << format_double(m.initial[s]);
  out << "\ntransition\n";
  for (std::size_t i = 0; i < m.n_states(); ++i) {
    for (std::size_t j = 0; j < m.n_states(); ++j) out << (j ? " " : "") << format_double(m.transition(i, j));
    out << '\n';
  }
  out << "emission\n";
  for (std::size_t i = 0; i < m.n_states(); ++i) {
    for (std::size_t k = 0; k < m.n_symbols(); ++k) out << (k ? " " : "") << format_double(m.emission(i, k));
    out << '\n';
  }
}

inline Hmm read_model(std::istream& in) {
  std::string word;
  std::size_t S = 0, M = 0;
  if (!(in >> word) || word != "hmm" || !(in >> S >> M) || S == 0 || M == 0)
    throw DataError("model file: bad header");
  auto expect = [&](const char* tag) {
    if (!(in >> word) || word != tag) throw DataError(std::string("model file: expected ") + tag);
  };
  auto number = [&]() {
    if (!(in >> word)) throw DataError("model file: truncated");
    return parse_double(word);
  };
  Hmm m;
  expect("initial");
  m.initial.resize(S);
  for (auto& x : m.initial) x = number();
  expect("transition");
  m.transition = Matrix(S, S);
  for (auto& x : m.transition.data()) x = number();
  expect("emission");
  m.emission = Matrix(S, M);
  for (auto& x : m.emission.data()) x = number();
  m.validate();
  return m;
}

}  // namespace ideotrace::hmm
