#pragma once

#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ideotrace/core.hpp"
#include "ideotrace/corpus.hpp"

namespace ideotrace::topics {

// Per-document topic weights. Column c holds topic topic_ids[c]; ids survive
// filtering so a topic keeps its original number.
struct DocTopicMatrix {
  Matrix weights;  // D x K
  std::vector<std::string> doc_ids;
  std::vector<int> topic_ids;

  std::size_t n_docs() const { return weights.rows(); }
  std::size_t n_topics() const { return weights.cols(); }

  std::unordered_map<std::string, std::size_t> doc_index() const {
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(doc_ids.size());
    for (std::size_t i = 0; i < doc_ids.size(); ++i) idx.emplace(doc_ids[i], i);
    return idx;
  }

  // Column of a topic id, or n_topics() when absent.
  std::size_t column_of(int topic) const {
    auto it = std::find(topic_ids.begin(), topic_ids.end(), topic);
    return static_cast<std::size_t>(it - topic_ids.begin());
  }

  // Throws DataError unless every row is on the simplex (1e-9) and ids are unique.
  void validate(double tol = 1e-9) const {
    if (doc_ids.size() != weights.rows() || topic_ids.size() != weights.cols())
      throw DataError("doc-topic matrix: id lists do not match matrix shape");
    std::set<std::string> seen(doc_ids.begin(), doc_ids.end());
    if (seen.size() != doc_ids.size()) throw DataError("doc-topic matrix: duplicate doc ids");
    for (std::size_t d = 0; d < weights.rows(); ++d) {
      auto row = weights.row(d);
      for (double w : row)
        if (!(w >= 0.0 && w <= 1.0)) throw DataError("doc-topic matrix: entry outside [0,1] in row " + doc_ids[d]);
      if (std::abs(sum(row) - 1.0) > tol)
        throw DataError("doc-topic matrix: row " + doc_ids[d] + " does not sum to 1");
    }
  }
};

struct TopicWordTable {
  Matrix probabilities;  // K x V
  std::vector<std::string> words;  // vocabulary by id
  std::vector<int> topic_ids;

  std::vector<std::string> top_words(std::size_t topic_col, std::size_t n) const {
    auto row = probabilities.row(topic_col);
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, order.size()); ++i) out.push_back(words[order[i]]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Collapsed Gibbs LDA

struct GibbsOptions {
  std::size_t n_topics = 100;
  double alpha = -1.0;  // negative selects 50 / K
  double beta = 0.01;
  std::size_t sweeps = 1000;
  std::size_t burn_in = 200;
  std::uint64_t seed = 1;
};

// Count-table totals observed after each sweep.
struct GibbsSweepStats {
  std::size_t sweep = 0;
  std::size_t total_tokens = 0;
  std::size_t doc_topic_total = 0;
  std::size_t topic_word_total = 0;
  std::size_t topic_total = 0;
};

struct TopicFit {
  DocTopicMatrix doc_topics;
  TopicWordTable topic_words;
};

// Doc-topic rows are (n_dk + alpha) / (n_d + K alpha), topic-word rows are
// (n_kw + beta) / (n_k + V beta), both averaged over post-burn-in sweeps.
inline TopicFit fit_topics(const corpus::TokenizedCorpus& corpus, const GibbsOptions& opt,
                           const std::function<void(const GibbsSweepStats&)>& observer = {}) {
  const std::size_t K = opt.n_topics;
  if (K == 0) throw UsageError("fit_topics: topic count must be positive");
  if (opt.sweeps <= opt.burn_in) throw UsageError("fit_topics: sweeps must exceed burn_in");
  const double alpha = opt.alpha > 0.0 ? opt.alpha : 50.0 / static_cast<double>(K);
  const double beta = opt.beta;
  if (!(beta > 0.0)) throw UsageError("fit_topics: beta must be positive");

  std::vector<std::string> words(corpus.vocabulary.size());
  for (const auto& [w, id] : corpus.vocabulary) words[id] = w;
  const std::size_t V = words.size();
  const std::size_t D = corpus.documents.size();

  std::vector<std::vector<std::uint32_t>> docs(D);
  std::size_t total = 0;
  for (std::size_t d = 0; d < D; ++d) {
    for (const auto& tok : corpus.documents[d].second)
      docs[d].push_back(static_cast<std::uint32_t>(corpus.vocabulary.at(tok)));
    total += docs[d].size();
  }
  if (total == 0) throw DataError("fit_topics: corpus has no tokens");
  if (K > total) throw DataError("fit_topics: more topics than tokens");

  Rng rng(opt.seed);
  std::vector<std::vector<std::uint32_t>> z(D);
  std::vector<std::uint32_t> n_dk(D * K, 0), n_kw(K * V, 0), n_k(K, 0);
  for (std::size_t d = 0; d < D; ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const auto k = static_cast<std::uint32_t>(rng() % K);
      z[d][i] = k;
      ++n_dk[d * K + k];
      ++n_kw[k * V + docs[d][i]];
      ++n_k[k];
    }
  }

  Matrix theta(D, K, 0.0), phi(K, V, 0.0);
  std::vector<double> p(K);
  const double v_beta = static_cast<double>(V) * beta;
  std::size_t kept = 0;
  for (std::size_t sweep = 1; sweep <= opt.sweeps; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const std::uint32_t w = docs[d][i];
        const std::uint32_t old = z[d][i];
        --n_dk[d * K + old];
        --n_kw[old * V + w];
        --n_k[old];
        for (std::size_t k = 0; k < K; ++k)
          p[k] = (n_dk[d * K + k] + alpha) * (n_kw[k * V + w] + beta) / (n_k[k] + v_beta);
        const auto k = static_cast<std::uint32_t>(sample_index(p, rng));
        z[d][i] = k;
        ++n_dk[d * K + k];
        ++n_kw[k * V + w];
        ++n_k[k];
      }
    }
    if (observer) {
      GibbsSweepStats s;
      s.sweep = sweep;
      s.total_tokens = total;
      s.doc_topic_total = std::accumulate(n_dk.begin(), n_dk.end(), std::size_t{0});
      s.topic_word_total = std::accumulate(n_kw.begin(), n_kw.end(), std::size_t{0});
      s.topic_total = std::accumulate(n_k.begin(), n_k.end(), std::size_t{0});
      observer(s);
    }
    if (sweep <= opt.burn_in) continue;
    ++kept;
    for (std::size_t d = 0; d < D; ++d) {
      const double denom = static_cast<double>(docs[d].size()) + static_cast<double>(K) * alpha;
      for (std::size_t k = 0; k < K; ++k) theta(d, k) += (n_dk[d * K + k] + alpha) / denom;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double denom = n_k[k] + v_beta;
      for (std::size_t w = 0; w < V; ++w) phi(k, w) += (n_kw[k * V + w] + beta) / denom;
    }
  }

  TopicFit fit;
  auto normalize_rows = [](Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      const double s = sum(row);
      for (auto& x : row) x /= s;
    }
  };
  for (auto& x : theta.data()) x /= static_cast<double>(kept);
  for (auto& x : phi.data()) x /= static_cast<double>(kept);
  normalize_rows(theta);
  normalize_rows(phi);
  if (K == 1)
    for (auto& x : theta.data()) x = 1.0;

  std::vector<int> ids(K);
  std::iota(ids.begin(), ids.end(), 0);
  fit.doc_topics.weights = std::move(theta);
  fit.doc_topics.topic_ids = ids;
  for (const auto& doc : corpus.documents) fit.doc_topics.doc_ids.push_back(doc.first);
  fit.topic_words.probabilities = std::move(phi);
  fit.topic_words.words = std::move(words);
  fit.topic_words.topic_ids = ids;
  return fit;
}

// ---------------------------------------------------------------------------
// Doc-topic CSV: header doc_id,t0,...,t{K-1}

inline void write_doc_topics(std::ostream& out, const DocTopicMatrix& m) {
  out << "doc_id";
  for (int id : m.topic_ids) out << ",t" << id;
  out << '\n';
  for (std::size_t d = 0; d < m.n_docs(); ++d) {
    out << m.doc_ids[d];
    for (double w : m.weights.row(d)) out << ',' << format_double(w);
    out << '\n';
  }
}

inline constexpr double kImportTolerance = 1e-3;

// Rows within 1e-3 of unit sum are renormalized; anything else is fatal.
inline DocTopicMatrix import_doc_topics(std::istream& in) {
  DocTopicMatrix m;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  std::size_t K = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (trim(fields[0]) == "doc_id") {
        for (std::size_t i = 1; i < fields.size(); ++i) {
          std::string name = trim(fields[i]);
          if (name.empty() || name[0] != 't')
            throw DataError("doc-topic header: column '" + name + "' is not t<id>");
          m.topic_ids.push_back(static_cast<int>(parse_int(std::string_view(name).substr(1))));
        }
        K = m.topic_ids.size();
        continue;
      }
    }
    if (K == 0) {
      K = fields.size() - 1;
      m.topic_ids.resize(K);
      std::iota(m.topic_ids.begin(), m.topic_ids.end(), 0);
    }
    if (fields.size() != K + 1)
      throw DataError("doc-topic row " + std::to_string(lineno) + ": expected " +
                      std::to_string(K) + " weights, found " + std::to_string(fields.size() - 1));
    double s = 0.0;
    const std::size_t base = values.size();
    for (std::size_t i = 1; i <= K; ++i) {
      double w;
      try {
        w = parse_double(fields[i]);
      } catch (const DataError&) {
        throw DataError("doc-topic row " + std::to_string(lineno) + ": bad weight '" + fields[i] + "'");
      }
      if (!(w >= 0.0)) throw DataError("doc-topic row " + std::to_string(lineno) + ": negative weight");
      values.push_back(w);
      s += w;
    }
    if (std::abs(s - 1.0) > kImportTolerance)
      throw DataError("doc-topic row " + std::to_string(lineno) + ": weights sum to " +
                      format_double(s) + ", not 1");
    for (std::size_t i = base; i < values.size(); ++i) values[i] /= s;
    m.doc_ids.push_back(trim(fields[0]));
  }
  if (K == 0) throw DataError("doc-topic file has no topic columns");
  m.weights = Matrix(m.doc_ids.size(), K);
  m.weights.data() = std::move(values);
  std::set<std::string> seen(m.doc_ids.begin(), m.doc_ids.end());
  if (seen.size() != m.doc_ids.size()) throw DataError("doc-topic file: duplicate doc ids");
  return m;
}

// ---------------------------------------------------------------------------

struct FilterResult {
  DocTopicMatrix matrix;
  std::vector<std::size_t> zero_mass_rows;  // rows replaced by the uniform row
};

inline FilterResult filter_topics(const DocTopicMatrix& m, const std::set<int>& drop) {
  for (int t : drop)
    if (m.column_of(t) == m.n_topics())
      throw DataError("filter_topics: topic " + std::to_string(t) + " not in matrix");
  if (drop.size() >= m.n_topics()) throw DataError("filter_topics: cannot drop every topic");

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < m.n_topics(); ++c)
    if (!drop.contains(m.topic_ids[c])) keep.push_back(c);

  FilterResult r;
  r.matrix.doc_ids = m.doc_ids;
  for (auto c : keep) r.matrix.topic_ids.push_back(m.topic_ids[c]);
  r.matrix.weights = Matrix(m.n_docs(), keep.size());
  for (std::size_t d = 0; d < m.n_docs(); ++d) {
    double s = 0.0;
    for (auto c : keep) s += m.weights(d, c);
    if (s <= 0.0) {
      r.zero_mass_rows.push_back(d);
      for (std::size_t j = 0; j < keep.size(); ++j)
        r.matrix.weights(d, j) = 1.0 / static_cast<double>(keep.size());
      continue;
    }
    for (std::size_t j = 0; j < keep.size(); ++j) r.matrix.weights(d, j) = m.weights(d, keep[j]) / s;
  }
  return r;
}

inline std::set<int> read_topic_list(std::istream& in) {
  std::set<int> out;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : split(line, ',')) {
      auto t = trim(tok);
      if (t.empty() || t[0] == '#') continue;
      out.insert(static_cast<int>(parse_int(t)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exemplar documents

struct Exemplar {
  std::string doc_id;
  double weight = 0.0;
  std::size_t n_tokens = 0;
  std::vector<std::pair<int, double>> secondary;  // next two topics by weight
};

struct ExemplarOptions {
  double min_weight = 0.5;
  std::size_t min_tokens = 20;
  std::size_t n = 20;
};

// Documents with at least min_tokens filtered tokens and at least min_weight
// on the topic, heaviest first, each with its next two heaviest topics.
inline std::vector<Exemplar> topic_exemplars(const DocTopicMatrix& m,
                                             const corpus::TokenizedCorpus& corpus, int topic,
                                             const ExemplarOptions& opt = {}) {
  const std::size_t col = m.column_of(topic);
  if (col == m.n_topics()) throw DataError("topic_exemplars: unknown topic " + std::to_string(topic));
  const auto counts = corpus.token_counts();

  std::vector<Exemplar> out;
  for (std::size_t d = 0; d < m.n_docs(); ++d) {
    const double w = m.weights(d, col);
    if (w < opt.min_weight) continue;
    auto it = counts.find(m.doc_ids[d]);
    const std::size_t n_tok = it == counts.end() ? 0 : it->second;
    if (n_tok < opt.min_tokens) continue;

    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < m.n_topics(); ++c)
      if (c != col) others.push_back(c);
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      return m.weights(d, a) > m.weights(d, b);
    });
    Exemplar e{m.doc_ids[d], w, n_tok, {}};
    for (std::size_t i = 0; i < std::min<std::size_t>(2, others.size()); ++i)
      e.secondary.emplace_back(m.topic_ids[others[i]], m.weights(d, others[i]));
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Exemplar& a, const Exemplar& b) { return a.weight > b.weight; });
  if (out.size() > opt.n) out.resize(opt.n);
  return out;
}

inline std::string percent(double x) { return std::to_string(static_cast<long>(std::lround(100.0 * x))) + "%"; }

// One line per exemplar: "<doc>; <n> filtered words.  Topic a (w%); Topic b (w%); ..."
inline void write_exemplars(std::ostream& out, int topic, const std::vector<Exemplar>& list) {
  out << "Topic " << topic << '\n';
  for (const auto& e : list) {
    out << e.doc_id << "; " << e.n_tokens << " filtered words.  Topic " << topic << " ("
        << percent(e.weight) << ")";
    for (const auto& [t, w] : e.secondary) out << "; Topic " << t << " (" << percent(w) << ")";
    out << '\n';
  }
  out << '\n';
}

inline void write_topic_words(std::ostream& out, const TopicWordTable& table, std::size_t n = 50) {
  for (std::size_t k = 0; k < table.topic_ids.size(); ++k) {
    out << "Topic " << table.topic_ids[k] << "\nTop words: ";
    auto words = table.top_words(k, n);
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    out << "\n\n";
  }
}

}  // namespace ideotrace::topics
