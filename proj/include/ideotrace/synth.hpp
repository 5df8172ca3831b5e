#pragma once

#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/property_tree/ptree.hpp>

#include "ideotrace/core.hpp"
#include "ideotrace/corpus.hpp"
#include "ideotrace/graph.hpp"
#include "ideotrace/hmm.hpp"
#include "ideotrace/topics.hpp"
#include "ideotrace/trajectories.hpp"

// Ground-truth generators: corpora with planted topic clusters and planted
// tourist/resident posting dynamics.
namespace ideotrace::synth {

// Posting dynamics of one user class in trajectory form: state 0 is
// enter/exit, the other states emit clusters. Symbols are the C clusters
// followed by ENTER and EXIT.
struct ClassDynamics {
  hmm::Hmm model;
};

struct SynthSpec {
  std::vector<std::string> cluster_names;
  std::vector<std::size_t> topics_per_cluster;
  double concentration = 5.0;  // symmetric Dirichlet over the emitted cluster's topics
  double leakage = 0.02;       // doc mass spread over topics of other clusters

  std::size_t n_users = 200;
  double tourist_fraction = 0.87;
  double special_fraction = 0.10;  // no history before first contact
  double other_fraction = 0.15;    // earlier posts in blocked forums
  ClassDynamics tourist;
  ClassDynamics resident;
  std::size_t max_posts = 5000;

  double gap_days = 7.0;  // mean exponential gap between posts
  std::int64_t window_start = 1451606400;  // 2016-01-01
  std::int64_t window_end = 1577836799;    // 2019-12-31 23:59:59
  std::size_t tokens_per_doc = 25;
  std::size_t words_per_topic = 30;
  double submission_fraction = 0.2;

  std::string forum = "TheRedPill";
  std::vector<std::string> blocked_forums{"TheRedPill", "MensRights", "MGTOW", "Braincels"};
  std::vector<std::string> open_forums{"news", "AskReddit", "fitness", "politics", "gaming"};
  std::uint64_t seed = 1;

  std::size_t n_clusters() const { return cluster_names.size(); }
  std::size_t n_topics() const {
    return std::accumulate(topics_per_cluster.begin(), topics_per_cluster.end(), std::size_t{0});
  }

  std::vector<std::size_t> topic_cluster() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < topics_per_cluster.size(); ++c) out.insert(out.end(), topics_per_cluster[c], c);
    return out;
  }

  void validate() const {
    if (cluster_names.empty() || cluster_names.size() != topics_per_cluster.size())
      throw DataError("synth spec: cluster plan is empty or inconsistent");
    for (auto n : topics_per_cluster)
      if (n == 0) throw DataError("synth spec: every cluster needs at least one topic");
    auto fraction = [](double f, const char* what) {
      if (!(f >= 0.0 && f <= 1.0)) throw DataError(std::string("synth spec: ") + what + " must lie in [0,1]");
    };
    fraction(tourist_fraction, "tourist_fraction");
    fraction(special_fraction, "special_fraction");
    fraction(other_fraction, "other_fraction");
    fraction(leakage, "leakage");
    fraction(submission_fraction, "submission_fraction");
    if (special_fraction + other_fraction > 1.0) throw DataError("synth spec: special + other fractions exceed 1");
    if (!(concentration > 0.0) || !(gap_days > 0.0)) throw DataError("synth spec: concentration and gap_days must be positive");
    if (window_start <= 0 || window_start >= window_end) throw DataError("synth spec: bad window");
    if (n_clusters() < 2 && leakage > 0.0) throw DataError("synth spec: leakage needs at least two clusters");
    for (const auto* d : {&tourist, &resident}) {
      d->model.validate();
      if (d->model.n_symbols() != n_clusters() + 2)
        throw DataError("synth spec: class model alphabet must be clusters + ENTER + EXIT");
      if (d->model.n_states() < 2) throw DataError("synth spec: class model needs a content state");
    }
  }
};

// Expected visits per content state for one trajectory: entry row of state 0
// times the fundamental matrix (I - Q)^-1 over content states.
inline std::vector<double> expected_visits(const hmm::Hmm& m) {
  const std::size_t n = m.n_states() - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::RowVectorXd entry(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    entry(static_cast<Eigen::Index>(i)) = m.transition(0, i + 1);
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -= m.transition(i + 1, j + 1);
  }
  Eigen::RowVectorXd v = a.transpose().fullPivLu().solve(entry.transpose()).transpose();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = v(static_cast<Eigen::Index>(i));
  return out;
}

// Expected cluster counts emitted by one trajectory.
inline std::vector<double> expected_cluster_posts(const hmm::Hmm& m, std::size_t n_clusters) {
  const auto visits = expected_visits(m);
  std::vector<double> out(n_clusters, 0.0);
  for (std::size_t s = 0; s < visits.size(); ++s)
    for (std::size_t c = 0; c < n_clusters; ++c) out[c] += visits[s] * m.emission(s + 1, c);
  return out;
}

// Cluster shares of all posts implied by a SynthSpec.
inline std::vector<double> planted_shares(const SynthSpec& spec) {
  const auto t = expected_cluster_posts(spec.tourist.model, spec.n_clusters());
  const auto r = expected_cluster_posts(spec.resident.model, spec.n_clusters());
  std::vector<double> out(spec.n_clusters());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = spec.tourist_fraction * t[c] + (1.0 - spec.tourist_fraction) * r[c];
  const double s = sum(out);
  for (auto& x : out) x /= s;
  return out;
}

// Builds a trajectory-form model over n_clusters from entry probabilities,
// content-state rows (self-transition, departures) and emissions.
inline hmm::Hmm trajectory_model(const std::vector<double>& entry, const std::vector<double>& dwell,
                                 const std::vector<std::vector<double>>& departures,
                                 const std::vector<std::vector<double>>& emissions) {
  const std::size_t n = entry.size();
  const std::size_t C = emissions.front().size();
  hmm::Hmm m;
  m.initial.assign(n + 1, 0.0);
  m.initial[0] = 1.0;
  m.transition = Matrix(n + 1, n + 1, 0.0);
  m.emission = Matrix(n + 1, C + 2, 0.0);
  m.emission(0, C) = 0.5;
  m.emission(0, C + 1) = 0.5;
  for (std::size_t i = 0; i < n; ++i) {
    m.transition(0, i + 1) = entry[i];
    const double self = 1.0 - 1.0 / dwell[i];
    m.transition(i + 1, i + 1) = self;
    // departures[i][0] is exit, departures[i][j] for j >= 1 is content state j
    for (std::size_t j = 0; j <= n; ++j)
      if (j != i + 1) m.transition(i + 1, j) += (1.0 - self) * departures[i][j];
    for (std::size_t c = 0; c < C; ++c) m.emission(i + 1, c) = emissions[i][c];
  }
  return m;
}

// Calibration targets: 87/13 tourist/resident split, post shares
// status .47 / nrx .19 / self-help .14 / pua .14 / mra .06, plus hand-set
// resident dwell times, entry fractions and departure patterns. These are
// generator parameters, not data.
inline SynthSpec full_preset() {
  SynthSpec spec;
  spec.cluster_names = {"status", "nrx", "self-help", "pua", "mra"};
  spec.topics_per_cluster = {12, 8, 8, 7, 5};
  spec.n_users = 2000;
  spec.tourist_fraction = 0.87;
  const std::vector<double> shares{0.47, 0.19, 0.14, 0.14, 0.06};
  const std::size_t C = shares.size();

  // Resident states: self-help, pua, mra, status, nrx.
  const std::vector<std::size_t> state_cluster{2, 3, 4, 0, 1};
  const std::vector<double> entry{0.30, 0.18, 0.13, 0.12, 0.27};
  const std::vector<double> dwell{8, 19, 10, 29, 13};
  //                                        exit   sh     pua    mra    status nrx
  const std::vector<std::vector<double>> departures{{0.38, 0.0, 0.18, 0.105, 0.105, 0.23},
                                                    {0.36, 0.36, 0.0, 0.17, 0.055, 0.055},
                                                    {0.21, 0.13, 0.13, 0.0, 0.16, 0.37},
                                                    {0.26, 0.105, 0.105, 0.19, 0.0, 0.34},
                                                    {0.39, 0.10, 0.10, 0.21, 0.20, 0.0}};

  // Occupancy of resident states mapped to clusters, then emissions
  // (1-l) q + l onehot(cluster) with q chosen so residents also emit the
  // target shares in aggregate.
  std::vector<std::vector<double>> flat(entry.size(), std::vector<double>(C, 1.0 / C));
  const auto probe = trajectory_model(entry, dwell, departures, flat);
  const auto visits = expected_visits(probe);
  const double total = sum(visits);
  std::vector<double> occupancy(C, 0.0);
  for (std::size_t s = 0; s < visits.size(); ++s) occupancy[state_cluster[s]] += visits[s] / total;
  double lambda = 0.5;
  for (std::size_t c = 0; c < C; ++c) lambda = std::min(lambda, 0.9 * shares[c] / occupancy[c]);
  std::vector<double> q(C);
  for (std::size_t c = 0; c < C; ++c) q[c] = (shares[c] - lambda * occupancy[c]) / (1.0 - lambda);
  std::vector<std::vector<double>> emissions(entry.size());
  for (std::size_t s = 0; s < entry.size(); ++s) {
    emissions[s].resize(C);
    for (std::size_t c = 0; c < C; ++c)
      emissions[s][c] = (1.0 - lambda) * q[c] + (c == state_cluster[s] ? lambda : 0.0);
  }
  spec.resident.model = trajectory_model(entry, dwell, departures, emissions);

  // Tourists: one baseline-emitting state, about 1.3 posts.
  spec.tourist.model = trajectory_model({1.0}, {1.0 / 0.75}, {{1.0, 0.0}}, {shares});
  return spec;
}

// Small three-cluster corpus for smoke tests.
inline SynthSpec micro_preset() {
  SynthSpec spec;
  spec.cluster_names = {"alpha", "beta", "gamma"};
  spec.topics_per_cluster = {3, 3, 3};
  spec.n_users = 80;
  spec.tourist_fraction = 0.7;
  const std::vector<double> shares{0.5, 0.3, 0.2};
  spec.resident.model = trajectory_model({0.5, 0.3, 0.2}, {6, 6, 6},
                                         {{0.4, 0.0, 0.3, 0.3}, {0.4, 0.3, 0.0, 0.3}, {0.4, 0.3, 0.3, 0.0}},
                                         {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}});
  spec.tourist.model = trajectory_model({1.0}, {1.0 / 0.75}, {{1.0, 0.0}}, {shares});
  return spec;
}

inline SynthSpec preset(std::string_view name) {
  if (name == "full") return full_preset();
  if (name == "micro") return micro_preset();
  throw UsageError("unknown synth preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

struct PlantedUser {
  std::string author;
  corpus::UserClass sample_class = corpus::UserClass::clean;
  trajectories::UserType type = trajectories::UserType::tourist;
  std::vector<std::size_t> states;    // content states, one per post
  std::vector<std::size_t> clusters;  // emitted cluster per post
};

struct GeneratedCorpus {
  std::vector<corpus::PostRecord> posts;    // studied forum
  std::vector<corpus::PostRecord> history;  // other forums
  topics::DocTopicMatrix matrix;
  graph::ClusterPartition planted;  // topic -> cluster
  std::vector<std::string> cluster_names;
  std::vector<PlantedUser> users;
};

inline std::string pad(std::size_t n, int width) {
  std::string s = std::to_string(n);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

inline std::string topic_word(std::size_t topic, std::size_t j) {
  return "t" + std::to_string(topic) + "w" + std::to_string(j);
}

// Generation is per user from a stream derived from (seed, user index).
inline GeneratedCorpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  const std::size_t C = spec.n_clusters();
  const std::size_t K = spec.n_topics();
  const auto topic_cluster = spec.topic_cluster();
  std::vector<std::vector<std::size_t>> cluster_topics(C);
  for (std::size_t t = 0; t < K; ++t) cluster_topics[topic_cluster[t]].push_back(t);

  GeneratedCorpus out;
  out.cluster_names = spec.cluster_names;
  out.planted.assignment = topic_cluster;
  out.matrix.topic_ids.resize(K);
  std::iota(out.matrix.topic_ids.begin(), out.matrix.topic_ids.end(), 0);
  std::vector<double> rows;

  const double span = static_cast<double>(spec.window_end - spec.window_start);
  const double gap = spec.gap_days * 86400.0;
  std::vector<double> content(C);

  for (std::size_t u = 0; u < spec.n_users; ++u) {
    Rng rng(derive_seed(spec.seed, u));
    PlantedUser user;
    user.author = "user" + pad(u, 5);
    const double r = uniform01(rng);
    user.sample_class = r < spec.special_fraction                         ? corpus::UserClass::special
                        : r < spec.special_fraction + spec.other_fraction ? corpus::UserClass::other
                                                                          : corpus::UserClass::clean;
    user.type = uniform01(rng) < spec.tourist_fraction ? trajectories::UserType::tourist
                                                       : trajectories::UserType::resident;
    const auto& model = user.type == trajectories::UserType::tourist ? spec.tourist.model : spec.resident.model;

    std::size_t s = 0;
    for (;;) {
      s = sample_index(model.transition.row(s), rng);
      if (s == 0 || user.states.size() >= spec.max_posts) break;
      for (std::size_t c = 0; c < C; ++c) content[c] = model.emission(s, c);
      user.states.push_back(s);
      user.clusters.push_back(sample_index(content, rng));
    }
    if (user.states.empty()) {  // entry row put mass on immediate exit
      user.states.push_back(1);
      for (std::size_t c = 0; c < C; ++c) content[c] = model.emission(1, c);
      user.clusters.push_back(sample_index(content, rng));
    }

    auto t = spec.window_start + static_cast<std::int64_t>(uniform01(rng) * span);
    const std::int64_t first_contact = t;
    for (std::size_t k = 0; k < user.clusters.size(); ++k) {
      if (k > 0) t += std::max<std::int64_t>(1, std::llround(sample_exponential(gap, rng)));
      const std::size_t c = user.clusters[k];
      std::vector<double> row(K, 0.0);
      const auto inside = sample_dirichlet(cluster_topics[c].size(), spec.concentration, rng);
      for (std::size_t i = 0; i < inside.size(); ++i) row[cluster_topics[c][i]] = (1.0 - spec.leakage) * inside[i];
      if (spec.leakage > 0.0) {
        std::vector<std::size_t> others;
        for (std::size_t x = 0; x < K; ++x)
          if (topic_cluster[x] != c) others.push_back(x);
        const auto spread = sample_dirichlet(others.size(), 1.0, rng);
        for (std::size_t i = 0; i < others.size(); ++i) row[others[i]] = spec.leakage * spread[i];
      }
      std::string text;
      for (std::size_t w = 0; w < spec.tokens_per_doc; ++w) {
        const std::size_t topic = sample_index(row, rng);
        const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(spec.words_per_topic));
        if (!text.empty()) text += ' ';
        text += topic_word(topic, j);
      }
      corpus::PostRecord post;
      post.id = "p" + pad(u, 5) + "x" + pad(k, 4);
      post.author = user.author;
      post.created = t;
      post.forum = spec.forum;
      post.kind = uniform01(rng) < spec.submission_fraction ? corpus::PostKind::submission : corpus::PostKind::comment;
      post.text = std::move(text);
      out.matrix.doc_ids.push_back(post.id);
      rows.insert(rows.end(), row.begin(), row.end());
      out.posts.push_back(std::move(post));
    }

    std::size_t h = 0;
    auto history_post = [&](const std::string& forum, std::int64_t when) {
      corpus::PostRecord p;
      p.id = "h" + pad(u, 5) + "x" + pad(h++, 3);
      p.author = user.author;
      p.created = when;
      p.forum = forum;
      p.kind = corpus::PostKind::comment;
      p.text = "elsewhere";
      out.history.push_back(std::move(p));
    };
    auto pick = [&](const std::vector<std::string>& list) {
      return list[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(list.size()))];
    };
    auto before = [&]() {
      return first_contact - 1 - static_cast<std::int64_t>(uniform01(rng) * 365.0 * 86400.0);
    };
    const std::size_t n_prior = 1 + static_cast<std::size_t>(uniform01(rng) * 3.0);
    if (user.sample_class == corpus::UserClass::clean) {
      for (std::size_t i = 0; i < n_prior; ++i) history_post(pick(spec.open_forums), before());
    } else if (user.sample_class == corpus::UserClass::other) {
      std::vector<std::string> blocked_elsewhere;
      for (const auto& f : spec.blocked_forums)
        if (f != spec.forum) blocked_elsewhere.push_back(f);
      history_post(blocked_elsewhere.empty() ? spec.forum : pick(blocked_elsewhere), before());
      if (uniform01(rng) < 0.5) history_post(pick(spec.open_forums), before());
    }
    if (uniform01(rng) < 0.5) history_post(pick(spec.open_forums), t + 86400);

    out.users.push_back(std::move(user));
  }
  out.matrix.weights = Matrix(out.matrix.doc_ids.size(), K);
  out.matrix.weights.data() = std::move(rows);
  // Renormalize away round-off so rows satisfy the simplex check.
  for (std::size_t d = 0; d < out.matrix.n_docs(); ++d) {
    auto row = out.matrix.weights.row(d);
    const double s = sum(row);
    for (auto& x : row) x /= s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spec file: INI-style key/value document. `preset` selects the base spec;
// scalar keys override it; `tourist_model` / `resident_model` name model files.

inline const std::vector<std::string>& spec_keys() {
  static const std::vector<std::string> keys{
      "preset", "seed", "n_users", "tourist_fraction", "special_fraction", "other_fraction",
      "concentration", "leakage", "gap_days", "tokens_per_doc", "words_per_topic", "max_posts",
      "submission_fraction", "window_start", "window_end", "forum", "tourist_model", "resident_model"};
  return keys;
}

inline void write_spec(std::ostream& out, const SynthSpec& spec, std::string_view preset_name) {
  out << "preset = " << preset_name << '\n'
      << "seed = " << spec.seed << '\n'
      << "n_users = " << spec.n_users << '\n'
      << "tourist_fraction = " << format_double(spec.tourist_fraction) << '\n'
      << "special_fraction = " << format_double(spec.special_fraction) << '\n'
      << "other_fraction = " << format_double(spec.other_fraction) << '\n'
      << "concentration = " << format_double(spec.concentration) << '\n'
      << "leakage = " << format_double(spec.leakage) << '\n'
      << "gap_days = " << format_double(spec.gap_days) << '\n'
      << "tokens_per_doc = " << spec.tokens_per_doc << '\n'
      << "words_per_topic = " << spec.words_per_topic << '\n'
      << "max_posts = " << spec.max_posts << '\n'
      << "submission_fraction = " << format_double(spec.submission_fraction) << '\n'
      << "window_start = " << spec.window_start << '\n'
      << "window_end = " << spec.window_end << '\n'
      << "forum = " << spec.forum << '\n';
}

// Truth file: author,sample_class,type,n_posts,states (space separated)
inline void write_truth(std::ostream& out, const GeneratedCorpus& g) {
  out << "author,sample_class,type,n_posts,states\n";
  for (const auto& u : g.users) {
    out << u.author << ',' << corpus::to_string(u.sample_class) << ',' << trajectories::to_string(u.type) << ','
        << u.states.size() << ',';
    for (std::size_t i = 0; i < u.states.size(); ++i) out << (i ? " " : "") << u.states[i];
    out << '\n';
  }
}

}  // namespace ideotrace::synth
