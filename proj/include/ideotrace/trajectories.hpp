#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ideotrace/core.hpp"
#include "ideotrace/corpus.hpp"
#include "ideotrace/graph.hpp"
#include "ideotrace/hmm.hpp"
#include "ideotrace/topics.hpp"

// Per-user posting trajectories and the analytics built on a fitted
// trajectory HMM: state profiles, tourist/resident segmentation, transition
// report and conditional residence.
namespace ideotrace::trajectories {

inline constexpr double kSecondsPerMonth = 30.44 * 86400.0;
inline constexpr std::size_t kEnterExitState = 0;

enum class Alphabet { cluster, topic };

struct PostObservation {
  std::int64_t created = 0;
  std::string doc_id;
  std::size_t symbol = 0;   // content symbol (cluster or topic column)
  std::size_t cluster = 0;  // cluster of the dominant topic
};

struct UserTrajectory {
  std::string author;
  std::vector<PostObservation> posts;

  std::int64_t entry() const { return posts.front().created; }
  std::int64_t exit() const { return posts.back().created; }
  double residence_months() const {
    return static_cast<double>(exit() - entry()) / kSecondsPerMonth;
  }
};

// Sequences are ENTER, content symbols..., EXIT. Content symbols occupy
// 0..n_content-1; ENTER is n_content and EXIT is n_content+1.
struct ObservationSet {
  hmm::SymbolSequenceSet data;
  std::vector<UserTrajectory> users;  // aligned with data.sequences
  Alphabet alphabet = Alphabet::cluster;
  std::size_t n_content = 0;
  std::vector<std::size_t> symbol_cluster;  // content symbol -> cluster
  std::vector<std::string> cluster_labels;
  std::size_t excluded_users = 0;

  std::size_t n_clusters() const { return cluster_labels.size(); }
  std::size_t enter_symbol() const { return n_content; }
  std::size_t exit_symbol() const { return n_content + 1; }
  std::size_t n_symbols() const { return n_content + 2; }

  // Share of content posts per cluster.
  std::vector<double> baseline() const {
    std::vector<double> b(n_clusters(), 0.0);
    double n = 0.0;
    for (const auto& u : users)
      for (const auto& p : u.posts) {
        b[p.cluster] += 1.0;
        n += 1.0;
      }
    if (n > 0.0)
      for (auto& x : b) x /= n;
    return b;
  }
};

struct ObservationOptions {
  Alphabet alphabet = Alphabet::cluster;
  std::unordered_set<std::string> skip_docs;  // documents without usable text
};

// One sequence per clean-sample user with at least one usable post, users in
// name order, posts by (timestamp, id). Each post maps to its dominant topic
// (lowest column on ties) and that topic's cluster.
inline ObservationSet build_observation_sequences(const std::vector<corpus::PostRecord>& posts,
                                                  const topics::DocTopicMatrix& matrix,
                                                  const graph::ClusterPartition& partition,
                                                  const std::vector<std::string>& cluster_labels,
                                                  const corpus::UserSample& sample,
                                                  const ObservationOptions& options = {}) {
  if (partition.assignment.size() != matrix.n_topics())
    throw DataError("observation sequences: partition does not cover the matrix topics");
  ObservationSet obs;
  obs.alphabet = options.alphabet;
  obs.cluster_labels = cluster_labels;
  if (obs.cluster_labels.size() < partition.n_clusters()) {
    for (std::size_t c = obs.cluster_labels.size(); c < partition.n_clusters(); ++c)
      obs.cluster_labels.push_back("c" + std::to_string(c));
  }
  if (options.alphabet == Alphabet::cluster) {
    obs.n_content = obs.cluster_labels.size();
    obs.symbol_cluster.resize(obs.n_content);
    std::iota(obs.symbol_cluster.begin(), obs.symbol_cluster.end(), 0);
  } else {
    obs.n_content = matrix.n_topics();
    obs.symbol_cluster = partition.assignment;
  }
  for (std::size_t i = 0; i < obs.n_content; ++i)
    obs.data.alphabet.push_back(options.alphabet == Alphabet::cluster
                                    ? obs.cluster_labels[i]
                                    : "t" + std::to_string(matrix.topic_ids[i]));
  obs.data.alphabet.push_back("ENTER");
  obs.data.alphabet.push_back("EXIT");

  const auto index = matrix.doc_index();
  std::map<std::string, std::vector<const corpus::PostRecord*>> by_author;
  for (const auto& p : posts)
    if (sample.clean.contains(p.author)) by_author[p.author].push_back(&p);

  for (const auto& author : sample.clean) {
    UserTrajectory user{author, {}};
    auto it = by_author.find(author);
    if (it != by_author.end()) {
      auto list = it->second;
      std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
        return a->created != b->created ? a->created < b->created : a->id < b->id;
      });
      for (const auto* p : list) {
        if (options.skip_docs.contains(p->id)) continue;
        auto row = index.find(p->id);
        if (row == index.end()) continue;
        const std::size_t topic = argmax(matrix.weights.row(row->second));
        const std::size_t cluster = partition.assignment[topic];
        const std::size_t symbol = options.alphabet == Alphabet::cluster ? cluster : topic;
        user.posts.push_back({p->created, p->id, symbol, cluster});
      }
    }
    if (user.posts.empty()) {
      ++obs.excluded_users;
      continue;
    }
    hmm::Sequence seq;
    seq.reserve(user.posts.size() + 2);
    seq.push_back(obs.enter_symbol());
    for (const auto& p : user.posts) seq.push_back(p.symbol);
    seq.push_back(obs.exit_symbol());
    obs.data.sequences.push_back(std::move(seq));
    obs.users.push_back(std::move(user));
  }
  return obs;
}

// State 0 emits only ENTER/EXIT and starts every sequence; all other states
// emit only content symbols.
inline hmm::Structure trajectory_structure(std::size_t n_states, std::size_t n_content) {
  const std::size_t M = n_content + 2;
  hmm::Structure st;
  st.fixed_initial.assign(n_states, 0.0);
  st.fixed_initial[kEnterExitState] = 1.0;
  st.emission_allowed.assign(n_states * M, 0);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t m = 0; m < M; ++m)
      st.emission_allowed[s * M + m] = (s == kEnterExitState) == (m >= n_content);
  return st;
}

// ---------------------------------------------------------------------------

struct TouristCriteria {
  double dwell_threshold = 2.0;  // posts
  double tv_epsilon = 0.1;       // total variation from the cluster baseline
};

struct StateProfile {
  std::size_t state = 0;
  std::size_t n_posts = 0;
  bool defined = false;
  std::vector<std::size_t> counts;      // per cluster
  std::vector<double> distribution;     // P(cluster | state)
  std::vector<double> enrichment;       // P(cluster | state) / P(cluster) - 1
  std::size_t label_cluster = 0;        // max enrichment
};

struct TrajectoryModel {
  hmm::Hmm hmm;
  std::vector<hmm::CandidateScore> aic_table;
  std::size_t selected = 0;
  std::vector<std::vector<std::size_t>> paths;  // decoded, per user, incl. boundary positions
  std::vector<std::string> labels;              // per state
  std::vector<bool> tourist;                    // per state
  std::vector<double> baseline;                 // cluster distribution over content posts
  std::vector<StateProfile> profiles;           // per state (state 0 undefined)
  TouristCriteria criteria;

  std::size_t n_states() const { return hmm.n_states(); }
};

// Empirical cluster distribution among posts decoded to each state.
inline std::vector<StateProfile> profile_states(const std::vector<std::vector<std::size_t>>& paths,
                                                std::size_t n_states, const ObservationSet& obs) {
  const std::size_t C = obs.n_clusters();
  const auto baseline = obs.baseline();
  std::vector<StateProfile> out(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    out[s].state = s;
    out[s].counts.assign(C, 0);
  }
  for (std::size_t u = 0; u < obs.users.size(); ++u) {
    const auto& path = paths[u];
    for (std::size_t k = 0; k < obs.users[u].posts.size(); ++k) {
      auto& prof = out[path[k + 1]];
      ++prof.counts[obs.users[u].posts[k].cluster];
      ++prof.n_posts;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& prof : out) {
    prof.distribution.assign(C, nan);
    prof.enrichment.assign(C, nan);
    if (prof.n_posts == 0) continue;
    prof.defined = true;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      prof.distribution[c] = static_cast<double>(prof.counts[c]) / static_cast<double>(prof.n_posts);
      if (baseline[c] > 0.0) prof.enrichment[c] = prof.distribution[c] / baseline[c] - 1.0;
      if (prof.enrichment[c] > best) {
        best = prof.enrichment[c];
        prof.label_cluster = c;
      }
    }
  }
  return out;
}

// Emission of a content state aggregated to clusters.
inline std::vector<double> state_cluster_emission(const hmm::Hmm& model, std::size_t state,
                                                  const ObservationSet& obs) {
  std::vector<double> e(obs.n_clusters(), 0.0);
  for (std::size_t m = 0; m < obs.n_content; ++m) e[obs.symbol_cluster[m]] += model.emission(state, m);
  const double s = sum(e);
  if (s > 0.0)
    for (auto& x : e) x /= s;
  return e;
}

inline double total_variation(std::span<const double> a, std::span<const double> b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

// Decodes every user, profiles states, marks tourist states and assigns labels.
inline TrajectoryModel assemble_trajectory_model(hmm::Hmm model, const ObservationSet& obs,
                                                 const TouristCriteria& criteria = {}) {
  TrajectoryModel tm;
  tm.hmm = std::move(model);
  tm.criteria = criteria;
  tm.baseline = obs.baseline();
  const std::size_t S = tm.hmm.n_states();
  tm.paths.reserve(obs.data.sequences.size());
  for (const auto& seq : obs.data.sequences) {
    auto path = hmm::viterbi_decode(tm.hmm, seq);
    if (path.front() != kEnterExitState || path.back() != kEnterExitState)
      throw DataError("decoded path does not start and end in the enter/exit state");
    tm.paths.push_back(std::move(path));
  }
  tm.profiles = profile_states(tm.paths, S, obs);
  tm.tourist.assign(S, false);
  tm.labels.assign(S, "");
  tm.labels[kEnterExitState] = "enter/exit";
  std::size_t n_tourist = 0;
  for (std::size_t s = 1; s < S; ++s) {
    const auto e = state_cluster_emission(tm.hmm, s, obs);
    tm.tourist[s] = hmm::expected_dwell(tm.hmm, s) <= criteria.dwell_threshold &&
                    total_variation(e, tm.baseline) <= criteria.tv_epsilon;
    if (tm.tourist[s]) ++n_tourist;
  }
  std::size_t tourist_no = 0;
  for (std::size_t s = 1; s < S; ++s) {
    if (tm.tourist[s])
      tm.labels[s] = n_tourist > 1 ? "tourist " + std::to_string(++tourist_no) : "tourist";
    else if (tm.profiles[s].defined)
      tm.labels[s] = obs.cluster_labels[tm.profiles[s].label_cluster];
    else
      tm.labels[s] = "undefined";
  }
  return tm;
}

struct TrajectoryFitOptions {
  std::vector<std::size_t> candidates{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::size_t restarts = 10;
  std::uint64_t seed = 1;
  hmm::FitOptions fit;
  TouristCriteria criteria;
};

// AIC selection over candidate state counts (each at least 2) under the
// enter/exit structure, followed by decoding and labeling.
inline TrajectoryModel fit_trajectory_model(const ObservationSet& obs, const TrajectoryFitOptions& opt) {
  std::vector<std::size_t> candidates;
  for (auto s : opt.candidates)
    if (s >= 2) candidates.push_back(s);
  if (candidates.empty())
    throw DataError("trajectory model needs a candidate with at least 2 states (enter/exit plus content)");
  if (obs.data.sequences.empty()) throw DataError("trajectory model: no user sequences");
  const std::size_t C = obs.n_content;
  auto sel = hmm::select_states(obs.data, obs.n_symbols(), candidates, opt.restarts, opt.seed, opt.fit,
                                [C](std::size_t S) { return trajectory_structure(S, C); });
  auto tm = assemble_trajectory_model(std::move(sel.best), obs, opt.criteria);
  tm.aic_table = std::move(sel.table);
  tm.selected = sel.best_index;
  return tm;
}

// Draws trajectories from a model in trajectory form: ENTER from state 0,
// content emissions until the chain returns to state 0, then EXIT.
inline hmm::Samples sample_trajectories(const hmm::Hmm& model, std::size_t n_content, std::size_t n,
                                        std::uint64_t seed, std::size_t max_posts = 100000) {
  hmm::Samples out;
  out.data.sequences.resize(n);
  out.states.resize(n);
  std::vector<double> content(n_content);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    auto& seq = out.data.sequences[i];
    auto& st = out.states[i];
    seq.push_back(n_content);
    st.push_back(kEnterExitState);
    std::size_t s = kEnterExitState;
    for (;;) {
      s = sample_index(model.transition.row(s), rng);
      if (s == kEnterExitState) break;
      if (st.size() > max_posts) {
        ++out.truncated;
        break;
      }
      for (std::size_t m = 0; m < n_content; ++m) content[m] = model.emission(s, m);
      seq.push_back(sample_index(content, rng));
      st.push_back(s);
    }
    seq.push_back(n_content + 1);
    st.push_back(kEnterExitState);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Population segmentation

enum class UserType { tourist, resident };

inline std::string_view to_string(UserType t) { return t == UserType::tourist ? "tourist" : "resident"; }

struct ClassSummary {
  std::size_t n_users = 0;
  std::size_t total_posts = 0;
  double median_posts = std::numeric_limits<double>::quiet_NaN();
  double mean_posts = std::numeric_limits<double>::quiet_NaN();
  std::map<std::size_t, std::size_t> histogram;  // posts -> users
};

struct Populations {
  std::vector<UserType> type;  // per user
  ClassSummary tourist;
  ClassSummary resident;

  double tourist_share() const {
    const double n = static_cast<double>(tourist.n_users + resident.n_users);
    return n > 0 ? static_cast<double>(tourist.n_users) / n : std::numeric_limits<double>::quiet_NaN();
  }
};

// Tourist iff every decoded content state of the user is a tourist state.
inline Populations segment_populations(const TrajectoryModel& tm, const ObservationSet& obs) {
  Populations pop;
  std::vector<double> tourist_posts, resident_posts;
  for (std::size_t u = 0; u < obs.users.size(); ++u) {
    const auto& path = tm.paths[u];
    bool all_tourist = true;
    for (std::size_t k = 1; k + 1 < path.size(); ++k)
      if (!tm.tourist[path[k]]) all_tourist = false;
    const auto type = all_tourist ? UserType::tourist : UserType::resident;
    pop.type.push_back(type);
    const std::size_t n = obs.users[u].posts.size();
    auto& cls = all_tourist ? pop.tourist : pop.resident;
    ++cls.n_users;
    cls.total_posts += n;
    ++cls.histogram[n];
    (all_tourist ? tourist_posts : resident_posts).push_back(static_cast<double>(n));
  }
  auto finish = [](ClassSummary& c, std::vector<double>& v) {
    if (v.empty()) return;
    c.median_posts = median(v);
    c.mean_posts = static_cast<double>(c.total_posts) / static_cast<double>(c.n_users);
  };
  finish(pop.tourist, tourist_posts);
  finish(pop.resident, resident_posts);
  return pop;
}

// ---------------------------------------------------------------------------
// Transition report

struct TransitionRow {
  std::size_t state = 0;
  std::string label;
  bool visited = false;
  double fraction_first = std::numeric_limits<double>::quiet_NaN();
  double fraction_overall = std::numeric_limits<double>::quiet_NaN();
  double dwell_expected = std::numeric_limits<double>::quiet_NaN();
  double dwell_empirical = std::numeric_limits<double>::quiet_NaN();
  double residence_months = std::numeric_limits<double>::quiet_NaN();
  std::size_t modal_users = 0;
  std::vector<std::pair<std::size_t, double>> next;  // state -> probability, 0 means exit
};

// Most frequent content state; ties go to the state visited first.
inline std::size_t modal_state(const std::vector<std::size_t>& path, std::size_t n_states) {
  std::vector<std::size_t> count(n_states, 0), first(n_states, path.size());
  for (std::size_t k = 1; k + 1 < path.size(); ++k) {
    ++count[path[k]];
    first[path[k]] = std::min(first[path[k]], k);
  }
  std::size_t best = 0;
  for (std::size_t s = 1; s < n_states; ++s)
    if (count[s] > count[best] || (count[s] == count[best] && count[s] > 0 && first[s] < first[best]))
      best = s;
  return best;
}

inline std::size_t first_content_state(const std::vector<std::size_t>& path) { return path[1]; }

inline std::vector<TransitionRow> transition_report(const TrajectoryModel& tm, const ObservationSet& obs,
                                                    const Populations& pop) {
  const std::size_t S = tm.n_states();
  std::vector<std::size_t> first_count(S, 0), post_count(S, 0), runs(S, 0), run_posts(S, 0),
      visits(S, 0);
  Matrix leave(S, S, 0.0);
  std::vector<std::vector<double>> residence(S);
  std::size_t residents = 0, resident_posts = 0;

  for (std::size_t u = 0; u < obs.users.size(); ++u) {
    const auto& path = tm.paths[u];
    const bool resident = pop.type[u] == UserType::resident;
    if (resident) {
      ++residents;
      ++first_count[first_content_state(path)];
    }
    for (std::size_t k = 1; k + 1 < path.size(); ++k) {
      const std::size_t s = path[k];
      ++visits[s];
      if (resident) {
        ++post_count[s];
        ++resident_posts;
      }
      if (path[k - 1] != s) ++runs[s];
      ++run_posts[s];
      if (path[k + 1] != s) leave(s, path[k + 1]) += 1.0;
    }
    residence[modal_state(path, S)].push_back(obs.users[u].residence_months());
  }

  std::vector<TransitionRow> rows;
  for (std::size_t s = 1; s < S; ++s) {
    TransitionRow row;
    row.state = s;
    row.label = tm.labels[s];
    row.visited = visits[s] > 0;
    if (row.visited) {
      if (residents > 0) row.fraction_first = static_cast<double>(first_count[s]) / residents;
      if (resident_posts > 0) row.fraction_overall = static_cast<double>(post_count[s]) / resident_posts;
      row.dwell_expected = hmm::expected_dwell(tm.hmm, s);
      row.dwell_empirical = static_cast<double>(run_posts[s]) / static_cast<double>(runs[s]);
      row.modal_users = residence[s].size();
      row.residence_months = median(residence[s]);
      const double departures = sum(leave.row(s));
      for (std::size_t t = 0; t < S; ++t)
        if (leave(s, t) > 0.0) row.next.emplace_back(t, leave(s, t) / departures);
      std::stable_sort(row.next.begin(), row.next.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Conditional residence

struct ConditionalResidence {
  std::size_t from_state = 0;
  std::size_t to_state = 0;
  std::size_t n_base = 0;
  double median_base = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_conditional = 0;
  double median_conditional = std::numeric_limits<double>::quiet_NaN();

  double uplift() const { return median_conditional - median_base; }
};

// Base: users whose first content state is from_state. Conditional: those
// whose decoded path contains to_state at or after that first position.
inline ConditionalResidence conditional_residence(const TrajectoryModel& tm, const ObservationSet& obs,
                                                  std::size_t from_state, std::size_t to_state) {
  if (from_state == 0 || to_state == 0 || from_state >= tm.n_states() || to_state >= tm.n_states())
    throw DataError("conditional_residence: states must be content states of the model");
  ConditionalResidence r{from_state, to_state};
  std::vector<double> base, cond;
  for (std::size_t u = 0; u < obs.users.size(); ++u) {
    const auto& path = tm.paths[u];
    if (first_content_state(path) != from_state) continue;
    const double months = obs.users[u].residence_months();
    base.push_back(months);
    if (std::find(path.begin() + 1, path.end() - 1, to_state) != path.end() - 1) cond.push_back(months);
  }
  r.n_base = base.size();
  r.n_conditional = cond.size();
  r.median_base = median(base);
  r.median_conditional = median(cond);
  return r;
}

// ---------------------------------------------------------------------------
// Reports. Column names are a stable surface.

namespace detail {

inline std::string num(double x) { return std::isfinite(x) ? format_double(x) : ""; }

inline nlohmann::json jnum(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

}  // namespace detail

struct Report {
  std::vector<StateProfile> profiles;
  std::vector<TransitionRow> transitions;
  Populations populations;
  std::vector<ConditionalResidence> conditional;  // every ordered pair of content states
};

inline Report build_report(const TrajectoryModel& tm, const ObservationSet& obs) {
  Report r;
  r.profiles = tm.profiles;
  r.populations = segment_populations(tm, obs);
  r.transitions = transition_report(tm, obs, r.populations);
  for (std::size_t a = 1; a < tm.n_states(); ++a)
    for (std::size_t b = 1; b < tm.n_states(); ++b) r.conditional.push_back(conditional_residence(tm, obs, a, b));
  return r;
}

inline void write_profile_csv(std::ostream& out, const Report& r, const TrajectoryModel& tm,
                              const ObservationSet& obs) {
  out << "state,label,n_posts,cluster,cluster_label,p_cluster_given_state,baseline,enrichment\n";
  for (const auto& p : r.profiles) {
    if (p.state == kEnterExitState) continue;
    for (std::size_t c = 0; c < obs.n_clusters(); ++c)
      out << p.state << ',' << tm.labels[p.state] << ',' << p.n_posts << ',' << c << ','
          << obs.cluster_labels[c] << ',' << detail::num(p.distribution[c]) << ','
          << detail::num(tm.baseline[c]) << ',' << detail::num(p.enrichment[c]) << '\n';
  }
}

inline std::string next_states_text(const TransitionRow& row, const TrajectoryModel& tm) {
  std::string s;
  for (const auto& [t, p] : row.next) {
    if (!s.empty()) s += ';';
    s += (t == kEnterExitState ? std::string("exit") : std::to_string(t) + ":" + tm.labels[t]) + "=" +
         format_double(p);
  }
  return s;
}

inline void write_transitions_csv(std::ostream& out, const Report& r, const TrajectoryModel& tm) {
  out << "state,label,tourist,fraction_first,fraction_overall,dwell_expected,dwell_empirical,"
         "residence_months,modal_users,next_states\n";
  for (const auto& row : r.transitions)
    out << row.state << ',' << row.label << ',' << (tm.tourist[row.state] ? 1 : 0) << ','
        << detail::num(row.fraction_first) << ',' << detail::num(row.fraction_overall) << ','
        << detail::num(row.dwell_expected) << ',' << detail::num(row.dwell_empirical) << ','
        << detail::num(row.residence_months) << ',' << row.modal_users << ',' << next_states_text(row, tm)
        << '\n';
}

inline void write_populations_csv(std::ostream& out, const Report& r, const TrajectoryModel& tm) {
  const auto& pop = r.populations;
  const double users = static_cast<double>(pop.tourist.n_users + pop.resident.n_users);
  const double posts = static_cast<double>(pop.tourist.total_posts + pop.resident.total_posts);
  out << "class,n_users,user_share,total_posts,post_share,median_posts,mean_posts,dwell_threshold,tv_epsilon\n";
  for (auto type : {UserType::tourist, UserType::resident}) {
    const auto& c = type == UserType::tourist ? pop.tourist : pop.resident;
    out << to_string(type) << ',' << c.n_users << ',' << detail::num(c.n_users / users) << ','
        << c.total_posts << ',' << detail::num(c.total_posts / posts) << ',' << detail::num(c.median_posts)
        << ',' << detail::num(c.mean_posts) << ',' << format_double(tm.criteria.dwell_threshold) << ','
        << format_double(tm.criteria.tv_epsilon) << '\n';
  }
}

inline void write_histogram_csv(std::ostream& out, const Report& r) {
  out << "class,posts,n_users\n";
  for (auto type : {UserType::tourist, UserType::resident}) {
    const auto& c = type == UserType::tourist ? r.populations.tourist : r.populations.resident;
    for (const auto& [posts, n] : c.histogram) out << to_string(type) << ',' << posts << ',' << n << '\n';
  }
}

inline void write_conditional_csv(std::ostream& out, const Report& r, const TrajectoryModel& tm) {
  out << "from_state,from_label,to_state,to_label,n_base,median_base_months,n_conditional,"
         "median_conditional_months,uplift_months\n";
  for (const auto& c : r.conditional)
    out << c.from_state << ',' << tm.labels[c.from_state] << ',' << c.to_state << ',' << tm.labels[c.to_state]
        << ',' << c.n_base << ',' << detail::num(c.median_base) << ',' << c.n_conditional << ','
        << detail::num(c.median_conditional) << ',' << detail::num(c.uplift()) << '\n';
}

inline nlohmann::json report_json(const Report& r, const TrajectoryModel& tm, const ObservationSet& obs) {
  using nlohmann::json;
  json j;
  j["profile"] = json::array();
  for (const auto& p : r.profiles) {
    if (p.state == kEnterExitState) continue;
    json row{{"state", p.state}, {"label", tm.labels[p.state]}, {"n_posts", p.n_posts}, {"defined", p.defined}};
    for (std::size_t c = 0; c < obs.n_clusters(); ++c)
      row["clusters"].push_back({{"cluster", c},
                                 {"cluster_label", obs.cluster_labels[c]},
                                 {"p_cluster_given_state", detail::jnum(p.distribution[c])},
                                 {"baseline", detail::jnum(tm.baseline[c])},
                                 {"enrichment", detail::jnum(p.enrichment[c])}});
    j["profile"].push_back(row);
  }
  j["transitions"] = json::array();
  for (const auto& t : r.transitions) {
    json next = json::array();
    for (const auto& [s, p] : t.next)
      next.push_back({{"state", s}, {"label", s == 0 ? std::string("exit") : tm.labels[s]}, {"p", p}});
    j["transitions"].push_back({{"state", t.state},
                                {"label", t.label},
                                {"tourist", static_cast<bool>(tm.tourist[t.state])},
                                {"fraction_first", detail::jnum(t.fraction_first)},
                                {"fraction_overall", detail::jnum(t.fraction_overall)},
                                {"dwell_expected", detail::jnum(t.dwell_expected)},
                                {"dwell_empirical", detail::jnum(t.dwell_empirical)},
                                {"residence_months", detail::jnum(t.residence_months)},
                                {"modal_users", t.modal_users},
                                {"next_states", next}});
  }
  auto cls = [](const ClassSummary& c) {
    json h = json::array();
    for (const auto& [posts, n] : c.histogram) h.push_back({posts, n});
    return json{{"n_users", c.n_users},
                {"total_posts", c.total_posts},
                {"median_posts", detail::jnum(c.median_posts)},
                {"mean_posts", detail::jnum(c.mean_posts)},
                {"histogram", h}};
  };
  j["populations"] = {{"tourist", cls(r.populations.tourist)},
                      {"resident", cls(r.populations.resident)},
                      {"tourist_share", detail::jnum(r.populations.tourist_share())},
                      {"dwell_threshold", tm.criteria.dwell_threshold},
                      {"tv_epsilon", tm.criteria.tv_epsilon}};
  j["conditional"] = json::array();
  for (const auto& c : r.conditional)
    j["conditional"].push_back({{"from_state", c.from_state},
                                {"from_label", tm.labels[c.from_state]},
                                {"to_state", c.to_state},
                                {"to_label", tm.labels[c.to_state]},
                                {"n_base", c.n_base},
                                {"median_base_months", detail::jnum(c.median_base)},
                                {"n_conditional", c.n_conditional},
                                {"median_conditional_months", detail::jnum(c.median_conditional)}});
  return j;
}

// Decoded paths: author<TAB>space-separated states.
inline void write_paths(std::ostream& out, const TrajectoryModel& tm, const ObservationSet& obs) {
  for (std::size_t u = 0; u < obs.users.size(); ++u) {
    out << obs.users[u].author << '\t';
    for (std::size_t k = 0; k < tm.paths[u].size(); ++k) out << (k ? " " : "") << tm.paths[u][k];
    out << '\n';
  }
}

inline void write_aic_csv(std::ostream& out, const TrajectoryModel& tm) {
  out << "n_states,log_likelihood,free_params,aic,iterations,converged,selected\n";
  for (std::size_t i = 0; i < tm.aic_table.size(); ++i) {
    const auto& r = tm.aic_table[i];
    out << r.n_states << ',' << format_double(r.log_likelihood) << ',' << r.free_params << ','
        << format_double(r.aic) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
        << (i == tm.selected ? 1 : 0) << '\n';
  }
}

inline void write_states_csv(std::ostream& out, const TrajectoryModel& tm) {
  out << "state,label,tourist,dwell_expected,n_posts\n";
  for (std::size_t s = 0; s < tm.n_states(); ++s)
    out << s << ',' << tm.labels[s] << ',' << (tm.tourist[s] ? 1 : 0) << ','
        << detail::num(hmm::expected_dwell(tm.hmm, s)) << ',' << tm.profiles[s].n_posts << '\n';
}

}  // namespace ideotrace::trajectories
