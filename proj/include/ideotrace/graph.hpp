#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ideotrace/core.hpp"
#include "ideotrace/linkage.hpp"
#include "ideotrace/topics.hpp"

namespace ideotrace::graph {

struct Edge {
  std::size_t source = 0;  // node index, source < target
  std::size_t target = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Undirected weighted graph over topics; node i is topic topic_ids[i].
struct TopicGraph {
  std::vector<int> topic_ids;
  std::vector<double> sizes;
  std::vector<Edge> edges;
  double threshold = 0.0;

  std::size_t n_nodes() const { return topic_ids.size(); }

  friend bool operator==(const TopicGraph&, const TopicGraph&) = default;
};

struct ClusterPartition {
  std::vector<std::size_t> assignment;  // node index -> cluster id
  double modularity = 0.0;
  double resolution = 1.0;

  std::size_t n_clusters() const {
    return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  }
};

// Keeps off-diagonal pairs with linkage strictly above the threshold.
inline TopicGraph build_linkage_graph(const linkage::LinkageNetwork& net, double threshold = 0.0) {
  TopicGraph g;
  g.topic_ids = net.topic_ids;
  g.sizes = net.marginal;
  g.threshold = threshold;
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::size_t j = i + 1; j < net.size(); ++j) {
      const double r = net.linkage(i, j);
      if (std::isfinite(r) && r > threshold) g.edges.push_back({i, j, r});
    }
  return g;
}

// Newman modularity with resolution:
//   Q = sum_c [ in_c / 2m - gamma (tot_c / 2m)^2 ]
// where in_c counts internal edge weight twice and tot_c is the strength sum.
inline double modularity(const TopicGraph& g, const std::vector<std::size_t>& assignment,
                         double resolution = 1.0) {
  if (assignment.size() != g.n_nodes()) throw DataError("modularity: assignment size mismatch");
  double two_m = 0.0;
  for (const auto& e : g.edges) two_m += 2.0 * e.weight;
  if (two_m <= 0.0) return 0.0;
  std::map<std::size_t, double> in, tot;
  for (const auto& e : g.edges) {
    tot[assignment[e.source]] += e.weight;
    tot[assignment[e.target]] += e.weight;
    if (assignment[e.source] == assignment[e.target]) in[assignment[e.source]] += 2.0 * e.weight;
  }
  double q = 0.0;
  for (const auto& [c, t] : tot) {
    const double frac = t / two_m;
    q += in[c] / two_m - resolution * frac * frac;
  }
  return q;
}

namespace detail {

struct WeightedGraph {
  // adjacency[u] holds (v, w) with v != u; self_loops[u] is the loop weight
  // counted once (it contributes 2w to the strength of u).
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency;
  std::vector<double> self_loops;

  std::size_t size() const { return adjacency.size(); }

  double strength(std::size_t u) const {
    double s = 2.0 * self_loops[u];
    for (const auto& [v, w] : adjacency[u]) s += w;
    return s;
  }
};

// Local moving phase. Returns true if any node changed community.
inline bool move_nodes(const WeightedGraph& g, std::vector<std::size_t>& community, double two_m,
                       double resolution, Rng& rng) {
  const std::size_t n = g.size();
  std::vector<double> strength(n), tot(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    strength[u] = g.strength(u);
    tot[community[u]] += strength[u];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> link(n, 0.0);
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> touched;
  bool moved_any = false;
  for (;;) {
    bool moved = false;
    for (std::size_t u : order) {
      const std::size_t own = community[u];
      touched.clear();
      for (const auto& [v, w] : g.adjacency[u]) {
        const std::size_t c = community[v];
        if (!seen[c]) {
          seen[c] = 1;
          touched.push_back(c);
        }
        link[c] += w;
      }
      tot[own] -= strength[u];
      // Gain of inserting u into c, up to a constant shared by all c.
      auto gain = [&](std::size_t c) {
        return link[c] - resolution * tot[c] * strength[u] / two_m;
      };
      std::size_t best = own;
      double best_gain = gain(own);
      std::sort(touched.begin(), touched.end());
      for (std::size_t c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + 1e-12) {
          best_gain = gc;
          best = c;
        }
      }
      tot[best] += strength[u];
      for (std::size_t c : touched) {
        link[c] = 0.0;
        seen[c] = 0;
      }
      if (best != own) {
        community[u] = best;
        moved = true;
        moved_any = true;
      }
    }
    if (!moved) break;
  }
  return moved_any;
}

// Relabels communities 0..k-1 in order of their lowest member.
inline std::size_t compact(std::vector<std::size_t>& community) {
  std::unordered_map<std::size_t, std::size_t> relabel;
  for (auto& c : community) {
    auto [it, inserted] = relabel.try_emplace(c, relabel.size());
    c = it->second;
  }
  return relabel.size();
}

inline WeightedGraph aggregate(const WeightedGraph& g, const std::vector<std::size_t>& community,
                               std::size_t k) {
  WeightedGraph out;
  out.adjacency.resize(k);
  out.self_loops.assign(k, 0.0);
  std::vector<std::map<std::size_t, double>> acc(k);
  for (std::size_t u = 0; u < g.size(); ++u) {
    const std::size_t cu = community[u];
    out.self_loops[cu] += g.self_loops[u];
    for (const auto& [v, w] : g.adjacency[u]) {
      const std::size_t cv = community[v];
      if (cu == cv)
        out.self_loops[cu] += 0.5 * w;  // each internal edge is seen from both ends
      else
        acc[cu][cv] += w;
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (const auto& [d, w] : acc[c]) out.adjacency[c].emplace_back(d, w);
  return out;
}

}  // namespace detail

// Two-phase Louvain: local moving in a seeded random order, then aggregation
// of communities into nodes, repeated until no node moves.
inline ClusterPartition louvain_partition(const TopicGraph& g, double resolution = 1.0,
                                          std::uint64_t seed = 1) {
  const std::size_t n = g.n_nodes();
  ClusterPartition result;
  result.resolution = resolution;
  result.assignment.resize(n);
  std::iota(result.assignment.begin(), result.assignment.end(), 0);
  if (g.edges.empty()) {
    result.modularity = 0.0;
    return result;
  }

  detail::WeightedGraph level;
  level.adjacency.resize(n);
  level.self_loops.assign(n, 0.0);
  double two_m = 0.0;
  for (const auto& e : g.edges) {
    if (!(e.weight > 0.0)) throw DataError("louvain_partition: edge weights must be positive");
    level.adjacency[e.source].emplace_back(e.target, e.weight);
    level.adjacency[e.target].emplace_back(e.source, e.weight);
    two_m += 2.0 * e.weight;
  }

  Rng rng(seed);
  std::vector<std::size_t> node_to_cluster = result.assignment;
  for (;;) {
    std::vector<std::size_t> community(level.size());
    std::iota(community.begin(), community.end(), 0);
    const bool moved = detail::move_nodes(level, community, two_m, resolution, rng);
    if (!moved) break;
    const std::size_t k = detail::compact(community);
    for (auto& c : node_to_cluster) c = community[c];
    if (k == level.size()) break;
    level = detail::aggregate(level, community, k);
  }
  detail::compact(node_to_cluster);
  result.assignment = std::move(node_to_cluster);
  result.modularity = modularity(g, result.assignment, resolution);
  return result;
}

// Best of several seeded restarts by modularity; ties keep the earliest.
inline ClusterPartition louvain_best_of(const TopicGraph& g, std::size_t restarts, double resolution,
                                        std::uint64_t seed) {
  ClusterPartition best = louvain_partition(g, resolution, derive_seed(seed, 0));
  for (std::size_t r = 1; r < restarts; ++r) {
    auto p = louvain_partition(g, resolution, derive_seed(seed, r));
    if (p.modularity > best.modularity) best = std::move(p);
  }
  return best;
}

// Dominant topic per row (lowest column on ties); its cluster gets the document.
inline std::map<std::size_t, double> cluster_shares(const topics::DocTopicMatrix& m,
                                                    const ClusterPartition& partition) {
  if (partition.assignment.size() != m.n_topics())
    throw DataError("cluster_shares: partition does not cover the matrix topics");
  std::map<std::size_t, double> shares;
  if (m.n_docs() == 0) return shares;
  for (std::size_t d = 0; d < m.n_docs(); ++d)
    shares[partition.assignment[argmax(m.weights.row(d))]] += 1.0;
  for (auto& [c, s] : shares) s /= static_cast<double>(m.n_docs());
  return shares;
}

// ---------------------------------------------------------------------------
// Export

enum class Format { graphml, dot, json };

inline Format parse_format(std::string_view name) {
  if (name == "graphml") return Format::graphml;
  if (name == "dot") return Format::dot;
  if (name == "json") return Format::json;
  throw UsageError("unknown graph format '" + std::string(name) + "'");
}

namespace detail {

inline std::string cluster_color(std::size_t c) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[c % std::size(palette)];
}

}  // namespace detail

inline void export_graph(std::ostream& out, const TopicGraph& g, const ClusterPartition& p,
                         Format format) {
  if (p.assignment.size() != g.n_nodes())
    throw DataError("export_graph: partition does not cover the graph nodes");
  switch (format) {
    case Format::graphml: {
      out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
             "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
             "  <key id=\"size\" for=\"node\" attr.name=\"size\" attr.type=\"double\"/>\n"
             "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n"
             "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n"
             "  <graph id=\"linkage\" edgedefault=\"undirected\">\n";
      for (std::size_t i = 0; i < g.n_nodes(); ++i)
        out << "    <node id=\"t" << g.topic_ids[i] << "\"><data key=\"size\">"
            << format_double(g.sizes[i]) << "</data><data key=\"cluster\">" << p.assignment[i]
            << "</data></node>\n";
      for (const auto& e : g.edges)
        out << "    <edge source=\"t" << g.topic_ids[e.source] << "\" target=\"t"
            << g.topic_ids[e.target] << "\"><data key=\"weight\">" << format_double(e.weight)
            << "</data></edge>\n";
      out << "  </graph>\n</graphml>\n";
      break;
    }
    case Format::dot: {
      out << "graph linkage {\n";
      for (std::size_t i = 0; i < g.n_nodes(); ++i)
        out << "  t" << g.topic_ids[i] << " [size=" << format_double(g.sizes[i])
            << ", cluster=" << p.assignment[i] << ", style=filled, fillcolor=\""
            << detail::cluster_color(p.assignment[i]) << "\"];\n";
      for (const auto& e : g.edges)
        out << "  t" << g.topic_ids[e.source] << " -- t" << g.topic_ids[e.target]
            << " [weight=" << format_double(e.weight) << "];\n";
      out << "}\n";
      break;
    }
    case Format::json: {
      nlohmann::json j;
      j["nodes"] = nlohmann::json::array();
      for (std::size_t i = 0; i < g.n_nodes(); ++i)
        j["nodes"].push_back({{"id", g.topic_ids[i]}, {"size", g.sizes[i]}, {"cluster", p.assignment[i]}});
      j["edges"] = nlohmann::json::array();
      for (const auto& e : g.edges)
        j["edges"].push_back({{"source", g.topic_ids[e.source]},
                              {"target", g.topic_ids[e.target]},
                              {"weight", e.weight}});
      j["threshold"] = g.threshold;
      j["modularity"] = p.modularity;
      j["resolution"] = p.resolution;
      out << j.dump(1) << '\n';
      break;
    }
  }
}

inline std::pair<TopicGraph, ClusterPartition> import_graph_json(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("nodes") || !j.contains("edges"))
    throw DataError("graph JSON: expected nodes and edges arrays");
  TopicGraph g;
  ClusterPartition p;
  std::unordered_map<int, std::size_t> index;
  for (const auto& node : j["nodes"]) {
    const int id = node.at("id").get<int>();
    index[id] = g.topic_ids.size();
    g.topic_ids.push_back(id);
    g.sizes.push_back(node.at("size").get<double>());
    p.assignment.push_back(node.at("cluster").get<std::size_t>());
  }
  for (const auto& e : j["edges"])
    g.edges.push_back({index.at(e.at("source").get<int>()), index.at(e.at("target").get<int>()),
                       e.at("weight").get<double>()});
  g.threshold = j.value("threshold", 0.0);
  p.modularity = j.value("modularity", 0.0);
  p.resolution = j.value("resolution", 1.0);
  return {std::move(g), std::move(p)};
}

// Partition file: topic,cluster,label
inline void write_partition(std::ostream& out, const std::vector<int>& topic_ids,
                            const ClusterPartition& p, const std::vector<std::string>& labels) {
  out << "topic,cluster,label\n";
  for (std::size_t i = 0; i < topic_ids.size(); ++i)
    out << topic_ids[i] << ',' << p.assignment[i] << ',' << labels.at(p.assignment[i]) << '\n';
}

struct LabeledPartition {
  std::vector<int> topic_ids;
  ClusterPartition partition;
  std::vector<std::string> labels;  // cluster id -> label
};

inline LabeledPartition read_partition(std::istream& in) {
  LabeledPartition lp;
  std::map<std::size_t, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || lineno == 1) continue;
    auto f = split(line, ',');
    if (f.size() != 3) throw DataError("partition file line " + std::to_string(lineno) + ": expected 3 fields");
    lp.topic_ids.push_back(static_cast<int>(parse_int(f[0])));
    const auto c = static_cast<std::size_t>(parse_int(f[1]));
    lp.partition.assignment.push_back(c);
    labels[c] = f[2];
  }
  lp.labels.resize(lp.partition.n_clusters());
  for (std::size_t c = 0; c < lp.labels.size(); ++c)
    lp.labels[c] = labels.contains(c) ? labels[c] : "c" + std::to_string(c);
  return lp;
}

// Names each cluster by the most common user-supplied topic label among its
// members (ties: alphabetical); unlabeled clusters become "c<id>".
inline std::vector<std::string> label_clusters(const std::vector<int>& topic_ids,
                                               const ClusterPartition& p,
                                               const std::map<int, std::string>& topic_labels) {
  std::vector<std::map<std::string, std::size_t>> votes(p.n_clusters());
  for (std::size_t i = 0; i < topic_ids.size(); ++i) {
    auto it = topic_labels.find(topic_ids[i]);
    if (it != topic_labels.end()) ++votes[p.assignment[i]][it->second];
  }
  std::vector<std::string> labels(p.n_clusters());
  for (std::size_t c = 0; c < labels.size(); ++c) {
    std::size_t best = 0;
    labels[c] = "c" + std::to_string(c);
    for (const auto& [label, n] : votes[c])
      if (n > best) {
        best = n;
        labels[c] = label;
      }
  }
  return labels;
}

}  // namespace ideotrace::graph
