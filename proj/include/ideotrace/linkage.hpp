#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ideotrace/core.hpp"
#include "ideotrace/topics.hpp"

namespace ideotrace::linkage {

enum class Level { text, user };

inline std::string_view to_string(Level level) { return level == Level::text ? "text" : "user"; }

inline constexpr double kUnlinked = -std::numeric_limits<double>::infinity();

// Topic co-occurrence network. Units are documents (text level) or users.
//   marginal[i] = (1/N) sum_k w_i(k)
//   joint(i,j)  = (1/N) sum_k w_i(k) w_j(k)
//   linkage(i,j) = log2(joint / (marginal_i marginal_j))   [bits]
// Pairs with zero joint mass carry kUnlinked. Rows of topics with zero
// marginal are NaN and flagged in `defined`.
struct LinkageNetwork {
  Level level = Level::text;
  std::size_t n_units = 0;
  std::vector<int> topic_ids;
  std::vector<double> marginal;
  Matrix joint;
  Matrix linkage;
  std::vector<bool> defined;
  std::vector<std::string> warnings;

  std::size_t size() const { return marginal.size(); }
};

// Builds the network from unit rows. Only the upper triangle is evaluated and
// then mirrored, so joint and linkage are exactly symmetric.
inline LinkageNetwork network_from_rows(const Matrix& rows, const std::vector<int>& topic_ids,
                                        Level level) {
  const std::size_t N = rows.rows();
  const std::size_t T = rows.cols();
  if (N < 2 || T < 2) throw DataError("linkage needs at least 2 units and 2 topics");

  LinkageNetwork net;
  net.level = level;
  net.n_units = N;
  net.topic_ids = topic_ids;
  net.marginal.assign(T, 0.0);
  net.joint = Matrix(T, T, 0.0);
  for (std::size_t k = 0; k < N; ++k) {
    auto w = rows.row(k);
    for (std::size_t i = 0; i < T; ++i) {
      const double wi = w[i];
      net.marginal[i] += wi;
      if (wi == 0.0) continue;
      for (std::size_t j = i; j < T; ++j) net.joint(i, j) += wi * w[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(N);
  for (auto& p : net.marginal) p *= inv_n;

  double total = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i; j < T; ++j) {
      net.joint(i, j) *= inv_n;
      net.joint(j, i) = net.joint(i, j);
      total += (i == j ? 1.0 : 2.0) * net.joint(i, j);
    }
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DataError("linkage: joint distribution sums to " + format_double(total) +
                    "; unit rows must lie on the simplex");

  net.defined.assign(T, true);
  for (std::size_t i = 0; i < T; ++i) {
    if (net.marginal[i] <= 0.0) {
      net.defined[i] = false;
      net.warnings.push_back("topic " + std::to_string(topic_ids[i]) +
                             " has zero mass; its linkage is undefined");
    }
  }

  net.linkage = Matrix(T, T, 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i; j < T; ++j) {
      double r;
      if (!net.defined[i] || !net.defined[j])
        r = nan;
      else if (net.joint(i, j) <= 0.0)
        r = kUnlinked;
      else
        r = std::log2(net.joint(i, j) / (net.marginal[i] * net.marginal[j]));
      net.linkage(i, j) = r;
      net.linkage(j, i) = r;
    }
  }
  return net;
}

inline LinkageNetwork text_linkage(const topics::DocTopicMatrix& m) {
  return network_from_rows(m.weights, m.topic_ids, Level::text);
}

// Per-user topic distribution (mean of the user's rows), ordered by author name.
inline Matrix user_rows(const topics::DocTopicMatrix& m,
                        const std::unordered_map<std::string, std::string>& authorship) {
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t d = 0; d < m.n_docs(); ++d) {
    auto it = authorship.find(m.doc_ids[d]);
    if (it == authorship.end()) throw DataError("user_linkage: no author for document " + m.doc_ids[d]);
    auto& [sums, count] = acc[it->second];
    if (sums.empty()) sums.assign(m.n_topics(), 0.0);
    auto row = m.weights.row(d);
    for (std::size_t t = 0; t < row.size(); ++t) sums[t] += row[t];
    ++count;
  }
  Matrix rows(acc.size(), m.n_topics());
  std::size_t u = 0;
  for (const auto& [author, entry] : acc) {
    for (std::size_t t = 0; t < m.n_topics(); ++t)
      rows(u, t) = entry.first[t] / static_cast<double>(entry.second);
    ++u;
  }
  return rows;
}

inline LinkageNetwork user_linkage(const topics::DocTopicMatrix& m,
                                   const std::unordered_map<std::string, std::string>& authorship) {
  return network_from_rows(user_rows(m, authorship), m.topic_ids, Level::user);
}

// Joint-weighted average linkage over the renormalized joint, in bits.
// Unlinked and undefined entries carry no joint mass and contribute nothing.
inline double mutual_information(const LinkageNetwork& net) {
  const std::size_t T = net.size();
  double total = 0.0;
  for (double p : net.joint.data()) total += p;
  if (total <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const double p = net.joint(i, j);
      const double r = net.linkage(i, j);
      if (p <= 0.0 || !std::isfinite(r)) continue;
      mi += (p / total) * r;
    }
  }
  return mi;
}

// Pearson correlation of finite off-diagonal linkage values shared by two
// networks over the same topics. NaN when fewer than two pairs qualify.
inline double linkage_correlation(const LinkageNetwork& a, const LinkageNetwork& b) {
  if (a.size() != b.size()) throw DataError("linkage_correlation: networks differ in size");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (std::isfinite(a.linkage(i, j)) && std::isfinite(b.linkage(i, j))) {
        xs.push_back(a.linkage(i, j));
        ys.push_back(b.linkage(i, j));
      }
  const std::size_t n = xs.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = sum(xs) / n, my = sum(ys) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// Network file:
//   level,<text|user>
//   T,<topics>
//   N,<units>
//   marginal,<topic>,<p>          (T lines)
//   i,j,p_ij,R_ij                 (header, then upper triangle incl. diagonal)
inline void write_network(std::ostream& out, const LinkageNetwork& net) {
  out << "level," << to_string(net.level) << '\n';
  out << "T," << net.size() << '\n';
  out << "N," << net.n_units << '\n';
  for (std::size_t i = 0; i < net.size(); ++i)
    out << "marginal," << net.topic_ids[i] << ',' << format_double(net.marginal[i]) << '\n';
  out << "i,j,p_ij,R_ij\n";
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::size_t j = i; j < net.size(); ++j)
      out << net.topic_ids[i] << ',' << net.topic_ids[j] << ',' << format_double(net.joint(i, j))
          << ',' << format_double(net.linkage(i, j)) << '\n';
}

inline LinkageNetwork read_network(std::istream& in) {
  LinkageNetwork net;
  std::string line;
  auto next = [&](std::string_view what) {
    if (!std::getline(in, line)) throw DataError("network file truncated before " + std::string(what));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return split(line, ',');
  };
  auto f = next("level");
  if (f.size() != 2 || f[0] != "level") throw DataError("network file: bad level line");
  net.level = f[1] == "user" ? Level::user : Level::text;
  f = next("T");
  const auto T = static_cast<std::size_t>(parse_int(f.at(1)));
  f = next("N");
  net.n_units = static_cast<std::size_t>(parse_int(f.at(1)));
  std::unordered_map<int, std::size_t> col;
  for (std::size_t i = 0; i < T; ++i) {
    f = next("marginal");
    if (f.size() != 3 || f[0] != "marginal") throw DataError("network file: bad marginal line");
    const int id = static_cast<int>(parse_int(f[1]));
    col[id] = i;
    net.topic_ids.push_back(id);
    net.marginal.push_back(parse_double(f[2]));
  }
  next("pair header");
  net.joint = Matrix(T, T);
  net.linkage = Matrix(T, T);
  for (std::size_t n = 0; n < T * (T + 1) / 2; ++n) {
    f = next("pair row");
    if (f.size() != 4) throw DataError("network file: bad pair row");
    const auto i = col.at(static_cast<int>(parse_int(f[0])));
    const auto j = col.at(static_cast<int>(parse_int(f[1])));
    net.joint(i, j) = net.joint(j, i) = parse_double(f[2]);
    net.linkage(i, j) = net.linkage(j, i) = parse_double(f[3]);
  }
  net.defined.resize(T);
  for (std::size_t i = 0; i < T; ++i) net.defined[i] = net.marginal[i] > 0.0;
  return net;
}

}  // namespace ideotrace::linkage
