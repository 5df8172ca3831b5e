#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "ideotrace/core.hpp"
#include "ideotrace/corpus.hpp"
#include "ideotrace/graph.hpp"
#include "ideotrace/hmm.hpp"
#include "ideotrace/linkage.hpp"
#include "ideotrace/synth.hpp"
#include "ideotrace/topics.hpp"
#include "ideotrace/trajectories.hpp"

// Stage runner behind the command line tool. Every stage reads files from
// the output directory (or configured inputs), writes its artifacts there,
// and records a manifest_<command>.json.
namespace ideotrace::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kArtifactVersion = "1";
inline constexpr const char* kOutputDirEnv = "IDEOTRACE_OUTPUT_DIR";

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> list{"ingest", "sample",       "topics", "linkage", "cluster",
                                             "trajectories", "report", "synth",  "pipeline"};
  return list;
}

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> list{"ingest", "sample", "topics", "linkage",
                                             "cluster", "trajectories", "report"};
  return list;
}

// ---------------------------------------------------------------------------
// Config

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d{
      {"paths.archive", ""},
      {"paths.history", ""},
      {"paths.doc_topics", ""},
      {"paths.drop", ""},
      {"paths.blocked", ""},
      {"paths.topic_labels", ""},
      {"paths.stoplist", ""},
      {"paths.output", "out"},
      {"ingest.schema_id", "id"},
      {"ingest.schema_author", "author"},
      {"ingest.schema_created", "created_utc,created"},
      {"ingest.schema_forum", "subreddit,forum"},
      {"ingest.schema_kind", "kind"},
      {"ingest.schema_text", "text,body,selftext"},
      {"ingest.schema_title", "title"},
      {"ingest.bigram_min_count", "10"},
      {"ingest.bigram_threshold", "4"},
      {"sample.start", "1970-01-01"},
      {"sample.end", "2099-12-31"},
      {"sample.forum", "TheRedPill"},
      {"topics.k", "100"},
      {"topics.alpha", "0"},
      {"topics.beta", "0.01"},
      {"topics.sweeps", "1000"},
      {"topics.burn_in", "200"},
      {"topics.top_words", "50"},
      {"topics.exemplar_min_weight", "0.5"},
      {"topics.exemplar_min_tokens", "20"},
      {"topics.exemplar_count", "20"},
      {"cluster.level", "text"},
      {"cluster.threshold", "0"},
      {"cluster.resolution", "1"},
      {"cluster.restarts", "10"},
      {"cluster.format", "graphml"},
      {"trajectories.alphabet", "cluster"},
      {"trajectories.candidates", "2-12"},
      {"trajectories.restarts", "10"},
      {"trajectories.tol", "1e-6"},
      {"trajectories.max_iter", "1000"},
      {"report.dwell_threshold", "2"},
      {"report.tv_epsilon", "0.1"},
      {"run.seed", "1"},
      {"synth.preset", "micro"},
      {"synth.n_users", "0"},
      {"synth.spec", ""},
  };
  return d;
}

class Config {
 public:
  Config() : values_(config_defaults()) {}

  // INI file; relative paths resolve against the file's directory.
  static Config load(const fs::path& file) {
    Config c;
    if (!fs::exists(file)) throw DataError("config file not found: " + file.string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(file.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw UsageError("unknown config key '" + section + "' (keys live in sections)");
      for (const auto& [key, value] : body) c.set(section + "." + key, value.data());
    }
    c.base_ = fs::absolute(file).parent_path();
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = trim(value);
  }

  // "section.key=value"
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + assignment + "' is not of the form key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("config key not registered: " + key);
    return it->second;
  }

  double real(const std::string& key) const {
    try {
      return parse_double(str(key));
    } catch (const DataError&) {
      throw UsageError("config key '" + key + "': not a number: '" + str(key) + "'");
    }
  }

  std::int64_t integer(const std::string& key) const {
    try {
      return parse_int(str(key));
    } catch (const DataError&) {
      throw UsageError("config key '" + key + "': not an integer: '" + str(key) + "'");
    }
  }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw UsageError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed() const {
    try {
      const auto& s = str("run.seed");
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) throw DataError(s);
      return v;
    } catch (const DataError&) {
      throw UsageError("config key 'run.seed': not an unsigned integer: '" + str("run.seed") + "'");
    }
  }

  // Empty when unset.
  fs::path path(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty()) return {};
    fs::path p(v);
    return p.is_absolute() ? p : base_ / p;
  }

  // Environment override first, then paths.output.
  fs::path output_dir() const {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return fs::absolute(env);
    return path("paths.output");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  fs::path base_ = fs::current_path();
};

// ---------------------------------------------------------------------------
// Helpers

inline std::string sha256_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// "YYYY-MM-DD" (whole day) or epoch seconds. end_of_day picks 23:59:59.
inline std::int64_t parse_time(const std::string& key, const std::string& text, bool end_of_day) {
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    try {
      const auto y = static_cast<int>(parse_int(text.substr(0, 4)));
      const auto m = static_cast<unsigned>(parse_int(text.substr(5, 2)));
      const auto d = static_cast<unsigned>(parse_int(text.substr(8, 2)));
      const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
      if (!ymd.ok()) throw DataError(text);
      const auto days = std::chrono::sys_days{ymd}.time_since_epoch();
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(days).count();
      return secs + (end_of_day ? 86399 : 0);
    } catch (const DataError&) {
      throw UsageError("config key '" + key + "': bad date '" + text + "'");
    }
  }
  try {
    return parse_int(text);
  } catch (const DataError&) {
    throw UsageError("config key '" + key + "': expected YYYY-MM-DD or epoch seconds, got '" + text + "'");
  }
}

// "2-12" or "2,3,5"
inline std::vector<std::size_t> parse_candidates(const std::string& text) {
  std::vector<std::size_t> out;
  try {
    for (const auto& part : split(text, ',')) {
      const auto t = trim(part);
      if (t.empty()) continue;
      const auto dash = t.find('-');
      if (dash == std::string::npos) {
        out.push_back(static_cast<std::size_t>(parse_int(t)));
        continue;
      }
      const auto lo = parse_int(t.substr(0, dash)), hi = parse_int(t.substr(dash + 1));
      if (lo < 1 || hi < lo) throw DataError(t);
      for (auto s = lo; s <= hi; ++s) out.push_back(static_cast<std::size_t>(s));
    }
  } catch (const DataError&) {
    throw UsageError("config key 'trajectories.candidates': bad list '" + text + "'");
  }
  if (out.empty()) throw UsageError("config key 'trajectories.candidates' is empty");
  return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& part : split(text, ','))
    if (auto t = trim(part); !t.empty()) out.push_back(t);
  return out;
}

// One item per line; blank lines and '#' comments ignored.
inline std::set<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty() && t[0] != '#') out.insert(t);
  }
  return out;
}

// CSV topic,label with a header row.
inline std::map<int, std::string> read_topic_labels(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  std::map<int, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (lineno == 1 || t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos)
      throw DataError(file.string() + " line " + std::to_string(lineno) + ": expected topic,label");
    out[static_cast<int>(parse_int(t.substr(0, comma)))] = trim(t.substr(comma + 1));
  }
  return out;
}

inline corpus::ArchiveSchema schema_from(const Config& cfg) {
  corpus::ArchiveSchema s;
  s.id = split_list(cfg.str("ingest.schema_id"));
  s.author = split_list(cfg.str("ingest.schema_author"));
  s.created = split_list(cfg.str("ingest.schema_created"));
  s.forum = split_list(cfg.str("ingest.schema_forum"));
  s.kind = split_list(cfg.str("ingest.schema_kind"));
  s.text = split_list(cfg.str("ingest.schema_text"));
  s.title = split_list(cfg.str("ingest.schema_title"));
  return s;
}

// Holds <output>/.lock for the lifetime of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : file_(dir / ".lock") {
    fs::create_directories(dir);
    FILE* f = std::fopen(file_.c_str(), "wx");
    if (!f)
      throw DataError("output directory is locked by another run: " + file_.string() +
                      " (delete it if no run is active)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(file_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path file_;
};

struct Artifact {
  std::string file;
  std::string producer;
  std::string what;
};

inline const std::map<std::string, Artifact>& artifacts() {
  static const std::map<std::string, Artifact> a{
      {"posts", {"posts.jsonl", "ingest", "ingested posts"}},
      {"history", {"history.jsonl", "ingest", "ingested history"}},
      {"tokens", {"tokens.tsv", "ingest", "token file"}},
      {"sample", {"sample.tsv", "sample", "user sample"}},
      {"doc_topics", {"doc_topics.csv", "topics", "doc-topic matrix"}},
      {"network_text", {"network_text.csv", "linkage", "text linkage network"}},
      {"network_user", {"network_user.csv", "linkage", "user linkage network"}},
      {"partition", {"partition.csv", "cluster", "cluster partition"}},
      {"model", {"trajectory_model.txt", "trajectories", "trajectory model"}},
  };
  return a;
}

// ---------------------------------------------------------------------------

class Runner {
 public:
  explicit Runner(Config cfg, std::ostream& log = std::cout)
      : cfg_(std::move(cfg)), out_(cfg_.output_dir()), log_(log) {}

  const fs::path& output_dir() const { return out_; }

  void execute(const std::string& command) {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
      throw UsageError("unknown command '" + command + "'");
    OutputLock lock(out_);
    if (command == "pipeline") {
      for (const auto& stage : stage_order()) run_stage(stage);
    } else {
      run_stage(command);
    }
  }

 private:
  struct Manifest {
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<fs::path> outputs;
    nlohmann::json seeds = nlohmann::json::object();
    nlohmann::json stats = nlohmann::json::object();
  };

  Config cfg_;
  fs::path out_;
  std::ostream& log_;
  Manifest m_;

  void run_stage(const std::string& stage) {
    m_ = Manifest{};
    if (stage == "ingest") ingest();
    else if (stage == "sample") sample();
    else if (stage == "topics") topics();
    else if (stage == "linkage") linkage();
    else if (stage == "cluster") cluster();
    else if (stage == "trajectories") trajectories();
    else if (stage == "report") report();
    else if (stage == "synth") synth();
    write_manifest(stage);
  }

  std::uint64_t stage_seed(const std::string& stage) {
    const auto s = derive_seed(cfg_.seed(), stage);
    m_.seeds[stage] = s;
    return s;
  }

  // Configured input file; must exist when set.
  fs::path input(const std::string& key, bool required) {
    const auto p = cfg_.path(key);
    if (p.empty()) {
      if (required) throw DataError("config key '" + key + "' is required for this command");
      return p;
    }
    if (!fs::is_regular_file(p)) throw DataError("config key '" + key + "': file not found: " + p.string());
    m_.inputs.emplace_back(key, p);
    return p;
  }

  // Upstream artifact; missing ones name the command that produces them.
  fs::path upstream(const std::string& name) {
    const auto& a = artifacts().at(name);
    const auto p = out_ / a.file;
    if (!fs::is_regular_file(p))
      throw DataError("missing artifact: " + a.what + " (run '" + a.producer + "' first)");
    m_.inputs.emplace_back(name, p);
    return p;
  }

  std::ifstream open(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    return in;
  }

  void emit(const std::string& file, const std::function<void(std::ostream&)>& body) {
    const auto p = out_ / file;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    body(out);
    out.flush();
    if (!out) throw DataError("write failed: " + p.string());
    m_.outputs.push_back(p);
  }

  std::string rel(const fs::path& p) const {
    auto r = p.lexically_proximate(out_);
    return r.generic_string();
  }

  void write_manifest(const std::string& stage) {
    nlohmann::json j;
    j["command"] = stage;
    j["version"] = kArtifactVersion;
    j["root_seed"] = cfg_.seed();
    j["seeds"] = m_.seeds;
    j["parameters"] = cfg_.values();
    j["inputs"] = nlohmann::json::array();
    for (const auto& [key, p] : m_.inputs)
      j["inputs"].push_back({{"name", key}, {"path", rel(p)}, {"sha256", sha256_file(p)}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& p : m_.outputs) j["outputs"].push_back({{"path", rel(p)}, {"sha256", sha256_file(p)}});
    j["stats"] = m_.stats;
    std::ofstream out(out_ / ("manifest_" + stage + ".json"), std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
  }

  std::vector<corpus::PostRecord> load_posts(const fs::path& p) {
    auto in = open(p);
    return corpus::parse_archive(in).posts;
  }

  // --- stages --------------------------------------------------------------

  void ingest() {
    const auto schema = schema_from(cfg_);
    const auto archive = input("paths.archive", true);
    const auto history = input("paths.history", false);
    const auto stop_path = input("paths.stoplist", false);

    auto in = open(archive);
    auto parsed = corpus::parse_archive(in, schema);
    for (const auto& d : parsed.diagnostics) log_ << "ingest: skipped: " << d << '\n';
    emit("posts.jsonl", [&](std::ostream& o) { corpus::write_archive(o, parsed.posts); });

    std::vector<corpus::PostRecord> hist;
    if (!history.empty()) {
      auto hin = open(history);
      auto h = corpus::parse_archive(hin, schema);
      m_.stats["history_skipped"] = h.skipped;
      hist = std::move(h.posts);
    }
    emit("history.jsonl", [&](std::ostream& o) { corpus::write_archive(o, hist); });

    const auto stoplist = stop_path.empty() ? corpus::default_stoplist() : read_lines(stop_path);
    corpus::PreprocessOptions opt;
    opt.bigram_min_count = cfg_.count("ingest.bigram_min_count");
    opt.bigram_threshold = cfg_.real("ingest.bigram_threshold");
    const auto tokens = corpus::preprocess(parsed.posts, stoplist, opt);
    emit("tokens.tsv", [&](std::ostream& o) { corpus::write_tokens(o, tokens); });
    emit("vocab.tsv", [&](std::ostream& o) { corpus::write_vocabulary(o, tokens); });

    m_.stats["posts"] = parsed.posts.size();
    m_.stats["skipped"] = parsed.skipped;
    m_.stats["history_posts"] = hist.size();
    m_.stats["vocabulary"] = tokens.vocabulary.size();
    m_.stats["bigrams"] = tokens.bigrams.size();
    log_ << "ingest: " << parsed.posts.size() << " posts (" << parsed.skipped << " skipped), " << hist.size()
         << " history posts, vocabulary " << tokens.vocabulary.size() << '\n';
  }

  void sample() {
    const auto posts = load_posts(upstream("posts"));
    const auto history = load_posts(upstream("history"));
    std::set<std::string> blocked;
    if (const auto b = input("paths.blocked", false); !b.empty()) blocked = read_lines(b);
    blocked.insert(cfg_.str("sample.forum"));
    corpus::TimeWindow window{parse_time("sample.start", cfg_.str("sample.start"), false),
                              parse_time("sample.end", cfg_.str("sample.end"), true)};
    std::vector<corpus::PostRecord> target;
    for (const auto& p : posts)
      if (p.forum == cfg_.str("sample.forum")) target.push_back(p);
    const auto s = corpus::build_clean_sample(target, history, blocked, window);
    emit("sample.tsv", [&](std::ostream& o) { corpus::write_sample(o, s); });
    m_.stats["users"] = s.all.size();
    m_.stats["clean"] = s.clean.size();
    m_.stats["special"] = s.special.size();
    m_.stats["other"] = s.all.size() - s.clean.size() - s.special.size();
    log_ << "sample: " << s.all.size() << " newcomers, " << s.clean.size() << " clean, " << s.special.size()
         << " special-purpose\n";
  }

  void topics() {
    auto tin = open(upstream("tokens"));
    const auto tokens = corpus::read_tokens(tin);
    topics::DocTopicMatrix matrix;
    if (const auto ext = input("paths.doc_topics", false); !ext.empty()) {
      auto in = open(ext);
      matrix = topics::import_doc_topics(in);
      m_.stats["source"] = "imported";
    } else {
      corpus::TokenizedCorpus nonempty;
      nonempty.vocabulary = tokens.vocabulary;
      for (const auto& d : tokens.documents)
        if (!d.second.empty()) nonempty.documents.push_back(d);
      topics::GibbsOptions opt;
      opt.n_topics = cfg_.count("topics.k");
      opt.alpha = cfg_.real("topics.alpha");
      opt.beta = cfg_.real("topics.beta");
      opt.sweeps = cfg_.count("topics.sweeps");
      opt.burn_in = cfg_.count("topics.burn_in");
      opt.seed = stage_seed("topics");
      auto fit = topics::fit_topics(nonempty, opt);
      matrix = std::move(fit.doc_topics);
      emit("topic_words.txt",
           [&](std::ostream& o) { topics::write_topic_words(o, fit.topic_words, cfg_.count("topics.top_words")); });
      m_.stats["source"] = "gibbs";
    }
    if (const auto drop = input("paths.drop", false); !drop.empty()) {
      auto in = open(drop);
      auto filtered = topics::filter_topics(matrix, topics::read_topic_list(in));
      if (!filtered.zero_mass_rows.empty())
        log_ << "topics: " << filtered.zero_mass_rows.size() << " documents had all mass on dropped topics\n";
      m_.stats["zero_mass_rows"] = filtered.zero_mass_rows.size();
      matrix = std::move(filtered.matrix);
    }
    emit("doc_topics.csv", [&](std::ostream& o) { topics::write_doc_topics(o, matrix); });

    topics::ExemplarOptions ex;
    ex.min_weight = cfg_.real("topics.exemplar_min_weight");
    ex.min_tokens = cfg_.count("topics.exemplar_min_tokens");
    ex.n = cfg_.count("topics.exemplar_count");
    emit("exemplars.txt", [&](std::ostream& o) {
      for (int t : matrix.topic_ids) topics::write_exemplars(o, t, topics::topic_exemplars(matrix, tokens, t, ex));
    });
    m_.stats["documents"] = matrix.n_docs();
    m_.stats["topics"] = matrix.n_topics();
    log_ << "topics: " << matrix.n_docs() << " documents x " << matrix.n_topics() << " topics\n";
  }

  void linkage() {
    auto in = open(upstream("doc_topics"));
    const auto matrix = topics::import_doc_topics(in);
    const auto posts = load_posts(upstream("posts"));
    std::unordered_map<std::string, std::string> authorship;
    for (const auto& p : posts) authorship[p.id] = p.author;

    const auto text = linkage::text_linkage(matrix);
    const auto user = linkage::user_linkage(matrix, authorship);
    emit("network_text.csv", [&](std::ostream& o) { linkage::write_network(o, text); });
    emit("network_user.csv", [&](std::ostream& o) { linkage::write_network(o, user); });

    auto summary = [](const linkage::LinkageNetwork& n) {
      return nlohmann::json{{"units", n.n_units},
                            {"topics", n.size()},
                            {"mutual_information_bits", linkage::mutual_information(n)},
                            {"warnings", n.warnings}};
    };
    nlohmann::json j{{"text", summary(text)}, {"user", summary(user)}};
    const double r = linkage::linkage_correlation(text, user);
    j["text_user_correlation"] = std::isfinite(r) ? nlohmann::json(r) : nlohmann::json();
    emit("linkage_summary.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    for (const auto& w : text.warnings) log_ << "linkage: " << w << '\n';
    log_ << "linkage: MI text " << format_double(linkage::mutual_information(text)) << " bits, user "
         << format_double(linkage::mutual_information(user)) << " bits\n";
  }

  void cluster() {
    const auto level = cfg_.str("cluster.level");
    if (level != "text" && level != "user") throw UsageError("config key 'cluster.level' must be text or user");
    const auto format = graph::parse_format(cfg_.str("cluster.format"));
    auto in = open(upstream("network_" + level));
    const auto net = linkage::read_network(in);
    const auto g = graph::build_linkage_graph(net, cfg_.real("cluster.threshold"));
    if (g.edges.empty()) {
      log_ << "cluster: warning: linkage graph has no edges, every topic is its own cluster\n";
      m_.stats["warnings"] = nlohmann::json::array({"linkage graph has no edges"});
    }
    const auto p = graph::louvain_best_of(g, cfg_.count("cluster.restarts"), cfg_.real("cluster.resolution"),
                                          stage_seed("cluster"));
    std::map<int, std::string> topic_labels;
    if (const auto lf = input("paths.topic_labels", false); !lf.empty()) topic_labels = read_topic_labels(lf);
    const auto labels = graph::label_clusters(g.topic_ids, p, topic_labels);
    emit("partition.csv", [&](std::ostream& o) { graph::write_partition(o, g.topic_ids, p, labels); });

    auto min = open(upstream("doc_topics"));
    const auto matrix = topics::import_doc_topics(min);
    if (matrix.topic_ids != g.topic_ids) throw DataError("cluster: network and doc-topic matrix disagree on topics");
    const auto shares = graph::cluster_shares(matrix, p);
    emit("cluster_shares.csv", [&](std::ostream& o) {
      o << "cluster,label,share\n";
      for (std::size_t c = 0; c < labels.size(); ++c)
        o << c << ',' << labels[c] << ',' << format_double(shares.contains(c) ? shares.at(c) : 0.0) << '\n';
    });
    const std::string ext = cfg_.str("cluster.format");
    emit("graph." + ext, [&](std::ostream& o) { graph::export_graph(o, g, p, format); });
    m_.stats["clusters"] = p.n_clusters();
    m_.stats["modularity"] = p.modularity;
    m_.stats["edges"] = g.edges.size();
    log_ << "cluster: " << p.n_clusters() << " clusters, modularity " << format_double(p.modularity) << '\n';
  }

  trajectories::ObservationSet observations() {
    const auto posts = load_posts(upstream("posts"));
    auto min = open(upstream("doc_topics"));
    const auto matrix = topics::import_doc_topics(min);
    auto pin = open(upstream("partition"));
    const auto lp = graph::read_partition(pin);
    if (lp.topic_ids != matrix.topic_ids)
      throw DataError("trajectories: partition and doc-topic matrix disagree on topics");
    auto sin = open(upstream("sample"));
    const auto s = corpus::read_sample(sin);
    trajectories::ObservationOptions opt;
    const auto& alpha = cfg_.str("trajectories.alphabet");
    if (alpha == "cluster") opt.alphabet = trajectories::Alphabet::cluster;
    else if (alpha == "topic") opt.alphabet = trajectories::Alphabet::topic;
    else throw UsageError("config key 'trajectories.alphabet' must be cluster or topic");
    return trajectories::build_observation_sequences(posts, matrix, lp.partition, lp.labels, s, opt);
  }

  trajectories::TouristCriteria criteria() const {
    return {cfg_.real("report.dwell_threshold"), cfg_.real("report.tv_epsilon")};
  }

  void trajectories() {
    const auto obs = observations();
    trajectories::TrajectoryFitOptions opt;
    opt.candidates = parse_candidates(cfg_.str("trajectories.candidates"));
    opt.restarts = cfg_.count("trajectories.restarts");
    opt.fit.tol = cfg_.real("trajectories.tol");
    opt.fit.max_iter = cfg_.count("trajectories.max_iter");
    opt.seed = stage_seed("trajectories");
    opt.criteria = criteria();
    const auto tm = trajectories::fit_trajectory_model(obs, opt);
    for (const auto& row : tm.aic_table)
      if (row.free_params > obs.data.total_symbols())
        log_ << "trajectories: warning: " << row.n_states << " states have " << row.free_params
             << " free parameters for " << obs.data.total_symbols() << " symbols\n";
    emit("trajectory_model.txt", [&](std::ostream& o) { hmm::write_model(o, tm.hmm); });
    emit("trajectory_states.csv", [&](std::ostream& o) { trajectories::write_states_csv(o, tm); });
    emit("trajectory_aic.csv", [&](std::ostream& o) { trajectories::write_aic_csv(o, tm); });
    emit("trajectory_paths.tsv", [&](std::ostream& o) { trajectories::write_paths(o, tm, obs); });
    m_.stats["users"] = obs.users.size();
    m_.stats["excluded_users"] = obs.excluded_users;
    m_.stats["states"] = tm.n_states();
    log_ << "trajectories: " << obs.users.size() << " users, " << tm.n_states() << " states selected by AIC\n";
  }

  void report() {
    auto model_in = open(upstream("model"));
    auto model = hmm::read_model(model_in);
    const auto obs = observations();
    if (model.n_symbols() != obs.n_symbols())
      throw DataError("report: trajectory model alphabet does not match the observations");
    const auto tm = trajectories::assemble_trajectory_model(std::move(model), obs, criteria());
    const auto r = trajectories::build_report(tm, obs);
    emit("report_profile.csv", [&](std::ostream& o) { trajectories::write_profile_csv(o, r, tm, obs); });
    emit("report_transitions.csv", [&](std::ostream& o) { trajectories::write_transitions_csv(o, r, tm); });
    emit("report_populations.csv", [&](std::ostream& o) { trajectories::write_populations_csv(o, r, tm); });
    emit("report_conditional.csv", [&](std::ostream& o) { trajectories::write_conditional_csv(o, r, tm); });
    emit("report_histogram.csv", [&](std::ostream& o) { trajectories::write_histogram_csv(o, r); });
    emit("report.json", [&](std::ostream& o) { o << trajectories::report_json(r, tm, obs).dump(2) << '\n'; });
    m_.stats["tourist_share"] = r.populations.tourist_share();
    log_ << "report: tourist share " << format_double(r.populations.tourist_share()) << " of "
         << obs.users.size() << " users\n";
  }

  // --- synth ---------------------------------------------------------------

  synth::SynthSpec synth_spec(std::string& preset_name) {
    preset_name = cfg_.str("synth.preset");
    const auto spec_file = input("synth.spec", false);
    boost::property_tree::ptree tree;
    if (!spec_file.empty()) {
      try {
        boost::property_tree::read_ini(spec_file.string(), tree);
      } catch (const boost::property_tree::ini_parser_error& e) {
        throw DataError(std::string("synth spec: ") + e.what());
      }
      for (const auto& [key, value] : tree) {
        if (std::find(synth::spec_keys().begin(), synth::spec_keys().end(), key) == synth::spec_keys().end())
          throw UsageError("unknown synth spec key '" + key + "'");
        (void)value;
      }
      if (auto p = tree.get_optional<std::string>("preset")) preset_name = trim(*p);
    }
    auto spec = synth::preset(preset_name);
    spec.seed = stage_seed("synth");
    if (const auto n = cfg_.count("synth.n_users"); n > 0) spec.n_users = n;

    auto get = [&](const char* key) -> std::optional<std::string> {
      if (auto v = tree.get_optional<std::string>(key)) return trim(*v);
      return std::nullopt;
    };
    auto real = [&](const char* key, double& target) {
      if (auto v = get(key)) target = parse_double(*v);
    };
    auto whole = [&](const char* key, auto& target) {
      if (auto v = get(key)) target = static_cast<std::remove_reference_t<decltype(target)>>(parse_int(*v));
    };
    auto model = [&](const char* key, synth::ClassDynamics& target) {
      if (auto v = get(key)) {
        fs::path p(*v);
        if (p.is_relative()) p = spec_file.parent_path() / p;
        auto in = open(p);
        target.model = hmm::read_model(in);
        m_.inputs.emplace_back(key, p);
      }
    };
    if (auto v = get("seed")) spec.seed = static_cast<std::uint64_t>(parse_int(*v));
    whole("n_users", spec.n_users);
    real("tourist_fraction", spec.tourist_fraction);
    real("special_fraction", spec.special_fraction);
    real("other_fraction", spec.other_fraction);
    real("concentration", spec.concentration);
    real("leakage", spec.leakage);
    real("gap_days", spec.gap_days);
    whole("tokens_per_doc", spec.tokens_per_doc);
    whole("words_per_topic", spec.words_per_topic);
    whole("max_posts", spec.max_posts);
    real("submission_fraction", spec.submission_fraction);
    whole("window_start", spec.window_start);
    whole("window_end", spec.window_end);
    if (auto v = get("forum")) spec.forum = *v;
    model("tourist_model", spec.tourist);
    model("resident_model", spec.resident);
    spec.validate();
    return spec;
  }

  void synth() {
    std::string preset_name;
    const auto spec = synth_spec(preset_name);
    const auto g = synth::generate_corpus(spec);
    emit("synth_posts.jsonl", [&](std::ostream& o) { corpus::write_archive(o, g.posts); });
    emit("synth_history.jsonl", [&](std::ostream& o) { corpus::write_archive(o, g.history); });
    emit("synth_doc_topics.csv", [&](std::ostream& o) { topics::write_doc_topics(o, g.matrix); });
    emit("synth_topic_labels.csv", [&](std::ostream& o) {
      o << "topic,label\n";
      for (std::size_t t = 0; t < g.matrix.n_topics(); ++t)
        o << g.matrix.topic_ids[t] << ',' << g.cluster_names[g.planted.assignment[t]] << '\n';
    });
    emit("synth_blocked.txt", [&](std::ostream& o) {
      for (const auto& f : spec.blocked_forums) o << f << '\n';
    });
    emit("synth_truth.csv", [&](std::ostream& o) { synth::write_truth(o, g); });
    emit("synth_spec.ini", [&](std::ostream& o) { synth::write_spec(o, spec, preset_name); });
    emit("pipeline.ini", [&](std::ostream& o) { write_synth_config(o, spec, preset_name); });
    m_.stats["users"] = g.users.size();
    m_.stats["posts"] = g.posts.size();
    m_.stats["history_posts"] = g.history.size();
    const auto shares = synth::planted_shares(spec);
    m_.stats["planted_shares"] = shares;
    log_ << "synth: " << g.users.size() << " users, " << g.posts.size() << " posts, " << g.matrix.n_topics()
         << " topics in " << spec.n_clusters() << " clusters\n";
  }

  void write_synth_config(std::ostream& o, const synth::SynthSpec& spec, const std::string& preset_name) {
    auto date = [](std::int64_t t) {
      const auto days = std::chrono::floor<std::chrono::days>(std::chrono::sys_seconds{std::chrono::seconds{t}});
      const std::chrono::year_month_day ymd{days};
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      return std::string(buf);
    };
    const bool full = preset_name == "full";
    o << "[paths]\n"
      << "archive = synth_posts.jsonl\n"
      << "history = synth_history.jsonl\n"
      << "doc_topics = synth_doc_topics.csv\n"
      << "blocked = synth_blocked.txt\n"
      << "topic_labels = synth_topic_labels.csv\n"
      << "output = run\n\n"
      << "[sample]\n"
      << "start = " << date(spec.window_start) << '\n'
      << "end = " << date(spec.window_end) << '\n'
      << "forum = " << spec.forum << "\n\n"
      << "[topics]\n"
      << "k = " << spec.n_topics() << "\n\n"
      << "[cluster]\n"
      << "format = json\n\n"
      << "[trajectories]\n"
      << "candidates = " << (full ? "2-9" : "2-5") << '\n'
      << "restarts = 4\n"
      << "tol = " << (full ? "1e-4" : "1e-5") << '\n'
      << "max_iter = " << (full ? 300 : 500) << "\n\n"
      << "[run]\n"
      << "seed = " << cfg_.str("run.seed") << '\n';
  }
};

}  // namespace ideotrace::pipeline
