#pragma once

#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ideotrace/core.hpp"

namespace ideotrace::corpus {

enum class PostKind { submission, comment };

inline std::string_view to_string(PostKind kind) {
  return kind == PostKind::submission ? "submission" : "comment";
}

struct PostRecord {
  std::string id;
  std::string author;
  std::int64_t created = 0;  // UTC seconds
  std::string forum;
  PostKind kind = PostKind::comment;
  std::string text;

  friend bool operator==(const PostRecord&, const PostRecord&) = default;
};

// Source field names for each PostRecord field. Each entry lists candidate
// names; the first one present in a record wins. The defaults accept both the
// native format and pushshift dumps.
struct ArchiveSchema {
  std::vector<std::string> id{"id"};
  std::vector<std::string> author{"author"};
  std::vector<std::string> created{"created_utc", "created"};
  std::vector<std::string> forum{"subreddit", "forum"};
  std::vector<std::string> kind{"kind"};
  std::vector<std::string> text{"text", "body", "selftext"};
  std::vector<std::string> title{"title"};
};

struct ParseResult {
  std::vector<PostRecord> posts;
  std::size_t skipped = 0;
  std::size_t lines = 0;  // non-blank lines seen
  std::vector<std::string> diagnostics;  // first few skip reasons
};

namespace detail {

inline const nlohmann::json* find_field(const nlohmann::json& obj,
                                        const std::vector<std::string>& names) {
  for (const auto& name : names) {
    auto it = obj.find(name);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

inline std::optional<std::string> as_string(const nlohmann::json* v) {
  if (v == nullptr) return std::nullopt;
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number_integer()) return std::to_string(v->get<std::int64_t>());
  return std::nullopt;
}

inline std::optional<std::int64_t> as_timestamp(const nlohmann::json* v) {
  if (v == nullptr) return std::nullopt;
  if (v->is_number_integer()) return v->get<std::int64_t>();
  if (v->is_number_float()) return static_cast<std::int64_t>(v->get<double>());
  if (v->is_string()) {
    try {
      return parse_int(v->get<std::string>());
    } catch (const DataError&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// Returns an error message, or empty on success.
inline std::string decode_record(const std::string& line, const ArchiveSchema& schema,
                                 PostRecord& out) {
  nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return "not a JSON object";

  auto id = as_string(find_field(obj, schema.id));
  if (!id || id->empty()) return "missing id";
  auto author = as_string(find_field(obj, schema.author));
  if (!author || author->empty()) return "missing author";
  auto created = as_timestamp(find_field(obj, schema.created));
  if (!created) return "missing created timestamp";
  if (*created <= 0) return "non-positive created timestamp";
  auto forum = as_string(find_field(obj, schema.forum));
  if (!forum || forum->empty()) return "missing forum";

  auto title = as_string(find_field(obj, schema.title));
  auto body = as_string(find_field(obj, schema.text)).value_or("");

  PostKind kind = title ? PostKind::submission : PostKind::comment;
  if (auto k = as_string(find_field(obj, schema.kind))) {
    if (*k == "submission")
      kind = PostKind::submission;
    else if (*k == "comment")
      kind = PostKind::comment;
    else
      return "unknown kind '" + *k + "'";
  }

  out.id = std::move(*id);
  out.author = std::move(*author);
  out.created = *created;
  out.forum = std::move(*forum);
  out.kind = kind;
  if (title && !title->empty() && !body.empty())
    out.text = *title + "\n" + body;
  else if (title && !title->empty())
    out.text = *title;
  else
    out.text = std::move(body);
  return {};
}

}  // namespace detail

// Reads line-delimited JSON records. Lines failing the schema (or repeating an
// earlier id) are skipped and counted; more than half invalid is fatal.
inline ParseResult parse_archive(std::istream& in, const ArchiveSchema& schema = {}) {
  if (!in) throw DataError("archive stream is not readable");
  ParseResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++result.lines;
    PostRecord rec;
    std::string err = detail::decode_record(line, schema, rec);
    if (err.empty() && !seen.insert(rec.id).second) err = "duplicate id " + rec.id;
    if (!err.empty()) {
      ++result.skipped;
      if (result.diagnostics.size() < 10)
        result.diagnostics.push_back("line " + std::to_string(result.lines) + ": " + err);
      continue;
    }
    result.posts.push_back(std::move(rec));
  }
  if (in.bad()) throw DataError("error while reading archive stream");
  if (result.lines > 0 && 2 * result.skipped > result.lines) {
    std::string msg = "more than half of the archive lines are invalid (" +
                      std::to_string(result.skipped) + " of " + std::to_string(result.lines) +
                      "); check the schema field map";
    if (!result.diagnostics.empty()) msg += "; first problem: " + result.diagnostics.front();
    throw DataError(msg);
  }
  return result;
}

inline nlohmann::json to_json(const PostRecord& post) {
  nlohmann::json obj;
  obj["id"] = post.id;
  obj["author"] = post.author;
  obj["created_utc"] = post.created;
  obj["subreddit"] = post.forum;
  obj["kind"] = std::string(to_string(post.kind));
  obj["text"] = post.text;
  return obj;
}

// Native normalized archive: one record per line.
inline void write_archive(std::ostream& out, const std::vector<PostRecord>& posts) {
  for (const auto& p : posts) out << to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Tokenization

// A compact English stop list (articles, pronouns, auxiliaries, common
// function words, and contraction stems left behind by apostrophe stripping).
inline const std::set<std::string>& default_stoplist() {
  static const std::set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any",
      "are", "arent", "as", "at", "be", "because", "been", "before", "being", "below",
      "between", "both", "but", "by", "can", "cant", "cannot", "could", "couldnt", "did",
      "didnt", "do", "does", "doesnt", "doing", "dont", "down", "during", "each", "few",
      "for", "from", "further", "had", "hadnt", "has", "hasnt", "have", "havent", "having",
      "he", "hed", "hell", "her", "here", "heres", "hers", "herself", "hes", "him",
      "himself", "his", "how", "hows", "i", "id", "if", "ill", "im", "in", "into", "is",
      "isnt", "it", "its", "itself", "ive", "just", "lets", "me", "more", "most", "mustnt",
      "my", "myself", "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other",
      "ought", "our", "ours", "ourselves", "out", "over", "own", "same", "shant", "she",
      "shed", "shell", "shes", "should", "shouldnt", "so", "some", "such", "than", "that",
      "thats", "the", "their", "theirs", "them", "themselves", "then", "there", "theres",
      "these", "they", "theyd", "theyll", "theyre", "theyve", "this", "those", "through",
      "to", "too", "under", "until", "up", "very", "was", "wasnt", "we", "wed", "well",
      "were", "werent", "weve", "what", "whats", "when", "whens", "where", "wheres",
      "which", "while", "who", "whom", "whos", "why", "whys", "will", "with", "wont",
      "would", "wouldnt", "you", "youd", "youll", "your", "youre", "yours", "yourself",
      "yourselves", "youve", "s", "t", "d", "ll", "m", "re", "ve"};
  return words;
}

inline bool is_placeholder_body(std::string_view text) {
  const std::string t = trim(text);
  return t == "[deleted]" || t == "[removed]";
}

// Lower-cases ASCII, drops apostrophes, and splits on anything that is not a
// letter or digit. Placeholder bodies of deleted posts yield no tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  if (is_placeholder_body(text)) return tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c == '\'') continue;
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline constexpr char kBigramSeparator = '_';

struct PreprocessOptions {
  std::size_t bigram_min_count = 10;
  double bigram_threshold = 4.0;  // pointwise mutual information, bits
};

struct TokenizedCorpus {
  std::vector<std::pair<std::string, std::vector<std::string>>> documents;
  std::map<std::string, std::size_t> vocabulary;  // token -> id
  std::set<std::pair<std::string, std::string>> bigrams;

  // Number of tokens per document id.
  std::unordered_map<std::string, std::size_t> token_counts() const {
    std::unordered_map<std::string, std::size_t> out;
    for (const auto& [id, toks] : documents) out[id] = toks.size();
    return out;
  }
};

// Stop-word filtering followed by a single greedy left-to-right bigram merge
// pass. A pair merges when it occurs at least bigram_min_count times and its
// PMI log2(c(ab) N / (c(a) c(b))) reaches bigram_threshold.
inline TokenizedCorpus preprocess(const std::vector<PostRecord>& posts,
                                  const std::set<std::string>& stoplist,
                                  const PreprocessOptions& options = {}) {
  if (stoplist.empty()) throw UsageError("preprocess: stop list must not be empty");
  if (options.bigram_min_count == 0 || !(options.bigram_threshold > 0.0))
    throw UsageError("preprocess: bigram thresholds must be positive");

  TokenizedCorpus corpus;
  corpus.documents.reserve(posts.size());
  std::unordered_map<std::string, std::size_t> unigram;
  std::map<std::pair<std::string, std::string>, std::size_t> pairs;
  std::size_t total = 0;

  for (const auto& post : posts) {
    std::vector<std::string> kept;
    for (auto& tok : tokenize(post.text))
      if (!stoplist.contains(tok)) kept.push_back(std::move(tok));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      ++unigram[kept[i]];
      if (i + 1 < kept.size()) ++pairs[{kept[i], kept[i + 1]}];
    }
    total += kept.size();
    corpus.documents.emplace_back(post.id, std::move(kept));
  }

  for (const auto& [pair, count] : pairs) {
    if (count < options.bigram_min_count) continue;
    const double pmi = std::log2(static_cast<double>(count) * static_cast<double>(total) /
                                 (static_cast<double>(unigram[pair.first]) *
                                  static_cast<double>(unigram[pair.second])));
    if (pmi >= options.bigram_threshold) corpus.bigrams.insert(pair);
  }

  std::size_t next_id = 0;
  for (auto& [id, tokens] : corpus.documents) {
    if (!corpus.bigrams.empty()) {
      std::vector<std::string> merged;
      merged.reserve(tokens.size());
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i + 1 < tokens.size() && corpus.bigrams.contains({tokens[i], tokens[i + 1]})) {
          merged.push_back(tokens[i] + kBigramSeparator + tokens[i + 1]);
          ++i;
        } else {
          merged.push_back(std::move(tokens[i]));
        }
      }
      tokens = std::move(merged);
    }
    for (const auto& tok : tokens)
      if (corpus.vocabulary.emplace(tok, next_id).second) ++next_id;
  }
  return corpus;
}

// Vocabulary file: token<TAB>id, ordered by id.
inline void write_vocabulary(std::ostream& out, const TokenizedCorpus& corpus) {
  std::vector<const std::string*> by_id(corpus.vocabulary.size());
  for (const auto& [tok, id] : corpus.vocabulary) by_id[id] = &tok;
  for (std::size_t i = 0; i < by_id.size(); ++i) out << *by_id[i] << '\t' << i << '\n';
}

// Token file: doc_id<TAB>space-separated tokens.
inline void write_tokens(std::ostream& out, const TokenizedCorpus& corpus) {
  for (const auto& [id, toks] : corpus.documents) {
    out << id << '\t';
    for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? " " : "") << toks[i];
    out << '\n';
  }
}

inline TokenizedCorpus read_tokens(std::istream& in) {
  TokenizedCorpus corpus;
  std::string line;
  std::size_t next_id = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("token file line " + std::to_string(lineno) + ": missing tab");
    std::vector<std::string> toks;
    for (auto& t : split(std::string_view(line).substr(tab + 1), ' '))
      if (!t.empty()) toks.push_back(std::move(t));
    for (const auto& t : toks)
      if (corpus.vocabulary.emplace(t, next_id).second) ++next_id;
    corpus.documents.emplace_back(line.substr(0, tab), std::move(toks));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Longitudinal sample

enum class UserClass { clean, special, other };

inline std::string_view to_string(UserClass c) {
  switch (c) {
    case UserClass::clean: return "clean";
    case UserClass::special: return "special";
    case UserClass::other: return "other";
  }
  return "other";
}

struct UserSample {
  std::set<std::string> clean;
  std::set<std::string> special;
  std::set<std::string> all;
  std::map<std::string, std::int64_t> first_contact;

  UserClass classify(const std::string& author) const {
    if (clean.contains(author)) return UserClass::clean;
    if (special.contains(author)) return UserClass::special;
    return UserClass::other;
  }
};

struct TimeWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;  // inclusive
};

// Classifies every author whose first studied-forum post lies in the window:
//   other   - posted in a blocked forum strictly before first contact
//   clean   - otherwise, with a non-blocked post at or before first contact
//   special - otherwise (no history beyond the first contact itself)
inline UserSample build_clean_sample(const std::vector<PostRecord>& target_posts,
                                     const std::vector<PostRecord>& global_history,
                                     const std::set<std::string>& blocked_forums,
                                     TimeWindow window) {
  if (window.start >= window.end) throw DataError("sample window is empty (start >= end)");

  struct Contact {
    std::int64_t created;
    const std::string* id;
  };
  std::unordered_map<std::string, Contact> first;
  for (const auto& p : target_posts) {
    auto [it, inserted] = first.try_emplace(p.author, Contact{p.created, &p.id});
    if (!inserted && (p.created < it->second.created ||
                      (p.created == it->second.created && p.id < *it->second.id)))
      it->second = Contact{p.created, &p.id};
  }

  UserSample sample;
  for (const auto& [author, contact] : first) {
    if (contact.created < window.start || contact.created > window.end) continue;
    sample.all.insert(author);
    sample.first_contact[author] = contact.created;
  }

  std::unordered_set<std::string> blocked_before;
  std::unordered_set<std::string> open_at_or_before;
  for (const auto& p : global_history) {
    auto it = sample.first_contact.find(p.author);
    if (it == sample.first_contact.end()) continue;
    const bool blocked = blocked_forums.contains(p.forum);
    if (blocked && p.created < it->second) blocked_before.insert(p.author);
    if (!blocked && p.created <= it->second) open_at_or_before.insert(p.author);
  }

  for (const auto& author : sample.all) {
    if (blocked_before.contains(author)) continue;
    if (open_at_or_before.contains(author))
      sample.clean.insert(author);
    else
      sample.special.insert(author);
  }
  return sample;
}

// Manifest: author<TAB>class<TAB>first_contact, sorted by author.
inline void write_sample(std::ostream& out, const UserSample& sample) {
  out << "author\tclass\tfirst_contact\n";
  for (const auto& author : sample.all)
    out << author << '\t' << to_string(sample.classify(author)) << '\t'
        << sample.first_contact.at(author) << '\n';
}

inline UserSample read_sample(std::istream& in) {
  UserSample sample;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || lineno == 1) continue;
    auto f = split(line, '\t');
    if (f.size() != 3) throw DataError("sample file line " + std::to_string(lineno) + ": expected 3 fields");
    sample.all.insert(f[0]);
    sample.first_contact[f[0]] = parse_int(f[2]);
    if (f[1] == "clean")
      sample.clean.insert(f[0]);
    else if (f[1] == "special")
      sample.special.insert(f[0]);
    else if (f[1] != "other")
      throw DataError("sample file line " + std::to_string(lineno) + ": unknown class " + f[1]);
  }
  return sample;
}

}  // namespace ideotrace::corpus
