#pragma once

#include "rafg/error.hpp"
#include "rafg/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rafg::knowledge {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

/// Signed feature-hashing bag of words: lowercase, split on non-alphanumeric
/// runs, bucket = fnv1a64(token) mod dim, sign from a second hash of the same
/// token, then L2-normalize. Deterministic across platforms.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {
    if (dim_ == 0) fail(Errc::InvalidConfig, "embedder dimension must be > 0");
  }

  static std::size_t bucket_of(std::string_view token, std::size_t dim) {
    return static_cast<std::size_t>(fnv1a64(token) % dim);
  }

  static double sign_of(std::string_view token) {
    return (splitmix64(fnv1a64(token)) & 1ull) ? 1.0 : -1.0;
  }

  std::vector<double> embed(const std::string& text) const override {
    std::vector<double> v(dim_, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
      if (token.empty()) return;
      v[bucket_of(token, dim_)] += sign_of(token);
      token.clear();
      any = true;
    };
    for (char c : text) {
      bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                   (c >= 'A' && c <= 'Z');
      if (alnum)
        token += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
      else
        flush();
    }
    flush();
    if (!any) fail(Errc::EmptyText, "text has no tokens to embed");

    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) fail(Errc::ZeroVector, "token signs cancelled to a zero vector");
    for (double& x : v) x /= norm;
    return v;
  }

  std::size_t dim() const override { return dim_; }
  std::string id() const override { return "hash-fnv1a/" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    fail(Errc::DimensionMismatch, "vector dimensions differ: " +
                                      std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(Errc::ZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Document {
  std::string id;     // file stem
  std::string title;  // first "# " line or the stem
  std::string body;
  std::vector<double> embedding;

  bool operator==(const Document&) const = default;
};

struct KnowledgeBase {
  std::vector<Document> docs;  // sorted by id
  std::size_t dim = 0;
  std::string embedder_id;
  std::shared_ptr<const Embedder> embedder;  // not persisted

  const Document* find(std::string_view id) const {
    for (const auto& d : docs)
      if (d.id == id) return &d;
    return nullptr;
  }
};

struct RetrievalResult {
  std::vector<std::pair<std::string, double>> ranked;  // (doc id, score)
  std::string query_text;
};

/// Builds a knowledge base from every .txt/.md file in a directory (one
/// document per file, whole file embedded). Entries are sorted by id so
/// re-indexing the same corpus is byte-identical on disk.
inline KnowledgeBase index_directory(const std::filesystem::path& dir,
                                     std::shared_ptr<const Embedder> embedder) {
  if (!std::filesystem::is_directory(dir))
    fail(Errc::MissingFile, "not a directory: " + dir.string());
  KnowledgeBase kb;
  kb.dim = embedder->dim();
  kb.embedder_id = embedder->id();
  kb.embedder = embedder;

  std::set<std::string> seen;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext != ".txt" && ext != ".md") continue;
    std::string id = entry.path().stem().string();
    if (!seen.insert(id).second)
      fail(Errc::DuplicateId, "duplicate document id: " + id);

    Document doc;
    doc.id = id;
    doc.body = read_text_file(entry.path());
    std::size_t eol = doc.body.find('\n');
    std::string first = doc.body.substr(0, eol == std::string::npos ? doc.body.size() : eol);
    if (first.rfind("# ", 0) == 0)
      doc.title = trim(first.substr(2));
    else
      doc.title = id;
    doc.embedding = embedder->embed(doc.body);
    kb.docs.push_back(std::move(doc));
  }
  if (kb.docs.empty()) fail(Errc::EmptyCorpus, "no .txt/.md documents in " + dir.string());
  std::sort(kb.docs.begin(), kb.docs.end(),
            [](const Document& a, const Document& b) { return a.id < b.id; });
  return kb;
}

/// Top-k documents by cosine similarity against the embedded query.
/// Scores are non-increasing; equal scores rank by ascending document id.
/// Ids in `exclude` are skipped before ranking.
inline RetrievalResult retrieve(const KnowledgeBase& kb, const std::string& query,
                                std::size_t k,
                                const std::set<std::string>& exclude = {}) {
  if (k < 1) fail(Errc::InvalidConfig, "k must be >= 1");
  if (kb.docs.empty()) fail(Errc::EmptyCorpus, "knowledge base is empty");
  if (!kb.embedder)
    fail(Errc::InvalidConfig, "knowledge base has no embedder attached");

  std::vector<double> q = kb.embedder->embed(query);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(kb.docs.size());
  for (const auto& doc : kb.docs) {
    if (exclude.count(doc.id)) continue;
    scored.emplace_back(doc.id, cosine(q, doc.embedding));
  }
  auto better = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  scored.resize(take);

  RetrievalResult res;
  res.ranked = std::move(scored);
  res.query_text = query;
  return res;
}

// Index file layout (fixed field order; embeddings and the body length are
// written so that saving the same base twice produces identical bytes):
//
//   rafg-index v1
//   embedder <id>
//   dim <n>
//   docs <count>
//   doc <id>
//   title <title>
//   embedding <v1> <v2> ...
//   body <byte-count>
//   <raw body bytes>
//   ... repeated per document

inline void save_index(const KnowledgeBase& kb, const std::filesystem::path& path) {
  std::string out;
  out += "rafg-index v1\n";
  out += "embedder " + kb.embedder_id + "\n";
  out += "dim " + std::to_string(kb.dim) + "\n";
  out += "docs " + std::to_string(kb.docs.size()) + "\n";
  for (const auto& doc : kb.docs) {
    out += "doc " + doc.id + "\n";
    out += "title " + doc.title + "\n";
    out += "embedding";
    for (double v : doc.embedding) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
    out += "body " + std::to_string(doc.body.size()) + "\n";
    out += doc.body;
    out += '\n';
  }
  write_text_file(path, out);
}

namespace detail {

struct IndexReader {
  std::string text;
  std::size_t pos = 0;

  std::string line() {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) fail(Errc::BadIndexFile, "truncated index file");
    std::string out = text.substr(pos, eol - pos);
    pos = eol + 1;
    return out;
  }

  std::string expect_prefix(const std::string& prefix) {
    std::string l = line();
    if (l.rfind(prefix, 0) != 0)
      fail(Errc::BadIndexFile, "expected '" + prefix + "' in index file");
    return l.substr(prefix.size());
  }

  std::string raw(std::size_t n) {
    if (pos + n > text.size()) fail(Errc::BadIndexFile, "truncated document body");
    std::string out = text.substr(pos, n);
    pos += n;
    if (pos >= text.size() || text[pos] != '\n')
      fail(Errc::BadIndexFile, "missing body terminator");
    ++pos;
    return out;
  }
};

}  // namespace detail

/// Loads a persisted index. Hash-embedder ids reattach their embedder
/// automatically; other embedders must be attached by the caller before
/// retrieval.
inline KnowledgeBase load_index(const std::filesystem::path& path) {
  detail::IndexReader r{read_text_file(path)};
  if (r.line() != "rafg-index v1")
    fail(Errc::BadIndexFile, "not a rafg index file: " + path.string());

  KnowledgeBase kb;
  kb.embedder_id = r.expect_prefix("embedder ");
  kb.dim = static_cast<std::size_t>(std::stoull(r.expect_prefix("dim ")));
  std::size_t count = static_cast<std::size_t>(std::stoull(r.expect_prefix("docs ")));
  for (std::size_t i = 0; i < count; ++i) {
    Document doc;
    doc.id = r.expect_prefix("doc ");
    doc.title = r.expect_prefix("title ");
    std::string emb = r.expect_prefix("embedding ");
    const char* p = emb.data();
    const char* end = p + emb.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p >= end) break;
      double v = 0.0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc{})
        fail(Errc::BadIndexFile, "bad embedding value in index file");
      doc.embedding.push_back(v);
      p = res.ptr;
    }
    if (doc.embedding.size() != kb.dim)
      fail(Errc::BadIndexFile, "embedding dimension mismatch for doc " + doc.id);
    std::size_t body_len = static_cast<std::size_t>(std::stoull(r.expect_prefix("body ")));
    doc.body = r.raw(body_len);
    kb.docs.push_back(std::move(doc));
  }

  if (kb.embedder_id.rfind("hash-fnv1a/", 0) == 0)
    kb.embedder = std::make_shared<HashEmbedder>(kb.dim);
  return kb;
}

}  // namespace rafg::knowledge
