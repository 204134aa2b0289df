#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pararank/kernels.hpp"
#include "pararank/text.hpp"

namespace pararank {

struct Paragraph {
  std::string doc_id;
  int para_index = 0;
  std::string text;
  TokenSeq tokens;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::vector<Paragraph> paragraphs;
};

/// One input record before validation.
struct DocumentRecord {
  std::string id;
  std::string title;
  std::vector<std::string> paragraphs;
};

class Corpus {
 public:
  /// Validates and appends a document. Blank paragraphs are dropped and
  /// the remaining ones are numbered 0..K-1 in input order.
  void add(const DocumentRecord& record);

  const std::vector<Document>& documents() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  std::size_t paragraph_count() const { return paragraph_count_; }
  bool empty() const { return docs_.empty(); }

  /// Ingestion position of a document id.
  std::optional<std::size_t> position(std::string_view doc_id) const;
  const Document& document(std::size_t pos) const { return docs_.at(pos); }
  const Paragraph* find_paragraph(std::string_view doc_id, int para_index) const;

  /// Every paragraph in ingestion order.
  std::vector<const Paragraph*> all_paragraphs() const;

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> position_;
  std::size_t paragraph_count_ = 0;
};

/// Parses JSON-lines `{"id": str, "title": str, "paragraphs": [str, ...]}`.
Corpus ingest_corpus(std::istream& source);
Corpus ingest_records(const std::vector<DocumentRecord>& records);

struct IndexOptions {
  int ngrams = 2;     // 1 = unigrams, 2 = unigrams + bigrams
  int hash_bits = 0;  // 0 = exact vocabulary; otherwise murmur3 into 2^bits bins
};

/// Unigrams followed by space-joined bigrams (when ngrams >= 2).
std::vector<std::string> extract_terms(const TokenSeq& tokens, int ngrams);

/// MurmurHash3 x86 32-bit.
std::uint32_t murmur3_32(std::string_view key, std::uint32_t seed = 0);

struct ScoredDoc {
  std::string doc_id;
  std::size_t position = 0;  // ingestion order
  double score = 0.0;
};

/// Log-tf x smoothed-idf vectors, L2-normalised, scored by cosine.
///
/// weight(t, d) = (1 + ln tf) * ln((1 + N) / (1 + df)).
/// In exact mode term ids follow lexicographic term order, so per-document
/// sums are accumulated in a fixed, corpus-determined order.
class TfIdfIndex {
 public:
  static TfIdfIndex build(const Corpus& corpus, IndexOptions options = {});

  /// Top-n documents by cosine, descending, ties by ingestion order.
  /// Documents scoring zero are left out.
  std::vector<ScoredDoc> retrieve(const TokenSeq& question, std::size_t n,
                                  kernels::Exec exec = kernels::Exec::Parallel) const;

  /// Scores of every document, indexed by ingestion position.
  std::vector<double> score_all(const TokenSeq& question,
                                kernels::Exec exec = kernels::Exec::Parallel) const;

  SparseVector query_vector(const TokenSeq& question) const;

  std::optional<std::uint32_t> term_id(std::string_view term) const;
  std::uint32_t document_frequency(std::uint32_t term_id) const;
  double idf(std::uint32_t term_id) const;
  /// idf of a single token; tokens never seen get ln(1 + N).
  double token_idf(std::string_view token) const;

  std::size_t doc_count() const { return doc_ids_.size(); }
  const std::string& doc_id(std::size_t pos) const { return doc_ids_.at(pos); }
  const SparseVector& doc_vector(std::size_t pos) const { return doc_vectors_.at(pos); }
  const std::vector<SparseVector>& doc_vectors() const { return doc_vectors_; }
  const IndexOptions& options() const { return options_; }
  /// Exact-mode vocabulary in id order; empty in hashing mode.
  const std::vector<std::string>& terms() const { return terms_; }

  /// Binary layout: "PRIDX1", options, doc ids, vocabulary, document
  /// frequencies and sparse vectors; all integers and doubles little-endian.
  void save(std::ostream& out) const;
  static TfIdfIndex load(std::istream& in);

 private:
  double weight(std::uint32_t tf, std::uint32_t term_id) const;
  SparseVector vectorize(const TokenSeq& tokens, bool known_only) const;

  IndexOptions options_;
  std::vector<std::string> doc_ids_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::unordered_map<std::uint32_t, std::uint32_t> df_;
  std::vector<SparseVector> doc_vectors_;
};

}  // namespace pararank
