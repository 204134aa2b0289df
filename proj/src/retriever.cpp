#include "pararank/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "pararank/binary_io.hpp"
#include "pararank/errors.hpp"

namespace pararank {
namespace {

constexpr char kIndexMagic[] = "PRIDX1";
constexpr std::size_t kIndexMagicLen = 6;

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void Corpus::add(const DocumentRecord& record) {
  if (position_.count(record.id) != 0) {
    throw IngestError("duplicate doc_id " + record.id);
  }
  Document doc{record.id, record.title, {}};
  for (const auto& text : record.paragraphs) {
    if (is_blank(text)) continue;
    Paragraph p{record.id, static_cast<int>(doc.paragraphs.size()), text, tokenize(text)};
    if (p.tokens.empty()) continue;
    doc.paragraphs.push_back(std::move(p));
  }
  if (doc.paragraphs.empty()) {
    throw IngestError("document " + record.id + " has no non-empty paragraphs");
  }
  paragraph_count_ += doc.paragraphs.size();
  position_.emplace(record.id, docs_.size());
  docs_.push_back(std::move(doc));
}

std::optional<std::size_t> Corpus::position(std::string_view doc_id) const {
  if (auto it = position_.find(std::string(doc_id)); it != position_.end()) return it->second;
  return std::nullopt;
}

const Paragraph* Corpus::find_paragraph(std::string_view doc_id, int para_index) const {
  const auto pos = position(doc_id);
  if (!pos) return nullptr;
  const auto& paras = docs_[*pos].paragraphs;
  if (para_index < 0 || static_cast<std::size_t>(para_index) >= paras.size()) return nullptr;
  return &paras[static_cast<std::size_t>(para_index)];
}

std::vector<const Paragraph*> Corpus::all_paragraphs() const {
  std::vector<const Paragraph*> out;
  out.reserve(paragraph_count_);
  for (const auto& d : docs_) {
    for (const auto& p : d.paragraphs) out.push_back(&p);
  }
  return out;
}

Corpus ingest_records(const std::vector<DocumentRecord>& records) {
  Corpus corpus;
  for (const auto& r : records) corpus.add(r);
  return corpus;
}

Corpus ingest_corpus(std::istream& source) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    DocumentRecord record;
    try {
      const auto j = nlohmann::json::parse(line);
      record.id = j.at("id").get<std::string>();
      record.title = j.value("title", std::string());
      record.paragraphs = j.at("paragraphs").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.add(record);
  }
  return corpus;
}

std::vector<std::string> extract_terms(const TokenSeq& tokens, int ngrams) {
  std::vector<std::string> terms(tokens.begin(), tokens.end());
  if (ngrams >= 2) {
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      terms.push_back(tokens[i] + ' ' + tokens[i + 1]);
    }
  }
  return terms;
}

std::uint32_t murmur3_32(std::string_view key, std::uint32_t seed) {
  constexpr std::uint32_t c1 = 0xcc9e2d51;
  constexpr std::uint32_t c2 = 0x1b873593;
  auto rotl = [](std::uint32_t x, int r) { return (x << r) | (x >> (32 - r)); };
  const auto* data = reinterpret_cast<const unsigned char*>(key.data());
  const std::size_t len = key.size();
  const std::size_t nblocks = len / 4;
  std::uint32_t h = seed;
  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint32_t k = static_cast<std::uint32_t>(data[4 * i]) |
                      static_cast<std::uint32_t>(data[4 * i + 1]) << 8 |
                      static_cast<std::uint32_t>(data[4 * i + 2]) << 16 |
                      static_cast<std::uint32_t>(data[4 * i + 3]) << 24;
    k *= c1;
    k = rotl(k, 15);
    k *= c2;
    h ^= k;
    h = rotl(h, 13);
    h = h * 5 + 0xe6546b64;
  }
  const unsigned char* tail = data + nblocks * 4;
  std::uint32_t k = 0;
  switch (len & 3) {
    case 3: k ^= static_cast<std::uint32_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k ^= static_cast<std::uint32_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k ^= tail[0];
      k *= c1;
      k = rotl(k, 15);
      k *= c2;
      h ^= k;
  }
  h ^= static_cast<std::uint32_t>(len);
  h ^= h >> 16;
  h *= 0x85ebca6b;
  h ^= h >> 13;
  h *= 0xc2b2ae35;
  h ^= h >> 16;
  return h;
}

TfIdfIndex TfIdfIndex::build(const Corpus& corpus, IndexOptions options) {
  if (corpus.empty()) throw std::invalid_argument("cannot index an empty corpus");
  if (options.ngrams < 1 || options.ngrams > 2) {
    throw std::invalid_argument("ngrams must be 1 or 2");
  }
  if (options.hash_bits < 0 || options.hash_bits > 30) {
    throw std::invalid_argument("hash_bits must be in [0, 30]");
  }

  TfIdfIndex index;
  index.options_ = options;

  // Per-document term counts, keyed by term string.
  std::vector<std::map<std::string, std::uint32_t>> counts;
  counts.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    index.doc_ids_.push_back(doc.doc_id);
    auto& tf = counts.emplace_back();
    for (const auto& p : doc.paragraphs) {
      for (auto& term : extract_terms(p.tokens, options.ngrams)) ++tf[std::move(term)];
    }
  }

  if (options.hash_bits == 0) {
    std::map<std::string, std::uint32_t> all;
    for (const auto& tf : counts) {
      for (const auto& [term, _] : tf) all.emplace(term, 0);
    }
    index.terms_.reserve(all.size());
    for (const auto& [term, _] : all) {
      index.term_ids_.emplace(term, static_cast<std::uint32_t>(index.terms_.size()));
      index.terms_.push_back(term);
    }
  }

  // Hashed terms can collide inside a document; merge their counts per bin.
  std::vector<std::map<std::uint32_t, std::uint32_t>> by_id(counts.size());
  for (std::size_t d = 0; d < counts.size(); ++d) {
    for (const auto& [term, tf] : counts[d]) by_id[d][*index.term_id(term)] += tf;
    for (const auto& [id, _] : by_id[d]) ++index.df_[id];
  }

  index.doc_vectors_.resize(counts.size());
  for (std::size_t d = 0; d < counts.size(); ++d) {
    auto& vec = index.doc_vectors_[d];
    for (const auto& [id, tf] : by_id[d]) {
      const double w = index.weight(tf, id);
      if (w == 0.0) continue;
      vec.ids.push_back(id);
      vec.weights.push_back(w);
    }
    double norm2 = 0.0;
    for (double w : vec.weights) norm2 += w * w;
    if (norm2 > 0.0) {
      const double norm = std::sqrt(norm2);
      for (double& w : vec.weights) w /= norm;
    }
  }
  return index;
}

std::optional<std::uint32_t> TfIdfIndex::term_id(std::string_view term) const {
  if (options_.hash_bits > 0) {
    const std::uint32_t mask = (options_.hash_bits >= 32) ? ~0u : ((1u << options_.hash_bits) - 1u);
    return murmur3_32(term) & mask;
  }
  if (auto it = term_ids_.find(std::string(term)); it != term_ids_.end()) return it->second;
  return std::nullopt;
}

std::uint32_t TfIdfIndex::document_frequency(std::uint32_t term_id) const {
  if (auto it = df_.find(term_id); it != df_.end()) return it->second;
  return 0;
}

double TfIdfIndex::idf(std::uint32_t term_id) const {
  const double n = static_cast<double>(doc_ids_.size());
  return std::log((1.0 + n) / (1.0 + static_cast<double>(document_frequency(term_id))));
}

double TfIdfIndex::token_idf(std::string_view token) const {
  if (const auto id = term_id(token)) return idf(*id);
  return std::log(1.0 + static_cast<double>(doc_ids_.size()));
}

double TfIdfIndex::weight(std::uint32_t tf, std::uint32_t term_id) const {
  return (1.0 + std::log(static_cast<double>(tf))) * idf(term_id);
}

SparseVector TfIdfIndex::vectorize(const TokenSeq& tokens, bool known_only) const {
  std::map<std::uint32_t, std::uint32_t> tf;
  for (const auto& term : extract_terms(tokens, options_.ngrams)) {
    const auto id = term_id(term);
    if (!id) continue;
    if (known_only && document_frequency(*id) == 0) continue;
    ++tf[*id];
  }
  SparseVector vec;
  for (const auto& [id, count] : tf) {
    const double w = weight(count, id);
    if (w == 0.0) continue;
    vec.ids.push_back(id);
    vec.weights.push_back(w);
  }
  double norm2 = 0.0;
  for (double w : vec.weights) norm2 += w * w;
  if (norm2 > 0.0) {
    const double norm = std::sqrt(norm2);
    for (double& w : vec.weights) w /= norm;
  }
  return vec;
}

SparseVector TfIdfIndex::query_vector(const TokenSeq& question) const {
  return vectorize(question, /*known_only=*/true);
}

std::vector<double> TfIdfIndex::score_all(const TokenSeq& question, kernels::Exec exec) const {
  std::vector<double> scores(doc_vectors_.size(), 0.0);
  const SparseVector q = query_vector(question);
  if (q.empty()) return scores;
  kernels::score_documents(exec, q, doc_vectors_, scores);
  for (double& s : scores) s = std::clamp(s, 0.0, 1.0);
  return scores;
}

std::vector<ScoredDoc> TfIdfIndex::retrieve(const TokenSeq& question, std::size_t n,
                                            kernels::Exec exec) const {
  if (n == 0) throw std::invalid_argument("retrieve: n must be positive");
  const auto scores = score_all(question, exec);
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0.0) hits.push_back(i);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t k = std::min(n, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
  std::vector<ScoredDoc> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({doc_ids_[hits[i]], hits[i], scores[hits[i]]});
  return out;
}

void TfIdfIndex::save(std::ostream& out) const {
  using namespace binio;
  out.write(kIndexMagic, kIndexMagicLen);
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(options_.ngrams));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(options_.hash_bits));
  write_uint<std::uint64_t>(out, doc_ids_.size());
  for (const auto& id : doc_ids_) write_string(out, id);
  write_uint<std::uint64_t>(out, terms_.size());
  for (const auto& t : terms_) write_string(out, t);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> df(df_.begin(), df_.end());
  std::sort(df.begin(), df.end());
  write_uint<std::uint64_t>(out, df.size());
  for (const auto& [id, count] : df) {
    write_uint<std::uint32_t>(out, id);
    write_uint<std::uint32_t>(out, count);
  }
  for (const auto& vec : doc_vectors_) {
    write_uint<std::uint64_t>(out, vec.nnz());
    for (std::size_t i = 0; i < vec.nnz(); ++i) {
      write_uint<std::uint32_t>(out, vec.ids[i]);
      write_f64(out, vec.weights[i]);
    }
  }
  if (!out) throw std::runtime_error("failed to write index");
}

TfIdfIndex TfIdfIndex::load(std::istream& in) {
  using namespace binio;
  char magic[kIndexMagicLen];
  if (!in.read(magic, kIndexMagicLen) || std::string_view(magic, kIndexMagicLen) != kIndexMagic) {
    throw FormatError("not a para-rank index (bad magic)");
  }
  TfIdfIndex index;
  index.options_.ngrams = static_cast<int>(read_uint<std::uint32_t>(in, "index options"));
  index.options_.hash_bits = static_cast<int>(read_uint<std::uint32_t>(in, "index options"));
  if (index.options_.ngrams < 1 || index.options_.ngrams > 2 || index.options_.hash_bits > 30) {
    throw FormatError("index header has invalid options");
  }
  const auto n_docs = read_uint<std::uint64_t>(in, "document count");
  for (std::uint64_t i = 0; i < n_docs; ++i) index.doc_ids_.push_back(read_string(in, "doc id"));
  const auto n_terms = read_uint<std::uint64_t>(in, "vocabulary size");
  for (std::uint64_t i = 0; i < n_terms; ++i) {
    auto term = read_string(in, "term");
    if (!index.term_ids_.emplace(term, static_cast<std::uint32_t>(i)).second) {
      throw FormatError("duplicate index term '" + term + "'");
    }
    index.terms_.push_back(std::move(term));
  }
  const auto n_df = read_uint<std::uint64_t>(in, "document frequencies");
  for (std::uint64_t i = 0; i < n_df; ++i) {
    const auto id = read_uint<std::uint32_t>(in, "document frequencies");
    const auto count = read_uint<std::uint32_t>(in, "document frequencies");
    if (count > n_docs) throw FormatError("document frequency exceeds document count");
    index.df_[id] = count;
  }
  index.doc_vectors_.resize(n_docs);
  for (auto& vec : index.doc_vectors_) {
    const auto nnz = read_uint<std::uint64_t>(in, "document vector");
    vec.ids.reserve(nnz);
    vec.weights.reserve(nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) {
      vec.ids.push_back(read_uint<std::uint32_t>(in, "document vector"));
      vec.weights.push_back(read_f64(in, "document vector"));
      if (i > 0 && vec.ids[i] <= vec.ids[i - 1]) throw FormatError("document vector ids not sorted");
    }
  }
  return index;
}

}  // namespace pararank
