#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>

#include "pararank/retriever.hpp"
#include "pararank/text.hpp"

namespace pararank {

struct ReaderAnswer {
  std::string text;
  std::size_t start = 0;  // token offsets into the paragraph, [start, end)
  std::size_t end = 0;
  double score = 0.0;     // unnormalised, non-negative
};

struct ReadRequest {
  std::string_view question_id;
  const TokenSeq& question;
  const Paragraph& paragraph;
};

/// Extractive reader: best answer span of one paragraph, or none.
class Reader {
 public:
  virtual ~Reader() = default;
  virtual std::optional<ReaderAnswer> read(const ReadRequest& request) const = 0;
};

using IdfLookup = std::function<double(std::string_view token)>;

struct LexicalReaderOptions {
  std::size_t max_span = 5;
  std::size_t window = 10;            // context tokens on each side of the span
  double length_penalty = 0.01;       // per span token
  double inside_span_weight = 0.1;    // proximity credit for question tokens inside the span
};

/// Scores every span of at most max_span tokens by the idf-weighted
/// proximity of question tokens around it:
///
///   score = sum over distinct content question tokens q of
///             idf(q) * max over occurrences of q in the window of w(o)
///           - length_penalty * span length
///
/// with w(o) = 1 / (1 + distance to the span) outside the span and
/// inside_span_weight inside it. A span that itself contains a question
/// token only earns the inside credit. Punctuation never counts as content
/// and never starts or ends a span.
/// Returns the best span, ties to the earliest; none if its score <= 0.
std::optional<ReaderAnswer> lexical_read(const TokenSeq& paragraph, const TokenSeq& question,
                                         const IdfLookup& idf,
                                         const LexicalReaderOptions& options = {});

class LexicalReader : public Reader {
 public:
  LexicalReader(IdfLookup idf, LexicalReaderOptions options = {});
  /// Uses the index's unigram idf.
  explicit LexicalReader(const TfIdfIndex& index, LexicalReaderOptions options = {});

  std::optional<ReaderAnswer> read(const ReadRequest& request) const override;

 private:
  IdfLookup idf_;
  LexicalReaderOptions options_;
};

/// Serves answers produced by an external reader, one JSON-lines record per
/// paragraph: {"question_id", "doc_id", "para_index", "answer", "score"}.
class ExternalReader : public Reader {
 public:
  static ExternalReader from_jsonl(std::istream& source);

  std::optional<ReaderAnswer> read(const ReadRequest& request) const override;
  std::size_t size() const { return answers_.size(); }

 private:
  using Key = std::tuple<std::string, std::string, int>;
  struct Entry {
    std::string answer;
    double score = 0.0;
  };
  std::map<Key, Entry> answers_;
};

}  // namespace pararank
