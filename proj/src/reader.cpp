#include "pararank/reader.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <unordered_set>

#include <json.hpp>

#include "pararank/errors.hpp"

namespace pararank {
namespace {

bool is_punctuation(const Token& t) {
  return t.size() == 1 && std::ispunct(static_cast<unsigned char>(t[0]));
}

}  // namespace

std::optional<ReaderAnswer> lexical_read(const TokenSeq& paragraph, const TokenSeq& question,
                                         const IdfLookup& idf,
                                         const LexicalReaderOptions& options) {
  if (options.max_span == 0) throw std::invalid_argument("max_span must be at least 1");
  const std::size_t n = paragraph.size();

  // Content question tokens and their idf; positions where they occur.
  std::vector<Token> content;
  std::unordered_set<Token> seen;
  for (const auto& t : question) {
    if (is_punctuation(t) || !seen.insert(t).second) continue;
    content.push_back(t);
  }
  std::vector<double> weight(content.size());
  std::vector<std::vector<std::size_t>> occurrences(content.size());
  bool any = false;
  for (std::size_t q = 0; q < content.size(); ++q) {
    weight[q] = idf(content[q]);
    for (std::size_t i = 0; i < n; ++i) {
      if (paragraph[i] == content[q]) occurrences[q].push_back(i);
    }
    any = any || (!occurrences[q].empty() && weight[q] > 0.0);
  }
  if (!any) return std::nullopt;

  std::optional<ReaderAnswer> best;
  for (std::size_t start = 0; start < n; ++start) {
    if (is_punctuation(paragraph[start])) continue;
    for (std::size_t len = 1; len <= options.max_span && start + len <= n; ++len) {
      const std::size_t end = start + len;
      if (is_punctuation(paragraph[end - 1])) continue;
      const std::size_t lo = start >= options.window ? start - options.window : 0;
      const std::size_t hi = std::min(n, end + options.window);
      double score = -options.length_penalty * static_cast<double>(len);
      bool restates_question = false;
      for (std::size_t q = 0; q < content.size() && !restates_question; ++q) {
        for (std::size_t o : occurrences[q]) restates_question |= (o >= start && o < end);
      }
      for (std::size_t q = 0; q < content.size(); ++q) {
        double credit = 0.0;
        for (std::size_t o : occurrences[q]) {
          if (o < lo || o >= hi) continue;
          if (restates_question && (o < start || o >= end)) continue;
          double w = 0.0;
          if (o < start) {
            w = 1.0 / (1.0 + static_cast<double>(start - o));
          } else if (o >= end) {
            w = 1.0 / (1.0 + static_cast<double>(o - end + 1));
          } else {
            w = options.inside_span_weight;
          }
          credit = std::max(credit, w);
        }
        score += weight[q] * credit;
      }
      if (score > 0.0 && (!best || score > best->score)) {
        best = ReaderAnswer{detokenize(paragraph, start, end), start, end, score};
      }
    }
  }
  return best;
}

LexicalReader::LexicalReader(IdfLookup idf, LexicalReaderOptions options)
    : idf_(std::move(idf)), options_(options) {}

LexicalReader::LexicalReader(const TfIdfIndex& index, LexicalReaderOptions options)
    : idf_([&index](std::string_view t) { return index.token_idf(t); }), options_(options) {}

std::optional<ReaderAnswer> LexicalReader::read(const ReadRequest& request) const {
  return lexical_read(request.paragraph.tokens, request.question, idf_, options_);
}

ExternalReader ExternalReader::from_jsonl(std::istream& source) {
  ExternalReader reader;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Key key{j.at("question_id").get<std::string>(), j.at("doc_id").get<std::string>(),
              j.at("para_index").get<int>()};
      Entry e{j.at("answer").get<std::string>(), j.at("score").get<double>()};
      if (!(e.score >= 0.0) || !std::isfinite(e.score)) {
        throw FormatError("reader answers line " + std::to_string(line_no) +
                          ": score must be finite and non-negative");
      }
      reader.answers_[std::move(key)] = std::move(e);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("reader answers line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return reader;
}

std::optional<ReaderAnswer> ExternalReader::read(const ReadRequest& request) const {
  const Key key{std::string(request.question_id), request.paragraph.doc_id,
                request.paragraph.para_index};
  const auto it = answers_.find(key);
  if (it == answers_.end()) return std::nullopt;
  ReaderAnswer a{it->second.answer, 0, 0, it->second.score};
  // Locate the span when the answer tokens occur verbatim; otherwise the
  // offsets stay empty.
  const TokenSeq needle = tokenize(a.text);
  const auto& hay = request.paragraph.tokens;
  if (!needle.empty()) {
    const auto found = std::search(hay.begin(), hay.end(), needle.begin(), needle.end());
    if (found != hay.end()) {
      a.start = static_cast<std::size_t>(found - hay.begin());
      a.end = a.start + needle.size();
    }
  }
  return a;
}

}  // namespace pararank
