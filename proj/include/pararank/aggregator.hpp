#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pararank {

/// SQuAD answer normalisation: lowercase, drop ASCII punctuation, drop the
/// whole-word articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

/// True when `answer` (normalised) occurs in `text` (normalised) on token
/// boundaries. An empty answer is never contained.
bool contains_normalized(std::string_view normalized_text, std::string_view normalized_answer);
bool contains_answer(std::string_view text, std::string_view answer);

struct Provenance {
  std::string doc_id;
  int para_index = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
  friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

struct CandidateAnswer {
  std::string answer_text;
  std::string normalized_text;
  double reader_score = 0.0;  // unnormalised reader score, >= 0
  double ranker_prob = 0.0;   // p(P|Q)
  double doc_score = 0.0;     // p~(D|Q)
  Provenance provenance;

  /// Fills normalized_text from answer_text.
  static CandidateAnswer make(std::string answer_text, double reader_score, double ranker_prob,
                              double doc_score, Provenance provenance);
};

struct AggregationWeights {
  double alpha = 1.0;  // reader
  double beta = 1.0;   // ranker
  double gamma = 1.0;  // retriever
};

/// log of reader^alpha * ranker^beta * doc^gamma, with 0^0 = 1 and a zero
/// factor under a positive exponent giving -inf.
double log_candidate_score(const CandidateAnswer& c, const AggregationWeights& w);
double candidate_score(const CandidateAnswer& c, const AggregationWeights& w);

struct AnswerGroup {
  std::string normalized_text;
  double total_score = 0.0;
  double log_total = 0.0;
  std::size_t best_member = 0;  // index into the input list
  Provenance best_provenance;
  std::size_t members = 0;
};

/// Groups duplicates by normalised text and sums their scores. Groups come
/// out by total descending, ties by the earliest member provenance.
std::vector<AnswerGroup> coverage_merge(std::span<const CandidateAnswer> candidates,
                                        const AggregationWeights& w);

struct SelectedAnswer {
  std::string answer_text;  // surface form of the group's best member
  double total_score = 0.0;
  Provenance provenance;
};

std::optional<SelectedAnswer> select_answer(std::span<const CandidateAnswer> candidates,
                                            const AggregationWeights& w);

}  // namespace pararank
