#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pararank/aggregator.hpp"
#include "pararank/ranker.hpp"
#include "pararank/reader.hpp"
#include "pararank/retriever.hpp"

namespace pararank {

struct PipelineConfig {
  std::size_t n_docs = 20;
  std::size_t m_paragraphs = 200;
  AggregationWeights weights;
  std::size_t max_span = 5;
  std::size_t trace_size = 5;
  std::string corpus_path;
  std::string index_path;
  std::string model_path;
  std::string embeddings_path;

  void validate() const;
};

/// Evaluation QA record: {"id", "question", "answers"}.
struct QaEntry {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
};

/// Training QA record: {"question", "answers", "positive": {"doc_id", "para_index"}}.
struct TrainingRecord {
  std::string question;
  std::vector<std::string> answers;
  std::string positive_doc_id;
  int positive_para_index = 0;
};

std::vector<QaEntry> read_qa_jsonl(std::istream& in);
std::vector<TrainingRecord> read_training_jsonl(std::istream& in);

struct TraceEntry {
  std::string doc_id;
  int para_index = 0;
  double ranker_prob = 0.0;
  double doc_score = 0.0;
  double combined = 0.0;
  std::optional<std::string> answer;
  double reader_score = 0.0;
  std::string text;
};

struct AnswerResult {
  std::optional<std::string> answer;
  double total_score = 0.0;
  std::string reason;               // set when no answer is produced
  std::vector<TraceEntry> trace;    // top ranked paragraphs
  std::size_t paragraphs_read = 0;  // never more than m_paragraphs
};

struct QuestionRecord {
  std::string id;
  std::vector<std::string> gold;
  std::optional<std::string> predicted;
  std::optional<std::size_t> first_answer_rank;
  bool exact_match = false;
};

struct EvalReport {
  double exact_match = 0.0;
  double recall_at_m = 0.0;
  double recall_at_m_ranker_only = 0.0;
  std::size_t evaluated = 0;
  std::vector<QuestionRecord> records;

  std::string to_json() const;
};


/// The paragraphs of the top-N retrieved documents, each carrying its
/// document's retrieval score.
std::vector<Candidate> gather_candidates(const Corpus& corpus, const TfIdfIndex& index,
                                         const TokenSeq& question, std::size_t n_docs);

/// Assigns s(p, q) to each candidate; lets evaluation swap in oracles.
using CandidateScorer =
    std::function<std::vector<double>(const TokenSeq& question, std::span<const Candidate>)>;

CandidateScorer model_scorer(const RankerModel& model);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, const Corpus& corpus, const TfIdfIndex& index,
           CandidateScorer scorer, const Reader& reader);
  Pipeline(PipelineConfig config, const Corpus& corpus, const TfIdfIndex& index,
           const RankerModel& model, const Reader& reader);

  /// retrieve N docs -> rank their paragraphs -> read the top M ->
  /// aggregate. Empty retrieval yields no answer with reason
  /// "no documents matched".
  AnswerResult answer(std::string_view question, std::string_view question_id = {}) const;

  /// Answers every question (in parallel) and reports exact match and
  /// recall@M over the same ranked read sets.
  EvalReport evaluate(std::span<const QaEntry> qa_set) const;

  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  const Corpus& corpus_;
  const TfIdfIndex& index_;
  CandidateScorer scorer_;
  const Reader& reader_;
};

struct RecallRecord {
  std::string question_id;
  std::optional<std::size_t> first_hit_combined;  // 0-based rank in the read set
  std::optional<std::size_t> first_hit_ranker_only;
  bool answer_retrieved = false;  // some candidate paragraph contains an answer
};

struct RecallReport {
  double combined = 0.0;     // paragraphs ordered by p(P|Q) * p~(D|Q)
  double ranker_only = 0.0;  // paragraphs ordered by p(P|Q)
  double retrieval = 0.0;    // answer anywhere in the N retrieved documents
  std::vector<RecallRecord> records;
};

/// Fraction of questions whose top-M paragraphs contain a gold answer on
/// token boundaries. Questions are evaluated in parallel; records keep the
/// input order.
RecallReport eval_recall_at_m(const PipelineConfig& config, const Corpus& corpus,
                              const TfIdfIndex& index, const CandidateScorer& scorer,
                              std::span<const QaEntry> qa_set);
RecallReport eval_recall_at_m(const PipelineConfig& config, const Corpus& corpus,
                              const TfIdfIndex& index, const RankerModel& model,
                              std::span<const QaEntry> qa_set);

/// Hit iff the normalised prediction equals a normalised gold answer.
/// Throws FormatError listing ids present on one side only.
double eval_exact_match(const std::map<std::string, std::optional<std::string>>& predictions,
                        const std::map<std::string, std::vector<std::string>>& gold);

struct GridPoint {
  AggregationWeights weights;
  double exact_match = 0.0;
};

struct GridSearchResult {
  GridPoint best;
  std::vector<GridPoint> points;
};

/// Exact match over every (alpha, beta, gamma) in grid^3. Reading happens
/// once per question; only the aggregation is repeated per grid point.
GridSearchResult grid_search(const PipelineConfig& config, const Corpus& corpus,
                             const TfIdfIndex& index, const CandidateScorer& scorer,
                             const Reader& reader, std::span<const QaEntry> validation,
                             std::span<const double> grid);

inline constexpr double kDefaultGrid[] = {0.0, 0.5, 1.0, 2.0};

}  // namespace pararank
