#include "pararank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <set>

#include <json.hpp>

#include "pararank/errors.hpp"

namespace pararank {
namespace {

using nlohmann::json;

// Runs body(i) for i in [0, n) across OpenMP threads; the first exception
// observed is rethrown after the loop.
template <typename Body>
void parallel_for(std::size_t n, Body body) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(pararank_pipeline_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

bool paragraph_has_answer(const Paragraph& p, const std::vector<std::string>& normalized_answers) {
  const std::string text = normalize_answer(p.text);
  return std::any_of(normalized_answers.begin(), normalized_answers.end(),
                     [&](const std::string& a) { return contains_normalized(text, a); });
}

std::vector<std::string> normalize_all(const std::vector<std::string>& answers) {
  std::vector<std::string> out;
  out.reserve(answers.size());
  for (const auto& a : answers) out.push_back(normalize_answer(a));
  return out;
}

std::optional<std::size_t> first_hit(const std::vector<RankedParagraph>& ranked,
                                     const std::vector<std::string>& normalized_answers) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (paragraph_has_answer(*ranked[i].paragraph, normalized_answers)) return i;
  }
  return std::nullopt;
}

// Ranking plus reading for one question, shared by answer(), evaluate()
// and the grid search.
struct QuestionRun {
  std::vector<Candidate> candidates;
  std::vector<double> scores;
  std::vector<RankedParagraph> read_set;  // top M by combined score
  std::vector<std::optional<ReaderAnswer>> answers;
};

QuestionRun run_question(const PipelineConfig& config, const Corpus& corpus,
                         const TfIdfIndex& index, const CandidateScorer& scorer,
                         const Reader* reader, const TokenSeq& question,
                         std::string_view question_id) {
  QuestionRun run;
  run.candidates = gather_candidates(corpus, index, question, config.n_docs);
  if (run.candidates.empty()) return run;
  run.scores = scorer(question, run.candidates);
  run.read_set = rank_scored(run.candidates, run.scores, config.m_paragraphs, RankOrder::Combined);
  if (reader != nullptr) {
    run.answers.reserve(run.read_set.size());
    for (const auto& r : run.read_set) {
      run.answers.push_back(reader->read(ReadRequest{question_id, question, *r.paragraph}));
    }
  }
  return run;
}

std::vector<CandidateAnswer> candidate_answers(const QuestionRun& run) {
  std::vector<CandidateAnswer> out;
  for (std::size_t i = 0; i < run.read_set.size(); ++i) {
    const auto& a = run.answers[i];
    if (!a) continue;
    const auto& r = run.read_set[i];
    out.push_back(CandidateAnswer::make(a->text, a->score, r.ranker_prob, r.doc_score,
                                        {r.paragraph->doc_id, r.paragraph->para_index}));
  }
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (n_docs == 0) throw std::invalid_argument("n_docs must be at least 1");
  if (m_paragraphs == 0) throw std::invalid_argument("m_paragraphs must be at least 1");
  if (max_span == 0) throw std::invalid_argument("max_span must be at least 1");
  for (double w : {weights.alpha, weights.beta, weights.gamma}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("aggregation weights must be finite and non-negative");
    }
  }
}

std::vector<QaEntry> read_qa_jsonl(std::istream& in) {
  std::vector<QaEntry> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      QaEntry e{j.at("id").get<std::string>(), j.at("question").get<std::string>(),
                j.at("answers").get<std::vector<std::string>>()};
      if (!ids.insert(e.id).second) {
        throw FormatError("qa line " + std::to_string(line_no) + ": duplicate id " + e.id);
      }
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError("qa line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrainingRecord> read_training_jsonl(std::istream& in) {
  std::vector<TrainingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      TrainingRecord r;
      r.question = j.at("question").get<std::string>();
      r.answers = j.at("answers").get<std::vector<std::string>>();
      r.positive_doc_id = j.at("positive").at("doc_id").get<std::string>();
      r.positive_para_index = j.at("positive").at("para_index").get<int>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("training line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Candidate> gather_candidates(const Corpus& corpus, const TfIdfIndex& index,
                                         const TokenSeq& question, std::size_t n_docs) {
  std::vector<Candidate> out;
  for (const auto& hit : index.retrieve(question, n_docs)) {
    for (const auto& p : corpus.document(hit.position).paragraphs) out.push_back({&p, hit.score});
  }
  return out;
}

CandidateScorer model_scorer(const RankerModel& model) {
  return [&model](const TokenSeq& question, std::span<const Candidate> candidates) {
    return score_candidates(model, question, candidates);
  };
}

Pipeline::Pipeline(PipelineConfig config, const Corpus& corpus, const TfIdfIndex& index,
                   CandidateScorer scorer, const Reader& reader)
    : config_(std::move(config)), corpus_(corpus), index_(index), scorer_(std::move(scorer)),
      reader_(reader) {
  config_.validate();
  if (index_.doc_count() != corpus_.size()) {
    throw std::invalid_argument("index and corpus disagree on the number of documents");
  }
}

Pipeline::Pipeline(PipelineConfig config, const Corpus& corpus, const TfIdfIndex& index,
                   const RankerModel& model, const Reader& reader)
    : Pipeline(std::move(config), corpus, index, model_scorer(model), reader) {}

AnswerResult Pipeline::answer(std::string_view question, std::string_view question_id) const {
  const TokenSeq q = tokenize(question);
  const QuestionRun run = run_question(config_, corpus_, index_, scorer_, &reader_, q, question_id);
  AnswerResult result;
  if (run.candidates.empty()) {
    result.reason = "no documents matched";
    return result;
  }
  result.paragraphs_read = run.read_set.size();
  for (std::size_t i = 0; i < run.read_set.size() && i < config_.trace_size; ++i) {
    const auto& r = run.read_set[i];
    TraceEntry t{r.paragraph->doc_id, r.paragraph->para_index, r.ranker_prob, r.doc_score,
                 r.combined, std::nullopt, 0.0, r.paragraph->text};
    if (run.answers[i]) {
      t.answer = run.answers[i]->text;
      t.reader_score = run.answers[i]->score;
    }
    result.trace.push_back(std::move(t));
  }
  const auto candidates = candidate_answers(run);
  if (const auto selected = select_answer(candidates, config_.weights)) {
    result.answer = selected->answer_text;
    result.total_score = selected->total_score;
  } else {
    result.reason = "reader found no answer";
  }
  return result;
}

RecallReport eval_recall_at_m(const PipelineConfig& config, const Corpus& corpus,
                              const TfIdfIndex& index, const CandidateScorer& scorer,
                              std::span<const QaEntry> qa_set) {
  config.validate();
  if (qa_set.empty()) throw std::invalid_argument("recall evaluation needs a non-empty qa set");
  RecallReport report;
  report.records.resize(qa_set.size());
  parallel_for(qa_set.size(), [&](std::size_t i) {
    const auto& qa = qa_set[i];
    const TokenSeq q = tokenize(qa.question);
    const auto answers = normalize_all(qa.answers);
    auto& rec = report.records[i];
    rec.question_id = qa.id;
    const auto candidates = gather_candidates(corpus, index, q, config.n_docs);
    if (candidates.empty()) return;
    rec.answer_retrieved = std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) {
      return paragraph_has_answer(*c.paragraph, answers);
    });
    if (!rec.answer_retrieved) return;
    const auto scores = scorer(q, candidates);
    rec.first_hit_combined =
        first_hit(rank_scored(candidates, scores, config.m_paragraphs, RankOrder::Combined), answers);
    rec.first_hit_ranker_only =
        first_hit(rank_scored(candidates, scores, config.m_paragraphs, RankOrder::RankerOnly), answers);
  });
  std::size_t combined = 0;
  std::size_t ranker_only = 0;
  std::size_t retrieved = 0;
  for (const auto& r : report.records) {
    combined += r.first_hit_combined.has_value();
    ranker_only += r.first_hit_ranker_only.has_value();
    retrieved += r.answer_retrieved;
  }
  const auto n = static_cast<double>(qa_set.size());
  report.combined = static_cast<double>(combined) / n;
  report.ranker_only = static_cast<double>(ranker_only) / n;
  report.retrieval = static_cast<double>(retrieved) / n;
  return report;
}

RecallReport eval_recall_at_m(const PipelineConfig& config, const Corpus& corpus,
                              const TfIdfIndex& index, const RankerModel& model,
                              std::span<const QaEntry> qa_set) {
  return eval_recall_at_m(config, corpus, index, model_scorer(model), qa_set);
}

double eval_exact_match(const std::map<std::string, std::optional<std::string>>& predictions,
                        const std::map<std::string, std::vector<std::string>>& gold) {
  std::vector<std::string> missing;
  for (const auto& [id, _] : gold) {
    if (!predictions.count(id)) missing.push_back(id);
  }
  for (const auto& [id, _] : predictions) {
    if (!gold.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string msg = "prediction/gold id mismatch:";
    for (const auto& id : missing) msg += " " + id;
    throw FormatError(msg);
  }
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& [id, answers] : gold) {
    const auto& pred = predictions.at(id);
    if (!pred) continue;
    const std::string p = normalize_answer(*pred);
    hits += std::any_of(answers.begin(), answers.end(),
                        [&](const std::string& a) { return normalize_answer(a) == p; });
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

EvalReport Pipeline::evaluate(std::span<const QaEntry> qa_set) const {
  if (qa_set.empty()) throw std::invalid_argument("evaluation needs a non-empty qa set");
  EvalReport report;
  report.records.resize(qa_set.size());
  std::vector<char> ranker_only_hit(qa_set.size(), 0);
  parallel_for(qa_set.size(), [&](std::size_t i) {
    const auto& qa = qa_set[i];
    auto& rec = report.records[i];
    rec.id = qa.id;
    rec.gold = qa.answers;
    const TokenSeq q = tokenize(qa.question);
    const auto run = run_question(config_, corpus_, index_, scorer_, &reader_, q, qa.id);
    if (run.candidates.empty()) return;
    const auto answers = normalize_all(qa.answers);
    rec.first_answer_rank = first_hit(run.read_set, answers);
    ranker_only_hit[i] = first_hit(rank_scored(run.candidates, run.scores, config_.m_paragraphs,
                                               RankOrder::RankerOnly),
                                   answers)
                             .has_value();
    const auto candidates = candidate_answers(run);
    if (const auto selected = select_answer(candidates, config_.weights)) {
      rec.predicted = selected->answer_text;
      const std::string p = normalize_answer(selected->answer_text);
      rec.exact_match = std::any_of(answers.begin(), answers.end(),
                                    [&](const std::string& a) { return a == p; });
    }
  });
  std::size_t em = 0;
  std::size_t recall = 0;
  std::size_t recall_ranker = 0;
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    em += report.records[i].exact_match;
    recall += report.records[i].first_answer_rank.has_value();
    recall_ranker += ranker_only_hit[i] != 0;
  }
  const auto n = static_cast<double>(qa_set.size());
  report.evaluated = qa_set.size();
  report.exact_match = static_cast<double>(em) / n;
  report.recall_at_m = static_cast<double>(recall) / n;
  report.recall_at_m_ranker_only = static_cast<double>(recall_ranker) / n;
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["exact_match"] = exact_match;
  j["recall_at_m"] = recall_at_m;
  j["recall_at_m_ranker_only"] = recall_at_m_ranker_only;
  j["evaluated"] = evaluated;
  json recs = json::array();
  for (const auto& r : records) {
    json jr;
    jr["id"] = r.id;
    jr["gold"] = r.gold;
    jr["predicted"] = r.predicted ? json(*r.predicted) : json(nullptr);
    jr["first_answer_rank"] = r.first_answer_rank ? json(*r.first_answer_rank) : json(nullptr);
    jr["exact_match"] = r.exact_match;
    recs.push_back(std::move(jr));
  }
  j["records"] = std::move(recs);
  return j.dump(2);
}

GridSearchResult grid_search(const PipelineConfig& config, const Corpus& corpus,
                             const TfIdfIndex& index, const CandidateScorer& scorer,
                             const Reader& reader, std::span<const QaEntry> validation,
                             std::span<const double> grid) {
  config.validate();
  if (validation.empty()) throw std::invalid_argument("grid search needs validation questions");
  if (grid.empty()) throw std::invalid_argument("grid search needs at least one grid value");

  std::vector<std::vector<CandidateAnswer>> per_question(validation.size());
  std::vector<std::vector<std::string>> gold(validation.size());
  parallel_for(validation.size(), [&](std::size_t i) {
    const TokenSeq q = tokenize(validation[i].question);
    const auto run = run_question(config, corpus, index, scorer, &reader, q, validation[i].id);
    per_question[i] = candidate_answers(run);
    gold[i] = normalize_all(validation[i].answers);
  });

  GridSearchResult result;
  bool first = true;
  for (double a : grid) {
    for (double b : grid) {
      for (double g : grid) {
        GridPoint point{{a, b, g}, 0.0};
        std::size_t hits = 0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
          const auto selected = select_answer(per_question[i], point.weights);
          if (!selected) continue;
          const std::string p = normalize_answer(selected->answer_text);
          hits += std::find(gold[i].begin(), gold[i].end(), p) != gold[i].end();
        }
        point.exact_match = static_cast<double>(hits) / static_cast<double>(validation.size());
        // First grid point wins ties, so the search is order-deterministic.
        if (first || point.exact_match > result.best.exact_match) result.best = point;
        first = false;
        result.points.push_back(point);
      }
    }
  }
  return result;
}

}  // namespace pararank
