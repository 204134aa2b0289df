#include "pararank/aggregator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace pararank {

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  std::istringstream words(cleaned);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

bool contains_normalized(std::string_view normalized_text, std::string_view normalized_answer) {
  if (normalized_answer.empty()) return false;
  const std::string hay = " " + std::string(normalized_text) + " ";
  const std::string needle = " " + std::string(normalized_answer) + " ";
  return hay.find(needle) != std::string::npos;
}

bool contains_answer(std::string_view text, std::string_view answer) {
  return contains_normalized(normalize_answer(text), normalize_answer(answer));
}

CandidateAnswer CandidateAnswer::make(std::string answer_text, double reader_score,
                                      double ranker_prob, double doc_score,
                                      Provenance provenance) {
  CandidateAnswer c;
  c.normalized_text = normalize_answer(answer_text);
  c.answer_text = std::move(answer_text);
  c.reader_score = reader_score;
  c.ranker_prob = ranker_prob;
  c.doc_score = doc_score;
  c.provenance = std::move(provenance);
  return c;
}

namespace {

double log_power(double base, double exponent) {
  if (exponent == 0.0) return 0.0;
  if (base <= 0.0) return -std::numeric_limits<double>::infinity();
  return exponent * std::log(base);
}

// log(exp(a) + exp(b)) for a, b possibly -inf.
double log_add(double a, double b) {
  if (std::isinf(a) && a < 0) return b;
  if (std::isinf(b) && b < 0) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

double log_candidate_score(const CandidateAnswer& c, const AggregationWeights& w) {
  return log_power(c.reader_score, w.alpha) + log_power(c.ranker_prob, w.beta) +
         log_power(c.doc_score, w.gamma);
}

double candidate_score(const CandidateAnswer& c, const AggregationWeights& w) {
  return std::exp(log_candidate_score(c, w));
}

std::vector<AnswerGroup> coverage_merge(std::span<const CandidateAnswer> candidates,
                                        const AggregationWeights& w) {
  std::map<std::string, std::size_t> slot;
  std::vector<AnswerGroup> groups;
  std::vector<Provenance> earliest;
  std::vector<double> best_log;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const double ls = log_candidate_score(c, w);
    auto [it, inserted] = slot.emplace(c.normalized_text, groups.size());
    if (inserted) {
      groups.push_back({c.normalized_text, 0.0, ls, i, c.provenance, 1});
      earliest.push_back(c.provenance);
      best_log.push_back(ls);
      continue;
    }
    const std::size_t g = it->second;
    auto& group = groups[g];
    group.log_total = log_add(group.log_total, ls);
    ++group.members;
    earliest[g] = std::min(earliest[g], c.provenance);
    if (ls > best_log[g] || (ls == best_log[g] && c.provenance < group.best_provenance)) {
      best_log[g] = ls;
      group.best_member = i;
      group.best_provenance = c.provenance;
    }
  }
  for (auto& g : groups) g.total_score = std::exp(g.log_total);

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a].log_total != groups[b].log_total) return groups[a].log_total > groups[b].log_total;
    if (earliest[a] != earliest[b]) return earliest[a] < earliest[b];
    return groups[a].normalized_text < groups[b].normalized_text;
  });
  std::vector<AnswerGroup> out;
  out.reserve(groups.size());
  for (std::size_t i : order) out.push_back(std::move(groups[i]));
  return out;
}

std::optional<SelectedAnswer> select_answer(std::span<const CandidateAnswer> candidates,
                                            const AggregationWeights& w) {
  const auto groups = coverage_merge(candidates, w);
  if (groups.empty()) return std::nullopt;
  const auto& top = groups.front();
  return SelectedAnswer{candidates[top.best_member].answer_text, top.total_score,
                        top.best_provenance};
}

}  // namespace pararank
