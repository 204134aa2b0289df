#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace pararank::testing {
namespace {

std::map<std::string, double> term_counts(const TokenSeq& tokens, int ngrams) {
  std::map<std::string, double> tf;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tf[tokens[i]] += 1;
    if (ngrams >= 2 && i + 1 < tokens.size()) tf[tokens[i] + " " + tokens[i + 1]] += 1;
  }
  return tf;
}

double exp_score(double x, double w) {
  if (w == 0.0) return 1.0;
  return std::pow(x, w);
}

}  // namespace

std::vector<double> dense_tfidf_scores(const Corpus& corpus, const TokenSeq& query, int ngrams) {
  const std::size_t n = corpus.size();
  std::vector<std::map<std::string, double>> docs(n);
  for (std::size_t d = 0; d < n; ++d) {
    // Bigrams never cross paragraph boundaries.
    for (const auto& p : corpus.document(d).paragraphs) {
      for (const auto& [t, c] : term_counts(p.tokens, ngrams)) docs[d][t] += c;
    }
  }
  std::map<std::string, double> df;
  for (const auto& doc : docs) {
    for (const auto& [t, c] : doc) df[t] += 1;
  }
  auto idf = [&](const std::string& t) {
    const auto it = df.find(t);
    const double f = it == df.end() ? 0.0 : it->second;
    return std::log((1.0 + static_cast<double>(n)) / (1.0 + f));
  };
  auto weigh = [&](const std::map<std::string, double>& tf) {
    std::map<std::string, double> w;
    double norm = 0.0;
    for (const auto& [t, c] : tf) {
      if (!df.count(t)) continue;
      const double v = (1.0 + std::log(c)) * idf(t);
      if (v == 0.0) continue;
      w[t] = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& [t, v] : w) v /= norm;
    return w;
  };
  const auto q = weigh(term_counts(query, ngrams));
  std::vector<double> scores(n, 0.0);
  for (std::size_t d = 0; d < n; ++d) {
    const auto dv = weigh(docs[d]);
    double s = 0.0;
    for (const auto& [t, v] : q) {
      const auto it = dv.find(t);
      if (it != dv.end()) s += v * it->second;
    }
    scores[d] = std::clamp(s, 0.0, 1.0);
  }
  return scores;
}

std::vector<std::pair<std::size_t, double>> brute_force_top(const std::vector<double>& scores,
                                                            std::size_t n) {
  std::vector<std::pair<std::size_t, double>> all;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0.0) all.emplace_back(i, scores[i]);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (all.size() > n) all.resize(n);
  return all;
}

ScalarCell scalar_lstm_cell(const LstmDirection& p, const std::vector<double>& x,
                            const std::vector<double>& h, const std::vector<double>& c) {
  const auto H = static_cast<std::size_t>(p.hidden());
  std::vector<double> pre(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double s = p.b(static_cast<Eigen::Index>(r));
    for (std::size_t j = 0; j < x.size(); ++j) {
      s += p.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * x[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      s += p.U(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * h[j];
    }
    pre[r] = s;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  ScalarCell out{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sig(pre[k]);
    const double f = sig(pre[H + k]);
    const double o = sig(pre[2 * H + k]);
    const double g = std::tanh(pre[3 * H + k]);
    out.c[k] = f * c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

Eigen::VectorXd scalar_encode(const BiLstmEncoder& encoder, const Eigen::MatrixXd& embedded) {
  const auto T = static_cast<std::size_t>(embedded.cols());
  std::vector<std::vector<double>> input(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (Eigen::Index r = 0; r < embedded.rows(); ++r) {
      input[t].push_back(embedded(r, static_cast<Eigen::Index>(t)));
    }
  }
  const auto H = static_cast<std::size_t>(encoder.hidden_dim());
  std::vector<double> fwd_last, bwd_first;
  for (const auto& layer : encoder.layers()) {
    std::vector<std::vector<double>> fw(T), bw(T);
    ScalarCell s{std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
    for (std::size_t t = 0; t < T; ++t) {
      s = scalar_lstm_cell(layer.forward, input[t], s.h, s.c);
      fw[t] = s.h;
    }
    s = {std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
    for (std::size_t t = T; t-- > 0;) {
      s = scalar_lstm_cell(layer.backward, input[t], s.h, s.c);
      bw[t] = s.h;
    }
    for (std::size_t t = 0; t < T; ++t) {
      input[t] = fw[t];
      input[t].insert(input[t].end(), bw[t].begin(), bw[t].end());
    }
    fwd_last = fw[T - 1];
    bwd_first = bw[0];
  }
  Eigen::VectorXd repr(static_cast<Eigen::Index>(2 * H));
  for (std::size_t k = 0; k < H; ++k) {
    repr(static_cast<Eigen::Index>(k)) = fwd_last[k];
    repr(static_cast<Eigen::Index>(H + k)) = bwd_first[k];
  }
  return repr;
}

GradCheck finite_difference_check(const std::vector<TensorRef>& params,
                                  const std::vector<TensorRef>& analytic,
                                  const std::function<double()>& loss, double eps,
                                  std::size_t per_tensor, double floor) {
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    const auto& g = analytic.at(t);
    const std::size_t n = p.size();
    const std::size_t step = std::max<std::size_t>(1, n / std::max<std::size_t>(1, per_tensor));
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = p.data[i];
      p.data[i] = saved + eps;
      const double up = loss();
      p.data[i] = saved - eps;
      const double down = loss();
      p.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g.data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.probed;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

std::optional<BruteSelection> brute_force_select(const std::vector<CandidateAnswer>& candidates,
                                                 const AggregationWeights& w) {
  std::map<std::string, double> totals;
  std::map<std::string, Provenance> earliest;
  for (const auto& c : candidates) {
    const std::string key = normalize_answer(c.answer_text);
    totals[key] += exp_score(c.reader_score, w.alpha) * exp_score(c.ranker_prob, w.beta) *
                   exp_score(c.doc_score, w.gamma);
    const auto it = earliest.find(key);
    if (it == earliest.end() || c.provenance < it->second) earliest[key] = c.provenance;
  }
  std::optional<BruteSelection> best;
  std::optional<Provenance> best_prov;
  for (const auto& [key, total] : totals) {
    if (!best || total > best->total ||
        (total == best->total && earliest[key] < *best_prov)) {
      best = BruteSelection{key, total};
      best_prov = earliest[key];
    }
  }
  return best;
}

std::vector<const Paragraph*> brute_force_rank(const std::vector<Candidate>& candidates,
                                               const std::vector<double>& scores,
                                               RankOrder order) {
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t i) {
    const double prob = 1.0 / (1.0 + std::exp(-scores[i]));
    return order == RankOrder::Combined ? prob * candidates[i].doc_score : prob;
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) > key(b);
    if (order == RankOrder::RankerOnly && scores[a] != scores[b]) return scores[a] > scores[b];
    if (candidates[a].doc_score != candidates[b].doc_score) {
      return candidates[a].doc_score > candidates[b].doc_score;
    }
    const auto& pa = *candidates[a].paragraph;
    const auto& pb = *candidates[b].paragraph;
    if (pa.doc_id != pb.doc_id) return pa.doc_id < pb.doc_id;
    return pa.para_index < pb.para_index;
  });
  std::vector<const Paragraph*> out;
  for (auto i : idx) out.push_back(candidates[i].paragraph);
  return out;
}

}  // namespace pararank::testing
