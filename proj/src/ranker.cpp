#include "pararank/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pararank/aggregator.hpp"
#include "pararank/errors.hpp"

namespace pararank {
namespace {

Eigen::MatrixXd embed_capped(const Embedder& embedder, const TokenSeq& tokens, std::size_t cap) {
  if (tokens.size() <= cap) return embedder.embed(tokens);
  return embedder.embed(TokenSeq(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cap)));
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = uniform_real(rng, -bound, bound);
  }
}

bool provenance_less(const Paragraph& a, const Paragraph& b) {
  if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
  return a.para_index < b.para_index;
}

bool same_paragraph(const Paragraph& a, const Paragraph& b) {
  return a.doc_id == b.doc_id && a.para_index == b.para_index;
}

}  // namespace

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Dot: return "dot";
    case ScorerKind::Bilinear: return "bilinear";
    case ScorerKind::Mlp: return "mlp";
  }
  return "unknown";
}

std::optional<ScorerKind> parse_scorer_kind(std::string_view name) {
  if (name == "dot") return ScorerKind::Dot;
  if (name == "bilinear") return ScorerKind::Bilinear;
  if (name == "mlp") return ScorerKind::Mlp;
  return std::nullopt;
}

RankerModel RankerModel::create(const ModelConfig& config, std::shared_ptr<const Embedder> embedder,
                                std::uint64_t seed) {
  if (!embedder) throw std::invalid_argument("ranker needs an embedder");
  if (embedder->dim() == 0) throw DimensionError("embedding dimension must be positive");
  Rng rng(seed);
  const auto in = static_cast<Eigen::Index>(embedder->dim());
  const auto hidden = static_cast<Eigen::Index>(config.hidden);
  BiLstmEncoder enc_p(in, hidden, config.layers, config.dropout);
  BiLstmEncoder enc_q(in, hidden, config.layers, config.dropout);
  enc_p.init_uniform(rng);
  enc_q.init_uniform(rng);

  const Eigen::Index width = 2 * hidden;
  ScorerParams scorer;
  scorer.kind = config.scorer;
  if (config.scorer == ScorerKind::Bilinear) {
    scorer.bilinear = Eigen::MatrixXd::Identity(width, width);
  } else if (config.scorer == ScorerKind::Mlp) {
    const auto mh = static_cast<Eigen::Index>(config.mlp_hidden);
    if (mh <= 0) throw DimensionError("mlp_hidden must be positive");
    scorer.mlp_w.resize(mh, 3 * width);
    scorer.mlp_b.resize(mh);
    scorer.mlp_v.resize(mh);
    scorer.mlp_out = Eigen::VectorXd::Zero(1);
    fill_uniform(scorer.mlp_w, 1.0 / std::sqrt(static_cast<double>(3 * width)), rng);
    fill_uniform(scorer.mlp_b, 1.0 / std::sqrt(static_cast<double>(3 * width)), rng);
    fill_uniform(scorer.mlp_v, 1.0 / std::sqrt(static_cast<double>(mh)), rng);
  }
  return assemble(config, std::move(embedder), std::move(enc_p), std::move(enc_q), std::move(scorer));
}

RankerModel RankerModel::assemble(const ModelConfig& config,
                                  std::shared_ptr<const Embedder> embedder,
                                  BiLstmEncoder encoder_p, BiLstmEncoder encoder_q,
                                  ScorerParams scorer) {
  if (encoder_p.output_dim() != encoder_q.output_dim()) {
    throw DimensionError("paragraph and question encoders differ in width");
  }
  const Eigen::Index w = encoder_p.output_dim();
  if (scorer.kind == ScorerKind::Bilinear && (scorer.bilinear.rows() != w || scorer.bilinear.cols() != w)) {
    throw DimensionError("bilinear matrix must be square of the encoder width");
  }
  if (scorer.kind == ScorerKind::Mlp &&
      (scorer.mlp_w.cols() != 3 * w || scorer.mlp_b.size() != scorer.mlp_w.rows() ||
       scorer.mlp_v.size() != scorer.mlp_w.rows() || scorer.mlp_out.size() != 1)) {
    throw DimensionError("mlp scorer shapes inconsistent with encoder width");
  }
  RankerModel m;
  m.config_ = config;
  m.config_.scorer = scorer.kind;
  m.embedder_ = std::move(embedder);
  m.encoder_p_ = std::move(encoder_p);
  m.encoder_q_ = std::move(encoder_q);
  m.scorer_ = std::move(scorer);
  return m;
}

RankerModel RankerModel::zeros_like() const {
  RankerModel z;
  z.config_ = config_;
  z.embedder_ = embedder_;
  z.encoder_p_ = encoder_p_.zeros_like();
  z.encoder_q_ = encoder_q_.zeros_like();
  z.scorer_ = scorer_;
  z.scorer_.bilinear.setZero();
  z.scorer_.mlp_w.setZero();
  z.scorer_.mlp_b.setZero();
  z.scorer_.mlp_v.setZero();
  z.scorer_.mlp_out.setZero();
  return z;
}

Eigen::MatrixXd RankerModel::embed_paragraph(const TokenSeq& tokens) const {
  return embed_capped(*embedder_, tokens, config_.max_paragraph_tokens);
}

Eigen::MatrixXd RankerModel::embed_question(const TokenSeq& tokens) const {
  return embed_capped(*embedder_, tokens, config_.max_question_tokens);
}

Eigen::VectorXd RankerModel::encode_paragraph(const TokenSeq& tokens) const {
  return encoder_p_.encode(embed_paragraph(tokens));
}

Eigen::VectorXd RankerModel::encode_question(const TokenSeq& tokens) const {
  return encoder_q_.encode(embed_question(tokens));
}

double RankerModel::score(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  if (p.size() != width() || q.size() != width()) throw DimensionError("score: width mismatch");
  switch (scorer_.kind) {
    case ScorerKind::Dot:
      return p.dot(q);
    case ScorerKind::Bilinear:
      return p.dot(scorer_.bilinear * q);
    case ScorerKind::Mlp: {
      Eigen::VectorXd x(3 * width());
      x << p, q, p.cwiseProduct(q);
      const Eigen::VectorXd a = (scorer_.mlp_w * x + scorer_.mlp_b).array().tanh().matrix();
      return scorer_.mlp_v.dot(a) + scorer_.mlp_out[0];
    }
  }
  throw std::logic_error("unknown scorer kind");
}

void RankerModel::score_backward(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double ds,
                                 RankerModel& grads, Eigen::VectorXd& d_p,
                                 Eigen::VectorXd& d_q) const {
  switch (scorer_.kind) {
    case ScorerKind::Dot:
      d_p = ds * q;
      d_q = ds * p;
      return;
    case ScorerKind::Bilinear:
      grads.scorer_.bilinear.noalias() += ds * p * q.transpose();
      d_p = ds * (scorer_.bilinear * q);
      d_q = ds * (scorer_.bilinear.transpose() * p);
      return;
    case ScorerKind::Mlp: {
      const Eigen::Index w = width();
      Eigen::VectorXd x(3 * w);
      x << p, q, p.cwiseProduct(q);
      const Eigen::VectorXd a = (scorer_.mlp_w * x + scorer_.mlp_b).array().tanh().matrix();
      grads.scorer_.mlp_v += ds * a;
      grads.scorer_.mlp_out[0] += ds;
      const Eigen::VectorXd dz =
          (ds * scorer_.mlp_v.array() * (1.0 - a.array() * a.array())).matrix();
      grads.scorer_.mlp_w.noalias() += dz * x.transpose();
      grads.scorer_.mlp_b += dz;
      const Eigen::VectorXd dx = scorer_.mlp_w.transpose() * dz;
      d_p = dx.head(w) + dx.tail(w).cwiseProduct(q);
      d_q = dx.segment(w, w) + dx.tail(w).cwiseProduct(p);
      return;
    }
  }
  throw std::logic_error("unknown scorer kind");
}

std::vector<TensorRef> RankerModel::tensors() {
  std::vector<TensorRef> out;
  encoder_p_.collect_tensors("encoder_p.", out);
  encoder_q_.collect_tensors("encoder_q.", out);
  if (scorer_.kind == ScorerKind::Bilinear) {
    out.push_back({"scorer.bilinear", scorer_.bilinear.data(), scorer_.bilinear.rows(),
                   scorer_.bilinear.cols()});
  } else if (scorer_.kind == ScorerKind::Mlp) {
    out.push_back({"scorer.mlp_w", scorer_.mlp_w.data(), scorer_.mlp_w.rows(), scorer_.mlp_w.cols()});
    out.push_back({"scorer.mlp_b", scorer_.mlp_b.data(), scorer_.mlp_b.size(), 1});
    out.push_back({"scorer.mlp_v", scorer_.mlp_v.data(), scorer_.mlp_v.size(), 1});
    out.push_back({"scorer.mlp_out", scorer_.mlp_out.data(), 1, 1});
  }
  return out;
}

std::size_t RankerModel::parameter_count() const {
  std::size_t n = encoder_p_.parameter_count() + encoder_q_.parameter_count();
  if (scorer_.kind == ScorerKind::Bilinear) n += static_cast<std::size_t>(scorer_.bilinear.size());
  if (scorer_.kind == ScorerKind::Mlp) {
    n += static_cast<std::size_t>(scorer_.mlp_w.size() + scorer_.mlp_b.size() +
                                  scorer_.mlp_v.size() + scorer_.mlp_out.size());
  }
  return n;
}

double paragraph_probability(double s) { return sigmoid(s); }

double log_sigmoid(double s) {
  if (s >= 0.0) return -std::log1p(std::exp(-s));
  return s - std::log1p(std::exp(s));
}

std::vector<RankedParagraph> rank_scored(std::span<const Candidate> candidates,
                                         std::span<const double> scores, std::size_t m,
                                         RankOrder order) {
  if (scores.size() != candidates.size()) throw std::invalid_argument("rank_scored: size mismatch");
  std::vector<RankedParagraph> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    RankedParagraph r;
    r.paragraph = candidates[i].paragraph;
    r.score = scores[i];
    r.ranker_prob = paragraph_probability(scores[i]);
    r.doc_score = candidates[i].doc_score;
    r.combined = r.ranker_prob * r.doc_score;
    ranked.push_back(r);
  }
  auto key = [order](const RankedParagraph& r) {
    return order == RankOrder::Combined ? r.combined : r.ranker_prob;
  };
  auto better = [&](const RankedParagraph& a, const RankedParagraph& b) {
    if (key(a) != key(b)) return key(a) > key(b);
    // Saturated probabilities still carry order in the raw score.
    if (order == RankOrder::RankerOnly && a.score != b.score) return a.score > b.score;
    if (a.doc_score != b.doc_score) return a.doc_score > b.doc_score;
    return provenance_less(*a.paragraph, *b.paragraph);
  };
  const std::size_t k = std::min(m, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    better);
  ranked.resize(k);
  return ranked;
}

std::vector<double> score_candidates(const RankerModel& model, const TokenSeq& question,
                                     std::span<const Candidate> candidates, kernels::Exec exec) {
  std::vector<double> scores(candidates.size());
  if (candidates.empty()) return scores;
  const Eigen::VectorXd q = model.encode_question(question);
  std::vector<const TokenSeq*> seqs;
  seqs.reserve(candidates.size());
  for (const auto& c : candidates) seqs.push_back(&c.paragraph->tokens);
  const Eigen::MatrixXd reprs = kernels::encode_sequences(
      exec, model.encoder_p(), model.embedder(), seqs, model.config().max_paragraph_tokens);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = model.score(reprs.col(static_cast<Eigen::Index>(i)), q);
  }
  return scores;
}

std::vector<RankedParagraph> rank_paragraphs(const RankerModel& model, const TokenSeq& question,
                                             std::span<const Candidate> candidates, std::size_t m,
                                             RankOrder order, kernels::Exec exec) {
  if (candidates.empty()) return {};
  const auto scores = score_candidates(model, question, candidates, exec);
  return rank_scored(candidates, scores, m, order);
}

NoiseDistribution::NoiseDistribution(std::vector<const Paragraph*> pool) : pool_(std::move(pool)) {
  if (pool_.empty()) throw std::invalid_argument("noise distribution needs a non-empty pool");
  normalized_.reserve(pool_.size());
  for (const auto* p : pool_) normalized_.push_back(normalize_answer(p->text));
}

std::vector<const Paragraph*> NoiseDistribution::sample_negatives(
    const Paragraph& positive, std::span<const std::string> answers, std::size_t k,
    Rng& rng) const {
  std::vector<std::string> norm_answers;
  for (const auto& a : answers) norm_answers.push_back(normalize_answer(a));

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (same_paragraph(*pool_[i], positive)) continue;
    const bool has_answer = std::any_of(norm_answers.begin(), norm_answers.end(), [&](const auto& a) {
      return contains_normalized(normalized_[i], a);
    });
    if (!has_answer) eligible.push_back(i);
  }
  if (eligible.size() < k) {
    throw std::invalid_argument("negative sampling: eligible pool has " +
                                std::to_string(eligible.size()) + " paragraphs, need " +
                                std::to_string(k));
  }
  std::vector<const Paragraph*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
    out.push_back(pool_[eligible[i]]);
  }
  return out;
}

LossAndGradient nce_loss(const RankerModel& model, const TokenSeq& question,
                         const Paragraph& positive, std::span<const Paragraph* const> negatives,
                         Mode mode, Rng* rng) {
  if (negatives.empty()) throw std::invalid_argument("nce_loss needs at least one negative");
  LossAndGradient out{0.0, model.zeros_like()};

  Encoding q = model.encoder_q().encode(model.embed_question(question), mode, rng);
  Eigen::VectorXd d_q_total = Eigen::VectorXd::Zero(model.width());
  const double inv_k = 1.0 / static_cast<double>(negatives.size());

  auto term = [&](const Paragraph& p, bool is_positive) {
    Encoding enc = model.encoder_p().encode(model.embed_paragraph(p.tokens), mode, rng);
    const double s = model.score(enc.repr, q.repr);
    double ds = 0.0;
    if (is_positive) {
      out.loss -= log_sigmoid(s);
      ds = -sigmoid(-s);
    } else {
      out.loss -= inv_k * log_sigmoid(-s);
      ds = inv_k * sigmoid(s);
    }
    Eigen::VectorXd d_p;
    Eigen::VectorXd d_q;
    model.score_backward(enc.repr, q.repr, ds, out.gradient, d_p, d_q);
    d_q_total += d_q;
    model.encoder_p().backward_into(enc.tape, d_p, out.gradient.encoder_p());
  };

  term(positive, true);
  for (const auto* n : negatives) term(*n, false);
  model.encoder_q().backward_into(q.tape, d_q_total, out.gradient.encoder_q());
  return out;
}

double nce_loss_value(const RankerModel& model, const TokenSeq& question,
                      const Paragraph& positive, std::span<const Paragraph* const> negatives) {
  if (negatives.empty()) throw std::invalid_argument("nce_loss needs at least one negative");
  const Eigen::VectorXd q = model.encode_question(question);
  double loss = -log_sigmoid(model.score(model.encode_paragraph(positive.tokens), q));
  const double inv_k = 1.0 / static_cast<double>(negatives.size());
  for (const auto* n : negatives) {
    loss -= inv_k * log_sigmoid(-model.score(model.encode_paragraph(n->tokens), q));
  }
  return loss;
}

}  // namespace pararank
