#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pararank/encoder.hpp"
#include "pararank/kernels.hpp"
#include "pararank/random.hpp"
#include "pararank/retriever.hpp"
#include "pararank/text.hpp"

namespace pararank {

enum class ScorerKind { Dot, Bilinear, Mlp };

std::string to_string(ScorerKind kind);
/// Parses "dot", "bilinear" or "mlp".
std::optional<ScorerKind> parse_scorer_kind(std::string_view name);

struct ModelConfig {
  std::size_t layers = 3;
  std::size_t hidden = 128;  // per direction
  double dropout = 0.4;
  ScorerKind scorer = ScorerKind::Dot;
  std::size_t mlp_hidden = 128;
  std::size_t max_paragraph_tokens = 300;
  std::size_t max_question_tokens = 50;
};

/// Parameters of the similarity function s(p, q).
struct ScorerParams {
  ScorerKind kind = ScorerKind::Dot;
  Eigen::MatrixXd bilinear;  // width x width
  Eigen::MatrixXd mlp_w;     // mlp_hidden x 3*width, input [p; q; p*q]
  Eigen::VectorXd mlp_b;     // mlp_hidden
  Eigen::VectorXd mlp_v;     // mlp_hidden
  Eigen::VectorXd mlp_out;   // size 1, output bias
};

/// Dual Bi-LSTM encoder plus scorer. The embedder is shared and frozen.
class RankerModel {
 public:
  RankerModel() = default;
  /// Random initialisation from `seed`; scorer weights uniform in
  /// +-1/sqrt(fan_in), bilinear starts at the identity.
  static RankerModel create(const ModelConfig& config, std::shared_ptr<const Embedder> embedder,
                            std::uint64_t seed);
  /// Every parameter zero, same shapes; used as a gradient accumulator.
  RankerModel zeros_like() const;

  const ModelConfig& config() const { return config_; }
  const Embedder& embedder() const { return *embedder_; }
  std::shared_ptr<const Embedder> shared_embedder() const { return embedder_; }
  Eigen::Index width() const { return encoder_p_.output_dim(); }

  BiLstmEncoder& encoder_p() { return encoder_p_; }
  BiLstmEncoder& encoder_q() { return encoder_q_; }
  ScorerParams& scorer() { return scorer_; }
  const BiLstmEncoder& encoder_p() const { return encoder_p_; }
  const BiLstmEncoder& encoder_q() const { return encoder_q_; }
  const ScorerParams& scorer() const { return scorer_; }

  /// Truncates to the configured caps and embeds.
  Eigen::MatrixXd embed_paragraph(const TokenSeq& tokens) const;
  Eigen::MatrixXd embed_question(const TokenSeq& tokens) const;
  Eigen::VectorXd encode_paragraph(const TokenSeq& tokens) const;
  Eigen::VectorXd encode_question(const TokenSeq& tokens) const;

  double score(const Eigen::VectorXd& p_repr, const Eigen::VectorXd& q_repr) const;
  /// Adds ds * d s/d(scorer params) into grads; writes ds * d s/dp and d s/dq.
  void score_backward(const Eigen::VectorXd& p_repr, const Eigen::VectorXd& q_repr, double ds,
                      RankerModel& grads, Eigen::VectorXd& d_p, Eigen::VectorXd& d_q) const;

  /// All trainable tensors in a fixed order (encoder_p, encoder_q, scorer).
  std::vector<TensorRef> tensors();
  std::size_t parameter_count() const;

  /// Assembles a model from already-shaped parts (checkpoint loading).
  static RankerModel assemble(const ModelConfig& config, std::shared_ptr<const Embedder> embedder,
                              BiLstmEncoder encoder_p, BiLstmEncoder encoder_q,
                              ScorerParams scorer);

 private:
  ModelConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  BiLstmEncoder encoder_p_;
  BiLstmEncoder encoder_q_;
  ScorerParams scorer_;
};

/// p(P|Q) = 1 / (1 + exp(-s)), evaluated without overflow.
double paragraph_probability(double s);
/// log(sigmoid(s)) without cancellation.
double log_sigmoid(double s);

struct Candidate {
  const Paragraph* paragraph = nullptr;
  double doc_score = 0.0;
};

struct RankedParagraph {
  const Paragraph* paragraph = nullptr;
  double score = 0.0;        // s(p, q)
  double ranker_prob = 0.0;  // p(P|Q)
  double doc_score = 0.0;    // p~(D|Q)
  double combined = 0.0;     // ranker_prob * doc_score
};

enum class RankOrder {
  Combined,    // ranker_prob * doc_score
  RankerOnly,  // ranker_prob alone
};

/// Orders already-scored candidates. Ties fall back to higher doc_score,
/// then to lower (doc_id, para_index). In ranker-only order the raw score
/// breaks ties between saturated probabilities first.
std::vector<RankedParagraph> rank_scored(std::span<const Candidate> candidates,
                                         std::span<const double> scores, std::size_t m,
                                         RankOrder order = RankOrder::Combined);

/// s(p, q) of every candidate with the question encoded once.
std::vector<double> score_candidates(const RankerModel& model, const TokenSeq& question,
                                     std::span<const Candidate> candidates,
                                     kernels::Exec exec = kernels::Exec::Parallel);

std::vector<RankedParagraph> rank_paragraphs(const RankerModel& model, const TokenSeq& question,
                                             std::span<const Candidate> candidates, std::size_t m,
                                             RankOrder order = RankOrder::Combined,
                                             kernels::Exec exec = kernels::Exec::Parallel);

/// Uniform noise distribution over a paragraph pool.
class NoiseDistribution {
 public:
  explicit NoiseDistribution(std::vector<const Paragraph*> pool);

  std::size_t size() const { return pool_.size(); }
  const std::vector<const Paragraph*>& pool() const { return pool_; }
  double weight(std::size_t) const { return 1.0 / static_cast<double>(pool_.size()); }

  /// k distinct paragraphs, none equal to `positive` and none containing
  /// any of `answers`, drawn uniformly from the remaining pool.
  std::vector<const Paragraph*> sample_negatives(const Paragraph& positive,
                                                 std::span<const std::string> answers,
                                                 std::size_t k, Rng& rng) const;

 private:
  std::vector<const Paragraph*> pool_;
  std::vector<std::string> normalized_;
};

struct LossAndGradient {
  double loss = 0.0;
  RankerModel gradient;
};

/// J = -log p(P+|Q) - (1/k) sum_k log(1 - p(P_k|Q)) and its exact gradient
/// over every trainable parameter.
LossAndGradient nce_loss(const RankerModel& model, const TokenSeq& question,
                         const Paragraph& positive, std::span<const Paragraph* const> negatives,
                         Mode mode, Rng* rng = nullptr);

/// Loss only, no tape; used by finite-difference checks.
double nce_loss_value(const RankerModel& model, const TokenSeq& question,
                      const Paragraph& positive, std::span<const Paragraph* const> negatives);

}  // namespace pararank
