#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "pararank/errors.hpp"
#include "pararank/random.hpp"
#include "pararank/ranker.hpp"

namespace pararank {
namespace {

struct Fixture {
  Corpus corpus;
  std::shared_ptr<Embedder> embedder;
  std::vector<const Paragraph*> paragraphs;
};

Fixture make_fixture(std::uint64_t seed, std::size_t docs = 12, std::size_t dim = 4) {
  Fixture f;
  f.corpus = ingest_records(testing::random_records(seed, docs, 25, 3, 6));
  f.embedder = testing::make_embedder(f.corpus, {testing::random_query(seed, 25, 5)}, dim, seed);
  f.paragraphs = f.corpus.all_paragraphs();
  return f;
}

ModelConfig tiny(ScorerKind kind, std::size_t layers = 1, std::size_t hidden = 2) {
  ModelConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.dropout = 0.0;
  c.scorer = kind;
  c.mlp_hidden = 3;
  return c;
}

TEST(Score, DotOfOrthogonalVectorsIsZero) {
  const auto f = make_fixture(1);
  const auto m = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 1);
  EXPECT_EQ(m.score(Eigen::Vector4d(1, 0, 0, 0), Eigen::Vector4d(0, 1, 0, 0)), 0.0);
  EXPECT_EQ(m.score(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(1, 1, 1, 1)), 10.0);
}

TEST(Score, BilinearIdentityEqualsDot) {
  const auto f = make_fixture(2);
  const auto dot = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 5);
  const auto bil = RankerModel::create(tiny(ScorerKind::Bilinear), f.embedder, 5);
  EXPECT_EQ(bil.scorer().bilinear, Eigen::MatrixXd::Identity(4, 4));
  const Eigen::Vector4d p(0.3, -1, 2, 0.5), q(1, 0.25, -0.5, 2);
  EXPECT_DOUBLE_EQ(bil.score(p, q), dot.score(p, q));
}

TEST(Score, ZeroMlpGivesZero) {
  const auto f = make_fixture(3);
  const auto m = RankerModel::create(tiny(ScorerKind::Mlp), f.embedder, 1).zeros_like();
  EXPECT_EQ(m.score(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(-1, 5, 0, 2)), 0.0);
}

TEST(Score, MlpMatchesHandEvaluation) {
  const auto f = make_fixture(4);
  const auto m = RankerModel::create(tiny(ScorerKind::Mlp), f.embedder, 9);
  const Eigen::Vector4d p(0.3, -1, 2, 0.5), q(1, 0.25, -0.5, 2);
  Eigen::VectorXd feat(12);
  feat << p, q, p.cwiseProduct(q);
  const auto& s = m.scorer();
  double want = s.mlp_out(0);
  for (Eigen::Index k = 0; k < 3; ++k) {
    double pre = s.mlp_b(k);
    for (Eigen::Index j = 0; j < 12; ++j) pre += s.mlp_w(k, j) * feat(j);
    want += s.mlp_v(k) * std::tanh(pre);
  }
  EXPECT_NEAR(m.score(p, q), want, 1e-14);
}

TEST(Score, WidthMismatchThrows) {
  const auto f = make_fixture(5);
  const auto m = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 1);
  EXPECT_THROW(m.score(Eigen::Vector3d(1, 2, 3), Eigen::Vector4d(1, 2, 3, 4)), DimensionError);
}

TEST(Probability, KnownValuesAndSymmetry) {
  EXPECT_EQ(paragraph_probability(0.0), 0.5);
  EXPECT_NEAR(paragraph_probability(2.0), 0.8807970779778823, 1e-16);
  for (double s : {0.1, 1.0, 3.7, 20.0, 35.0}) {
    EXPECT_NEAR(paragraph_probability(-s), 1.0 - paragraph_probability(s), 1e-12);
  }
}

TEST(Probability, StableAtExtremes) {
  EXPECT_GT(paragraph_probability(-700.0), 0.0);
  EXPECT_TRUE(std::isfinite(paragraph_probability(-700.0)));
  EXPECT_LE(paragraph_probability(700.0), 1.0);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-700.0)));
  EXPECT_NEAR(log_sigmoid(-700.0), -700.0, 1e-9);
  EXPECT_LE(log_sigmoid(700.0), 0.0);
  EXPECT_NEAR(log_sigmoid(700.0), 0.0, 1e-300);
}

TEST(Probability, StrictlyIncreasing) {
  double prev = paragraph_probability(-30.0);
  for (double s = -29.9; s < 30.0; s += 0.1) {
    const double p = paragraph_probability(s);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

std::vector<Candidate> random_candidates(const Fixture& f, std::size_t n, Rng& rng,
                                         bool distinct_docs = false) {
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = f.paragraphs[uniform_index(rng, f.paragraphs.size())];
    if (distinct_docs) p = f.paragraphs[i % f.paragraphs.size()];
    // Coarse doc scores so ties happen.
    out.push_back({p, static_cast<double>(uniform_index(rng, 5)) / 4.0});
  }
  return out;
}

TEST(Rank, EqualsBruteForceSortForManySeeds) {
  const auto f = make_fixture(6, 20);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto kind = static_cast<ScorerKind>(seed % 3);
    const auto model = RankerModel::create(tiny(kind), f.embedder, seed);
    Rng rng(seed);
    const auto cands = random_candidates(f, 30, rng);
    const auto q = testing::random_query(seed, 25, 4);
    for (auto order : {RankOrder::Combined, RankOrder::RankerOnly}) {
      const auto ranked = rank_paragraphs(model, q, cands, 10, order);
      std::vector<double> scores;
      for (const auto& c : cands) {
        scores.push_back(model.score(model.encode_paragraph(c.paragraph->tokens),
                                     model.encode_question(q)));
      }
      const auto brute = testing::brute_force_rank(cands, scores, order);
      ASSERT_EQ(ranked.size(), 10u);
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        EXPECT_EQ(ranked[i].paragraph, brute[i]) << "seed " << seed << " pos " << i;
      }
    }
  }
}

TEST(Rank, ReturnsEverythingWhenMExceedsCount) {
  const auto f = make_fixture(7);
  const auto model = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 1);
  Rng rng(1);
  const auto cands = random_candidates(f, 6, rng);
  const auto ranked = rank_paragraphs(model, {"w1"}, cands, 100);
  ASSERT_EQ(ranked.size(), 6u);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    EXPECT_GE(ranked[i - 1].combined, ranked[i].combined);
  }
  EXPECT_TRUE(rank_paragraphs(model, {"w1"}, {}, 5).empty());
}

TEST(Rank, HigherDocScoreWinsAtEqualProbability) {
  const auto f = make_fixture(8);
  const auto model = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 1);
  const std::vector<Candidate> cands{{f.paragraphs[0], 0.5}, {f.paragraphs[0], 0.9}};
  const auto ranked = rank_paragraphs(model, {"w1"}, cands, 2);
  EXPECT_EQ(ranked[0].doc_score, 0.9);
  const double scores[] = {1.0, 1.0};
  const auto only = rank_scored(cands, scores, 2, RankOrder::RankerOnly);
  EXPECT_EQ(only[0].doc_score, 0.9);
}

TEST(Rank, FieldsAreConsistent) {
  const auto f = make_fixture(9);
  const auto model = RankerModel::create(tiny(ScorerKind::Mlp), f.embedder, 2);
  Rng rng(3);
  for (const auto& r : rank_paragraphs(model, {"w2", "w3"}, random_candidates(f, 15, rng), 15)) {
    EXPECT_GT(r.ranker_prob, 0.0);
    EXPECT_LT(r.ranker_prob, 1.0);
    EXPECT_EQ(r.ranker_prob, paragraph_probability(r.score));
    EXPECT_EQ(r.combined, r.ranker_prob * r.doc_score);
    EXPECT_GE(r.combined, 0.0);
    EXPECT_LT(r.combined, 1.0);
  }
}

std::vector<const Paragraph*> order_of(const std::vector<RankedParagraph>& r) {
  std::vector<const Paragraph*> out;
  for (const auto& x : r) out.push_back(x.paragraph);
  return out;
}

TEST(Rank, InvariantUnderIncreasingTransformOfScores) {
  const auto f = make_fixture(10);
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto cands = random_candidates(f, 20, rng);
    for (auto& c : cands) c.doc_score = 0.7;
    std::vector<double> s, t;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      s.push_back(standard_normal(rng));
      t.push_back(2.0 * s.back() + 1.0);
    }
    EXPECT_EQ(order_of(rank_scored(cands, s, 20)), order_of(rank_scored(cands, t, 20)));
  }
}

TEST(Rank, InvariantUnderDocScoreScaling) {
  const auto f = make_fixture(11);
  const auto model = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 4);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto cands = random_candidates(f, 20, rng);
    for (auto& c : cands) c.doc_score = uniform01(rng);
    const auto before = order_of(rank_paragraphs(model, {"w1", "w4"}, cands, 20));
    for (auto& c : cands) c.doc_score *= 0.5;  // exact in binary floating point
    EXPECT_EQ(before, order_of(rank_paragraphs(model, {"w1", "w4"}, cands, 20)));
  }
}

TEST(Rank, BilinearIdentityRanksLikeDot) {
  const auto f = make_fixture(12);
  const auto dot = RankerModel::create(tiny(ScorerKind::Dot, 2, 3), f.embedder, 8);
  const auto bil = RankerModel::create(tiny(ScorerKind::Bilinear, 2, 3), f.embedder, 8);
  Rng rng(6);
  const auto cands = random_candidates(f, 25, rng);
  const TokenSeq q{"w1", "w7", "w3"};
  const auto a = rank_paragraphs(dot, q, cands, 25);
  const auto b = rank_paragraphs(bil, q, cands, 25);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].paragraph, b[i].paragraph);
    EXPECT_NEAR(a[i].score, b[i].score, 1e-14);
  }
}

TEST(Rank, SerialAndParallelScoringAgreeBitwise) {
  const auto f = make_fixture(13);
  const auto model = RankerModel::create(tiny(ScorerKind::Dot, 2, 4), f.embedder, 3);
  Rng rng(7);
  const auto cands = random_candidates(f, 40, rng);
  EXPECT_EQ(score_candidates(model, {"w2"}, cands, kernels::Exec::Serial),
            score_candidates(model, {"w2"}, cands, kernels::Exec::Parallel));
}

// Ten single-paragraph documents; the ones listed contain "gold".
Corpus pool_corpus(std::size_t n, std::vector<std::size_t> with_answer) {
  std::vector<DocumentRecord> rs;
  for (std::size_t i = 0; i < n; ++i) {
    const bool has = std::find(with_answer.begin(), with_answer.end(), i) != with_answer.end();
    rs.push_back({"p" + std::to_string(i), "", {has ? "the gold coin" : "plain text " +
                                                                         std::to_string(i)}});
  }
  return ingest_records(rs);
}

TEST(Negatives, NeverAnswerBearingOrPositive) {
  const auto corpus = pool_corpus(10, {2, 5, 7});
  const NoiseDistribution noise(corpus.all_paragraphs());
  const std::vector<std::string> answers{"Gold"};
  const auto& positive = *corpus.find_paragraph("p0", 0);
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto negs = noise.sample_negatives(positive, answers, 4, rng);
    ASSERT_EQ(negs.size(), 4u);
    std::set<const Paragraph*> distinct(negs.begin(), negs.end());
    EXPECT_EQ(distinct.size(), 4u);
    for (const auto* n : negs) {
      EXPECT_NE(n, &positive);
      EXPECT_FALSE(contains_answer(n->text, "gold"));
    }
  }
}

TEST(Negatives, ExhaustionReturnsWholeEligiblePool) {
  const auto corpus = pool_corpus(10, {2, 5, 7});
  const NoiseDistribution noise(corpus.all_paragraphs());
  const std::vector<std::string> answers{"gold"};
  Rng rng(2);
  // Positive p2 holds the answer itself; the eligible pool is the other 7.
  const auto negs = noise.sample_negatives(*corpus.find_paragraph("p2", 0), answers, 7, rng);
  std::set<std::string> ids;
  for (const auto* n : negs) ids.insert(n->doc_id);
  EXPECT_EQ(ids, (std::set<std::string>{"p0", "p1", "p3", "p4", "p6", "p8", "p9"}));
}

TEST(Negatives, InsufficientPoolReportsSize) {
  const auto corpus = pool_corpus(10, {2, 5, 7});
  const NoiseDistribution noise(corpus.all_paragraphs());
  const std::vector<std::string> answers{"gold"};
  Rng rng(3);
  try {
    noise.sample_negatives(*corpus.find_paragraph("p0", 0), answers, 7, rng);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("eligible pool has 6"), std::string::npos) << e.what();
  }
}

TEST(Negatives, UniformOverEligiblePool) {
  const auto corpus = pool_corpus(7, {0});
  const NoiseDistribution noise(corpus.all_paragraphs());
  EXPECT_DOUBLE_EQ(noise.weight(0) * static_cast<double>(noise.size()), 1.0);
  const std::vector<std::string> answers{"gold"};
  const auto& positive = *corpus.find_paragraph("p6", 0);  // eligible: p1..p5
  Rng rng(4);
  const int draws = 100000;
  std::map<std::string, int> counts;
  for (int i = 0; i < draws; ++i) ++counts[noise.sample_negatives(positive, answers, 1, rng)[0]->doc_id];
  ASSERT_EQ(counts.size(), 5u);
  const double p = 0.2, expect = draws * p, sd = std::sqrt(draws * p * (1 - p));
  for (const auto& [id, c] : counts) EXPECT_LE(std::abs(c - expect), 3.0 * sd) << id << " " << c;
}

TEST(NceLoss, HalfProbabilitiesGiveTwoLnTwo) {
  const auto f = make_fixture(14);
  const auto zero = RankerModel::create(tiny(ScorerKind::Dot), f.embedder, 1).zeros_like();
  const Paragraph* neg[] = {f.paragraphs[1]};
  const auto r = nce_loss(zero, {"w1"}, *f.paragraphs[0], neg, Mode::Infer);
  EXPECT_NEAR(r.loss, 1.3862943611, 1e-10);
  EXPECT_NEAR(nce_loss_value(zero, {"w1"}, *f.paragraphs[0], neg), 1.3862943611, 1e-10);
}

TEST(NceLoss, PerfectSeparationLimitIsZero) {
  const auto f = make_fixture(15, 12, 6);
  auto model = RankerModel::create(tiny(ScorerKind::Bilinear, 1, 3), f.embedder, 3);
  const TokenSeq q{"w1", "w2"};
  const auto& pos = *f.paragraphs[0];
  const Paragraph* neg[] = {f.paragraphs[1]};
  const Eigen::VectorXd pp = model.encode_paragraph(pos.tokens);
  const Eigen::VectorXd pn = model.encode_paragraph(neg[0]->tokens);
  const Eigen::VectorXd qq = model.encode_question(q);
  // u with pp.u = 1 and pn.u = -1; W = c u q^T separates the pair.
  Eigen::MatrixXd A(2, pp.size());
  A.row(0) = pp.transpose();
  A.row(1) = pn.transpose();
  const Eigen::VectorXd u = A.completeOrthogonalDecomposition().solve(Eigen::Vector2d(1, -1));
  double previous = INFINITY;
  for (double c : {1.0, 10.0, 100.0, 1e4}) {
    model.scorer().bilinear = c * u * qq.transpose() / qq.squaredNorm();
    const double loss = nce_loss_value(model, q, pos, neg);
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-12);
}

TEST(NceLoss, NonNegative) {
  const auto f = make_fixture(16);
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto model = RankerModel::create(tiny(static_cast<ScorerKind>(seed % 3)), f.embedder, seed);
    const Paragraph* negs[] = {f.paragraphs[uniform_index(rng, f.paragraphs.size())],
                               f.paragraphs[uniform_index(rng, f.paragraphs.size())]};
    EXPECT_GT(nce_loss_value(model, {"w3"}, *f.paragraphs[0], negs), 0.0);
  }
}

double model_grad_error(ScorerKind kind, std::size_t layers, std::size_t hidden, std::size_t len,
                        double dropout, std::uint64_t seed) {
  auto f = make_fixture(seed, 8, 3);
  auto cfg = tiny(kind, layers, hidden);
  cfg.dropout = dropout;
  auto model = RankerModel::create(cfg, f.embedder, seed);
  // Sequences of exactly `len` tokens for every encoder.
  const auto make_para = [&](std::uint64_t s) {
    Paragraph p;
    p.doc_id = "x" + std::to_string(s);
    p.tokens = testing::random_query(s, 25, len);
    return p;
  };
  const Paragraph pos = make_para(seed * 7 + 1), n1 = make_para(seed * 7 + 2),
                  n2 = make_para(seed * 7 + 3);
  const Paragraph* negs[] = {&n1, &n2};
  const TokenSeq q = testing::random_query(seed * 7 + 4, 25, len);

  Rng rng(seed);
  const auto analytic = nce_loss(model, q, pos, negs, dropout > 0 ? Mode::Train : Mode::Infer, &rng);
  auto grad = analytic.gradient;
  const auto loss = [&] {
    // Same seed -> the same dropout masks as the analytic pass.
    Rng replay(seed);
    return nce_loss(model, q, pos, negs, dropout > 0 ? Mode::Train : Mode::Infer, &replay).loss;
  };
  EXPECT_NEAR(loss(), analytic.loss, 1e-15);
  const auto check =
      testing::finite_difference_check(model.tensors(), grad.tensors(), loss, 1e-4, 1u << 30);
  EXPECT_EQ(check.probed, model.parameter_count());
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
  return check.max_rel_error;
}

TEST(NceLoss, GradientMatchesFiniteDifferencesEveryScorer) {
  for (auto kind : {ScorerKind::Dot, ScorerKind::Bilinear, ScorerKind::Mlp}) {
    model_grad_error(kind, 1, 2, 3, 0.0, 20 + static_cast<int>(kind));
  }
}

TEST(NceLoss, GradientMatchesFiniteDifferencesWithDropout) {
  model_grad_error(ScorerKind::Dot, 2, 2, 3, 0.4, 40);
}

TEST(NceLoss, TrainAndInferAgreeWithoutDropout) {
  const auto f = make_fixture(17);
  const auto model = RankerModel::create(tiny(ScorerKind::Mlp), f.embedder, 5);
  const Paragraph* negs[] = {f.paragraphs[2]};
  Rng rng(1);
  EXPECT_EQ(nce_loss(model, {"w5"}, *f.paragraphs[0], negs, Mode::Train, &rng).loss,
            nce_loss_value(model, {"w5"}, *f.paragraphs[0], negs));
}

TEST(Model, TruncatesToConfiguredCaps) {
  const auto f = make_fixture(18);
  auto cfg = tiny(ScorerKind::Dot);
  cfg.max_paragraph_tokens = 3;
  cfg.max_question_tokens = 2;
  const auto model = RankerModel::create(cfg, f.embedder, 1);
  EXPECT_EQ(model.embed_paragraph({"w1", "w2", "w3", "w4", "w5"}).cols(), 3);
  EXPECT_EQ(model.embed_question({"w1", "w2", "w3"}).cols(), 2);
  EXPECT_EQ(model.encode_paragraph({"w1", "w2", "w3", "w9"}), model.encode_paragraph({"w1", "w2", "w3"}));
}

TEST(Model, ParameterCountMatchesTensors) {
  const auto f = make_fixture(19);
  for (auto kind : {ScorerKind::Dot, ScorerKind::Bilinear, ScorerKind::Mlp}) {
    auto model = RankerModel::create(tiny(kind, 2, 3), f.embedder, 1);
    std::size_t n = 0;
    for (const auto& t : model.tensors()) n += t.size();
    EXPECT_EQ(n, model.parameter_count());
  }
}

TEST(ScorerKindNames, RoundTrip) {
  for (auto kind : {ScorerKind::Dot, ScorerKind::Bilinear, ScorerKind::Mlp}) {
    EXPECT_EQ(parse_scorer_kind(to_string(kind)), kind);
  }
  EXPECT_FALSE(parse_scorer_kind("cosine"));
}

}  // namespace
}  // namespace pararank
