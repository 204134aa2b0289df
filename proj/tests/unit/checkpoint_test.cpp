#include <cstring>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "synthetic.hpp"
#include "pararank/checkpoint.hpp"
#include "pararank/errors.hpp"

namespace pararank {
namespace {

struct Parts {
  std::string prefix;  // magic + version
  nlohmann::json header;
  std::string body;
};

Parts split(const std::string& bytes) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[10 + i])) << (8 * i);
  }
  return {bytes.substr(0, 10), nlohmann::json::parse(bytes.substr(18, len)), bytes.substr(18 + len)};
}

std::string join(const Parts& p) {
  const std::string h = p.header.dump();
  std::string out = p.prefix;
  for (int i = 0; i < 8; ++i) out += static_cast<char>((h.size() >> (8 * i)) & 0xff);
  return out + h + p.body;
}

RankerModel make_model(ScorerKind kind, std::shared_ptr<Embedder>* emb_out = nullptr) {
  const auto corpus = ingest_records(testing::random_records(1, 6, 20, 2, 6));
  auto emb = testing::make_embedder(corpus, {}, 5, 2);
  if (emb_out) *emb_out = emb;
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 3;
  cfg.scorer = kind;
  cfg.mlp_hidden = 4;
  return RankerModel::create(cfg, emb, 9);
}

std::string saved(RankerModel& m) {
  std::stringstream buf;
  checkpoint_save(m, buf);
  return buf.str();
}

RankerModel load(const std::string& bytes) {
  std::istringstream in(bytes);
  return checkpoint_load(in);
}

void expect_load_error(const std::string& bytes, const std::string& fragment) {
  try {
    load(bytes);
    FAIL() << "expected a checkpoint error containing " << fragment;
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripGivesBitIdenticalScores) {
  for (auto kind : {ScorerKind::Dot, ScorerKind::Bilinear, ScorerKind::Mlp}) {
    auto model = make_model(kind);
    const auto loaded = load(saved(model));
    EXPECT_EQ(loaded.config().scorer, kind);
    EXPECT_EQ(loaded.config().hidden, 3u);
    EXPECT_EQ(loaded.config().layers, 2u);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto p = testing::random_query(s, 22, 6);
      const auto q = testing::random_query(s + 50, 22, 3);
      const double a = model.score(model.encode_paragraph(p), model.encode_question(q));
      const double b = loaded.score(loaded.encode_paragraph(p), loaded.encode_question(q));
      EXPECT_EQ(a, b);
    }
    EXPECT_EQ(loaded.embedder().vocab.tokens(), model.embedder().vocab.tokens());
    EXPECT_EQ(loaded.embedder().table.vectors, model.embedder().table.vectors);
  }
}

TEST(Checkpoint, SaveIsDeterministic) {
  auto a = make_model(ScorerKind::Mlp);
  auto b = make_model(ScorerKind::Mlp);
  EXPECT_EQ(saved(a), saved(b));
  auto reloaded = load(saved(a));
  EXPECT_EQ(saved(reloaded), saved(a));
}

TEST(Checkpoint, HeaderRecordsHyperparameters) {
  auto model = make_model(ScorerKind::Bilinear);
  const auto parts = split(saved(model));
  EXPECT_EQ(parts.prefix.substr(0, 6), "PRCKPT");
  EXPECT_EQ(parts.header.at("encoder").at("hidden"), 3);
  EXPECT_EQ(parts.header.at("encoder").at("hidden_per_direction"), true);
  EXPECT_EQ(parts.header.at("scorer").at("kind"), "bilinear");
  EXPECT_EQ(parts.header.at("tensors").at(0).at("name"), "embeddings");
}

TEST(Checkpoint, WrongMagic) {
  expect_load_error("NOTCKPT-and-more-bytes", "not a para-rank checkpoint");
  expect_load_error("", "not a para-rank checkpoint");
}

TEST(Checkpoint, VersionMismatch) {
  auto model = make_model(ScorerKind::Dot);
  auto bytes = saved(model);
  bytes[6] = 2;
  expect_load_error(bytes, "unsupported checkpoint version");
}

TEST(Checkpoint, CorruptHeader) {
  auto model = make_model(ScorerKind::Dot);
  auto bytes = saved(model);
  bytes[18] = '!';  // first byte of the JSON header
  expect_load_error(bytes, "corrupt checkpoint header");
  expect_load_error(saved(model).substr(0, 14), "corrupt checkpoint header");
  auto parts = split(saved(model));
  parts.header.erase("encoder");
  expect_load_error(join(parts), "corrupt checkpoint header");
}

TEST(Checkpoint, UnknownScorerKind) {
  auto model = make_model(ScorerKind::Dot);
  auto parts = split(saved(model));
  parts.header["scorer"]["kind"] = "cosine";
  expect_load_error(join(parts), "unknown scorer kind");
}

TEST(Checkpoint, DeclaredHiddenDisagreesWithTensors) {
  auto model = make_model(ScorerKind::Dot);
  auto parts = split(saved(model));
  parts.header["encoder"]["hidden"] = 6;
  expect_load_error(join(parts), "tensor shape mismatch");
}

TEST(Checkpoint, TruncatedTensorData) {
  auto model = make_model(ScorerKind::Mlp);
  const auto bytes = saved(model);
  expect_load_error(bytes.substr(0, bytes.size() - 3), "truncated tensor data");
}

TEST(Checkpoint, FileRoundTrip) {
  auto model = make_model(ScorerKind::Dot);
  const std::string path = ::testing::TempDir() + "/model.ckpt";
  checkpoint_save(model, path);
  const auto loaded = checkpoint_load(path);
  const TokenSeq p{"w1", "w2"}, q{"w3"};
  EXPECT_EQ(model.score(model.encode_paragraph(p), model.encode_question(q)),
            loaded.score(loaded.encode_paragraph(p), loaded.encode_question(q)));
  EXPECT_THROW(checkpoint_load(::testing::TempDir() + "/does-not-exist.ckpt"), std::exception);
}

}  // namespace
}  // namespace pararank
