#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace pararank {

using Token = std::string;
using TokenSeq = std::vector<Token>;

/// Lowercases, splits on Unicode whitespace and emits every ASCII
/// punctuation character as a token of its own.
TokenSeq tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string detokenize(const TokenSeq& tokens, std::size_t begin, std::size_t end);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Returns the id of `token`, inserting it while the vocabulary is open.
  /// After freeze() unknown tokens map to kUnk.
  int add(const Token& token);
  void add_all(const TokenSeq& tokens);

  /// Sorts the non-special entries lexicographically and stops accepting
  /// new tokens. Ids are stable from here on, and two vocabularies with the
  /// same contents assign the same ids regardless of insertion order.
  void freeze();
  bool frozen() const { return frozen_; }

  int id(std::string_view token) const;
  const Token& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<Token>& tokens() const { return tokens_; }

  /// Rebuilds a frozen vocabulary from a persisted token list.
  static Vocabulary from_tokens(std::vector<Token> tokens);

 private:
  std::vector<Token> tokens_;
  std::unordered_map<Token, int> id_of_;
  bool frozen_ = false;
};

/// Row i holds the embedding of vocabulary id i. Row kPad is always zero.
struct EmbeddingTable {
  Eigen::MatrixXd vectors;

  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(vectors.rows()); }
};

inline constexpr std::size_t kDefaultEmbeddingDim = 300;

/// Reads word2vec-text records (`word v1 ... vd`, no header line). Tokens of
/// `vocab` that are absent from the stream, including UNK, get zero rows.
EmbeddingTable load_embeddings(std::istream& source, const Vocabulary& vocab,
                               std::size_t default_dim = kDefaultEmbeddingDim);

/// Embeds each token as a column of the returned dim x len matrix.
Eigen::MatrixXd embed_sequence(const TokenSeq& tokens, const Vocabulary& vocab,
                               const EmbeddingTable& table);

/// Vocabulary plus the frozen table built against it.
struct Embedder {
  Vocabulary vocab;
  EmbeddingTable table;

  Eigen::MatrixXd embed(const TokenSeq& tokens) const {
    return embed_sequence(tokens, vocab, table);
  }
  std::size_t dim() const { return table.dim(); }
};

}  // namespace pararank
