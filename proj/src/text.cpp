#include "pararank/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pararank/errors.hpp"

namespace pararank {
namespace {

// Decodes one UTF-8 code point starting at text[pos]; returns its byte
// length. Invalid bytes decode as themselves with length 1.
std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& cp) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t len = 1;
  if (lead < 0x80) {
    cp = lead;
    return 1;
  } else if ((lead >> 5) == 0x6) {
    cp = lead & 0x1F;
    len = 2;
  } else if ((lead >> 4) == 0xE) {
    cp = lead & 0x0F;
    len = 3;
  } else if ((lead >> 3) == 0x1E) {
    cp = lead & 0x07;
    len = 4;
  } else {
    cp = lead;
    return 1;
  }
  if (pos + len > text.size()) {
    cp = lead;
    return 1;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const auto cont = static_cast<unsigned char>(text[pos + i]);
    if ((cont >> 6) != 0x2) {
      cp = lead;
      return 1;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  return len;
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (std::size_t pos = 0; pos < text.size();) {
    char32_t cp = 0;
    const std::size_t len = decode_utf8(text, pos, cp);
    if (is_unicode_space(cp)) {
      flush();
    } else if (cp < 0x80 && std::ispunct(static_cast<unsigned char>(cp))) {
      flush();
      out.emplace_back(1, static_cast<char>(cp));
    } else if (cp < 0x80) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(cp))));
    } else {
      current.append(text.substr(pos, len));
    }
    pos += len;
  }
  flush();
  return out;
}

std::string detokenize(const TokenSeq& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (i > begin) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  tokens_ = {Token(kPadToken), Token(kUnkToken)};
  id_of_.emplace(tokens_[0], kPad);
  id_of_.emplace(tokens_[1], kUnk);
}

int Vocabulary::add(const Token& token) {
  if (auto it = id_of_.find(token); it != id_of_.end()) return it->second;
  if (frozen_) return kUnk;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  id_of_.emplace(token, id);
  return id;
}

void Vocabulary::add_all(const TokenSeq& tokens) {
  for (const auto& t : tokens) add(t);
}

void Vocabulary::freeze() {
  if (frozen_) return;
  std::sort(tokens_.begin() + 2, tokens_.end());
  id_of_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) id_of_.emplace(tokens_[i], static_cast<int>(i));
  frozen_ = true;
}

int Vocabulary::id(std::string_view token) const {
  if (auto it = id_of_.find(Token(token)); it != id_of_.end()) return it->second;
  return kUnk;
}

Vocabulary Vocabulary::from_tokens(std::vector<Token> tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw FormatError("vocabulary must start with <pad> and <unk>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.id_of_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.id_of_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw FormatError("duplicate vocabulary entry '" + v.tokens_[i] + "'");
    }
  }
  v.frozen_ = true;
  return v;
}

EmbeddingTable load_embeddings(std::istream& source, const Vocabulary& vocab,
                               std::size_t default_dim) {
  std::vector<std::pair<int, std::vector<double>>> found;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;

    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      double v = 0.0;
      const auto* first = field.data();
      const auto* last = field.data() + field.size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw FormatError("embedding line " + std::to_string(line_no) +
                          ": non-numeric component '" + field + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) {
      throw FormatError("embedding line " + std::to_string(line_no) + ": no vector components");
    }
    if (dim == 0) {
      dim = values.size();
    } else if (values.size() != dim) {
      throw FormatError("embedding line " + std::to_string(line_no) + ": dimension " +
                        std::to_string(values.size()) + " != " + std::to_string(dim));
    }
    if (const int id = vocab.id(word); id > Vocabulary::kUnk) {
      found.emplace_back(id, std::move(values));
    }
  }
  if (dim == 0) dim = default_dim;

  EmbeddingTable table;
  table.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()),
                                        static_cast<Eigen::Index>(dim));
  for (const auto& [id, values] : found) {
    for (std::size_t j = 0; j < dim; ++j) table.vectors(id, static_cast<Eigen::Index>(j)) = values[j];
  }
  return table;
}

Eigen::MatrixXd embed_sequence(const TokenSeq& tokens, const Vocabulary& vocab,
                               const EmbeddingTable& table) {
  Eigen::MatrixXd out(table.vectors.cols(), static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out.col(static_cast<Eigen::Index>(t)) = table.vectors.row(vocab.id(tokens[t])).transpose();
  }
  return out;
}

}  // namespace pararank
