#include "pararank/checkpoint.hpp"

#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "pararank/binary_io.hpp"
#include "pararank/errors.hpp"

namespace pararank {
namespace {

constexpr char kMagic[] = "PRCKPT";
constexpr std::size_t kMagicLen = 6;

using nlohmann::json;

void write_tensor(std::ostream& out, const TensorRef& t) {
  for (Eigen::Index r = 0; r < t.rows; ++r) {
    for (Eigen::Index c = 0; c < t.cols; ++c) binio::write_f64(out, t.at(r, c));
  }
}

void read_tensor(std::istream& in, const TensorRef& t) {
  for (Eigen::Index r = 0; r < t.rows; ++r) {
    for (Eigen::Index c = 0; c < t.cols; ++c) {
      try {
        t.at(r, c) = binio::read_f64(in, "tensor");
      } catch (const FormatError&) {
        throw CheckpointError("truncated tensor data in " + t.name);
      }
    }
  }
}

json tensor_entry(const TensorRef& t) {
  return json{{"name", t.name}, {"shape", {t.rows, t.cols}}};
}

}  // namespace

void checkpoint_save(RankerModel& model, std::ostream& out) {
  const auto& cfg = model.config();
  const Embedder& emb = model.embedder();

  // The embedding table is frozen but stored so the checkpoint is
  // self-contained; it is read into a fresh table on load.
  Eigen::MatrixXd table = emb.table.vectors;
  const TensorRef emb_ref{"embeddings", table.data(), table.rows(), table.cols()};
  const auto tensors = model.tensors();

  json header;
  header["format_version"] = kCheckpointVersion;
  header["dtype"] = "float64-le";
  header["tokenizer"] = {{"lowercase", true}, {"split_punctuation", true}};
  header["vocabulary"] = emb.vocab.tokens();
  header["embedding_dim"] = emb.dim();
  header["encoder"] = {{"layers", cfg.layers},
                       {"hidden", cfg.hidden},
                       {"hidden_per_direction", true},
                       {"dropout", cfg.dropout},
                       {"max_paragraph_tokens", cfg.max_paragraph_tokens},
                       {"max_question_tokens", cfg.max_question_tokens}};
  header["scorer"] = {{"kind", to_string(cfg.scorer)}, {"mlp_hidden", cfg.mlp_hidden}};
  json table_list = json::array({tensor_entry(emb_ref)});
  for (const auto& t : tensors) table_list.push_back(tensor_entry(t));
  header["tensors"] = table_list;

  const std::string text = header.dump();
  out.write(kMagic, kMagicLen);
  binio::write_uint<std::uint32_t>(out, kCheckpointVersion);
  binio::write_uint<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensor(out, emb_ref);
  for (const auto& t : tensors) write_tensor(out, t);
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

void checkpoint_save(RankerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  checkpoint_save(model, out);
}

RankerModel checkpoint_load(std::istream& in) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::string_view(magic, kMagicLen) != kMagic) {
    throw CheckpointError("not a para-rank checkpoint");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  try {
    version = binio::read_uint<std::uint32_t>(in, "checkpoint version");
    header_len = binio::read_uint<std::uint64_t>(in, "checkpoint header length");
  } catch (const FormatError&) {
    throw CheckpointError("corrupt checkpoint header");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (header_len > (std::uint64_t{1} << 34)) throw CheckpointError("corrupt checkpoint header");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointError("corrupt checkpoint header");
  }

  ModelConfig cfg;
  std::vector<std::string> vocab_tokens;
  std::size_t emb_dim = 0;
  json tensor_table;
  try {
    const json header = json::parse(text);
    if (header.at("format_version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " +
                            header.at("format_version").dump());
    }
    vocab_tokens = header.at("vocabulary").get<std::vector<std::string>>();
    emb_dim = header.at("embedding_dim").get<std::size_t>();
    const auto& enc = header.at("encoder");
    cfg.layers = enc.at("layers").get<std::size_t>();
    cfg.hidden = enc.at("hidden").get<std::size_t>();
    cfg.dropout = enc.at("dropout").get<double>();
    cfg.max_paragraph_tokens = enc.at("max_paragraph_tokens").get<std::size_t>();
    cfg.max_question_tokens = enc.at("max_question_tokens").get<std::size_t>();
    const auto kind_name = header.at("scorer").at("kind").get<std::string>();
    const auto kind = parse_scorer_kind(kind_name);
    if (!kind) throw CheckpointError("unknown scorer kind '" + kind_name + "'");
    cfg.scorer = *kind;
    cfg.mlp_hidden = header.at("scorer").at("mlp_hidden").get<std::size_t>();
    tensor_table = header.at("tensors");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  auto embedder = std::make_shared<Embedder>();
  try {
    embedder->vocab = Vocabulary::from_tokens(std::move(vocab_tokens));
  } catch (const FormatError& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  embedder->table.vectors.resize(static_cast<Eigen::Index>(embedder->vocab.size()),
                                 static_cast<Eigen::Index>(emb_dim));
  if (emb_dim == 0 || cfg.layers == 0 || cfg.hidden == 0) {
    throw CheckpointError("tensor shape mismatch");
  }

  // Expected layout from the hyperparameters; the declared table must agree.
  RankerModel model;
  try {
    model = RankerModel::create(cfg, embedder, 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint hyperparameters: ") + e.what());
  }
  std::vector<TensorRef> expected;
  expected.push_back({"embeddings", embedder->table.vectors.data(), embedder->table.vectors.rows(),
                      embedder->table.vectors.cols()});
  for (const auto& t : model.tensors()) expected.push_back(t);

  if (!tensor_table.is_array() || tensor_table.size() != expected.size()) {
    throw CheckpointError("tensor shape mismatch");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& entry = tensor_table[i];
    bool ok = entry.is_object() && entry.contains("name") && entry.contains("shape");
    if (ok) {
      const auto& shape = entry["shape"];
      ok = entry["name"] == expected[i].name && shape.is_array() && shape.size() == 2 &&
           shape[0] == expected[i].rows && shape[1] == expected[i].cols;
    }
    if (!ok) throw CheckpointError("tensor shape mismatch");
  }
  for (const auto& t : expected) read_tensor(in, t);
  if (embedder->table.vectors.rows() > 0 && !embedder->table.vectors.row(Vocabulary::kPad).isZero(0.0)) {
    throw CheckpointError("embedding row for <pad> must be zero");
  }
  return model;
}

RankerModel checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return checkpoint_load(in);
}

}  // namespace pararank
