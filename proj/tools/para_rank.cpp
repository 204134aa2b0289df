// para-rank: command-line front end for indexing, training, answering and
// evaluation.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric error.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pararank/checkpoint.hpp"
#include "pararank/config.hpp"
#include "pararank/errors.hpp"
#include "pararank/pipeline.hpp"
#include "pararank/reader.hpp"
#include "pararank/retriever.hpp"
#include "pararank/trainer.hpp"

namespace pr = pararank;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw pr::FormatError("cannot open " + path);
  return in;
}

pr::Corpus load_corpus(const std::string& path) {
  auto in = open_input(path);
  return pr::ingest_corpus(in);
}

pr::TfIdfIndex load_index(const std::string& path, const pr::Corpus& corpus) {
  auto in = open_input(path, true);
  auto index = pr::TfIdfIndex::load(in);
  if (index.doc_count() != corpus.size()) {
    throw pr::FormatError("index has " + std::to_string(index.doc_count()) +
                          " documents but the corpus has " + std::to_string(corpus.size()));
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (index.doc_id(i) != corpus.document(i).doc_id) {
      throw pr::FormatError("index and corpus disagree at document " + std::to_string(i));
    }
  }
  return index;
}

// Pipeline options shared by ask, eval and gridsearch: an optional config
// file overlaid by explicit flags.
struct PipelineFlags {
  std::string config_path;
  std::optional<std::size_t> n_docs;
  std::optional<std::size_t> m_paragraphs;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<std::size_t> max_span;
  std::string corpus;
  std::string index;
  std::string model;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON or TOML pipeline configuration");
    app->add_option("--corpus", corpus, "corpus JSON-lines file");
    app->add_option("--index", index, "index built by `para-rank index`");
    app->add_option("--model", model, "checkpoint written by `para-rank train`");
    app->add_option("--n-docs", n_docs, "documents to retrieve (N)");
    app->add_option("--m-paragraphs", m_paragraphs, "paragraphs to read (M)");
    app->add_option("--alpha", alpha, "reader score exponent");
    app->add_option("--beta", beta, "ranker probability exponent");
    app->add_option("--gamma", gamma, "retriever score exponent");
    app->add_option("--max-span", max_span, "longest answer span in tokens");
  }

  pr::PipelineConfig resolve() const {
    pr::PipelineConfig cfg = config_path.empty() ? pr::PipelineConfig{}
                                                 : pr::load_pipeline_config(config_path);
    if (n_docs) cfg.n_docs = *n_docs;
    if (m_paragraphs) cfg.m_paragraphs = *m_paragraphs;
    if (alpha) cfg.weights.alpha = *alpha;
    if (beta) cfg.weights.beta = *beta;
    if (gamma) cfg.weights.gamma = *gamma;
    if (max_span) cfg.max_span = *max_span;
    if (!corpus.empty()) cfg.corpus_path = corpus;
    if (!index.empty()) cfg.index_path = index;
    if (!model.empty()) cfg.model_path = model;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (cfg.corpus_path.empty() || cfg.index_path.empty() || cfg.model_path.empty()) {
      throw UsageError("corpus, index and model paths are required (flags or --config)");
    }
    return cfg;
  }
};

// Everything a question-answering command needs, loaded once.
struct Loaded {
  pr::PipelineConfig config;
  pr::Corpus corpus;
  pr::TfIdfIndex index;
  pr::RankerModel model;
};

Loaded load_all(const PipelineFlags& flags) {
  Loaded l;
  l.config = flags.resolve();
  l.corpus = load_corpus(l.config.corpus_path);
  l.index = load_index(l.config.index_path, l.corpus);
  l.model = pr::checkpoint_load(l.config.model_path);
  return l;
}

std::unique_ptr<pr::Reader> make_reader(const Loaded& l, const std::string& answers_path) {
  if (!answers_path.empty()) {
    auto in = open_input(answers_path);
    return std::make_unique<pr::ExternalReader>(pr::ExternalReader::from_jsonl(in));
  }
  pr::LexicalReaderOptions opts;
  opts.max_span = l.config.max_span;
  return std::make_unique<pr::LexicalReader>(l.index, opts);
}

int run_index(const std::string& corpus_path, const std::string& out_path, int ngrams,
              int hash_bits) {
  const auto corpus = load_corpus(corpus_path);
  if (corpus.empty()) throw pr::FormatError("corpus " + corpus_path + " is empty");
  if (ngrams < 1 || ngrams > 2) throw UsageError("--ngrams must be 1 or 2");
  if (hash_bits < 0 || hash_bits > 30) throw UsageError("--hash-bits must be in [0, 30]");
  const auto index = pr::TfIdfIndex::build(corpus, {ngrams, hash_bits});
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw pr::FormatError("cannot write " + out_path);
  index.save(out);
  std::cerr << "indexed " << corpus.size() << " documents, " << corpus.paragraph_count()
            << " paragraphs, " << index.terms().size() << " terms\n";
  return 0;
}

struct TrainFlags {
  std::string corpus;
  std::string qa;
  std::string emb;
  std::string out;
  std::string scorer = "dot";
  std::size_t layers = 3;
  std::size_t hidden = 128;
  std::size_t kneg = 4;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double lr = 0.002;
  double dropout = 0.4;
  std::size_t batch = 1;
  std::size_t emb_dim = pr::kDefaultEmbeddingDim;
};

int run_train(const TrainFlags& f) {
  const auto kind = pr::parse_scorer_kind(f.scorer);
  if (!kind) throw UsageError("--scorer must be dot, bilinear or mlp");
  if (f.kneg == 0 || f.layers == 0 || f.hidden == 0) {
    throw UsageError("--kneg, --layers and --hidden must be positive");
  }
  if (!(f.dropout >= 0.0 && f.dropout < 1.0)) throw UsageError("--dropout must be in [0, 1)");
  const auto corpus = load_corpus(f.corpus);
  auto qa_in = open_input(f.qa);
  const auto records = pr::read_training_jsonl(qa_in);
  if (records.empty()) throw pr::FormatError("training file " + f.qa + " has no records");

  auto embedder = std::make_shared<pr::Embedder>();
  for (const auto* p : corpus.all_paragraphs()) embedder->vocab.add_all(p->tokens);
  std::vector<pr::TrainingExample> examples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto* positive = corpus.find_paragraph(r.positive_doc_id, r.positive_para_index);
    if (positive == nullptr) {
      throw pr::FormatError("training record " + std::to_string(i + 1) + ": unknown paragraph " +
                            r.positive_doc_id + "#" + std::to_string(r.positive_para_index));
    }
    auto tokens = pr::tokenize(r.question);
    if (tokens.empty()) {
      throw pr::FormatError("training record " + std::to_string(i + 1) + ": empty question");
    }
    embedder->vocab.add_all(tokens);
    examples.push_back({std::move(tokens), positive, r.answers});
  }
  embedder->vocab.freeze();
  {
    auto emb_in = open_input(f.emb);
    embedder->table = pr::load_embeddings(emb_in, embedder->vocab, f.emb_dim);
  }

  pr::ModelConfig mc;
  mc.layers = f.layers;
  mc.hidden = f.hidden;
  mc.dropout = f.dropout;
  mc.scorer = *kind;
  auto model = pr::RankerModel::create(mc, embedder, f.seed);

  pr::TrainingConfig tc;
  tc.negatives_per_positive = f.kneg;
  tc.epochs = f.epochs;
  tc.seed = f.seed;
  tc.learning_rate = f.lr;
  tc.batch_size = f.batch;
  const pr::NoiseDistribution noise(corpus.all_paragraphs());
  const auto log = pr::train(model, examples, noise, tc);
  for (std::size_t e = 0; e < log.epoch_mean_loss.size(); ++e) {
    std::cerr << "epoch " << e + 1 << " mean loss " << std::setprecision(10)
              << log.epoch_mean_loss[e] << "\n";
  }
  pr::checkpoint_save(model, f.out);
  return 0;
}

int run_ask(const PipelineFlags& flags, const std::string& question, bool as_json) {
  const auto l = load_all(flags);
  const auto reader = make_reader(l, "");
  const pr::Pipeline pipeline(l.config, l.corpus, l.index, l.model, *reader);
  const auto result = pipeline.answer(question);
  if (as_json) {
    nlohmann::json j;
    j["question"] = question;
    j["answer"] = result.answer ? nlohmann::json(*result.answer) : nlohmann::json(nullptr);
    j["score"] = result.total_score;
    j["reason"] = result.reason;
    j["paragraphs_read"] = result.paragraphs_read;
    auto& trace = j["trace"] = nlohmann::json::array();
    for (const auto& t : result.trace) {
      trace.push_back({{"doc_id", t.doc_id},
                       {"para_index", t.para_index},
                       {"ranker_prob", t.ranker_prob},
                       {"doc_score", t.doc_score},
                       {"combined", t.combined},
                       {"answer", t.answer ? nlohmann::json(*t.answer) : nlohmann::json(nullptr)},
                       {"reader_score", t.reader_score}});
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  if (result.answer) {
    std::cout << "answer: " << *result.answer << "\n";
    std::cout << "score: " << std::setprecision(6) << result.total_score << "\n";
  } else {
    std::cout << "answer: <none> (" << result.reason << ")\n";
  }
  if (!result.trace.empty()) std::cout << "top paragraphs:\n";
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const auto& t = result.trace[i];
    std::cout << "  " << i + 1 << ". " << t.doc_id << "#" << t.para_index << std::fixed
              << std::setprecision(4) << "  p(P|Q)=" << t.ranker_prob << "  p(D|Q)=" << t.doc_score
              << "  combined=" << t.combined;
    if (t.answer) std::cout << "  answer=\"" << *t.answer << "\"";
    std::cout << std::defaultfloat << "\n     " << t.text.substr(0, 160)
              << (t.text.size() > 160 ? "..." : "") << "\n";
  }
  return 0;
}

int run_eval(const PipelineFlags& flags, const std::string& qa_path,
             const std::string& answers_path) {
  const auto l = load_all(flags);
  auto in = open_input(qa_path);
  const auto qa = pr::read_qa_jsonl(in);
  if (qa.empty()) throw pr::FormatError("qa file " + qa_path + " is empty");
  const auto reader = make_reader(l, answers_path);
  const pr::Pipeline pipeline(l.config, l.corpus, l.index, l.model, *reader);
  std::cout << pipeline.evaluate(qa).to_json() << "\n";
  return 0;
}

int run_gridsearch(const PipelineFlags& flags, const std::string& qa_path,
                   const std::string& answers_path) {
  const auto l = load_all(flags);
  auto in = open_input(qa_path);
  const auto qa = pr::read_qa_jsonl(in);
  if (qa.empty()) throw pr::FormatError("qa file " + qa_path + " is empty");
  const auto reader = make_reader(l, answers_path);
  const auto result = pr::grid_search(l.config, l.corpus, l.index, pr::model_scorer(l.model),
                                      *reader, qa, pr::kDefaultGrid);
  nlohmann::json j;
  auto weights = [](const pr::AggregationWeights& w) {
    return nlohmann::json{{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}};
  };
  j["best"] = {{"weights", weights(result.best.weights)}, {"exact_match", result.best.exact_match}};
  auto& points = j["points"] = nlohmann::json::array();
  for (const auto& p : result.points) {
    points.push_back({{"weights", weights(p.weights)}, {"exact_match", p.exact_match}});
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"para-rank: retrieval, paragraph ranking and answer aggregation"};
  app.require_subcommand(1);

  std::string corpus_path;
  std::string out_path;
  int ngrams = 2;
  int hash_bits = 0;
  auto* index_cmd = app.add_subcommand("index", "build a TF-IDF index over a corpus");
  index_cmd->add_option("--corpus", corpus_path, "corpus JSON-lines file")->required();
  index_cmd->add_option("--out", out_path, "index output path")->required();
  index_cmd->add_option("--ngrams", ngrams, "1 = unigrams, 2 = unigrams + bigrams");
  index_cmd->add_option("--hash-bits", hash_bits, "hash terms into 2^bits bins (0 = exact)");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "train the paragraph ranker");
  train_cmd->add_option("--corpus", tf.corpus)->required();
  train_cmd->add_option("--qa", tf.qa, "training QA JSON-lines")->required();
  train_cmd->add_option("--emb", tf.emb, "word2vec-text embeddings")->required();
  train_cmd->add_option("--out", tf.out, "checkpoint output path")->required();
  train_cmd->add_option("--scorer", tf.scorer, "dot, bilinear or mlp");
  train_cmd->add_option("--layers", tf.layers);
  train_cmd->add_option("--hidden", tf.hidden, "hidden units per direction");
  train_cmd->add_option("--kneg", tf.kneg, "negatives per positive");
  train_cmd->add_option("--epochs", tf.epochs);
  train_cmd->add_option("--seed", tf.seed);
  train_cmd->add_option("--lr", tf.lr, "Adamax learning rate");
  train_cmd->add_option("--dropout", tf.dropout);
  train_cmd->add_option("--batch", tf.batch, "examples per update");
  train_cmd->add_option("--emb-dim", tf.emb_dim, "dimension used when the embedding file is empty");

  PipelineFlags ask_flags;
  std::string question;
  bool ask_json = false;
  auto* ask_cmd = app.add_subcommand("ask", "answer one question and print the ranking trace");
  ask_flags.attach(ask_cmd);
  ask_cmd->add_option("question", question, "question text")->required();
  ask_cmd->add_flag("--json", ask_json, "print the result as JSON");

  PipelineFlags eval_flags;
  std::string eval_qa;
  std::string eval_answers;
  auto* eval_cmd = app.add_subcommand("eval", "exact match and recall@M as JSON");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--qa", eval_qa, "QA JSON-lines {id, question, answers}")->required();
  eval_cmd->add_option("--reader-answers", eval_answers, "external reader answers JSON-lines");

  PipelineFlags grid_flags;
  std::string grid_qa;
  std::string grid_answers;
  auto* grid_cmd = app.add_subcommand("gridsearch", "tune alpha, beta, gamma on validation QA");
  grid_flags.attach(grid_cmd);
  grid_cmd->add_option("--qa", grid_qa, "validation QA JSON-lines")->required();
  grid_cmd->add_option("--reader-answers", grid_answers, "external reader answers JSON-lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*index_cmd) return run_index(corpus_path, out_path, ngrams, hash_bits);
    if (*train_cmd) return run_train(tf);
    if (*ask_cmd) return run_ask(ask_flags, question, ask_json);
    if (*eval_cmd) return run_eval(eval_flags, eval_qa, eval_answers);
    if (*grid_cmd) return run_gridsearch(grid_flags, grid_qa, grid_answers);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const pr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const pr::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
