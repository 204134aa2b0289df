#include "pararank/kernels.hpp"

#include <algorithm>
#include <exception>
#include <stdexcept>

#include "pararank/encoder.hpp"

namespace pararank::kernels {
namespace {

void check_sizes(std::span<const SparseVector> docs, std::span<double> out) {
  if (docs.size() != out.size()) throw std::invalid_argument("score_documents: size mismatch");
}

Eigen::VectorXd encode_one(const BiLstmEncoder& encoder, const Embedder& embedder,
                           const TokenSeq& tokens, std::size_t max_len) {
  if (tokens.size() <= max_len) return encoder.encode(embedder.embed(tokens));
  const TokenSeq head(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(max_len));
  return encoder.encode(embedder.embed(head));
}

}  // namespace

double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.ids.size() && j < b.ids.size()) {
    if (a.ids[i] < b.ids[j]) {
      ++i;
    } else if (a.ids[i] > b.ids[j]) {
      ++j;
    } else {
      sum += a.weights[i] * b.weights[j];
      ++i;
      ++j;
    }
  }
  return sum;
}

void score_documents_serial(const SparseVector& query, std::span<const SparseVector> docs,
                            std::span<double> out) {
  check_sizes(docs, out);
  for (std::size_t d = 0; d < docs.size(); ++d) out[d] = sparse_dot(query, docs[d]);
}

void score_documents_omp(const SparseVector& query, std::span<const SparseVector> docs,
                         std::span<double> out) {
  check_sizes(docs, out);
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < n; ++d) {
    out[static_cast<std::size_t>(d)] = sparse_dot(query, docs[static_cast<std::size_t>(d)]);
  }
}

Eigen::MatrixXd encode_sequences_serial(const BiLstmEncoder& encoder, const Embedder& embedder,
                                        std::span<const TokenSeq* const> sequences,
                                        std::size_t max_len) {
  Eigen::MatrixXd out(encoder.output_dim(), static_cast<Eigen::Index>(sequences.size()));
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = encode_one(encoder, embedder, *sequences[i], max_len);
  }
  return out;
}

Eigen::MatrixXd encode_sequences_omp(const BiLstmEncoder& encoder, const Embedder& embedder,
                                     std::span<const TokenSeq* const> sequences,
                                     std::size_t max_len) {
  Eigen::MatrixXd out(encoder.output_dim(), static_cast<Eigen::Index>(sequences.size()));
  const auto n = static_cast<std::ptrdiff_t>(sequences.size());
  // Exceptions must not escape the parallel region; one is rethrown after it.
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out.col(i) = encode_one(encoder, embedder, *sequences[static_cast<std::size_t>(i)], max_len);
    } catch (...) {
#pragma omp critical(pararank_encode_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace pararank::kernels
