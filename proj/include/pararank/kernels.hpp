#pragma once

// Data-parallel inner loops. Every OpenMP kernel has a serial twin that the
// tests and the benchmark compare it against; both produce bit-identical
// output because each output element is computed by exactly one iteration.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pararank/text.hpp"

namespace pararank {

class BiLstmEncoder;

/// Sparse vector with strictly increasing term ids.
struct SparseVector {
  std::vector<std::uint32_t> ids;
  std::vector<double> weights;

  std::size_t nnz() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

namespace kernels {

enum class Exec { Serial, Parallel };

/// Merge-join dot product, summed in ascending term-id order.
double sparse_dot(const SparseVector& a, const SparseVector& b);

void score_documents_serial(const SparseVector& query, std::span<const SparseVector> docs,
                            std::span<double> out);
void score_documents_omp(const SparseVector& query, std::span<const SparseVector> docs,
                         std::span<double> out);

inline void score_documents(Exec exec, const SparseVector& query,
                            std::span<const SparseVector> docs, std::span<double> out) {
  if (exec == Exec::Parallel) {
    score_documents_omp(query, docs, out);
  } else {
    score_documents_serial(query, docs, out);
  }
}

/// Encodes each sequence (inference mode, truncated to max_len tokens) and
/// stores its representation in the corresponding column of the result.
Eigen::MatrixXd encode_sequences_serial(const BiLstmEncoder& encoder, const Embedder& embedder,
                                        std::span<const TokenSeq* const> sequences,
                                        std::size_t max_len);
Eigen::MatrixXd encode_sequences_omp(const BiLstmEncoder& encoder, const Embedder& embedder,
                                     std::span<const TokenSeq* const> sequences,
                                     std::size_t max_len);

inline Eigen::MatrixXd encode_sequences(Exec exec, const BiLstmEncoder& encoder,
                                        const Embedder& embedder,
                                        std::span<const TokenSeq* const> sequences,
                                        std::size_t max_len) {
  return exec == Exec::Parallel ? encode_sequences_omp(encoder, embedder, sequences, max_len)
                                : encode_sequences_serial(encoder, embedder, sequences, max_len);
}

}  // namespace kernels
}  // namespace pararank
