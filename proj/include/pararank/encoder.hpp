#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pararank/random.hpp"

namespace pararank {

enum class Mode { Train, Infer };

/// Parameters of one LSTM direction. Gate blocks are stacked row-wise in
/// the order input, forget, output, candidate.
struct LstmDirection {
  Eigen::MatrixXd W;  // 4H x input
  Eigen::MatrixXd U;  // 4H x H
  Eigen::VectorXd b;  // 4H

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input() const { return W.cols(); }
};

struct LstmLayerParams {
  LstmDirection forward;
  LstmDirection backward;
};

/// Everything one cell evaluation produces; the backward pass reads it back.
struct CellStep {
  Eigen::VectorXd gates;  // activated [i; f; o; g]
  Eigen::VectorXd c;
  Eigen::VectorXd tanh_c;
  Eigen::VectorXd h;
};

CellStep lstm_cell_forward(const LstmDirection& params, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev);

double sigmoid(double x);

/// Mutable view of one parameter tensor in Eigen's column-major storage.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  std::span<double> values() const { return {data, size()}; }
  /// Element (r, c) regardless of storage order.
  double& at(Eigen::Index r, Eigen::Index c) const { return data[r + c * rows]; }
};

/// Forward activations of one encode call.
struct GradientTape {
  struct Layer {
    Eigen::MatrixXd input;          // input after dropout, in x T
    std::vector<CellStep> forward;  // forward[t]: state after reading position t left-to-right
    std::vector<CellStep> backward; // backward[t]: state after reading position t right-to-left
  };

  Eigen::MatrixXd embedded;            // raw input, in x T
  std::vector<Eigen::VectorXd> masks;  // masks[l] scales the input of layer l; empty means none
  std::vector<Layer> layers;

  Eigen::Index length() const { return embedded.cols(); }
};

struct Encoding {
  Eigen::VectorXd repr;
  GradientTape tape;
};

/// Stacked bidirectional LSTM. The representation is the top layer's
/// forward state at the last position concatenated with its backward state
/// at position 0.
class BiLstmEncoder {
 public:
  struct Gradients;

  BiLstmEncoder() = default;
  /// All weights zero, forget-gate biases 1.
  BiLstmEncoder(Eigen::Index input_dim, Eigen::Index hidden_dim, std::size_t num_layers,
                double dropout);

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate biases reset to 1.
  void init_uniform(Rng& rng);
  /// Same shapes, every entry zero.
  BiLstmEncoder zeros_like() const;

  Eigen::Index input_dim() const;
  Eigen::Index hidden_dim() const;
  Eigen::Index output_dim() const { return 2 * hidden_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  double dropout() const { return dropout_; }
  void set_dropout(double p);

  std::vector<LstmLayerParams>& layers() { return layers_; }
  const std::vector<LstmLayerParams>& layers() const { return layers_; }

  /// Train mode draws inverted-dropout masks (one per layer input, shared
  /// across time steps) from rng; infer mode is deterministic and ignores rng.
  Encoding encode(const Eigen::MatrixXd& embedded, Mode mode, Rng* rng = nullptr) const;
  Eigen::VectorXd encode(const Eigen::MatrixXd& embedded) const;

  /// Re-runs the forward pass with the tape's input and masks.
  Eigen::VectorXd replay(const GradientTape& tape) const;

  /// Gradients of repr . d_repr with respect to all parameters and inputs.
  Gradients backward(const GradientTape& tape, const Eigen::VectorXd& d_repr) const;
  /// Adds parameter gradients into `grads` (shaped like *this) and returns
  /// the gradient with respect to the embedded input.
  Eigen::MatrixXd backward_into(const GradientTape& tape, const Eigen::VectorXd& d_repr,
                                BiLstmEncoder& grads) const;

  void collect_tensors(const std::string& prefix, std::vector<TensorRef>& out);
  std::size_t parameter_count() const;

 private:
  Eigen::VectorXd forward(const Eigen::MatrixXd& embedded, std::vector<Eigen::VectorXd> masks,
                          GradientTape* tape) const;
  void check_tape(const GradientTape& tape) const;

  std::vector<LstmLayerParams> layers_;
  double dropout_ = 0.0;
};

struct BiLstmEncoder::Gradients {
  BiLstmEncoder params;
  Eigen::MatrixXd input;
};

}  // namespace pararank
