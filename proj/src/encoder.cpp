#include "pararank/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "pararank/errors.hpp"

namespace pararank {
namespace {

LstmDirection make_direction(Eigen::Index input, Eigen::Index hidden) {
  LstmDirection d;
  d.W = Eigen::MatrixXd::Zero(4 * hidden, input);
  d.U = Eigen::MatrixXd::Zero(4 * hidden, hidden);
  d.b = Eigen::VectorXd::Zero(4 * hidden);
  d.b.segment(hidden, hidden).setOnes();
  return d;
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = uniform_real(rng, -bound, bound);
  }
}

Eigen::VectorXd draw_mask(Eigen::Index size, double p, Rng& rng) {
  Eigen::VectorXd mask(size);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < size; ++i) mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
  return mask;
}

Eigen::MatrixXd apply_mask(const Eigen::MatrixXd& x, const Eigen::VectorXd& mask) {
  if (mask.size() == 0) return x;
  return mask.asDiagonal() * x;
}

// Backpropagates one direction. `order` lists positions in processing order;
// `steps[t]` holds the state produced at position t.
void backward_direction(const LstmDirection& p, LstmDirection& g,
                        const std::vector<CellStep>& steps, const std::vector<Eigen::Index>& order,
                        const Eigen::MatrixXd& x, const Eigen::MatrixXd& d_h_ext,
                        Eigen::MatrixXd& d_x) {
  const Eigen::Index H = p.hidden();
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd da(4 * H);

  for (auto k = static_cast<std::ptrdiff_t>(order.size()) - 1; k >= 0; --k) {
    const Eigen::Index t = order[static_cast<std::size_t>(k)];
    const CellStep& s = steps[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& h_prev = k > 0 ? steps[static_cast<std::size_t>(order[k - 1])].h : zero;
    const Eigen::VectorXd& c_prev = k > 0 ? steps[static_cast<std::size_t>(order[k - 1])].c : zero;

    const auto i = s.gates.segment(0, H).array();
    const auto f = s.gates.segment(H, H).array();
    const auto o = s.gates.segment(2 * H, H).array();
    const auto gg = s.gates.segment(3 * H, H).array();
    const auto tc = s.tanh_c.array();

    const Eigen::ArrayXd dh = d_h_ext.col(t).array() + dh_next.array();
    const Eigen::ArrayXd dc = dc_next.array() + dh * o * (1.0 - tc * tc);

    da.segment(0, H) = (dc * gg * i * (1.0 - i)).matrix();
    da.segment(H, H) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
    da.segment(2 * H, H) = (dh * tc * o * (1.0 - o)).matrix();
    da.segment(3 * H, H) = (dc * i * (1.0 - gg * gg)).matrix();

    g.W.noalias() += da * x.col(t).transpose();
    g.U.noalias() += da * h_prev.transpose();
    g.b += da;
    d_x.col(t).noalias() += p.W.transpose() * da;
    dh_next.noalias() = p.U.transpose() * da;
    dc_next = (dc * f).matrix();
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

CellStep lstm_cell_forward(const LstmDirection& params, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev) {
  const Eigen::Index H = params.hidden();
  if (x.size() != params.input() || h_prev.size() != H || c_prev.size() != H ||
      params.W.rows() != 4 * H || params.b.size() != 4 * H) {
    throw DimensionError("lstm cell: dimension mismatch");
  }
  CellStep s;
  s.gates.noalias() = params.W * x;
  s.gates.noalias() += params.U * h_prev;
  s.gates += params.b;
  for (Eigen::Index r = 0; r < 3 * H; ++r) s.gates[r] = sigmoid(s.gates[r]);
  for (Eigen::Index r = 3 * H; r < 4 * H; ++r) s.gates[r] = std::tanh(s.gates[r]);

  s.c = s.gates.segment(H, H).cwiseProduct(c_prev) +
        s.gates.segment(0, H).cwiseProduct(s.gates.segment(3 * H, H));
  s.tanh_c = s.c.array().tanh().matrix();
  s.h = s.gates.segment(2 * H, H).cwiseProduct(s.tanh_c);
  return s;
}

BiLstmEncoder::BiLstmEncoder(Eigen::Index input_dim, Eigen::Index hidden_dim,
                             std::size_t num_layers, double dropout) {
  if (input_dim <= 0 || hidden_dim <= 0 || num_layers == 0) {
    throw DimensionError("encoder dimensions must be positive");
  }
  set_dropout(dropout);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const Eigen::Index in = l == 0 ? input_dim : 2 * hidden_dim;
    layers_.push_back({make_direction(in, hidden_dim), make_direction(in, hidden_dim)});
  }
}

void BiLstmEncoder::set_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  dropout_ = p;
}

Eigen::Index BiLstmEncoder::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().forward.input();
}

Eigen::Index BiLstmEncoder::hidden_dim() const {
  return layers_.empty() ? 0 : layers_.front().forward.hidden();
}

void BiLstmEncoder::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim()));
  for (auto& layer : layers_) {
    for (LstmDirection* d : {&layer.forward, &layer.backward}) {
      fill_uniform(d->W, bound, rng);
      fill_uniform(d->U, bound, rng);
      fill_uniform(d->b, bound, rng);
      d->b.segment(d->hidden(), d->hidden()).setOnes();
    }
  }
}

BiLstmEncoder BiLstmEncoder::zeros_like() const {
  BiLstmEncoder z = *this;
  for (auto& layer : z.layers_) {
    for (LstmDirection* d : {&layer.forward, &layer.backward}) {
      d->W.setZero();
      d->U.setZero();
      d->b.setZero();
    }
  }
  return z;
}

Eigen::VectorXd BiLstmEncoder::forward(const Eigen::MatrixXd& embedded,
                                       std::vector<Eigen::VectorXd> masks,
                                       GradientTape* tape) const {
  const Eigen::Index T = embedded.cols();
  if (T == 0) throw std::invalid_argument("cannot encode empty sequence");
  if (embedded.rows() != input_dim()) throw DimensionError("encoder: input dimension mismatch");
  const Eigen::Index H = hidden_dim();
  masks.resize(layers_.size());

  Eigen::MatrixXd x = apply_mask(embedded, masks[0]);
  Eigen::MatrixXd out(2 * H, T);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(H);
  std::vector<GradientTape::Layer> recorded;

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    GradientTape::Layer rec;
    rec.forward.resize(static_cast<std::size_t>(T));
    rec.backward.resize(static_cast<std::size_t>(T));
    const Eigen::VectorXd* h = &zero;
    const Eigen::VectorXd* c = &zero;
    for (Eigen::Index t = 0; t < T; ++t) {
      auto& step = rec.forward[static_cast<std::size_t>(t)];
      step = lstm_cell_forward(layer.forward, x.col(t), *h, *c);
      out.col(t).head(H) = step.h;
      h = &step.h;
      c = &step.c;
    }
    h = &zero;
    c = &zero;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      auto& step = rec.backward[static_cast<std::size_t>(t)];
      step = lstm_cell_forward(layer.backward, x.col(t), *h, *c);
      out.col(t).tail(H) = step.h;
      h = &step.h;
      c = &step.c;
    }
    if (tape != nullptr) {
      rec.input = std::move(x);
      recorded.push_back(std::move(rec));
    }
    if (l + 1 < layers_.size()) x = apply_mask(out, masks[l + 1]);
  }

  Eigen::VectorXd repr(2 * H);
  repr.head(H) = out.col(T - 1).head(H);
  repr.tail(H) = out.col(0).tail(H);
  if (tape != nullptr) {
    tape->embedded = embedded;
    tape->masks = std::move(masks);
    tape->layers = std::move(recorded);
  }
  return repr;
}

Encoding BiLstmEncoder::encode(const Eigen::MatrixXd& embedded, Mode mode, Rng* rng) const {
  std::vector<Eigen::VectorXd> masks(layers_.size());
  if (mode == Mode::Train && dropout_ > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("train-mode encode needs an rng");
    masks[0] = draw_mask(input_dim(), dropout_, *rng);
    for (std::size_t l = 1; l < layers_.size(); ++l) masks[l] = draw_mask(output_dim(), dropout_, *rng);
  }
  Encoding enc;
  enc.repr = forward(embedded, std::move(masks), &enc.tape);
  return enc;
}

Eigen::VectorXd BiLstmEncoder::encode(const Eigen::MatrixXd& embedded) const {
  return forward(embedded, {}, nullptr);
}

Eigen::VectorXd BiLstmEncoder::replay(const GradientTape& tape) const {
  check_tape(tape);
  return forward(tape.embedded, tape.masks, nullptr);
}

void BiLstmEncoder::check_tape(const GradientTape& tape) const {
  const auto T = static_cast<std::size_t>(tape.length());
  bool ok = tape.layers.size() == layers_.size() && tape.masks.size() == layers_.size() &&
            tape.embedded.rows() == input_dim();
  for (std::size_t l = 0; ok && l < layers_.size(); ++l) {
    const auto& rec = tape.layers[l];
    ok = rec.forward.size() == T && rec.backward.size() == T &&
         rec.input.rows() == layers_[l].forward.input() &&
         (T == 0 || rec.forward[0].h.size() == hidden_dim());
  }
  if (!ok) throw DimensionError("gradient tape does not match encoder");
}

BiLstmEncoder::Gradients BiLstmEncoder::backward(const GradientTape& tape,
                                                 const Eigen::VectorXd& d_repr) const {
  Gradients g{zeros_like(), {}};
  g.input = backward_into(tape, d_repr, g.params);
  return g;
}

Eigen::MatrixXd BiLstmEncoder::backward_into(const GradientTape& tape,
                                             const Eigen::VectorXd& d_repr,
                                             BiLstmEncoder& grads) const {
  check_tape(tape);
  if (d_repr.size() != output_dim()) throw DimensionError("d_repr width mismatch");
  if (grads.layers_.size() != layers_.size() || grads.hidden_dim() != hidden_dim() ||
      grads.input_dim() != input_dim()) {
    throw DimensionError("gradient accumulator does not match encoder");
  }
  const Eigen::Index T = tape.length();
  const Eigen::Index H = hidden_dim();

  std::vector<Eigen::Index> left_to_right(static_cast<std::size_t>(T));
  std::vector<Eigen::Index> right_to_left(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    left_to_right[static_cast<std::size_t>(t)] = t;
    right_to_left[static_cast<std::size_t>(t)] = T - 1 - t;
  }

  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(2 * H, T);
  d_out.col(T - 1).head(H) = d_repr.head(H);
  d_out.col(0).tail(H) = d_repr.tail(H);

  for (auto l = static_cast<std::ptrdiff_t>(layers_.size()) - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const auto& rec = tape.layers[li];
    Eigen::MatrixXd d_x = Eigen::MatrixXd::Zero(rec.input.rows(), T);
    const Eigen::MatrixXd d_fwd = d_out.topRows(H);
    const Eigen::MatrixXd d_bwd = d_out.bottomRows(H);
    backward_direction(layers_[li].forward, grads.layers_[li].forward, rec.forward, left_to_right,
                       rec.input, d_fwd, d_x);
    backward_direction(layers_[li].backward, grads.layers_[li].backward, rec.backward,
                       right_to_left, rec.input, d_bwd, d_x);
    d_out = apply_mask(d_x, tape.masks[li]);
  }
  return d_out;
}

std::size_t BiLstmEncoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const LstmDirection* d : {&layer.forward, &layer.backward}) {
      n += static_cast<std::size_t>(d->W.size() + d->U.size() + d->b.size());
    }
  }
  return n;
}

void BiLstmEncoder::collect_tensors(const std::string& prefix, std::vector<TensorRef>& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + "layer" + std::to_string(l) + ".";
    for (auto [name, d] : {std::pair{"fwd", &layers_[l].forward}, std::pair{"bwd", &layers_[l].backward}}) {
      out.push_back({base + name + ".W", d->W.data(), d->W.rows(), d->W.cols()});
      out.push_back({base + name + ".U", d->U.data(), d->U.rows(), d->U.cols()});
      out.push_back({base + name + ".b", d->b.data(), d->b.size(), 1});
    }
  }
}

}  // namespace pararank
