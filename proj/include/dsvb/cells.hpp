#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dsvb/nn.hpp"
#include "dsvb/ops.hpp"
#include "dsvb/rng.hpp"

namespace dsvb {

/// Gated recurrent unit, update/reset/candidate form:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   c = tanh(W_c x + U_c (r . h) + b_c)
///   h' = z . h + (1 - z) . c
/// Input-side gate blocks are packed column-wise as [z | r | c].
struct GruCell {
  Index input_size = 0;
  Index hidden_size = 0;
  Tensor w;     // [in x 3H]
  Tensor u_zr;  // [H x 2H]
  Tensor u_c;   // [H x H]
  Tensor b;     // [1 x 3H]

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".u_zr", u_zr});
    out.push_back({prefix + ".u_c", u_c});
    out.push_back({prefix + ".b", b});
  }
};

/// LSTM with forget gate; gate blocks packed as [i | f | g | o].
struct LstmCell {
  Index input_size = 0;
  Index hidden_size = 0;
  Tensor w;  // [in x 4H]
  Tensor u;  // [H x 4H]
  Tensor b;  // [1 x 4H]

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".u", u});
    out.push_back({prefix + ".b", b});
  }
};

/// All weight matrices uniform in +/- 1/sqrt(hidden_size); biases zero.
inline GruCell make_gru_cell(Index input, Index hidden, const Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCell cell;
  cell.input_size = input;
  cell.hidden_size = hidden;
  cell.w = rng.fork(name + ".w").uniform_tensor({input, 3 * hidden}, -bound, bound);
  cell.u_zr = rng.fork(name + ".u_zr").uniform_tensor({hidden, 2 * hidden}, -bound, bound);
  cell.u_c = rng.fork(name + ".u_c").uniform_tensor({hidden, hidden}, -bound, bound);
  cell.b = Tensor::zeros({1, 3 * hidden});
  cell.w.set_requires_grad(true);
  cell.u_zr.set_requires_grad(true);
  cell.u_c.set_requires_grad(true);
  cell.b.set_requires_grad(true);
  return cell;
}

/// Forget-gate bias starts at 1 so early gradients pass through time.
inline LstmCell make_lstm_cell(Index input, Index hidden, const Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmCell cell;
  cell.input_size = input;
  cell.hidden_size = hidden;
  cell.w = rng.fork(name + ".w").uniform_tensor({input, 4 * hidden}, -bound, bound);
  cell.u = rng.fork(name + ".u").uniform_tensor({hidden, 4 * hidden}, -bound, bound);
  cell.b = Tensor::zeros({1, 4 * hidden});
  for (Index j = hidden; j < 2 * hidden; ++j) cell.b.values()(j) = 1.0;
  cell.w.set_requires_grad(true);
  cell.u.set_requires_grad(true);
  cell.b.set_requires_grad(true);
  return cell;
}

inline Tensor gru_step(const Tensor& x, const Tensor& h, const GruCell& cell) {
  if (x.rank() != 2 || x.cols() != cell.input_size)
    throw ShapeMismatch("gru_step input " + shape_str(x.shape()) + ", expected cols " +
                        std::to_string(cell.input_size));
  if (h.rank() != 2 || h.cols() != cell.hidden_size || h.rows() != x.rows())
    throw ShapeMismatch("gru_step hidden " + shape_str(h.shape()));
  const Index H = cell.hidden_size;
  Tensor xg = add(matmul(x, cell.w), cell.b);  // [B x 3H]
  Tensor hg = matmul(h, cell.u_zr);            // [B x 2H]
  Tensor z = sigmoid(add(slice_cols(xg, 0, H), slice_cols(hg, 0, H)));
  Tensor r = sigmoid(add(slice_cols(xg, H, H), slice_cols(hg, H, H)));
  Tensor cand = tanh(add(slice_cols(xg, 2 * H, H), matmul(mul(r, h), cell.u_c)));
  return add(mul(z, h), mul(one_minus(z), cand));
}

inline std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                           const LstmCell& cell) {
  if (x.rank() != 2 || x.cols() != cell.input_size)
    throw ShapeMismatch("lstm_step input " + shape_str(x.shape()) + ", expected cols " +
                        std::to_string(cell.input_size));
  if (h.rank() != 2 || h.cols() != cell.hidden_size || h.rows() != x.rows() ||
      c.shape() != h.shape())
    throw ShapeMismatch("lstm_step state " + shape_str(h.shape()) + " / " + shape_str(c.shape()));
  const Index H = cell.hidden_size;
  Tensor pre = add(add(matmul(x, cell.w), matmul(h, cell.u)), cell.b);  // [B x 4H]
  Tensor gate_i = sigmoid(slice_cols(pre, 0, H));
  Tensor gate_f = sigmoid(slice_cols(pre, H, H));
  Tensor gate_g = tanh(slice_cols(pre, 2 * H, H));
  Tensor gate_o = sigmoid(slice_cols(pre, 3 * H, H));
  Tensor c_next = add(mul(gate_f, c), mul(gate_i, gate_g));
  Tensor h_next = mul(gate_o, tanh(c_next));
  return {h_next, c_next};
}

}  // namespace dsvb
