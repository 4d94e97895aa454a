#pragma once

#include <variant>
#include <vector>

#include "dsvb/cells.hpp"
#include "dsvb/nn.hpp"
#include "dsvb/vrnn.hpp"

namespace dsvb {

/// Deterministic benchmark regressor: a recurrent cell over raw
/// measurements with a feed-forward head mapping hidden states to system
/// states, trained on source labels only.
struct BaselineModel {
  Index n_y = 2;
  Index n_x = 22;
  Index hidden = 128;
  CellKind kind = CellKind::gru;
  std::variant<GruCell, LstmCell> cell;
  Mlp head;

  std::vector<NamedParam> named_params() const {
    std::vector<NamedParam> out;
    if (const auto* gru = std::get_if<GruCell>(&cell)) {
      gru->collect_params("rnn", out);
    } else {
      std::get<LstmCell>(cell).collect_params("rnn", out);
    }
    head.collect_params("head", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& np : named_params()) out.push_back(np.tensor);
    return out;
  }
};

inline BaselineModel make_baseline(Index n_y, Index n_x, Index hidden, CellKind kind,
                                   const Rng& rng) {
  BaselineModel m;
  m.n_y = n_y;
  m.n_x = n_x;
  m.hidden = hidden;
  m.kind = kind;
  if (kind == CellKind::gru) {
    m.cell = make_gru_cell(n_y, hidden, rng, "rnn");
  } else {
    m.cell = make_lstm_cell(n_y, hidden, rng, "rnn");
  }
  m.head = make_mlp(hidden, {hidden}, n_x, rng, "head");
  return m;
}

/// Per-step state estimates for a batch of measurement windows.
inline std::vector<Tensor> baseline_forward(const BaselineModel& m,
                                            const std::vector<Tensor>& y_steps) {
  const Index rows = y_steps.front().rows();
  Tensor h = Tensor::zeros({rows, m.hidden});
  Tensor c = Tensor::zeros({rows, m.hidden});
  std::vector<Tensor> estimates;
  estimates.reserve(y_steps.size());
  for (const Tensor& y : y_steps) {
    if (const auto* gru = std::get_if<GruCell>(&m.cell)) {
      h = gru_step(y, h, *gru);
    } else {
      auto [hn, cn] = lstm_step(y, h, c, std::get<LstmCell>(m.cell));
      h = hn;
      c = cn;
    }
    estimates.push_back(m.head.forward(h));
  }
  return estimates;
}

}  // namespace dsvb
