#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dsvb/ops.hpp"
#include "dsvb/rng.hpp"
#include "dsvb/tensor.hpp"

namespace dsvb {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]

  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
};

/// Weights drawn uniformly in +/- 1/sqrt(fan_in); biases start at zero.
/// Each tensor pulls a named sub-stream from `rng` so the draw for a given
/// (seed, name, shape) never depends on construction order.
inline Linear make_linear(Index in, Index out, const Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Rng wstream = rng.fork(name + ".weight");
  Linear l;
  l.weight = wstream.uniform_tensor({in, out}, -bound, bound);
  l.weight.set_requires_grad(true);
  l.bias = Tensor::zeros({1, out}, /*requires_grad=*/true);
  return l;
}

inline Tensor affine(const Tensor& x, const Linear& l) {
  return add(matmul(x, l.weight), l.bias);
}

/// Feed-forward stack with tanh between layers; the last layer is linear
/// unless `tanh_on_output` is set (feature encoders keep the squashing).
struct Mlp {
  std::vector<Linear> layers;
  bool tanh_on_output = false;

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = affine(h, layers[i]);
      if (i + 1 < layers.size() || tanh_on_output) h = tanh(h);
    }
    return h;
  }

  Index in_features() const { return layers.front().in_features(); }
  Index out_features() const { return layers.back().out_features(); }

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", layers[i].weight});
      out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", layers[i].bias});
    }
  }
};

inline Mlp make_mlp(Index in, const std::vector<Index>& hidden, Index out, const Rng& rng,
                    const std::string& name, bool tanh_on_output = false) {
  Mlp mlp;
  mlp.tanh_on_output = tanh_on_output;
  Index prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    mlp.layers.push_back(make_linear(prev, hidden[i], rng, name + ".layer" + std::to_string(i)));
    prev = hidden[i];
  }
  mlp.layers.push_back(
      make_linear(prev, out, rng, name + ".layer" + std::to_string(hidden.size())));
  return mlp;
}

/// Single tanh layer whose activation is the feature vector itself.
inline Mlp make_feature_net(Index in, Index feature_dim, const Rng& rng, const std::string& name) {
  Mlp mlp;
  mlp.tanh_on_output = true;
  mlp.layers.push_back(make_linear(in, feature_dim, rng, name + ".layer0"));
  return mlp;
}

}  // namespace dsvb
