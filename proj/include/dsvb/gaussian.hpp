#pragma once

#include <numbers>

#include "dsvb/ops.hpp"
#include "dsvb/tensor.hpp"

namespace dsvb {

/// Diagonal Gaussian, one (mean, standard deviation) pair per dimension.
/// Batched as [rows x dim].
struct GaussianParams {
  Tensor mean;
  Tensor std;

  Index dim() const { return mean.cols(); }
  Index rows() const { return mean.rows(); }
};

/// Splits a raw [B x 2d] head into mean (left half) and a softplus-mapped
/// standard deviation (right half), so the std is strictly positive.
inline GaussianParams gaussian_head(const Tensor& raw) {
  if (raw.rank() != 2 || raw.cols() % 2 != 0)
    throw ShapeMismatch("gaussian_head expects [B x 2d], got " + shape_str(raw.shape()));
  const Index d = raw.cols() / 2;
  GaussianParams g;
  g.mean = slice_cols(raw, 0, d);
  g.std = softplus(slice_cols(raw, d, d));
  return g;
}

/// x = mean + noise . std. Gradients flow to mean and std; the noise tensor
/// is a data leaf.
inline Tensor reparameterize(const GaussianParams& g, const Tensor& noise) {
  if (noise.shape() != g.mean.shape())
    throw ShapeMismatch("reparameterize noise " + shape_str(noise.shape()) + " vs params " +
                        shape_str(g.mean.shape()));
  return add(g.mean, mul(noise, g.std));
}

namespace detail {
inline void check_positive_std(const GaussianParams& g, const char* who) {
  if ((g.std.values() <= 0.0).any())
    throw DomainError(std::string(who) + ": non-positive standard deviation");
}
}  // namespace detail

/// KL(q || p) between diagonal Gaussians, summed over every entry:
///   1/2 [ log(sp^2/sq^2) + sq^2/sp^2 + (mq - mp)^2/sp^2 - 1 ]  per dim.
/// Zero exactly when q == p elementwise.
inline Tensor gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.shape() != p.mean.shape())
    throw ShapeMismatch("gaussian_kl: " + shape_str(q.mean.shape()) + " vs " +
                        shape_str(p.mean.shape()));
  detail::check_positive_std(q, "gaussian_kl q");
  detail::check_positive_std(p, "gaussian_kl p");
  Tensor vq = square(q.std);
  Tensor vp = square(p.std);
  Tensor log_ratio = log(div(vp, vq));
  Tensor var_ratio = div(vq, vp);
  Tensor quad = div(square(sub(q.mean, p.mean)), vp);
  return scale(sum(add_scalar(add(add(log_ratio, var_ratio), quad), -1.0)), 0.5);
}

/// Negative log-density of y under the diagonal Gaussian, summed over every
/// entry: 1/2 [ log(2 pi s^2) + (y - m)^2 / s^2 ] per dim.
inline Tensor gaussian_nll(const Tensor& y, const GaussianParams& g) {
  if (y.shape() != g.mean.shape())
    throw ShapeMismatch("gaussian_nll: y " + shape_str(y.shape()) + " vs params " +
                        shape_str(g.mean.shape()));
  detail::check_positive_std(g, "gaussian_nll");
  Tensor v = square(g.std);
  Tensor quad = div(square(sub(y, g.mean)), v);
  return scale(sum(add(log(scale(v, 2.0 * std::numbers::pi)), quad)), 0.5);
}

}  // namespace dsvb
