#pragma once

#include <functional>

#include "dsvb/ops.hpp"
#include "dsvb/tensor.hpp"

namespace dsvb {

/// Central-finite-difference check of the reverse-mode gradient of a
/// scalar-valued function at `point`. Returns the maximum over coordinates of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). NaNs propagate to
/// the returned value, so a divergent function reads as a failed check.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double step) {
  Tensor x = point.clone(/*requires_grad=*/true);
  Tensor out = f(x);
  if (out.size() != 1) throw NonScalarOutput("grad_check requires a scalar-valued function");
  out.backward();
  const Array analytic = x.has_grad() ? x.grad() : Array(Array::Zero(x.size()));

  NoGradGuard no_grad;
  Tensor probe = point.detach();
  double worst = 0.0;
  for (Index i = 0; i < probe.size(); ++i) {
    const double saved = probe.values()(i);
    probe.values()(i) = saved + step;
    const double up = f(probe).item();
    probe.values()(i) = saved - step;
    const double down = f(probe).item();
    probe.values()(i) = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic(i) - numeric) / denom;
    if (!(rel <= worst)) worst = rel;  // keeps NaN
  }
  return worst;
}

}  // namespace dsvb
