#include "gdvm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gdvm {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: h must be positive");
  Tensor probe = x.clone();
  Tensor grad(x.shape());
  auto vals = probe.values();
  auto out = grad.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double v = vals[i];
    vals[i] = v + h;
    const double hi = f(probe);
    vals[i] = v - h;
    const double lo = f(probe);
    vals[i] = v;
    out[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(std::span<const double> got, std::span<const double> want,
                     double floor) {
  if (got.size() != want.size()) {
    throw ContractError("max_rel_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max({std::abs(got[i]), std::abs(want[i]), floor});
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

}  // namespace gdvm
