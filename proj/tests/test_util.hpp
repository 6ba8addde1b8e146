#pragma once

#include <functional>
#include <vector>

#include "gdvm/gradcheck.hpp"
#include "gdvm/rng.hpp"
#include "gdvm/tensor.hpp"

namespace gdvm::testutil {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  fill_uniform(rng, t.values(), lo, hi);
  return t;
}

// Max relative error between the tape gradient of forward(x) and the central
// finite-difference oracle. `forward` must be pure in x and return a scalar.
inline double gradcheck(const std::function<Tensor(Tensor&)>& forward, const Tensor& x0,
                        double h = 1e-5) {
  Tensor x = x0.clone();
  Tape tape;
  tape.watch(x);
  Tensor loss = forward(x);
  tape.backward(loss);
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const Tensor numeric = finite_diff_grad(
      [&](const Tensor& probe) {
        Tensor p = probe.clone();
        return forward(p).item();
      },
      x0, h);
  return max_rel_error(analytic, numeric.values());
}

}  // namespace gdvm::testutil
