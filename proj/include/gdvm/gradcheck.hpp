#pragma once

#include <functional>
#include <span>

#include "gdvm/tensor.hpp"

namespace gdvm {

// Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h per
// coordinate, in double precision. f must be deterministic for fixed inputs
// (freeze any RNG before calling). Independent of the tape machinery.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h);

// Elementwise max-norm relative error with denominators floored.
double max_rel_error(std::span<const double> got, std::span<const double> want,
                     double floor = 1e-8);

}  // namespace gdvm
