#include "gdvm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gdvm/ops.hpp"

namespace gdvm {

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy_loss: logits must be rank 2, got " +
                         shape_str(logits.shape()));
  }
  const std::size_t m = logits.shape()[0];
  const std::size_t c = logits.shape()[1];
  if (labels.size() != m) {
    throw DataError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("cross_entropy_loss: label " + std::to_string(labels[i]) +
                      " out of range [0," + std::to_string(c) + ") at row " + std::to_string(i));
    }
  }

  const double* xs = logits.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xs + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    acc += mx + std::log(z) - row[static_cast<std::size_t>(labels[i])];
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(m));

  if (Tape* tape = logits.tape()) {
    const int id = tape->record(out, {logits.node()}, nullptr);
    std::vector<int> labels_copy(labels.begin(), labels.end());
    tape->set_pull(id, [logits = logits, out = out, m, c, labels_copy = std::move(labels_copy)]() mutable {
      // d logits = (softmax - onehot) / m, scaled by the incoming gradient.
      const double g = out.grad()[0] / static_cast<double>(m);
      auto dx = logits.grad();
      const double* xs = logits.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = xs + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - mx) / z;
          const double onehot = (static_cast<std::size_t>(labels_copy[i]) == j) ? 1.0 : 0.0;
          dx[i * c + j] += g * (p - onehot);
        }
      }
    });
  }
  return out;
}

Tensor binary_cross_entropy_loss(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape() || probs.rank() != 2) {
    throw DimensionError("binary_cross_entropy_loss: shapes " + shape_str(probs.shape()) +
                         " vs " + shape_str(targets.shape()));
  }
  constexpr double kLo = 1e-7;
  constexpr double kHi = 1.0 - 1e-7;
  const auto ts = targets.values();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] != 0.0 && ts[i] != 1.0) {
      throw DataError("binary_cross_entropy_loss: target " + std::to_string(ts[i]) +
                      " at flat index " + std::to_string(i) + " is not in {0,1}");
    }
  }
  const std::size_t n = probs.size();
  const double* ps = probs.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(ps[i], kLo, kHi);
    acc -= ts[i] * std::log(p) + (1.0 - ts[i]) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));

  if (Tape* tape = probs.tape()) {
    const int id = tape->record(out, {probs.node()}, nullptr);
    tape->set_pull(id, [probs = probs, targets = targets, out = out, n]() mutable {
      const double g = out.grad()[0] / static_cast<double>(n);
      auto dp = probs.grad();
      const double* ps = probs.data();
      const auto ts = targets.values();
      for (std::size_t i = 0; i < n; ++i) {
        if (ps[i] < kLo || ps[i] > kHi) continue;  // clamped: flat region
        dp[i] += g * (-(ts[i] / ps[i]) + (1.0 - ts[i]) / (1.0 - ps[i]));
      }
    });
  }
  return out;
}

Tensor l2_semantic_loss(const Tensor& pred, const Tensor& targets) {
  if (pred.shape() != targets.shape() || pred.rank() != 2) {
    throw DimensionError("l2_semantic_loss: shapes " + shape_str(pred.shape()) + " vs " +
                         shape_str(targets.shape()));
  }
  const double inv_batch = 1.0 / static_cast<double>(pred.shape()[0]);
  Tensor diff = sub(pred, targets);
  return scale(sum(mul(diff, diff)), inv_batch);
}

}  // namespace gdvm
