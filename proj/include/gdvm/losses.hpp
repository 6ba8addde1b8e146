#pragma once

#include <span>

#include "gdvm/tensor.hpp"

namespace gdvm {

// Task losses. All three return a one-element tensor (batch mean) and are
// differentiable through the tape when their tensor inputs are attached.

// Mean over the batch of -log softmax(logits)[label], computed via the
// log-sum-exp stabilized form. Labels must lie in [0, C).
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

// Mean over batch and labels of -[t log p + (1-t) log(1-p)]; probabilities are
// clamped to [1e-7, 1-1e-7] first, targets must be exactly 0 or 1.
Tensor binary_cross_entropy_loss(const Tensor& probs, const Tensor& targets);

// Mean squared Euclidean distance between prediction rows and target rows.
// Callers are expected to feed unit-normalized predictions (the regression
// head ends in an L2 normalization layer).
Tensor l2_semantic_loss(const Tensor& pred, const Tensor& targets);

}  // namespace gdvm
