#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gdvm/tensor.hpp"

namespace gdvm {

// Pure evaluation functions; all safe to call in parallel over seeds.

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Micro-F1 pools TP/FP/FN over all labels; macro-F1 is the unweighted mean of
// per-label F1. Zero-denominator F1 is defined as 0. Inputs are 0/1 multi-hot
// matrices of equal shape.
std::pair<double, double> micro_macro_f1(const Tensor& predicted, const Tensor& truth);

// Nearest prototype by Euclidean distance (ties resolve to the lowest class
// index); returns the fraction of rows whose assignment matches `truth`.
double zero_shot_top1(const Tensor& predicted_semantic, const Tensor& prototypes,
                      std::span<const int> truth);
// The per-row assignments themselves.
std::vector<int> nearest_prototype(const Tensor& predicted_semantic, const Tensor& prototypes);

// Mean silhouette coefficient of the embeddings under Euclidean distance, in
// [-1, 1]. Points in singleton classes score 0; so do degenerate points with
// zero distances everywhere.
double latent_separation(const Tensor& embeddings, std::span<const int> labels);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1)
  std::size_t n = 0;
};

Aggregate aggregate(std::span<const double> values);

}  // namespace gdvm
