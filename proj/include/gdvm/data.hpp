#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdvm/task.hpp"
#include "gdvm/tensor.hpp"

namespace gdvm {

// A labelled feature set for one of the three task families. Features are
// stored flat as [N x d]; sample_shape records the per-sample geometry (e.g.
// {1,28,28}) so convolutional models can restore it.
struct Dataset {
  Tensor features;                 // [N x d]
  std::vector<int> labels;         // class ids (multi-class, zero-shot)
  Tensor multihot;                 // [N x L] multi-label targets
  Tensor semantic;                 // [N x A] zero-shot regression targets
  TaskSpec task;
  Tensor seen_prototypes;          // zero-shot only, [n_seen x A]
  Tensor unseen_prototypes;        // zero-shot only, [n_unseen x A]
  Shape sample_shape;              // per-sample feature shape
  std::string provenance;

  std::size_t size() const { return features.empty() ? 0 : features.shape()[0]; }
  std::size_t feature_dim() const { return features.empty() ? 0 : features.shape()[1]; }

  // Row-gather into a new dataset (order given by `indices`).
  Dataset gather(std::span<const std::size_t> indices) const;
};

// Gaussian blobs around class means placed at seeded random directions on the
// unit sphere scaled by a fixed radius; labels are exact.
Dataset gen_blobs(std::uint64_t seed, std::size_t n_classes, std::size_t n_per_class,
                  std::size_t dim, double spread);

// Each label owns a direction; a sample is positive for label l iff its
// projection onto direction l exceeds the quantile matching `positive_rate`.
// overlap = 0 gives exactly orthonormal directions (requires n_labels <= dim);
// larger values mix in a shared direction, correlating the labels.
Dataset gen_multilabel(std::uint64_t seed, std::size_t n_labels, std::size_t n_samples,
                       std::size_t dim, double overlap, double positive_rate = 0.25);

struct ZeroShotData {
  Dataset train;  // seen classes only
  Dataset test;   // unseen classes only
};

// Unit-norm class prototypes in attribute space; features are the prototype
// plus Gaussian noise pushed through a fixed seeded linear map into input
// space. feature_dim = 0 defaults to 2*attr_dim.
ZeroShotData gen_zeroshot(std::uint64_t seed, std::size_t n_seen, std::size_t n_unseen,
                          std::size_t attr_dim, std::size_t n_per_class, double noise,
                          std::size_t feature_dim = 0);

// Seeded sample of n rows without replacement; stratified mode preserves class
// proportions to within one sample per class.
Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed, bool stratified);

struct SplitSpec {
  double validation_fraction = 0.2;  // fraction of the training portion
  double test_fraction = 0.0;        // fraction of the whole set; 0 if test is external
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  Dataset train;
  Dataset validation;
  Dataset test;  // empty when test_fraction == 0
};

// Disjoint, exhaustive, seed-deterministic partition.
Split split(const Dataset& data, const SplitSpec& spec);

// Row-wise concatenation of two compatible datasets (same task and widths).
Dataset concat(const Dataset& a, const Dataset& b);

// One row per sample: feature values then target values.
void export_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace gdvm
