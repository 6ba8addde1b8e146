#include "gdvm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gdvm {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw DataError("accuracy: prediction/truth size mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

}  // namespace

std::pair<double, double> micro_macro_f1(const Tensor& predicted, const Tensor& truth) {
  if (predicted.shape() != truth.shape() || predicted.rank() != 2) {
    throw DimensionError("micro_macro_f1: shapes " + shape_str(predicted.shape()) + " vs " +
                         shape_str(truth.shape()));
  }
  const std::size_t n = predicted.shape()[0];
  const std::size_t l = predicted.shape()[1];
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  for (std::size_t j = 0; j < l; ++j) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = predicted.data()[i * l + j] != 0.0;
      const bool t = truth.data()[i * l + j] != 0.0;
      if (p && t) ++tp;
      if (p && !t) ++fp;
      if (!p && t) ++fn;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    macro_sum += f1_from_counts(tp, fp, fn);
  }
  return {f1_from_counts(tp_all, fp_all, fn_all), macro_sum / static_cast<double>(l)};
}

std::vector<int> nearest_prototype(const Tensor& predicted_semantic, const Tensor& prototypes) {
  if (prototypes.empty()) throw ConfigError("nearest_prototype: empty prototype set");
  if (predicted_semantic.rank() != 2 || prototypes.rank() != 2 ||
      predicted_semantic.shape()[1] != prototypes.shape()[1]) {
    throw DimensionError("nearest_prototype: predictions " +
                         shape_str(predicted_semantic.shape()) + " vs prototypes " +
                         shape_str(prototypes.shape()));
  }
  const std::size_t n = predicted_semantic.shape()[0];
  const std::size_t a = predicted_semantic.shape()[1];
  const std::size_t c = prototypes.shape()[0];
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = predicted_semantic.data() + i * a;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < c; ++p) {
      const double* proto = prototypes.data() + p * a;
      double d = 0.0;
      for (std::size_t j = 0; j < a; ++j) {
        const double diff = row[j] - proto[j];
        d += diff * diff;
      }
      if (d < best_d) {  // strict: ties keep the lowest class index
        best_d = d;
        best = static_cast<int>(p);
      }
    }
    out.push_back(best);
  }
  return out;
}

double zero_shot_top1(const Tensor& predicted_semantic, const Tensor& prototypes,
                      std::span<const int> truth) {
  const auto assigned = nearest_prototype(predicted_semantic, prototypes);
  return accuracy(assigned, truth);
}

double latent_separation(const Tensor& embeddings, std::span<const int> labels) {
  if (embeddings.rank() != 2 || embeddings.shape()[0] != labels.size()) {
    throw DimensionError("latent_separation: embeddings " + shape_str(embeddings.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = labels.size();
  const std::size_t d = embeddings.shape()[1];
  const int max_label = *std::max_element(labels.begin(), labels.end());
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  std::vector<std::size_t> class_count(n_classes, 0);
  for (int c : labels) {
    if (c < 0) throw DataError("latent_separation: negative class label");
    ++class_count[static_cast<std::size_t>(c)];
  }
  std::size_t present = 0;
  for (std::size_t c : class_count) present += c > 0 ? 1 : 0;
  if (present < 2) throw DataError("latent_separation: needs at least 2 classes");

  double total = 0.0;
  std::vector<double> sums(n_classes);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    const double* xi = embeddings.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* xj = embeddings.data() + j * d;
      double dist2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xi[k] - xj[k];
        dist2 += diff * diff;
      }
      sums[static_cast<std::size_t>(labels[j])] += std::sqrt(dist2);
    }
    const std::size_t own = static_cast<std::size_t>(labels[i]);
    if (class_count[own] <= 1) continue;  // singleton convention: contributes 0
    const double a = sums[own] / static_cast<double>(class_count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (c == own || class_count[c] == 0) continue;
      b = std::min(b, sums[c] / static_cast<double>(class_count[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate agg;
  agg.n = values.size();
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return agg;
}

}  // namespace gdvm
