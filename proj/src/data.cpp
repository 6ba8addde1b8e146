#include "gdvm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "gdvm/rng.hpp"

namespace gdvm {

namespace {

constexpr double kBlobRadius = 3.0;

void normalize_rows_inplace(Tensor& t) {
  const std::size_t m = t.shape()[0];
  const std::size_t n = t.shape()[1];
  double* xs = t.data();
  for (std::size_t i = 0; i < m; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) n2 += xs[i * n + j] * xs[i * n + j];
    const double r = 1.0 / (std::sqrt(n2) + 1e-12);
    for (std::size_t j = 0; j < n; ++j) xs[i * n + j] *= r;
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Largest-remainder apportionment of `total` over per-class counts.
std::vector<std::size_t> proportional_counts(const std::vector<std::size_t>& class_sizes,
                                             std::size_t total) {
  const double all = static_cast<double>(
      std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0}));
  std::vector<std::size_t> take(class_sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(class_sizes[c]) / all;
    take[c] = static_cast<std::size_t>(exact);
    take[c] = std::min(take[c], class_sizes[c]);
    assigned += take[c];
    remainders.emplace_back(exact - static_cast<double>(take[c]), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [frac, c] : remainders) {
    if (assigned >= total) break;
    if (take[c] < class_sizes[c]) {
      ++take[c];
      ++assigned;
    }
  }
  return take;
}

}  // namespace

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  Dataset out;
  out.task = task;
  out.seen_prototypes = seen_prototypes;
  out.unseen_prototypes = unseen_prototypes;
  out.sample_shape = sample_shape;
  out.provenance = provenance;
  if (indices.empty()) return out;

  const std::size_t d = feature_dim();
  out.features = Tensor({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = features.data() + indices[i] * d;
    std::copy(src, src + d, out.features.data() + i * d);
  }
  if (!labels.empty()) {
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels[i]);
  }
  if (!multihot.empty()) {
    const std::size_t l = multihot.shape()[1];
    out.multihot = Tensor({indices.size(), l});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double* src = multihot.data() + indices[i] * l;
      std::copy(src, src + l, out.multihot.data() + i * l);
    }
  }
  if (!semantic.empty()) {
    const std::size_t a = semantic.shape()[1];
    out.semantic = Tensor({indices.size(), a});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double* src = semantic.data() + indices[i] * a;
      std::copy(src, src + a, out.semantic.data() + i * a);
    }
  }
  return out;
}

Dataset gen_blobs(std::uint64_t seed, std::size_t n_classes, std::size_t n_per_class,
                  std::size_t dim, double spread) {
  if (n_classes < 2) throw ConfigError("gen_blobs: n_classes must be >= 2");
  if (n_per_class < 1) throw ConfigError("gen_blobs: n_per_class must be >= 1");
  if (!(spread >= 0.0)) throw ConfigError("gen_blobs: spread must be non-negative");

  auto mean_rng = seeded_stream(seed, "blobs.means");
  Tensor means({n_classes, dim});
  fill_normal(mean_rng, means.values());
  normalize_rows_inplace(means);
  for (double& v : means.values()) v *= kBlobRadius;

  const std::size_t n = n_classes * n_per_class;
  Dataset ds;
  ds.task = {TaskFamily::kMultiClass, n_classes};
  ds.features = Tensor({n, dim});
  ds.labels.reserve(n);
  ds.sample_shape = {dim};
  ds.provenance = "blobs(seed=" + std::to_string(seed) + ")";

  auto point_rng = seeded_stream(seed, "blobs.points");
  std::normal_distribution<double> noise(0.0, 1.0);
  double* xs = ds.features.data();
  std::size_t row = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double* mean = means.data() + c * dim;
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        xs[row * dim + j] = mean[j] + spread * noise(point_rng);
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

Dataset gen_multilabel(std::uint64_t seed, std::size_t n_labels, std::size_t n_samples,
                       std::size_t dim, double overlap, double positive_rate) {
  if (n_labels < 2) throw ConfigError("gen_multilabel: n_labels must be >= 2");
  if (n_labels > dim) throw ConfigError("gen_multilabel: n_labels must not exceed dim");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw ConfigError("gen_multilabel: positive_rate must be in (0,1)");
  }

  auto dir_rng = seeded_stream(seed, "multilabel.directions");
  // Orthonormal base via Gram-Schmidt, then optionally tilted toward a shared
  // direction to correlate the labels.
  std::vector<std::vector<double>> dirs(n_labels, std::vector<double>(dim));
  for (auto& d : dirs) fill_normal(dir_rng, d);
  for (std::size_t l = 0; l < n_labels; ++l) {
    for (std::size_t p = 0; p < l; ++p) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += dirs[l][j] * dirs[p][j];
      for (std::size_t j = 0; j < dim; ++j) dirs[l][j] -= dot * dirs[p][j];
    }
    double n2 = 0.0;
    for (double v : dirs[l]) n2 += v * v;
    if (n2 < 1e-20) throw ConfigError("gen_multilabel: degenerate label directions");
    const double r = 1.0 / std::sqrt(n2);
    for (double& v : dirs[l]) v *= r;
  }
  if (overlap != 0.0) {
    std::vector<double> shared(dim);
    fill_normal(dir_rng, shared);
    double n2 = 0.0;
    for (double v : shared) n2 += v * v;
    const double r = 1.0 / std::sqrt(n2);
    for (double& v : shared) v *= r;
    for (auto& d : dirs) {
      for (std::size_t j = 0; j < dim; ++j) d[j] += overlap * shared[j];
      double m2 = 0.0;
      for (double v : d) m2 += v * v;
      const double s = 1.0 / std::sqrt(m2);
      for (double& v : d) v *= s;
    }
  }

  const double threshold = normal_quantile(1.0 - positive_rate);
  Dataset ds;
  ds.task = {TaskFamily::kMultiLabel, n_labels};
  ds.features = Tensor({n_samples, dim});
  ds.multihot = Tensor({n_samples, n_labels});
  ds.sample_shape = {dim};
  ds.provenance = "multilabel(seed=" + std::to_string(seed) + ")";

  auto point_rng = seeded_stream(seed, "multilabel.points");
  fill_normal(point_rng, ds.features.values());
  const double* xs = ds.features.data();
  double* ys = ds.multihot.data();
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::size_t l = 0; l < n_labels; ++l) {
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j) proj += xs[i * dim + j] * dirs[l][j];
      ys[i * n_labels + l] = proj > threshold ? 1.0 : 0.0;
    }
  }
  return ds;
}

ZeroShotData gen_zeroshot(std::uint64_t seed, std::size_t n_seen, std::size_t n_unseen,
                          std::size_t attr_dim, std::size_t n_per_class, double noise,
                          std::size_t feature_dim) {
  if (n_seen < 2 || n_unseen < 2) {
    throw ConfigError("gen_zeroshot: need at least 2 seen and 2 unseen classes");
  }
  if (feature_dim == 0) feature_dim = 2 * attr_dim;

  auto proto_rng = seeded_stream(seed, "zeroshot.prototypes");
  const std::size_t total = n_seen + n_unseen;
  Tensor protos({total, attr_dim});
  std::normal_distribution<double> g(0.0, 1.0);
  // Resample prototypes that land too close to an earlier one so nearest-
  // prototype classification stays well posed for every seed.
  constexpr double kMaxCos = 0.6;
  for (std::size_t c = 0; c < total; ++c) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < attr_dim; ++j) {
        protos.data()[c * attr_dim + j] = g(proto_rng);
        n2 += protos.data()[c * attr_dim + j] * protos.data()[c * attr_dim + j];
      }
      const double r = 1.0 / (std::sqrt(n2) + 1e-12);
      for (std::size_t j = 0; j < attr_dim; ++j) protos.data()[c * attr_dim + j] *= r;
      bool ok = true;
      for (std::size_t p = 0; p < c && ok; ++p) {
        double cos = 0.0;
        for (std::size_t j = 0; j < attr_dim; ++j) {
          cos += protos.data()[c * attr_dim + j] * protos.data()[p * attr_dim + j];
        }
        ok = cos <= kMaxCos;
      }
      if (ok) break;
    }
  }

  Tensor seen({n_seen, attr_dim});
  Tensor unseen({n_unseen, attr_dim});
  std::copy(protos.data(), protos.data() + n_seen * attr_dim, seen.data());
  std::copy(protos.data() + n_seen * attr_dim, protos.data() + total * attr_dim, unseen.data());

  auto map_rng = seeded_stream(seed, "zeroshot.map");
  Tensor lift({feature_dim, attr_dim});
  fill_normal(map_rng, lift.values(), 0.0, 1.0 / std::sqrt(static_cast<double>(attr_dim)));

  auto sample_rng = seeded_stream(seed, "zeroshot.samples");
  auto make_side = [&](const Tensor& side_protos, std::size_t n_cls,
                       const char* which) -> Dataset {
    Dataset ds;
    ds.task = {TaskFamily::kZeroShot, attr_dim};
    ds.seen_prototypes = seen;
    ds.unseen_prototypes = unseen;
    ds.sample_shape = {feature_dim};
    ds.provenance = std::string("zeroshot.") + which + "(seed=" + std::to_string(seed) + ")";
    const std::size_t n = n_cls * n_per_class;
    ds.features = Tensor({n, feature_dim});
    ds.semantic = Tensor({n, attr_dim});
    ds.labels.reserve(n);
    std::vector<double> attr(attr_dim);
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_cls; ++c) {
      const double* proto = side_protos.data() + c * attr_dim;
      for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
        for (std::size_t j = 0; j < attr_dim; ++j) attr[j] = proto[j] + noise * g(sample_rng);
        for (std::size_t f = 0; f < feature_dim; ++f) {
          double acc = 0.0;
          for (std::size_t j = 0; j < attr_dim; ++j) {
            acc += lift.data()[f * attr_dim + j] * attr[j];
          }
          ds.features.data()[row * feature_dim + f] = acc;
        }
        std::copy(proto, proto + attr_dim, ds.semantic.data() + row * attr_dim);
        ds.labels.push_back(static_cast<int>(c));
      }
    }
    return ds;
  };

  ZeroShotData out;
  out.train = make_side(seen, n_seen, "train");
  out.test = make_side(unseen, n_unseen, "test");
  return out;
}

Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed, bool stratified) {
  if (n > data.size()) {
    throw ConfigError("subsample: requested " + std::to_string(n) + " of " +
                      std::to_string(data.size()) + " samples");
  }
  auto rng = seeded_stream(seed, "subsample");
  if (!stratified || data.labels.empty()) {
    auto idx = shuffled_indices(data.size(), rng);
    idx.resize(n);
    return data.gather(idx);
  }
  // Group rows by class, apportion counts, then sample within each class.
  const int max_label = *std::max_element(data.labels.begin(), data.labels.end());
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  std::vector<std::size_t> sizes;
  sizes.reserve(by_class.size());
  for (const auto& rows : by_class) sizes.push_back(rows.size());
  const auto take = proportional_counts(sizes, n);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto rows = by_class[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(take[c]);
    picked.insert(picked.end(), rows.begin(), rows.end());
  }
  std::shuffle(picked.begin(), picked.end(), rng);
  return data.gather(picked);
}

Split split(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
    throw ConfigError("split: validation_fraction must be in (0,1)");
  }
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("split: test_fraction must be in [0,1)");
  }
  const std::size_t n = data.size();
  auto rng = seeded_stream(spec.seed, "split");

  std::vector<std::size_t> order;
  if (spec.stratified && !data.labels.empty()) {
    const int max_label = *std::max_element(data.labels.begin(), data.labels.end());
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    // Interleave shuffled classes so any prefix keeps the class mix.
    for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<std::size_t> cursor(by_class.size(), 0);
    order.reserve(n);
    bool more = true;
    while (more) {
      more = false;
      for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (cursor[c] < by_class[c].size()) {
          order.push_back(by_class[c][cursor[c]++]);
          more = true;
        }
      }
    }
  } else {
    order = shuffled_indices(n, rng);
  }

  const std::size_t n_test = static_cast<std::size_t>(
      std::llround(spec.test_fraction * static_cast<double>(n)));
  const std::size_t pool = n - n_test;
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(spec.validation_fraction * static_cast<double>(pool)));

  std::span<const std::size_t> all(order);
  Split out;
  out.test = data.gather(all.subspan(0, n_test));
  out.validation = data.gather(all.subspan(n_test, n_val));
  out.train = data.gather(all.subspan(n_test + n_val));
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.task.family != b.task.family || a.feature_dim() != b.feature_dim()) {
    throw DataError("concat: incompatible datasets");
  }
  Dataset out;
  out.task = a.task;
  out.seen_prototypes = a.seen_prototypes;
  out.unseen_prototypes = a.unseen_prototypes;
  out.sample_shape = a.sample_shape;
  out.provenance = a.provenance;
  const std::size_t n = a.size() + b.size();
  const std::size_t d = a.feature_dim();
  out.features = Tensor({n, d});
  std::copy(a.features.data(), a.features.data() + a.size() * d, out.features.data());
  std::copy(b.features.data(), b.features.data() + b.size() * d,
            out.features.data() + a.size() * d);
  if (!a.labels.empty()) {
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  auto cat_rows = [&](const Tensor& ta, const Tensor& tb) {
    if (ta.empty()) return Tensor();
    const std::size_t w = ta.shape()[1];
    Tensor t({n, w});
    std::copy(ta.data(), ta.data() + ta.size(), t.data());
    std::copy(tb.data(), tb.data() + tb.size(), t.data() + ta.size());
    return t;
  };
  out.multihot = cat_rows(a.multihot, b.multihot);
  out.semantic = cat_rows(a.semantic, b.semantic);
  return out;
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("export_csv: cannot open " + path.string());
  os.precision(17);
  const std::size_t d = data.feature_dim();
  for (std::size_t j = 0; j < d; ++j) os << "f" << j << ",";
  if (!data.multihot.empty()) {
    for (std::size_t l = 0; l < data.multihot.shape()[1]; ++l) {
      os << "y" << l << (l + 1 < data.multihot.shape()[1] ? "," : "\n");
    }
  } else if (!data.semantic.empty()) {
    for (std::size_t a = 0; a < data.semantic.shape()[1]; ++a) os << "a" << a << ",";
    os << "label\n";
  } else {
    os << "label\n";
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) os << data.features.data()[i * d + j] << ",";
    if (!data.multihot.empty()) {
      const std::size_t l_count = data.multihot.shape()[1];
      for (std::size_t l = 0; l < l_count; ++l) {
        os << static_cast<int>(data.multihot.data()[i * l_count + l])
           << (l + 1 < l_count ? "," : "\n");
      }
    } else if (!data.semantic.empty()) {
      const std::size_t a_count = data.semantic.shape()[1];
      for (std::size_t a = 0; a < a_count; ++a) os << data.semantic.data()[i * a_count + a] << ",";
      os << data.labels[i] << "\n";
    } else {
      os << data.labels[i] << "\n";
    }
  }
}

}  // namespace gdvm
