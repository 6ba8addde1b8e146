#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gdvm/data.hpp"
#include "gdvm/idx.hpp"
#include "gdvm/metrics.hpp"
#include "gdvm/rng.hpp"

using namespace gdvm;
namespace fs = std::filesystem;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Plain Gaussian elimination with partial pivoting; solves A x = b in place.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace

TEST_CASE("gen_blobs") {
  SUBCASE("zero spread collapses every point onto its class mean") {
    const Dataset ds = gen_blobs(3, 3, 10, 4, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t base = c * 10;
      for (std::size_t i = 1; i < 10; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          CHECK(ds.features.at({base + i, j}) == ds.features.at({base, j}));
        }
      }
    }
  }
  SUBCASE("deterministic and counted") {
    const Dataset a = gen_blobs(9, 2, 100, 2, 1.0);
    const Dataset b = gen_blobs(9, 2, 100, 2, 1.0);
    CHECK(a.size() == 200);
    CHECK(same_values(a.features, b.features));
    std::size_t c0 = 0, c1 = 0;
    for (int l : a.labels) (l == 0 ? c0 : c1)++;
    CHECK(c0 == 100);
    CHECK(c1 == 100);
  }
}

TEST_CASE("gen_multilabel") {
  SUBCASE("orthogonal directions give near-independent labels") {
    const Dataset ds = gen_multilabel(5, 4, 10000, 16, 0.0, 0.3);
    const std::size_t n = ds.size();
    for (std::size_t l1 = 0; l1 < 4; ++l1) {
      for (std::size_t l2 = l1 + 1; l2 < 4; ++l2) {
        double m1 = 0, m2 = 0, m12 = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double a = ds.multihot.at({i, l1});
          const double b = ds.multihot.at({i, l2});
          m1 += a;
          m2 += b;
          m12 += a * b;
        }
        m1 /= n;
        m2 /= n;
        m12 /= n;
        const double corr = (m12 - m1 * m2) /
                            std::sqrt(m1 * (1 - m1) * m2 * (1 - m2));
        CHECK(std::abs(corr) < 0.05);
      }
    }
  }
  SUBCASE("empty label sets are permitted") {
    const Dataset ds = gen_multilabel(6, 3, 2000, 8, 0.0, 0.1);
    std::size_t empty = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      double row = 0;
      for (std::size_t l = 0; l < 3; ++l) row += ds.multihot.at({i, l});
      if (row == 0) ++empty;
    }
    CHECK(empty > 0);  // (1-0.1)^3 of rows in expectation
  }
  SUBCASE("deterministic") {
    const Dataset a = gen_multilabel(7, 3, 100, 8, 0.4);
    const Dataset b = gen_multilabel(7, 3, 100, 8, 0.4);
    CHECK(same_values(a.multihot, b.multihot));
  }
}

TEST_CASE("gen_zeroshot") {
  SUBCASE("train and test classes are disjoint by construction") {
    const ZeroShotData zs = gen_zeroshot(11, 4, 3, 6, 5, 0.1);
    CHECK(zs.train.size() == 20);
    CHECK(zs.test.size() == 15);
    // Prototype matrices are shared and their rows differ between the sides.
    CHECK(same_values(zs.train.seen_prototypes, zs.test.seen_prototypes));
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t u = 0; u < 3; ++u) {
        double diff = 0;
        for (std::size_t j = 0; j < 6; ++j) {
          diff += std::abs(zs.train.seen_prototypes.at({s, j}) -
                           zs.train.unseen_prototypes.at({u, j}));
        }
        CHECK(diff > 1e-6);
      }
    }
  }
  SUBCASE("same seed gives identical prototypes") {
    const ZeroShotData a = gen_zeroshot(13, 3, 2, 5, 4, 0.2);
    const ZeroShotData b = gen_zeroshot(13, 3, 2, 5, 4, 0.2);
    CHECK(same_values(a.train.seen_prototypes, b.train.seen_prototypes));
    CHECK(same_values(a.train.unseen_prototypes, b.train.unseen_prototypes));
  }
  SUBCASE("noise = 0: inverting the linear map recovers top-1 = 1") {
    const std::size_t attr = 4, feat = 8;
    const ZeroShotData zs = gen_zeroshot(17, 5, 3, attr, 6, 0.0, feat);
    // Least-squares W with F W ~= A on the training side.
    const std::size_t n = zs.train.size();
    std::vector<std::vector<double>> ftf(feat, std::vector<double>(feat, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < feat; ++r) {
        for (std::size_t c = 0; c < feat; ++c) {
          ftf[r][c] += zs.train.features.at({i, r}) * zs.train.features.at({i, c});
        }
      }
    }
    for (std::size_t r = 0; r < feat; ++r) ftf[r][r] += 1e-9;  // ridge for duplicates
    Tensor w({feat, attr});
    for (std::size_t a_col = 0; a_col < attr; ++a_col) {
      std::vector<double> rhs(feat, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < feat; ++r) {
          rhs[r] += zs.train.features.at({i, r}) * zs.train.semantic.at({i, a_col});
        }
      }
      const auto col = solve_linear(ftf, rhs);
      for (std::size_t r = 0; r < feat; ++r) w.at({r, a_col}) = col[r];
    }
    // Apply to the unseen test side and classify by nearest prototype.
    Tensor pred({zs.test.size(), attr});
    for (std::size_t i = 0; i < zs.test.size(); ++i) {
      for (std::size_t a_col = 0; a_col < attr; ++a_col) {
        double acc = 0;
        for (std::size_t r = 0; r < feat; ++r) {
          acc += zs.test.features.at({i, r}) * w.at({r, a_col});
        }
        pred.at({i, a_col}) = acc;
      }
    }
    CHECK(zero_shot_top1(pred, zs.test.unseen_prototypes, zs.test.labels) ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("idx round trip and error paths") {
  const fs::path dir = fs::temp_directory_path() / "gdvm_idx_test";
  fs::create_directories(dir);

  std::vector<std::uint8_t> pixels(4 * 3 * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
  }
  const std::vector<std::uint8_t> labels{0, 1, 2, 1};
  write_idx_images(dir / "img", pixels, 4, 3, 3);
  write_idx_labels(dir / "lbl", labels);

  SUBCASE("round trip is exact") {
    const Dataset ds = load_idx(dir / "img", dir / "lbl");
    CHECK(ds.size() == 4);
    CHECK(ds.sample_shape == Shape{1, 3, 3});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      CHECK(ds.features[i] == doctest::Approx(pixels[i] / 255.0).epsilon(1e-15));
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(ds.labels[i] == static_cast<int>(labels[i]));

    // Writing back the loaded data reproduces the original bytes.
    std::vector<std::uint8_t> back(pixels.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      back[i] = static_cast<std::uint8_t>(std::lround(ds.features[i] * 255.0));
    }
    CHECK(back == pixels);
  }

  SUBCASE("bad magic is reported with the observed value") {
    std::ofstream os(dir / "bad", std::ios::binary);
    const char junk[] = {0, 0, 9, 9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    os.write(junk, sizeof(junk));
    os.close();
    try {
      load_idx(dir / "bad", dir / "lbl");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("0x909") != std::string::npos);
    }
  }

  SUBCASE("truncated payload names expected and actual sizes") {
    std::ofstream os(dir / "trunc", std::ios::binary);
    std::ifstream is(dir / "img", std::ios::binary);
    std::vector<char> head(16 + 10);
    is.read(head.data(), static_cast<std::streamsize>(head.size()));
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    os.close();
    try {
      load_idx(dir / "trunc", dir / "lbl");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected 36") != std::string::npos);
      CHECK(msg.find("got 10") != std::string::npos);
    }
  }

  SUBCASE("image/label count mismatch") {
    write_idx_labels(dir / "short", {0, 1});
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "short"), DataError);
  }
}

TEST_CASE("subsample") {
  const Dataset ds = gen_blobs(2, 10, 100, 3, 1.0);
  SUBCASE("n = N returns every row (order fixed by seed)") {
    const Dataset s = subsample(ds, 1000, 4, false);
    CHECK(s.size() == 1000);
    std::set<double> firsts;
    for (std::size_t i = 0; i < s.size(); ++i) firsts.insert(s.features.at({i, 0}));
    CHECK(firsts.size() == 1000);  // no replacement
  }
  SUBCASE("stratified 500 over 10 balanced classes gives exactly 50 each") {
    const Dataset s = subsample(ds, 500, 4, true);
    std::vector<int> counts(10, 0);
    for (int l : s.labels) counts[static_cast<std::size_t>(l)]++;
    for (int c : counts) CHECK(c == 50);
  }
  SUBCASE("deterministic") {
    const Dataset a = subsample(ds, 137, 8, true);
    const Dataset b = subsample(ds, 137, 8, true);
    CHECK(same_values(a.features, b.features));
  }
  SUBCASE("oversized requests are rejected") {
    CHECK_THROWS_AS(subsample(ds, 1001, 4, false), ConfigError);
  }
}

TEST_CASE("split") {
  const Dataset ds = gen_blobs(6, 4, 250, 3, 1.0);
  SUBCASE("default spec carves 20% validation") {
    SplitSpec spec;
    spec.seed = 3;
    const Split s = split(ds, spec);
    CHECK(s.train.size() == 800);
    CHECK(s.validation.size() == 200);
    CHECK(s.test.size() == 0);
  }
  SUBCASE("partitions are disjoint and exhaustive") {
    SplitSpec spec;
    spec.test_fraction = 0.25;
    spec.seed = 5;
    const Split s = split(ds, spec);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == ds.size());
    // Feature rows as multisets must match the original exactly.
    auto key = [](const Dataset& d, std::size_t i) {
      return std::make_pair(d.features.at({i, 0}), d.features.at({i, 1}));
    };
    std::multiset<std::pair<double, double>> original, pieces;
    for (std::size_t i = 0; i < ds.size(); ++i) original.insert(key(ds, i));
    for (const Dataset* part : {&s.train, &s.validation, &s.test}) {
      for (std::size_t i = 0; i < part->size(); ++i) pieces.insert(key(*part, i));
    }
    CHECK(original == pieces);
  }
  SUBCASE("different seeds give different partitions") {
    SplitSpec a;
    a.seed = 1;
    SplitSpec b;
    b.seed = 2;
    const Split sa = split(ds, a);
    const Split sb = split(ds, b);
    CHECK_FALSE(same_values(sa.validation.features, sb.validation.features));
  }
  SUBCASE("bad fractions are rejected") {
    SplitSpec spec;
    spec.validation_fraction = 1.0;
    CHECK_THROWS_AS(split(ds, spec), ConfigError);
  }
}

TEST_CASE("concat stacks rows in order") {
  const Dataset a = gen_blobs(1, 2, 5, 3, 1.0);
  const Dataset b = gen_blobs(2, 2, 7, 3, 1.0);
  const Dataset ab = concat(a, b);
  CHECK(ab.size() == 24);
  CHECK(ab.features.at({0, 0}) == a.features.at({0, 0}));
  CHECK(ab.features.at({10, 0}) == b.features.at({0, 0}));
}

TEST_CASE("csv export writes one row per sample") {
  const fs::path path = fs::temp_directory_path() / "gdvm_csv_test.csv";
  const Dataset ds = gen_blobs(3, 2, 4, 2, 0.5);
  export_csv(ds, path);
  std::ifstream is(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 1 + ds.size());  // header + rows
}
