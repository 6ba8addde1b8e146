#include <doctest.h>

#include <cmath>

#include "gdvm/data.hpp"
#include "gdvm/losses.hpp"
#include "gdvm/metrics.hpp"
#include "gdvm/model.hpp"
#include "gdvm/ops.hpp"
#include "gdvm/rng.hpp"
#include "test_util.hpp"

using namespace gdvm;
using testutil::random_tensor;

namespace {

LayerSpec dense(std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.size_out = {out};
  return s;
}

LayerSpec relu_l() {
  LayerSpec s;
  s.kind = LayerKind::kRelu;
  return s;
}

LayerSpec softmax_l() {
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  return s;
}

// input 3 -> trunk 5 -> k=2 -> phi 4 -> 2 classes
ModelSpec tiny_spec(VariantSpec variant) {
  ModelSpec spec;
  spec.input_shape = {3};
  spec.latent_dim = 2;
  spec.trunk = {dense(5), relu_l()};
  spec.mu_head = {dense(2)};
  spec.logvar_head = {dense(2)};
  spec.classifier = {dense(4), relu_l(), dense(2), softmax_l()};
  spec.variant = variant;
  spec.task = {TaskFamily::kMultiClass, 2};
  return spec;
}

BatchTargets two_labels() {
  BatchTargets t;
  t.labels = {0, 1};
  return t;
}

}  // namespace

TEST_CASE("encode") {
  GdvmModel model = GdvmModel::build(tiny_spec(VariantSpec::gdvm(0.5)), 3);
  auto rng = seeded_stream(4, "enc");
  const Tensor x = random_tensor({2, 3}, rng);

  SUBCASE("zero-initialized heads produce mu = 0, logvar = 0") {
    for (auto& [name, p] : model.params()) {
      std::fill(p.values().begin(), p.values().end(), 0.0);
    }
    ForwardCtx ctx;
    const EncodeResult enc = model.encode(x, ctx);
    for (double v : enc.mu.values()) CHECK(v == 0.0);
    REQUIRE(enc.logvar.has_value());
    for (double v : enc.logvar->values()) CHECK(v == 0.0);
  }

  SUBCASE("identical inputs give identical outputs") {
    ForwardCtx ctx;
    const EncodeResult a = model.encode(x, ctx);
    const EncodeResult b = model.encode(x, ctx);
    for (std::size_t i = 0; i < a.mu.size(); ++i) CHECK(a.mu[i] == b.mu[i]);
  }

  SUBCASE("rows are independent (permutation equivariance)") {
    const Tensor swapped = Tensor::matrix({{x.at({1, 0}), x.at({1, 1}), x.at({1, 2})},
                                           {x.at({0, 0}), x.at({0, 1}), x.at({0, 2})}});
    ForwardCtx ctx;
    const EncodeResult a = model.encode(x, ctx);
    const EncodeResult b = model.encode(swapped, ctx);
    CHECK(a.mu.at({0, 0}) == b.mu.at({1, 0}));
    CHECK(a.mu.at({1, 1}) == b.mu.at({0, 1}));
  }

  SUBCASE("baseline variant has no logvar") {
    GdvmModel baseline = GdvmModel::build(tiny_spec(VariantSpec::baseline()), 3);
    ForwardCtx ctx;
    CHECK_FALSE(baseline.encode(x, ctx).logvar.has_value());
  }
}

TEST_CASE("reparameterize") {
  SUBCASE("eps = 0 gives z = mu") {
    const Tensor mu({1, 2}, {0.4, -1.2});
    const Tensor lv({1, 2}, {0.3, 0.9});
    const Tensor z = reparameterize(mu, lv, Tensor({1, 2}));
    CHECK(z[0] == doctest::Approx(0.4));
    CHECK(z[1] == doctest::Approx(-1.2));
  }

  SUBCASE("hand case sigma = (1, 2)") {
    const Tensor mu({1, 2}, {1, 2});
    const Tensor lv({1, 2}, {0.0, std::log(4.0)});
    const Tensor eps({1, 2}, {1, -1});
    const Tensor z = reparameterize(mu, lv, eps);
    CHECK(z[0] == doctest::Approx(2.0));
    CHECK(z[1] == doctest::Approx(0.0));
  }

  SUBCASE("sample moments over 1e6 draws match (mu, exp(logvar)) within 1%") {
    const double mu_v = 0.8, lv_v = std::log(1.7);
    auto rng = seeded_stream(21, "moments");
    const std::size_t n = 1000000;
    Tensor eps({n, 1});
    fill_normal(rng, eps.values());
    const Tensor z = reparameterize(Tensor::full({n, 1}, mu_v), Tensor::full({n, 1}, lv_v), eps);
    double mean_z = 0;
    for (double v : z.values()) mean_z += v;
    mean_z /= static_cast<double>(n);
    double var_z = 0;
    for (double v : z.values()) var_z += (v - mean_z) * (v - mean_z);
    var_z /= static_cast<double>(n - 1);
    CHECK(std::abs(mean_z - mu_v) / mu_v < 0.01);
    CHECK(std::abs(var_z - 1.7) / 1.7 < 0.01);
  }

  SUBCASE("gradients: dz/dmu = I, dz/dlogvar = eps*sigma/2") {
    auto rng = seeded_stream(31, "repgrad");
    const Tensor mu0 = random_tensor({1, 3}, rng);
    const Tensor lv0 = random_tensor({1, 3}, rng);
    Tensor eps = random_tensor({1, 3}, rng);

    const double mu_err = testutil::gradcheck(
        [&](Tensor& m) { return sum(reparameterize(m, lv0, eps)); }, mu0);
    CHECK(mu_err < 1e-4);
    const double lv_err = testutil::gradcheck(
        [&](Tensor& lv) { return sum(reparameterize(mu0, lv, eps)); }, lv0);
    CHECK(lv_err < 1e-4);

    Tensor lv = lv0.clone();
    Tape tape;
    tape.watch(lv);
    Tensor z = reparameterize(mu0, lv, eps);
    tape.backward(sum(z));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(lv.grad()[i] ==
            doctest::Approx(0.5 * eps[i] * std::exp(lv0[i] / 2.0)).epsilon(1e-10));
    }
  }
}

TEST_CASE("kl closed form") {
  SUBCASE("prior match gives exactly zero") {
    CHECK(kl_to_standard_normal(Tensor({1, 4}), Tensor({1, 4})).item() == 0.0);
  }
  SUBCASE("k=1, mu=1, logvar=0 gives 1/2") {
    CHECK(kl_to_standard_normal(Tensor({1, 1}, {1.0}), Tensor({1, 1}, {0.0})).item() ==
          doctest::Approx(0.5));
  }
  SUBCASE("k=2, mu=0, var=(2, 1/2) gives 1/4") {
    const Tensor lv({1, 2}, {std::log(2.0), std::log(0.5)});
    CHECK(kl_to_standard_normal(Tensor({1, 2}), lv).item() == doctest::Approx(0.25));
  }
  SUBCASE("non-negative over random probes") {
    auto rng = seeded_stream(17, "klprobe");
    for (int i = 0; i < 1000; ++i) {
      const Tensor mu = random_tensor({1, 3}, rng, -3, 3);
      const Tensor lv = random_tensor({1, 3}, rng, -3, 3);
      CHECK(kl_to_standard_normal(mu, lv).item() >= 0.0);
    }
  }
  SUBCASE("monte carlo cross-check") {
    // E_q[log q(z) - log p(z)] over draws from q matches the closed form.
    const Tensor mu({1, 2}, {0.7, -0.4});
    const Tensor lv({1, 2}, {std::log(1.9), std::log(0.6)});
    const double closed = kl_to_standard_normal(mu, lv).item();
    auto rng = seeded_stream(23, "klmc");
    const std::size_t n = 1000000;
    std::normal_distribution<double> g(0.0, 1.0);
    double acc = 0;
    for (std::size_t s = 0; s < n; ++s) {
      double logq = 0, logp = 0;
      for (std::size_t j = 0; j < 2; ++j) {
        const double sigma = std::exp(lv[j] / 2.0);
        const double z = mu[j] + sigma * g(rng);
        const double d = (z - mu[j]) / sigma;
        logq += -0.5 * d * d - std::log(sigma);
        logp += -0.5 * z * z;
      }
      acc += logq - logp;
    }
    const double mc = acc / static_cast<double>(n);
    CHECK(std::abs(mc - closed) / closed < 0.01);
  }
}

TEST_CASE("total loss") {
  const Tensor task = Tensor::scalar(1.0);
  const Tensor kl = Tensor::scalar(0.25);
  CHECK(total_loss(task, kl, VariantSpec::gsnn()).item() == doctest::Approx(1.0));
  CHECK(total_loss(task, kl, VariantSpec::gdvm(0.0)).item() == doctest::Approx(1.0));
  CHECK(total_loss(task, kl, VariantSpec::gdvm(0.5)).item() == doctest::Approx(1.125));
  CHECK(total_loss(task, Tensor::scalar(0.0), VariantSpec::gdvm(2.0)).item() ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(VariantSpec::gdvm(-0.1), ConfigError);
}

namespace {

// Gradients of every parameter for one fixed batch and frozen eps.
std::vector<std::pair<std::string, std::vector<double>>> batch_gradients(
    GdvmModel& model, const Tensor& x, const BatchTargets& targets, const Tensor& eps) {
  Tape tape;
  model.params().zero_grads();
  model.params().attach_all(tape);
  ForwardCtx ctx;
  ctx.training = true;
  const auto loss = model.batch_loss(x, targets, eps, ctx);
  tape.backward(loss.total);
  std::vector<std::pair<std::string, std::vector<double>>> grads;
  for (auto& [name, p] : model.params()) {
    grads.emplace_back(name, std::vector<double>(p.grad().begin(), p.grad().end()));
  }
  return grads;
}

}  // namespace

TEST_CASE("reduction identities are bitwise") {
  auto rng = seeded_stream(42, "reduction");
  const Tensor x = random_tensor({2, 3}, rng);
  const BatchTargets targets = two_labels();
  Tensor eps = random_tensor({2, 2}, rng);

  SUBCASE("beta = 0 GDVM equals GSNN") {
    GdvmModel gdvm_model = GdvmModel::build(tiny_spec(VariantSpec::gdvm(0.0)), 7);
    GdvmModel gsnn_model = GdvmModel::build(tiny_spec(VariantSpec::gsnn()), 7);
    const auto g1 = batch_gradients(gdvm_model, x, targets, eps);
    const auto g2 = batch_gradients(gsnn_model, x, targets, eps);
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i) {
      CHECK(g1[i].first == g2[i].first);
      for (std::size_t j = 0; j < g1[i].second.size(); ++j) {
        CHECK(g1[i].second[j] == g2[i].second[j]);  // exact, not approximate
      }
    }
  }

  SUBCASE("no-sampling beta = 0 GDVM equals Baseline on shared parameters") {
    VariantSpec no_sampling = VariantSpec::gdvm(0.0);
    no_sampling.sample = false;
    GdvmModel gdvm_model = GdvmModel::build(tiny_spec(no_sampling), 7);
    GdvmModel baseline = GdvmModel::build(tiny_spec(VariantSpec::baseline()), 7);
    const auto g1 = batch_gradients(gdvm_model, x, targets, Tensor());
    const auto g2 = batch_gradients(baseline, x, targets, Tensor());
    for (const auto& [name, grad] : g2) {  // baseline owns the shared subset
      const auto it = std::find_if(g1.begin(), g1.end(),
                                   [&](const auto& kv) { return kv.first == name; });
      REQUIRE(it != g1.end());
      for (std::size_t j = 0; j < grad.size(); ++j) CHECK(it->second[j] == grad[j]);
    }
    // The unused logvar head receives exactly zero gradient.
    for (const auto& [name, grad] : g1) {
      if (name.rfind("logvar", 0) == 0) {
        for (double g : grad) CHECK(g == 0.0);
      }
    }
  }
}

TEST_CASE("end-to-end gradient matches finite differences with frozen eps") {
  auto rng = seeded_stream(55, "e2e");
  const Tensor x = random_tensor({2, 3}, rng);
  const BatchTargets targets = two_labels();
  const Tensor eps = random_tensor({2, 2}, rng);

  GdvmModel model = GdvmModel::build(tiny_spec(VariantSpec::gdvm(0.7)), 9);
  const auto analytic = batch_gradients(model, x, targets, eps);

  auto loss_value = [&]() {
    ForwardCtx ctx;
    ctx.training = true;  // same path as training, dropout-free architecture
    return model.batch_loss(x, targets, eps, ctx).total.item();
  };
  std::size_t idx = 0;
  for (auto& [name, p] : model.params()) {
    const Tensor original = p.clone();
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& probe) {
          std::copy(probe.values().begin(), probe.values().end(), p.values().begin());
          return loss_value();
        },
        original, 1e-5);
    std::copy(original.values().begin(), original.values().end(), p.values().begin());
    INFO("parameter ", name);
    CHECK(max_rel_error(analytic[idx].second, numeric.values()) < 1e-4);
    ++idx;
  }
}

TEST_CASE("prediction is invariant to the logvar head parameters") {
  GdvmModel model = GdvmModel::build(tiny_spec(VariantSpec::gdvm(1.0)), 11);
  auto rng = seeded_stream(61, "predinv");
  const Tensor x = random_tensor({3, 3}, rng);
  const Prediction before = predict_deterministic(model, x);
  for (auto& [name, p] : model.params()) {
    if (name.rfind("logvar", 0) == 0) fill_uniform(rng, p.values(), -5, 5);
  }
  const Prediction after = predict_deterministic(model, x);
  for (std::size_t i = 0; i < before.scores.size(); ++i) {
    CHECK(before.scores[i] == after.scores[i]);
  }
}

TEST_CASE("training") {
  const Dataset blobs = gen_blobs(5, 2, 60, 2, 0.05);  // tightly separated

  ModelSpec spec;
  spec.input_shape = {2};
  spec.latent_dim = 2;
  spec.trunk = {dense(16), relu_l()};
  spec.mu_head = {dense(2)};
  spec.logvar_head = {dense(2)};
  spec.classifier = {dense(8), relu_l(), dense(2), softmax_l()};
  spec.task = {TaskFamily::kMultiClass, 2};

  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 20;
  tc.optimizer.kind = OptimizerKind::kAdam;
  tc.optimizer.learning_rate = 0.01;
  tc.seed = 1;

  SUBCASE("zero epochs leaves parameters unchanged") {
    spec.variant = VariantSpec::gdvm(0.5);
    GdvmModel model = GdvmModel::build(spec, 2);
    std::vector<double> before;
    for (auto& [n, p] : model.params()) {
      before.insert(before.end(), p.values().begin(), p.values().end());
    }
    TrainConfig zero = tc;
    zero.epochs = 0;
    train(model, blobs, zero);
    std::size_t i = 0;
    for (auto& [n, p] : model.params()) {
      for (double v : p.values()) CHECK(v == before[i++]);
    }
  }

  SUBCASE("separable blobs reach 99% train accuracy for all variants") {
    for (VariantSpec variant :
         {VariantSpec::baseline(), VariantSpec::gsnn(), VariantSpec::gdvm(0.1)}) {
      spec.variant = variant;
      GdvmModel model = GdvmModel::build(spec, 2);
      train(model, blobs, tc);
      const Prediction pred = predict_deterministic(model, blobs.features);
      CHECK(accuracy(pred.labels, blobs.labels) >= 0.99);
    }
  }

  SUBCASE("identical seeds give bitwise-identical loss traces") {
    spec.variant = VariantSpec::gdvm(0.5);
    GdvmModel m1 = GdvmModel::build(spec, 2);
    GdvmModel m2 = GdvmModel::build(spec, 2);
    TrainConfig short_tc = tc;
    short_tc.epochs = 5;
    const TrainTrace t1 = train(m1, blobs, short_tc);
    const TrainTrace t2 = train(m2, blobs, short_tc);
    REQUIRE(t1.epoch_loss.size() == t2.epoch_loss.size());
    for (std::size_t i = 0; i < t1.epoch_loss.size(); ++i) {
      CHECK(t1.epoch_loss[i] == t2.epoch_loss[i]);
    }
  }

  SUBCASE("non-finite loss aborts with epoch/batch diagnostics") {
    spec.variant = VariantSpec::gdvm(0.5);
    GdvmModel model = GdvmModel::build(spec, 2);
    TrainConfig wild = tc;
    wild.optimizer.kind = OptimizerKind::kSgdMomentum;
    wild.optimizer.learning_rate = 1e18;
    wild.epochs = 20;
    CHECK_THROWS_AS(train(model, blobs, wild), NumericError);
  }
}

TEST_CASE("monte carlo prediction") {
  GdvmModel model = GdvmModel::build(tiny_spec(VariantSpec::gdvm(0.5)), 13);
  auto rng = seeded_stream(71, "mc");
  const Tensor x = random_tensor({3, 3}, rng);

  SUBCASE("averaged class probabilities sum to one per row") {
    auto mc_rng = seeded_stream(72, "draws");
    const Prediction pred = predict_mc(model, x, 64, mc_rng);
    for (std::size_t i = 0; i < x.shape()[0]; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 2; ++j) s += pred.scores.at({i, j});
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  SUBCASE("a single zero draw equals Phi(0)") {
    const Prediction pred = predict_mc_with_draws(model, x, {Tensor({3, 2})});
    ForwardCtx ctx;
    ctx.apply_softmax = true;
    const Tensor direct = model.classify(Tensor({3, 2}), ctx);
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(pred.scores[i] == direct[i]);
  }

  SUBCASE("rerun variance shrinks as draws grow") {
    auto spread = [&](std::size_t n_draws) {
      double mn = 1.0, mx = 0.0;
      for (std::uint64_t s = 0; s < 12; ++s) {
        auto mc_rng = seeded_stream(100 + s, "var");
        const Prediction p = predict_mc(model, x, n_draws, mc_rng);
        const double v = p.scores.at({0, 0});
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      return mx - mn;
    };
    CHECK(spread(1000) < spread(10));
  }

  SUBCASE("n_samples = 0 is rejected") {
    auto mc_rng = seeded_stream(73, "bad");
    CHECK_THROWS_AS(predict_mc(model, x, 0, mc_rng), ConfigError);
  }
}
