#include <doctest.h>

#include <cmath>

#include "gdvm/nn.hpp"
#include "gdvm/optim.hpp"
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

LayerSpec plain(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

LayerSpec conv(Shape in, Shape out, int kernel) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.size_in = std::move(in);
  s.size_out = std::move(out);
  s.kernel = kernel;
  return s;
}

LayerSpec dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.rate = rate;
  return s;
}

}  // namespace

TEST_CASE("dense forward") {
  ParameterSet params;
  auto rng = seeded_stream(1, "dense");
  const auto resolved = validate_chain({2}, {dense(2)});
  LayerStack stack = LayerStack::build(resolved, "t", rng, params);

  // Identity weights, zero bias: output equals input.
  Tensor* w = params.find("t.0.w");
  REQUIRE(w != nullptr);
  w->values()[0] = 1;
  w->values()[1] = 0;
  w->values()[2] = 0;
  w->values()[3] = 1;
  ForwardCtx ctx;
  const Tensor x = Tensor::matrix({{0.3, -0.7}});
  const Tensor y = stack.forward(x, ctx);
  CHECK(y[0] == doctest::Approx(0.3));
  CHECK(y[1] == doctest::Approx(-0.7));

  // Hand case: x=(1,1), w=[[1],[1]], b=(0.5) -> 2.5.
  ParameterSet p2;
  LayerStack s2 = LayerStack::build(validate_chain({2}, {dense(1)}), "t", rng, p2);
  p2.find("t.0.w")->values()[0] = 1;
  p2.find("t.0.w")->values()[1] = 1;
  p2.find("t.0.b")->values()[0] = 0.5;
  CHECK(s2.forward(Tensor::matrix({{1, 1}}), ctx).item() == doctest::Approx(2.5));

  // Permuting batch rows permutes the outputs.
  auto data_rng = seeded_stream(2, "rows");
  const Tensor batch = random_tensor({2, 2}, data_rng);
  const Tensor swapped = Tensor::matrix({{batch.at({1, 0}), batch.at({1, 1})},
                                         {batch.at({0, 0}), batch.at({0, 1})}});
  const Tensor out1 = stack.forward(batch, ctx);
  const Tensor out2 = stack.forward(swapped, ctx);
  CHECK(out1.at({0, 0}) == out2.at({1, 0}));
  CHECK(out1.at({1, 1}) == out2.at({0, 1}));
}

TEST_CASE("dropout forward") {
  ParameterSet params;
  auto rng = seeded_stream(3, "drop");
  LayerStack stack = LayerStack::build(validate_chain({8}, {dropout(0.5)}), "d", rng, params);

  // Eval mode is the identity regardless of rate.
  ForwardCtx eval_ctx;
  const Tensor x = Tensor::full({1, 8}, 1.0);
  const Tensor y = stack.forward(x, eval_ctx);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 1.0);

  // Rate 0 in train mode is also the identity.
  LayerStack zero = LayerStack::build(validate_chain({8}, {dropout(0.0)}), "z", rng, params);
  auto drng = seeded_stream(4, "drop-rng");
  ForwardCtx train_ctx;
  train_ctx.training = true;
  train_ctx.dropout_rng = &drng;
  const Tensor y0 = zero.forward(x, train_ctx);
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y0[i] == 1.0);

  // Inverted dropout preserves the expectation: mean of 1e6 kept/scaled units
  // stays within 1% of 1 (3-sigma of the binomial estimate is ~0.3%).
  const std::size_t n = 1000000;
  LayerStack big = LayerStack::build(validate_chain({n}, {dropout(0.5)}), "b", rng, params);
  const Tensor wide = Tensor::full({1, n}, 1.0);
  const Tensor masked = big.forward(wide, train_ctx);
  double mean_v = 0;
  for (double v : masked.values()) mean_v += v;
  mean_v /= static_cast<double>(n);
  CHECK(std::abs(mean_v - 1.0) < 0.01);

  CHECK_THROWS_AS(validate_chain({8}, {dropout(1.0)}), ConfigError);
}

TEST_CASE("parameter initialization") {
  auto rng1 = seeded_stream(9, "init");
  auto rng2 = seeded_stream(9, "init");
  ParameterSet a, b;
  LayerStack::build(validate_chain({100}, {dense(100)}), "p", rng1, a);
  LayerStack::build(validate_chain({100}, {dense(100)}), "p", rng2, b);

  const double bound = std::sqrt(6.0 / 200.0);
  const Tensor* w = a.find("p.0.w");
  REQUIRE(w != nullptr);
  for (double v : w->values()) {
    CHECK(v <= bound);
    CHECK(v >= -bound);
  }
  for (double v : a.find("p.0.b")->values()) CHECK(v == 0.0);

  // Same seed twice gives identical parameters, in stable order.
  auto ita = a.begin();
  auto itb = b.begin();
  for (; ita != a.end(); ++ita, ++itb) {
    CHECK(ita->first == itb->first);
    for (std::size_t i = 0; i < ita->second.size(); ++i) {
      CHECK(ita->second[i] == itb->second[i]);
    }
  }
}

TEST_CASE("optimizer steps") {
  auto make_param = [](double v) {
    ParameterSet ps;
    Tensor& p = ps.add("w", Tensor::scalar(v));
    Tape tape;  // allocate the gradient slot
    tape.watch(p);
    return ps;
  };

  SUBCASE("sgd momentum first step") {
    ParameterSet ps = make_param(1.0);
    ps.find("w")->grad()[0] = 1.0;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::kSgdMomentum;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    Optimizer opt(cfg);
    opt.step(ps);
    CHECK(ps.find("w")->values()[0] == doctest::Approx(1.0 - 0.05));
  }

  SUBCASE("adam first step") {
    ParameterSet ps = make_param(0.0);
    ps.find("w")->grad()[0] = 1.0;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::kAdam;
    cfg.learning_rate = 0.001;
    Optimizer opt(cfg);
    opt.step(ps);
    CHECK(ps.find("w")->values()[0] == doctest::Approx(-0.001).epsilon(1e-5));
  }

  SUBCASE("zero gradient is a fixed point for sgd") {
    ParameterSet ps = make_param(0.25);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::kSgdMomentum;
    cfg.learning_rate = 0.1;
    Optimizer opt(cfg);
    opt.step(ps);
    CHECK(ps.find("w")->values()[0] == 0.25);
  }

  SUBCASE("missing gradient names the parameter") {
    ParameterSet ps;
    ps.add("trunk.0.w", Tensor::scalar(1.0));  // never watched: no gradient slot
    OptimizerConfig cfg;
    Optimizer opt(cfg);
    try {
      opt.step(ps);
      FAIL("expected ContractError");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("trunk.0.w") != std::string::npos);
    }
  }
}

TEST_CASE("one optimizer step decreases a convex quadratic") {
  // loss = sum(w^2); curvature 2, so any lr < 1 strictly decreases it.
  for (OptimizerKind kind :
       {OptimizerKind::kSgdMomentum, OptimizerKind::kRmsProp, OptimizerKind::kAdam}) {
    ParameterSet ps;
    Tensor& w = ps.add("w", Tensor({3}, {0.9, -1.4, 0.6}));
    auto loss_value = [&]() {
      double acc = 0;
      for (double v : w.values()) acc += v * v;
      return acc;
    };
    const double before = loss_value();
    Tape tape;
    tape.watch(w);
    Tensor loss = sum(mul(w, w));
    tape.backward(loss);
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = 0.05;
    Optimizer opt(cfg);
    opt.step(ps);
    CHECK(loss_value() < before);
  }
}

TEST_CASE("shape chain validation accepts the reference tables") {
  // Trunk rows shared by the mu/logvar heads on the digit dataset.
  std::vector<LayerSpec> trunk = {
      conv({1, 28, 28}, {1, 28, 28}, 2),  plain(LayerKind::kRelu),
      conv({1, 28, 28}, {64, 14, 14}, 2), plain(LayerKind::kRelu),
      conv({64, 14, 14}, {64, 14, 14}, 3), plain(LayerKind::kRelu),
      conv({64, 14, 14}, {64, 14, 14}, 3), plain(LayerKind::kRelu),
      plain(LayerKind::kFlatten),
      dense(128), plain(LayerKind::kRelu)};
  const auto resolved = validate_chain({1, 28, 28}, trunk);
  CHECK(resolved[8].spec.kind == LayerKind::kFlatten);
  CHECK(resolved[8].out == Shape{12544});
  CHECK(resolved.back().out == Shape{128});
  // Row 1 keeps 28x28 under a 2x2 kernel: stride 1 with asymmetric padding.
  CHECK(resolved[0].stride == 1);
  CHECK(resolved[0].pad.top + resolved[0].pad.bottom == 1);
  // The 28->14 row implies stride 2; the 3x3 rows imply stride 1, padding 1.
  CHECK(resolved[2].stride == 2);
  CHECK(resolved[4].stride == 1);
  CHECK(resolved[4].pad.top == 1);

  std::vector<LayerSpec> phi = {dense(128), dropout(0.5), dense(10), plain(LayerKind::kSoftmax)};
  const auto phi_resolved = validate_chain({64}, phi);
  CHECK(phi_resolved.back().out == Shape{10});

  // Disagreeing declared sizes are rejected.
  std::vector<LayerSpec> bad = {conv({1, 28, 28}, {64, 9, 9}, 2)};
  CHECK_THROWS_AS(validate_chain({1, 28, 28}, bad), DimensionError);
  std::vector<LayerSpec> bad2 = {dense(16), dense(8)};
  bad2[1].size_in = {32};
  CHECK_THROWS_AS(validate_chain({10}, bad2), DimensionError);
}
