#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gdvm/nn.hpp"

namespace gdvm {

enum class OptimizerKind { kSgdMomentum, kRmsProp, kAdam };

std::string optimizer_kind_name(OptimizerKind kind);
OptimizerKind optimizer_kind_from_name(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.01;
  double momentum = 0.9;               // sgd-momentum
  double rho = 0.9;                    // rmsprop decay
  double beta1 = 0.9, beta2 = 0.999;   // adam moments
  double epsilon = 1e-8;
};

// Update rules:
//   sgd-momentum:  v <- m*v + g;           p <- p - lr*v
//   rmsprop:       s <- rho*s + (1-rho)g^2; p <- p - lr*g/(sqrt(s)+eps)
//   adam:          bias-corrected first/second moments
// Moment buffers are allocated on the first step and must keep matching the
// parameter set afterwards.
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& cfg);

  void step(ParameterSet& params);
  void reset();

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m1_;
  std::vector<std::vector<double>> m2_;
};

}  // namespace gdvm
