#include "gdvm/optim.hpp"

#include <cmath>

namespace gdvm {

std::string optimizer_kind_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgdMomentum: return "sgd-momentum";
    case OptimizerKind::kRmsProp: return "rmsprop";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind optimizer_kind_from_name(std::string_view name) {
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
}

void Optimizer::reset() {
  t_ = 0;
  m1_.clear();
  m2_.clear();
}

void Optimizer::step(ParameterSet& params) {
  if (m1_.empty()) {
    for (const auto& [name, p] : params) {
      m1_.emplace_back(p.size(), 0.0);
      m2_.emplace_back(p.size(), 0.0);
    }
  }
  if (m1_.size() != params.size()) {
    throw ContractError("optimizer: parameter set changed size after first step");
  }
  ++t_;

  std::size_t idx = 0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) {
      throw ContractError("optimizer: missing gradient for parameter '" + name + "'");
    }
    auto g = p.grad();
    auto vals = p.values();
    auto& m1 = m1_[idx];
    auto& m2 = m2_[idx];
    if (m1.size() != vals.size()) {
      throw ContractError("optimizer: moment buffer shape mismatch for '" + name + "'");
    }
    switch (cfg_.kind) {
      case OptimizerKind::kSgdMomentum:
        for (std::size_t i = 0; i < vals.size(); ++i) {
          m1[i] = cfg_.momentum * m1[i] + g[i];
          vals[i] -= cfg_.learning_rate * m1[i];
        }
        break;
      case OptimizerKind::kRmsProp:
        for (std::size_t i = 0; i < vals.size(); ++i) {
          m1[i] = cfg_.rho * m1[i] + (1.0 - cfg_.rho) * g[i] * g[i];
          vals[i] -= cfg_.learning_rate * g[i] / (std::sqrt(m1[i]) + cfg_.epsilon);
        }
        break;
      case OptimizerKind::kAdam: {
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < vals.size(); ++i) {
          m1[i] = cfg_.beta1 * m1[i] + (1.0 - cfg_.beta1) * g[i];
          m2[i] = cfg_.beta2 * m2[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
          const double mhat = m1[i] / c1;
          const double vhat = m2[i] / c2;
          vals[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
        break;
      }
    }
    ++idx;
  }
}

}  // namespace gdvm
