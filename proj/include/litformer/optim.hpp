#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "litformer/errors.hpp"
#include "litformer/params.hpp"

namespace lit {

struct TrainConfig {
  int epochs = 100;
  double lr_max = 2.0e-4;
  double lr_min = 1.0e-6;
  int warmup_epochs = 2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 1.0e-9;
  int batch = 2;
  std::uint64_t seed = 0;
  int log_every = 10;
  int checkpoint_every = 0;  // steps; 0 disables periodic checkpoints

  void validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (!(lr_min < lr_max)) throw ConfigError("lr_min must be below lr_max");
    if (!(warmup_epochs < epochs)) throw ConfigError("warmup_epochs must be below epochs");
    if (batch <= 0) throw ConfigError("batch must be positive");
  }
};

// Linear ramp from 0 to lr_max over the warmup steps, then cosine decay to
// lr_min at the final step. Continuous at the junction.
inline double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                    double lr_max, double lr_min) {
  if (step < warmup_steps)
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return lr_min;
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
}

// Adaptive-moment optimizer with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + 1e-8) + wd p)
// Moments are kept in parameter precision so that checkpointed state
// round-trips bit-identically.
template <typename R>
class AdamW {
 public:
  AdamW(double beta1, double beta2, double weight_decay)
      : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay) {}

  void step(ParamSet<R>& params, double lr) {
    if (m_.empty()) init(params);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.items.size(); ++p) {
      auto& tensor = params.items[p].second;
      auto& value = tensor.value();
      const auto& grad = tensor.grad();
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = static_cast<R>(beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g);
        v[i] = static_cast<R>(beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g);
        const double m_hat = static_cast<double>(m[i]) / bc1;
        const double v_hat = static_cast<double>(v[i]) / bc2;
        const double update = m_hat / (std::sqrt(v_hat) + 1e-8) +
                              weight_decay_ * static_cast<double>(value[i]);
        value[i] = static_cast<R>(static_cast<double>(value[i]) - lr * update);
      }
    }
  }

  std::int64_t steps_taken() const { return t_; }

  void export_state(std::map<std::string, std::vector<R>>& out, const ParamSet<R>& params) const {
    for (std::size_t p = 0; p < params.items.size(); ++p) {
      const auto n = static_cast<std::size_t>(params.items[p].second.size());
      out["adam_m/" + params.items[p].first] = m_.empty() ? std::vector<R>(n, R(0)) : m_[p];
      out["adam_v/" + params.items[p].first] = v_.empty() ? std::vector<R>(n, R(0)) : v_[p];
    }
  }

  void import_state(const std::map<std::string, std::vector<R>>& in, const ParamSet<R>& params,
                    std::int64_t steps) {
    init(params);
    for (std::size_t p = 0; p < params.items.size(); ++p) {
      auto im = in.find("adam_m/" + params.items[p].first);
      auto iv = in.find("adam_v/" + params.items[p].first);
      if (im == in.end() || iv == in.end())
        throw ContractError("optimizer state missing for " + params.items[p].first);
      if (im->second.size() != m_[p].size() || iv->second.size() != v_[p].size())
        throw ContractError("optimizer state size mismatch for " + params.items[p].first);
      m_[p] = im->second;
      v_[p] = iv->second;
    }
    t_ = steps;
  }

 private:
  void init(const ParamSet<R>& params) {
    m_.resize(params.items.size());
    v_.resize(params.items.size());
    for (std::size_t p = 0; p < params.items.size(); ++p) {
      m_[p].assign(static_cast<std::size_t>(params.items[p].second.size()), R(0));
      v_[p].assign(static_cast<std::size_t>(params.items[p].second.size()), R(0));
    }
  }

  double beta1_, beta2_, weight_decay_;
  std::int64_t t_ = 0;
  std::vector<std::vector<R>> m_, v_;
};

}  // namespace lit
