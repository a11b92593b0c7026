#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "litformer/errors.hpp"
#include "litformer/rng.hpp"
#include "litformer/tensor.hpp"

namespace lit {

// Named registry of the trainable tensors of a model. Entries share nodes
// with the modules that own them.
template <typename R>
struct ParamSet {
  std::vector<std::pair<std::string, Tensor<R>>> items;

  void add(std::string name, Tensor<R> t) { items.emplace_back(std::move(name), std::move(t)); }

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }

  std::int64_t bias_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items)
      if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : items) t.zero_grad();
  }

  Tensor<R>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  // Zero the values of every parameter whose name contains the substring.
  int zero_values_matching(const std::string& substring) {
    int hits = 0;
    for (auto& [name, t] : items) {
      if (name.find(substring) != std::string::npos) {
        std::fill(t.value().begin(), t.value().end(), R(0));
        ++hits;
      }
    }
    return hits;
  }
};

// Fan-in scaled uniform init for convolution kernels.
template <typename R>
Tensor<R> he_uniform(Shape shape, std::int64_t fan_in, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<R> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<R>(rng.uniform(-bound, bound));
  return Tensor<R>::from(std::move(shape), std::move(data), true);
}

// Unit-gain variant for identity-role and main-path mixing layers.
template <typename R>
Tensor<R> unit_uniform(Shape shape, std::int64_t fan_in, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<R> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<R>(rng.uniform(-bound, bound));
  return Tensor<R>::from(std::move(shape), std::move(data), true);
}

// Kernels that feed a residual sum start small so that deep stacks of
// three-path units keep near-unit forward gain at init.
inline constexpr double kResidualInitGain = 0.1;

template <typename R>
Tensor<R> zero_param(Shape shape) {
  return Tensor<R>::zeros(std::move(shape), true);
}

}  // namespace lit
