#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "litformer/params.hpp"
#include "litformer/rng.hpp"
#include "litformer/tensor.hpp"

namespace lit {

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  std::int64_t probes = 0;
};

// Central-difference comparison of analytic gradients, double precision.
// The loss closure rebuilds the graph from the current parameter values.
// Each tensor is probed at up to probes_per_tensor entries; the relative
// error denominator saturates at 1 so near-zero gradients are compared at
// absolute scale.
inline GradCheckResult gradient_check(ParamSet<double>& params,
                                      const std::function<Tensor<double>()>& loss_fn,
                                      int probes_per_tensor = 3, double step = 1e-5,
                                      std::uint64_t seed = 17) {
  params.zero_grad();
  Tensor<double> loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.items.size());
  for (auto& [name, t] : params.items) analytic.push_back(t.grad());

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t p = 0; p < params.items.size(); ++p) {
    auto& tensor = params.items[p].second;
    const auto n = static_cast<std::int64_t>(tensor.size());
    const int probes = static_cast<int>(std::min<std::int64_t>(probes_per_tensor, n));
    for (int q = 0; q < probes; ++q) {
      const auto idx = static_cast<std::size_t>(n <= probes_per_tensor
                                                    ? q
                                                    : static_cast<std::int64_t>(rng.below(
                                                          static_cast<std::uint64_t>(n))));
      const double saved = tensor.value()[idx];
      tensor.value()[idx] = saved + step;
      const double up = loss_fn().item();
      tensor.value()[idx] = saved - step;
      const double down = loss_fn().item();
      tensor.value()[idx] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[p][idx];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      ++result.probes;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = params.items[p].first;
        result.worst_index = static_cast<std::int64_t>(idx);
      }
    }
  }
  return result;
}

}  // namespace lit
