#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "litformer/feature_ops.hpp"
#include "litformer/tensor.hpp"

namespace lit {

struct LossConfig {
  double epsilon = 1.0e-3;  // Charbonnier smoothing constant
  double lambda = 2.0;      // weight on the structural term
  std::string mode = "charbonnier_plus_ssim";  // charbonnier | l1 | mse | ssim | charbonnier_plus_ssim

  void validate() const {
    if (epsilon <= 0) throw ConfigError("loss epsilon must be positive");
    if (lambda < 0) throw ConfigError("loss lambda must be non-negative");
    if (mode != "charbonnier" && mode != "l1" && mode != "mse" && mode != "ssim" &&
        mode != "charbonnier_plus_ssim")
      throw ConfigError("unknown loss mode '" + mode + "'");
  }
};

// Smooth robust penalty: sqrt(|residual|_F^2 + eps^2) per batch item, then
// averaged over the batch. Equals eps exactly when pred == target and stays
// differentiable there.
template <typename R>
Tensor<R> charbonnier_loss(const Tensor<R>& pred, const Tensor<R>& target, double eps = 1e-3) {
  if (pred.shape() != target.shape())
    throw ShapeError("charbonnier: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  Tensor<R> r = sub(pred, target);
  std::vector<int> axes;
  for (int i = 1; i < r.rank(); ++i) axes.push_back(i);
  Tensor<R> sq = reduce_sum(mul(r, r), axes);       // (N,1,...)
  Tensor<R> per_item = sqrt_t(add_scalar(sq, static_cast<R>(eps * eps)));
  return mean_all(per_item);
}

namespace detail {

// Normalized 1D Gaussian taps, length k, centered.
inline std::vector<double> gaussian_taps(int k, double sigma) {
  std::vector<double> t(static_cast<std::size_t>(k));
  const double c = (k - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < k; ++i) {
    t[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    total += t[static_cast<std::size_t>(i)];
  }
  for (auto& v : t) v /= total;
  return t;
}

// Fixed (non-trainable) k x k Gaussian window for one channel.
template <typename R>
Tensor<R> gaussian_window2d(int k, double sigma) {
  auto taps = gaussian_taps(k, sigma);
  std::vector<R> w(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x)
      w[static_cast<std::size_t>(y * k + x)] =
          static_cast<R>(taps[static_cast<std::size_t>(y)] * taps[static_cast<std::size_t>(x)]);
  return Tensor<R>::from({1, k, k}, std::move(w), false);
}

}  // namespace detail

// Mean structural-similarity map between two slice stacks (B, 1, H, W),
// Gaussian 11x11 window (sigma 1.5), valid windowing, stabilizers for unit
// data range. Returns one scalar per stack position averaged together.
template <typename R>
Tensor<R> ssim_map_mean(const Tensor<R>& a, const Tensor<R>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("ssim: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  const R c1 = static_cast<R>(0.01 * 0.01);
  const R c2 = static_cast<R>(0.03 * 0.03);
  static const Tensor<R> window = detail::gaussian_window2d<R>(kWindow, kSigma);
  auto blur = [&](const Tensor<R>& t) { return dwconv2d(t, window, Tensor<R>{}, false); };
  Tensor<R> mu_a = blur(a);
  Tensor<R> mu_b = blur(b);
  Tensor<R> mu_aa = mul(mu_a, mu_a);
  Tensor<R> mu_bb = mul(mu_b, mu_b);
  Tensor<R> mu_ab = mul(mu_a, mu_b);
  Tensor<R> var_a = sub(blur(mul(a, a)), mu_aa);
  Tensor<R> var_b = sub(blur(mul(b, b)), mu_bb);
  Tensor<R> cov = sub(blur(mul(a, b)), mu_ab);
  Tensor<R> num = mul(add_scalar(scale(mu_ab, R(2)), c1), add_scalar(scale(cov, R(2)), c2));
  Tensor<R> den = mul(add_scalar(add(mu_aa, mu_bb), c1), add_scalar(add(var_a, var_b), c2));
  return mean_all(divt(num, den));
}

// 1 - mean over transverse slices (and batch) of the per-slice SSIM.
// pred/target: (N, 1, D, H, W) with H, W >= 11.
template <typename R>
Tensor<R> ssim_loss(const Tensor<R>& pred, const Tensor<R>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("ssim_loss: shape mismatch");
  if (pred.rank() != 5 || pred.extent(1) != 1)
    throw ShapeError("ssim_loss expects (N,1,D,H,W) volumes");
  const std::int64_t N = pred.extent(0), D = pred.extent(2), H = pred.extent(3), W = pred.extent(4);
  Tensor<R> a = reshape(pred, {N * D, 1, H, W});
  Tensor<R> b = reshape(target, {N * D, 1, H, W});
  Tensor<R> mean_ssim = ssim_map_mean(a, b);
  return add_scalar(scale(mean_ssim, R(-1)), R(1));
}

template <typename R>
Tensor<R> l1_loss(const Tensor<R>& pred, const Tensor<R>& target) {
  return mean_all(abs_t(sub(pred, target)));
}

template <typename R>
Tensor<R> mse_loss(const Tensor<R>& pred, const Tensor<R>& target) {
  Tensor<R> r = sub(pred, target);
  return mean_all(mul(r, r));
}

struct LossTerms {
  double charbonnier = 0;
  double ssim = 0;
  double total = 0;
};

// Combined objective per the configured mode. `terms`, when given, receives
// the individual component values for logging.
template <typename R>
Tensor<R> total_loss(const Tensor<R>& pred, const Tensor<R>& target, const LossConfig& cfg,
                     LossTerms* terms = nullptr) {
  cfg.validate();
  Tensor<R> loss;
  double charb_val = 0, ssim_val = 0;
  if (cfg.mode == "l1") {
    loss = l1_loss(pred, target);
  } else if (cfg.mode == "mse") {
    loss = mse_loss(pred, target);
  } else if (cfg.mode == "ssim") {
    loss = ssim_loss(pred, target);
    ssim_val = static_cast<double>(loss.item());
  } else if (cfg.mode == "charbonnier") {
    loss = charbonnier_loss(pred, target, cfg.epsilon);
    charb_val = static_cast<double>(loss.item());
  } else {  // charbonnier_plus_ssim
    Tensor<R> charb = charbonnier_loss(pred, target, cfg.epsilon);
    Tensor<R> ssim = ssim_loss(pred, target);
    charb_val = static_cast<double>(charb.item());
    ssim_val = static_cast<double>(ssim.item());
    loss = add(charb, scale(ssim, static_cast<R>(cfg.lambda)));
  }
  if (terms) {
    terms->charbonnier = charb_val;
    terms->ssim = ssim_val;
    terms->total = static_cast<double>(loss.item());
  }
  return loss;
}

}  // namespace lit
