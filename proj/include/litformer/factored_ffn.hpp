#pragma once

#include <string>

#include "litformer/axial_attention.hpp"  // Fusion
#include "litformer/describe.hpp"
#include "litformer/feature_ops.hpp"
#include "litformer/params.hpp"

namespace lit {

struct FfnConfig {
  Fusion fusion = Fusion::kParallel;
  bool nonlinearity = true;  // rectifier between the two units
};

// One (2+1)D convolution unit: an in-plane 1x3x3 kernel and a through-plane
// 3x1x1 kernel around an identity path. The identity path is a 1x1x1
// projection when the unit changes channel count.
//   parallel:  y = inplane(x) + through(x) + im(x)
//   cascaded:  y = through(inplane(x)) + im(x)
template <typename R>
struct FactoredConvUnit {
  int c_in = 0, c_out = 0, k = 3;
  Fusion fusion = Fusion::kParallel;
  Tensor<R> w_in, b_in;   // (Co, Ci, k, k)
  Tensor<R> w_th, b_th;   // (Co, Ci, k)
  Tensor<R> w_proj, b_proj;  // (Co, Ci), only when c_in != c_out

  FactoredConvUnit() = default;
  FactoredConvUnit(int ci, int co, Fusion fusion_, Rng& rng)
      : c_in(ci), c_out(co), fusion(fusion_) {
    w_in = he_uniform<R>({co, ci, k, k}, ci * k * k, rng, kResidualInitGain);
    b_in = zero_param<R>({co});
    // cascaded applies the through-plane kernel on top of the in-plane one
    const int th_in = (fusion == Fusion::kCascaded) ? co : ci;
    w_th = he_uniform<R>({co, th_in, k}, th_in * k, rng, kResidualInitGain);
    b_th = zero_param<R>({co});
    if (ci != co) {
      // the identity surrogate carries the signal, so it keeps unit gain
      w_proj = unit_uniform<R>({co, ci}, ci, rng);
      b_proj = zero_param<R>({co});
    }
  }

  Tensor<R> forward(const Tensor<R>& x) const {
    if (x.extent(1) != c_in)
      throw ShapeError("factored conv unit expects " + std::to_string(c_in) + " channels, got " +
                       std::to_string(x.extent(1)));
    Tensor<R> identity = x;
    if (c_in != c_out) {
      OpScope s("proj");
      identity = conv_pointwise(x, w_proj, b_proj);
    }
    if (fusion == Fusion::kParallel) {
      Tensor<R> a, b;
      {
        OpScope s("conv_in");
        a = conv_inplane(x, w_in, b_in);
      }
      {
        OpScope s("conv_th");
        b = conv_throughplane(x, w_th, b_th);
      }
      return add(add(a, b), identity);
    }
    Tensor<R> mid;
    {
      OpScope s("conv_in");
      mid = conv_inplane(x, w_in, b_in);
    }
    Tensor<R> composed;
    {
      OpScope s("conv_th");
      composed = conv_throughplane(mid, w_th, b_th);
    }
    return add(composed, identity);
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    ps.add(p + ".conv_in.w", w_in);
    ps.add(p + ".conv_in.b", b_in);
    ps.add(p + ".conv_th.w", w_th);
    ps.add(p + ".conv_th.b", b_th);
    if (w_proj) {
      ps.add(p + ".proj.w", w_proj);
      ps.add(p + ".proj.b", b_proj);
    }
  }

  void describe(const std::string& p, std::int64_t N, std::int64_t D, std::int64_t H,
                std::int64_t W, LayerEntries& out) const {
    const std::int64_t ci = c_in, co = c_out, V = D * H * W, K = k;
    // Same padding, so MACs are kernel size times output voxels. The 3D
    // counterpart with the same receptive footprint is one K^3 kernel.
    out.push_back({join_path(p, "conv_in"), numel(w_in.shape()), co, N * numel(w_in.shape()) * V,
                   ci * co * K * K * K, N * ci * co * K * K * K * V});
    out.push_back({join_path(p, "conv_th"), numel(w_th.shape()), co, N * numel(w_th.shape()) * V, 0, 0});
    if (w_proj) out.push_back({join_path(p, "proj"), ci * co, co, N * ci * co * V, 0, 0});
  }
};

// Feed-forward block: a channel-preserving (2+1)D unit, an optional smooth
// rectifier, then a channel-changing (2+1)D unit.
template <typename R>
struct FactoredFfnBlock {
  FfnConfig cfg;
  FactoredConvUnit<R> unit1, unit2;

  FactoredFfnBlock() = default;
  FactoredFfnBlock(int ci, int co, const FfnConfig& cfg_, Rng& rng)
      : cfg(cfg_), unit1(ci, ci, cfg_.fusion, rng), unit2(ci, co, cfg_.fusion, rng) {}

  Tensor<R> forward(const Tensor<R>& x) const {
    Tensor<R> mid;
    {
      OpScope s("unit1");
      mid = unit1.forward(x);
    }
    if (cfg.nonlinearity) mid = gelu(mid);
    OpScope s("unit2");
    return unit2.forward(mid);
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    unit1.params(ps, p + ".unit1");
    unit2.params(ps, p + ".unit2");
  }

  void describe(const std::string& p, std::int64_t N, std::int64_t D, std::int64_t H,
                std::int64_t W, LayerEntries& out) const {
    unit1.describe(join_path(p, "unit1"), N, D, H, W, out);
    unit2.describe(join_path(p, "unit2"), N, D, H, W, out);
  }
};

}  // namespace lit
