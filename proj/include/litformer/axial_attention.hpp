#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "litformer/describe.hpp"
#include "litformer/feature_ops.hpp"
#include "litformer/params.hpp"
#include "litformer/tensor.hpp"

namespace lit {

enum class Fusion { kParallel, kCascaded };

inline Fusion fusion_from_string(const std::string& s) {
  if (s == "parallel") return Fusion::kParallel;
  if (s == "cascaded") return Fusion::kCascaded;
  throw ConfigError("unknown fusion mode '" + s + "' (expected parallel or cascaded)");
}

struct AttentionConfig {
  bool enable_inplane = true;
  bool enable_throughplane = true;
  Fusion fusion = Fusion::kParallel;
  bool bypass = false;      // block is a pure residual pass-through, no params
  bool pre_norm = false;    // per-channel standardization before each branch
};

namespace detail {

// Per-channel standardization over everything but (N, C).
template <typename R>
Tensor<R> standardize_channels(const Tensor<R>& x) {
  std::vector<int> axes;
  for (int i = 2; i < x.rank(); ++i) axes.push_back(i);
  Tensor<R> mu = reduce_mean(x, axes);
  Tensor<R> centered = broadcast_sub(x, mu, axes);
  Tensor<R> var = reduce_mean(mul(centered, centered), axes);
  Tensor<R> sd = sqrt_t(add_scalar(var, R(1e-5)));
  return broadcast_div(centered, sd, axes);
}

}  // namespace detail

// Transposed attention over the channel axis of the depth-pooled map.
// Input (N, C, H, W); the attention map is (C/h x C/h) per head, row
// normalized over the key axis, far cheaper than an HW x HW token map.
template <typename R>
struct InplaneChannelAttention {
  int channels = 0;
  int heads = 1;
  Tensor<R> q_pw_w, q_pw_b, q_dw_w, q_dw_b;
  Tensor<R> k_pw_w, k_pw_b, k_dw_w, k_dw_b;
  Tensor<R> v_pw_w, v_pw_b, v_dw_w, v_dw_b;
  Tensor<R> out_w, out_b;
  Tensor<R> logit_scale;  // learnable magnitude divisor, one per head

  InplaneChannelAttention() = default;
  InplaneChannelAttention(int C, int heads_, Rng& rng) : channels(C), heads(heads_) {
    if (heads <= 0 || C % heads != 0)
      throw ConfigError("in-plane head count " + std::to_string(heads) +
                        " must divide channel count " + std::to_string(C));
    auto pw = [&] { return unit_uniform<R>({C, C}, C, rng); };
    auto dw = [&] { return unit_uniform<R>({C, 3, 3}, 9, rng); };
    q_pw_w = pw(); q_pw_b = zero_param<R>({C}); q_dw_w = dw(); q_dw_b = zero_param<R>({C});
    k_pw_w = pw(); k_pw_b = zero_param<R>({C}); k_dw_w = dw(); k_dw_b = zero_param<R>({C});
    v_pw_w = pw(); v_pw_b = zero_param<R>({C}); v_dw_w = dw(); v_dw_b = zero_param<R>({C});
    out_w = unit_uniform<R>({C, C}, C, rng, kResidualInitGain);  // feeds the residual sum
    out_b = zero_param<R>({C});
    // Unit-variance logits at init.
    logit_scale = Tensor<R>::full({heads}, static_cast<R>(std::sqrt(double(C) / heads)), true);
  }

  Tensor<R> forward(const Tensor<R>& x) const {
    const std::int64_t N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    const std::int64_t hd = heads, Ch = C / hd, HW = H * W;
    Tensor<R> q, k, v;
    {
      OpScope s("q_pw");
      q = conv_pointwise(x, q_pw_w, q_pw_b);
    }
    {
      OpScope s("q_dw");
      q = dwconv2d(q, q_dw_w, q_dw_b);
    }
    {
      OpScope s("k_pw");
      k = conv_pointwise(x, k_pw_w, k_pw_b);
    }
    {
      OpScope s("k_dw");
      k = dwconv2d(k, k_dw_w, k_dw_b);
    }
    {
      OpScope s("v_pw");
      v = conv_pointwise(x, v_pw_w, v_pw_b);
    }
    {
      OpScope s("v_dw");
      v = dwconv2d(v, v_dw_w, v_dw_b);
    }
    // Heads are contiguous channel groups.
    q = reshape(q, {N * hd, Ch, HW});
    k = reshape(k, {N * hd, Ch, HW});
    v = reshape(v, {N * hd, Ch, HW});
    Tensor<R> scores;
    {
      OpScope s("attn_map");
      scores = bmm(k, q, false, true);  // (N*h, Ch, Ch), rows indexed by key channel
    }
    scores = reshape(scores, {N, hd, Ch, Ch});
    scores = broadcast_div(scores, reshape(logit_scale, {1, hd, 1, 1}), {0, 2, 3});
    Tensor<R> attn = softmax(scores, 3);  // rows sum to 1
    attn = reshape(attn, {N * hd, Ch, Ch});
    Tensor<R> mixed;
    {
      OpScope s("attn_apply");
      mixed = bmm(attn, v, true, false);  // (N*h, Ch, HW)
    }
    mixed = reshape(mixed, {N, C, H, W});
    OpScope s("out_pw");
    return conv_pointwise(mixed, out_w, out_b);
  }

  // Row-stochastic attention map for inspection/tests: (N, heads, C/h, C/h).
  Tensor<R> attention_map(const Tensor<R>& x) const {
    const std::int64_t N = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
    const std::int64_t hd = heads, Ch = C / hd;
    Tensor<R> q = dwconv2d(conv_pointwise(x, q_pw_w, q_pw_b), q_dw_w, q_dw_b);
    Tensor<R> k = dwconv2d(conv_pointwise(x, k_pw_w, k_pw_b), k_dw_w, k_dw_b);
    Tensor<R> scores = bmm(reshape(k, {N * hd, Ch, HW}), reshape(q, {N * hd, Ch, HW}), false, true);
    scores = broadcast_div(reshape(scores, {N, hd, Ch, Ch}), reshape(logit_scale, {1, hd, 1, 1}),
                           {0, 2, 3});
    return softmax(scores, 3);
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    ps.add(p + ".q_pw.w", q_pw_w); ps.add(p + ".q_pw.b", q_pw_b);
    ps.add(p + ".q_dw.w", q_dw_w); ps.add(p + ".q_dw.b", q_dw_b);
    ps.add(p + ".k_pw.w", k_pw_w); ps.add(p + ".k_pw.b", k_pw_b);
    ps.add(p + ".k_dw.w", k_dw_w); ps.add(p + ".k_dw.b", k_dw_b);
    ps.add(p + ".v_pw.w", v_pw_w); ps.add(p + ".v_pw.b", v_pw_b);
    ps.add(p + ".v_dw.w", v_dw_w); ps.add(p + ".v_dw.b", v_dw_b);
    ps.add(p + ".out_pw.w", out_w); ps.add(p + ".out_pw.b", out_b);
    ps.add(p + ".logit_scale", logit_scale);
  }

  // Analytic layer entries for an (N, C, H, W) input.
  void describe(const std::string& p, std::int64_t N, std::int64_t H, std::int64_t W,
                LayerEntries& out) const {
    const std::int64_t C = channels, HW = H * W, Ch = C / heads;
    for (const char* name : {"q_pw", "k_pw", "v_pw"})
      out.push_back({join_path(p, name), C * C, C, N * C * C * HW, 0, 0});
    for (const char* name : {"q_dw", "k_dw", "v_dw"})
      out.push_back({join_path(p, name), C * 9, C, N * C * 9 * HW, 0, 0});
    out.push_back({join_path(p, "attn_map"), 0, 0, N * heads * Ch * HW * Ch, 0, 0});
    out.push_back({join_path(p, "attn_apply"), 0, 0, N * heads * Ch * Ch * HW, 0, 0});
    out.push_back({join_path(p, "out_pw"), C * C, C, N * C * C * HW, 0, 0});
  }
};

// Standard token attention along the depth axis of the transverse-pooled
// sequence. Input (N, C, D); the attention map is (D x D) per head.
template <typename R>
struct ThroughplaneTokenAttention {
  int channels = 0;
  int heads = 1;
  Tensor<R> q_pw_w, q_pw_b, q_dw_w, q_dw_b;
  Tensor<R> k_pw_w, k_pw_b, k_dw_w, k_dw_b;
  Tensor<R> v_pw_w, v_pw_b, v_dw_w, v_dw_b;
  Tensor<R> out_w, out_b;

  ThroughplaneTokenAttention() = default;
  ThroughplaneTokenAttention(int C, int heads_, Rng& rng) : channels(C), heads(heads_) {
    if (heads <= 0 || C % heads != 0)
      throw ConfigError("through-plane head count " + std::to_string(heads) +
                        " must divide channel count " + std::to_string(C));
    auto pw = [&] { return unit_uniform<R>({C, C}, C, rng); };
    auto dw = [&] { return unit_uniform<R>({C, 3}, 3, rng); };
    q_pw_w = pw(); q_pw_b = zero_param<R>({C}); q_dw_w = dw(); q_dw_b = zero_param<R>({C});
    k_pw_w = pw(); k_pw_b = zero_param<R>({C}); k_dw_w = dw(); k_dw_b = zero_param<R>({C});
    v_pw_w = pw(); v_pw_b = zero_param<R>({C}); v_dw_w = dw(); v_dw_b = zero_param<R>({C});
    out_w = unit_uniform<R>({C, C}, C, rng, kResidualInitGain);  // feeds the residual sum
    out_b = zero_param<R>({C});
  }

  Tensor<R> forward(const Tensor<R>& x) const {
    const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2);
    const std::int64_t hd = heads, Ch = C / hd;
    Tensor<R> q, k, v;
    {
      OpScope s("q_pw");
      q = conv_pointwise(x, q_pw_w, q_pw_b);
    }
    {
      OpScope s("q_dw");
      q = dwconv1d(q, q_dw_w, q_dw_b);
    }
    {
      OpScope s("k_pw");
      k = conv_pointwise(x, k_pw_w, k_pw_b);
    }
    {
      OpScope s("k_dw");
      k = dwconv1d(k, k_dw_w, k_dw_b);
    }
    {
      OpScope s("v_pw");
      v = conv_pointwise(x, v_pw_w, v_pw_b);
    }
    {
      OpScope s("v_dw");
      v = dwconv1d(v, v_dw_w, v_dw_b);
    }
    q = reshape(q, {N * hd, Ch, D});
    k = reshape(k, {N * hd, Ch, D});
    v = reshape(v, {N * hd, Ch, D});
    Tensor<R> scores;
    {
      OpScope s("attn_map");
      scores = bmm(q, k, true, false);  // (N*h, D, D), rows indexed by query slice
    }
    // Fixed scale: the key length is the full depth.
    scores = scale(scores, static_cast<R>(1.0 / std::sqrt(static_cast<double>(D))));
    Tensor<R> attn = softmax(scores, 2);  // rows sum to 1
    Tensor<R> mixed;
    {
      OpScope s("attn_apply");
      mixed = bmm(v, attn, false, true);  // (N*h, Ch, D)
    }
    mixed = reshape(mixed, {N, C, D});
    OpScope s("out_pw");
    return conv_pointwise(mixed, out_w, out_b);
  }

  // Row-stochastic (query-major) attention map: (N*heads, D, D).
  Tensor<R> attention_map(const Tensor<R>& x) const {
    const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2);
    const std::int64_t hd = heads, Ch = C / hd;
    Tensor<R> q = dwconv1d(conv_pointwise(x, q_pw_w, q_pw_b), q_dw_w, q_dw_b);
    Tensor<R> k = dwconv1d(conv_pointwise(x, k_pw_w, k_pw_b), k_dw_w, k_dw_b);
    Tensor<R> scores = bmm(reshape(q, {N * hd, Ch, D}), reshape(k, {N * hd, Ch, D}), true, false);
    scores = scale(scores, static_cast<R>(1.0 / std::sqrt(static_cast<double>(D))));
    return softmax(scores, 2);
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    ps.add(p + ".q_pw.w", q_pw_w); ps.add(p + ".q_pw.b", q_pw_b);
    ps.add(p + ".q_dw.w", q_dw_w); ps.add(p + ".q_dw.b", q_dw_b);
    ps.add(p + ".k_pw.w", k_pw_w); ps.add(p + ".k_pw.b", k_pw_b);
    ps.add(p + ".k_dw.w", k_dw_w); ps.add(p + ".k_dw.b", k_dw_b);
    ps.add(p + ".v_pw.w", v_pw_w); ps.add(p + ".v_pw.b", v_pw_b);
    ps.add(p + ".v_dw.w", v_dw_w); ps.add(p + ".v_dw.b", v_dw_b);
    ps.add(p + ".out_pw.w", out_w); ps.add(p + ".out_pw.b", out_b);
  }

  void describe(const std::string& p, std::int64_t N, std::int64_t D, LayerEntries& out) const {
    const std::int64_t C = channels, Ch = C / heads;
    for (const char* name : {"q_pw", "k_pw", "v_pw"})
      out.push_back({join_path(p, name), C * C, C, N * C * C * D, 0, 0});
    for (const char* name : {"q_dw", "k_dw", "v_dw"})
      out.push_back({join_path(p, name), C * 3, C, N * C * 3 * D, 0, 0});
    out.push_back({join_path(p, "attn_map"), 0, 0, N * heads * D * Ch * D, 0, 0});
    out.push_back({join_path(p, "attn_apply"), 0, 0, N * heads * Ch * D * D, 0, 0});
    out.push_back({join_path(p, "out_pw"), C * C, C, N * C * C * D, 0, 0});
  }
};

// Attention block fusing the in-plane and through-plane branches around a
// residual. The branch outputs live on reduced grids and are broadcast back
// over the pooled axes before addition:
//   parallel:  y = x + over_depth(inplane(x)) + over_plane(throughplane(x))
//   cascaded:  t = x + over_depth(inplane(x)); y = t + over_plane(throughplane(t))
// Disabled branches contribute zero; a bypassed block is the identity and
// owns no parameters.
template <typename R>
struct DualAttentionBlock {
  AttentionConfig cfg;
  int channels = 0;
  std::optional<InplaneChannelAttention<R>> inplane;
  std::optional<ThroughplaneTokenAttention<R>> throughplane;

  DualAttentionBlock() = default;
  DualAttentionBlock(int C, int heads_in, int heads_th, const AttentionConfig& cfg_, Rng& rng)
      : cfg(cfg_), channels(C) {
    if (cfg.bypass) return;
    if (!cfg.enable_inplane && !cfg.enable_throughplane)
      throw ConfigError("attention block with both branches disabled must be bypassed");
    if (cfg.enable_inplane) inplane.emplace(C, heads_in, rng);
    if (cfg.enable_throughplane) throughplane.emplace(C, heads_th, rng);
  }

  Tensor<R> forward(const Tensor<R>& x) const {
    if (cfg.bypass) return x;
    const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), H = x.extent(3),
                       W = x.extent(4);
    // Branch contributions in broadcast-ready singleton form.
    auto inplane_term = [&](const Tensor<R>& base) {
      OpScope s("in");
      Tensor<R> pooled = gap_through(base);
      if (cfg.pre_norm) pooled = detail::standardize_channels(pooled);
      return reshape(inplane->forward(pooled), {N, C, 1, H, W});
    };
    auto throughplane_term = [&](const Tensor<R>& base) {
      OpScope s("th");
      Tensor<R> pooled = gap_inplane(base);
      if (cfg.pre_norm) pooled = detail::standardize_channels(pooled);
      return reshape(throughplane->forward(pooled), {N, C, D, 1, 1});
    };
    Tensor<R> y = x;
    if (cfg.fusion == Fusion::kParallel) {
      if (cfg.enable_inplane) y = broadcast_add(y, inplane_term(x), {2});
      if (cfg.enable_throughplane) y = broadcast_add(y, throughplane_term(x), {3, 4});
    } else {
      if (cfg.enable_inplane) y = broadcast_add(y, inplane_term(y), {2});
      if (cfg.enable_throughplane) y = broadcast_add(y, throughplane_term(y), {3, 4});
    }
    return y;
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    if (inplane) inplane->params(ps, p + ".in");
    if (throughplane) throughplane->params(ps, p + ".th");
  }

  void describe(const std::string& p, std::int64_t N, std::int64_t D, std::int64_t H,
                std::int64_t W, LayerEntries& out) const {
    if (cfg.bypass) return;
    if (inplane) inplane->describe(join_path(p, "in"), N, H, W, out);
    if (throughplane) throughplane->describe(join_path(p, "th"), N, D, out);
  }
};

}  // namespace lit
