#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "litformer/axial_attention.hpp"
#include "litformer/factored_ffn.hpp"

namespace lit {

// Architectural hyperparameters. The defaults are the full-scale model; the
// desk configs shrink base_channels (and levels for gradient checking).
struct ModelConfig {
  int base_channels = 64;
  int levels = 4;
  std::vector<int> heads_inplane = {1, 2, 4, 8};
  int heads_throughplane = 2;
  double depth_scale = 2.0;  // longitudinal super-resolution factor
  bool align_corners = true;
  AttentionConfig attn;
  FfnConfig ffn;

  int level_channels(int level) const {  // level is 1-based
    return base_channels << (level - 1);
  }

  void validate() const {
    if (base_channels <= 0) throw ConfigError("base_channels must be positive");
    if (levels < 2) throw ConfigError("at least 2 levels required");
    if (static_cast<int>(heads_inplane.size()) < levels)
      throw ConfigError("heads_inplane needs one entry per level");
    if (depth_scale < 1.0) throw ConfigError("depth_scale must be >= 1");
    if (!attn.bypass && !attn.enable_inplane && !attn.enable_throughplane)
      throw ConfigError("enable at least one attention branch or bypass the blocks");
  }
};

// The eMSM-bypassed ablation: every attention block is a pure residual.
inline ModelConfig unet_variant(ModelConfig cfg) {
  cfg.attn.bypass = true;
  return cfg;
}

// One encoder/decoder stage: attention block followed by the feed-forward
// block that owns any channel change.
template <typename R>
struct LitBlock {
  DualAttentionBlock<R> attn;
  FactoredFfnBlock<R> ffn;

  LitBlock() = default;
  LitBlock(int ci, int co, int heads_in, int heads_th, const AttentionConfig& acfg,
           const FfnConfig& fcfg, Rng& rng)
      : attn(ci, heads_in, heads_th, acfg, rng), ffn(ci, co, fcfg, rng) {}

  Tensor<R> forward(const Tensor<R>& x) const {
    Tensor<R> mid;
    {
      OpScope s("attn");
      mid = attn.forward(x);
    }
    OpScope s("ffn");
    return ffn.forward(mid);
  }

  void params(ParamSet<R>& ps, const std::string& p) {
    attn.params(ps, p + ".attn");
    ffn.params(ps, p + ".ffn");
  }

  void describe(const std::string& p, std::int64_t N, std::int64_t D, std::int64_t H,
                std::int64_t W, LayerEntries& out) const {
    attn.describe(join_path(p, "attn"), N, D, H, W, out);
    ffn.describe(join_path(p, "ffn"), N, D, H, W, out);
  }
};

// U-shaped restoration network for joint transverse denoising and
// longitudinal deblurring. Depth is preserved through every stage; the
// single depth change is the final interpolation by depth_scale.
//
//   stem ffn (1 -> C)
//   encoder: LIT block per level, transverse 2x2 max-pool between levels,
//            channels C, 2C, ... up to 2^(levels-1) C at H / 2^(levels-1)
//   decoder: bilinear transverse upsample + pointwise halving, LIT block,
//            additive skip from the matching encoder level
//   fuse ffn (C -> C) plus the global residual from the stem features
//   depth upsample by depth_scale, head ffn (C -> 1)
template <typename R>
class LitFormer {
 public:
  LitFormer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const FfnConfig& f = cfg_.ffn;
    const AttentionConfig& a = cfg_.attn;
    const int th = cfg_.heads_throughplane;
    stem_ = FactoredFfnBlock<R>(1, cfg_.base_channels, f, rng);
    for (int level = 1; level <= cfg_.levels; ++level) {
      const int ci = cfg_.level_channels(std::max(1, level - 1));
      const int co = cfg_.level_channels(level);
      encoder_.emplace_back(ci, co, cfg_.heads_inplane[static_cast<std::size_t>(level - 1)], th, a,
                            f, rng);
    }
    for (int level = cfg_.levels - 1; level >= 1; --level) {
      const int c = cfg_.level_channels(level);
      up_w_.push_back(unit_uniform<R>({c, 2 * c}, 2 * c, rng));
      up_b_.push_back(zero_param<R>({c}));
      decoder_.emplace_back(c, c, cfg_.heads_inplane[static_cast<std::size_t>(level - 1)], th, a, f,
                            rng);
    }
    fuse_ = FactoredFfnBlock<R>(cfg_.base_channels, cfg_.base_channels, f, rng);
    head_ = FactoredFfnBlock<R>(cfg_.base_channels, 1, f, rng);
    register_params();
  }

  // x: (N, 1, D, H, W) -> (N, 1, round(depth_scale * D), H, W).
  // When trace is given, named intermediate shapes are appended to it.
  Tensor<R> forward(const Tensor<R>& x,
                    std::vector<std::pair<std::string, Shape>>* trace = nullptr) const {
    check_input(x);
    auto record = [&](const char* name, const Tensor<R>& t) {
      if (trace) trace->emplace_back(name, t.shape());
    };
    Tensor<R> stem_out;
    {
      OpScope s("stem");
      stem_out = stem_.forward(x);
    }
    record("stem", stem_out);
    std::vector<Tensor<R>> skips;
    Tensor<R> cur = stem_out;
    for (int i = 0; i < cfg_.levels; ++i) {
      OpScope s("enc" + std::to_string(i + 1));
      cur = encoder_[static_cast<std::size_t>(i)].forward(cur);
      record(("enc" + std::to_string(i + 1)).c_str(), cur);
      if (i + 1 < cfg_.levels) {
        skips.push_back(cur);
        cur = maxpool_inplane(cur);
      }
    }
    record("latent", cur);
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      OpScope s("dec" + std::to_string(decoder_.size() - i));
      cur = upsample_transverse(cur, cfg_.align_corners);
      {
        OpScope s2("up_pw");
        cur = conv_pointwise(cur, up_w_[i], up_b_[i]);
      }
      cur = decoder_[i].forward(cur);
      cur = add(cur, skips[skips.size() - 1 - i]);
      record(("dec" + std::to_string(decoder_.size() - i)).c_str(), cur);
    }
    Tensor<R> fused;
    {
      OpScope s("fuse");
      fused = fuse_.forward(cur);
    }
    fused = add(fused, stem_out);  // global residual
    record("fused", fused);
    Tensor<R> up = upsample_depth(fused, cfg_.depth_scale, cfg_.align_corners);
    record("depth_up", up);
    OpScope s("head");
    Tensor<R> out = head_.forward(up);
    record("out", out);
    return out;
  }

  ParamSet<R>& params() { return params_; }
  const ParamSet<R>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  // Analytic per-layer parameter and MAC entries for a given input shape.
  LayerEntries describe(const Shape& in) const {
    if (in.size() != 5 || in[1] != 1) throw ShapeError("describe expects an (N,1,D,H,W) shape");
    const std::int64_t N = in[0], D = in[2];
    std::int64_t H = in[3], W = in[4];
    LayerEntries out;
    stem_.describe("stem", N, D, H, W, out);
    for (int i = 0; i < cfg_.levels; ++i) {
      encoder_[static_cast<std::size_t>(i)].describe("enc" + std::to_string(i + 1), N, D, H, W, out);
      if (i + 1 < cfg_.levels) {
        H /= 2;
        W /= 2;
      }
    }
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      H *= 2;
      W *= 2;
      const std::string p = "dec" + std::to_string(decoder_.size() - i);
      const std::int64_t co = up_w_[i].extent(0), ci = up_w_[i].extent(1);
      out.push_back({join_path(p, "up_pw"), ci * co, co, N * ci * co * D * H * W, 0, 0});
      decoder_[i].describe(p, N, D, H, W, out);
    }
    fuse_.describe("fuse", N, D, H, W, out);
    const auto Do = static_cast<std::int64_t>(std::llround(cfg_.depth_scale * static_cast<double>(D)));
    head_.describe("head", N, Do, H, W, out);
    return out;
  }

  // Direct access for structural tests.
  FactoredFfnBlock<R>& stem() { return stem_; }
  FactoredFfnBlock<R>& fuse() { return fuse_; }
  FactoredFfnBlock<R>& head() { return head_; }
  std::vector<LitBlock<R>>& encoder() { return encoder_; }
  std::vector<LitBlock<R>>& decoder() { return decoder_; }
  Tensor<R>& up_weight(std::size_t i) { return up_w_[i]; }

 private:
  void check_input(const Tensor<R>& x) const {
    if (x.rank() != 5 || x.extent(1) != 1)
      throw ShapeError("network input must be (N, 1, D, H, W), got " + shape_str(x.shape()));
    const std::int64_t div = std::int64_t(1) << (cfg_.levels - 1);
    if (x.extent(3) % div != 0 || x.extent(4) % div != 0)
      throw ConfigError("transverse extents " + std::to_string(x.extent(3)) + "x" +
                        std::to_string(x.extent(4)) + " must be divisible by " + std::to_string(div));
  }

  void register_params() {
    stem_.params(params_, "stem");
    for (int i = 0; i < cfg_.levels; ++i)
      encoder_[static_cast<std::size_t>(i)].params(params_, "enc" + std::to_string(i + 1));
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::string p = "dec" + std::to_string(decoder_.size() - i);
      params_.add(p + ".up_pw.w", up_w_[i]);
      params_.add(p + ".up_pw.b", up_b_[i]);
      decoder_[i].params(params_, p);
    }
    fuse_.params(params_, "fuse");
    head_.params(params_, "head");
  }

  ModelConfig cfg_;
  FactoredFfnBlock<R> stem_, fuse_, head_;
  std::vector<LitBlock<R>> encoder_, decoder_;
  std::vector<Tensor<R>> up_w_, up_b_;
  ParamSet<R> params_;
};

}  // namespace lit
