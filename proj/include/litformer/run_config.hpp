#pragma once

#include <string>

#include "litformer/config.hpp"
#include "litformer/network.hpp"
#include "litformer/objectives.hpp"
#include "litformer/optim.hpp"

namespace lit {

// Synthetic-dataset and patching parameters.
struct DataConfig {
  int volumes = 2;
  std::int64_t depth = 16, height = 64, width = 64;  // full-resolution grid
  int depth_factor = 2;
  double noise_sigma_hu = 25.0;
  std::int64_t patch_d = 8, patch_h = 32, patch_w = 32;  // degraded-grid patch
  std::int64_t stride_d = 8, stride_hw = 32;
  int max_patches = 0;  // 0 keeps every patch

  void validate() const {
    if (volumes <= 0) throw ConfigError("data.volumes must be positive");
    if (depth % depth_factor != 0) throw ConfigError("data.depth_factor must divide data.depth");
  }
};

inline ModelConfig model_config_from(const KvConfig& kv) {
  ModelConfig m;
  m.base_channels = static_cast<int>(kv.get_int("model.base_channels", m.base_channels));
  m.levels = static_cast<int>(kv.get_int("model.levels", m.levels));
  std::vector<std::int64_t> heads_default(m.heads_inplane.begin(), m.heads_inplane.end());
  auto heads = kv.get_int_list("model.heads_inplane", heads_default);
  m.heads_inplane.assign(heads.begin(), heads.end());
  m.heads_throughplane =
      static_cast<int>(kv.get_int("model.heads_throughplane", m.heads_throughplane));
  m.depth_scale = kv.get_double("model.depth_scale", m.depth_scale);
  m.align_corners = kv.get_bool("model.align_corners", m.align_corners);
  m.attn.enable_inplane = kv.get_bool("model.attn.inplane", m.attn.enable_inplane);
  m.attn.enable_throughplane = kv.get_bool("model.attn.throughplane", m.attn.enable_throughplane);
  m.attn.bypass = kv.get_bool("model.attn.bypass", m.attn.bypass);
  m.attn.pre_norm = kv.get_bool("model.attn.pre_norm", m.attn.pre_norm);
  m.attn.fusion = fusion_from_string(kv.get_string("model.attn.fusion", "parallel"));
  m.ffn.fusion = fusion_from_string(kv.get_string("model.ffn.fusion", "parallel"));
  m.ffn.nonlinearity = kv.get_bool("model.ffn.nonlinearity", m.ffn.nonlinearity);
  m.validate();
  return m;
}

inline void model_config_to(const ModelConfig& m, KvConfig& kv) {
  kv.set_int("model.base_channels", m.base_channels);
  kv.set_int("model.levels", m.levels);
  std::string heads;
  for (std::size_t i = 0; i < m.heads_inplane.size(); ++i) {
    if (i) heads += ",";
    heads += std::to_string(m.heads_inplane[i]);
  }
  kv.set("model.heads_inplane", heads);
  kv.set_int("model.heads_throughplane", m.heads_throughplane);
  kv.set_double("model.depth_scale", m.depth_scale);
  kv.set_bool("model.align_corners", m.align_corners);
  kv.set_bool("model.attn.inplane", m.attn.enable_inplane);
  kv.set_bool("model.attn.throughplane", m.attn.enable_throughplane);
  kv.set_bool("model.attn.bypass", m.attn.bypass);
  kv.set_bool("model.attn.pre_norm", m.attn.pre_norm);
  kv.set("model.attn.fusion", m.attn.fusion == Fusion::kParallel ? "parallel" : "cascaded");
  kv.set("model.ffn.fusion", m.ffn.fusion == Fusion::kParallel ? "parallel" : "cascaded");
  kv.set_bool("model.ffn.nonlinearity", m.ffn.nonlinearity);
}

inline TrainConfig train_config_from(const KvConfig& kv) {
  TrainConfig t;
  t.epochs = static_cast<int>(kv.get_int("train.epochs", t.epochs));
  t.lr_max = kv.get_double("train.lr_max", t.lr_max);
  t.lr_min = kv.get_double("train.lr_min", t.lr_min);
  t.warmup_epochs = static_cast<int>(kv.get_int("train.warmup_epochs", t.warmup_epochs));
  t.beta1 = kv.get_double("train.beta1", t.beta1);
  t.beta2 = kv.get_double("train.beta2", t.beta2);
  t.weight_decay = kv.get_double("train.weight_decay", t.weight_decay);
  t.batch = static_cast<int>(kv.get_int("train.batch", t.batch));
  t.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 0));
  t.log_every = static_cast<int>(kv.get_int("train.log_every", t.log_every));
  t.checkpoint_every = static_cast<int>(kv.get_int("train.checkpoint_every", t.checkpoint_every));
  t.validate();
  return t;
}

inline LossConfig loss_config_from(const KvConfig& kv) {
  LossConfig l;
  l.epsilon = kv.get_double("loss.epsilon", l.epsilon);
  l.lambda = kv.get_double("loss.lambda", l.lambda);
  l.mode = kv.get_string("loss.mode", l.mode);
  l.validate();
  return l;
}

inline DataConfig data_config_from(const KvConfig& kv) {
  DataConfig d;
  d.volumes = static_cast<int>(kv.get_int("data.volumes", d.volumes));
  d.depth = kv.get_int("data.depth", d.depth);
  d.height = kv.get_int("data.height", d.height);
  d.width = kv.get_int("data.width", d.width);
  d.depth_factor = static_cast<int>(kv.get_int("data.depth_factor", d.depth_factor));
  d.noise_sigma_hu = kv.get_double("data.noise_sigma_hu", d.noise_sigma_hu);
  d.patch_d = kv.get_int("data.patch_d", d.patch_d);
  d.patch_h = kv.get_int("data.patch_h", d.patch_h);
  d.patch_w = kv.get_int("data.patch_w", d.patch_w);
  d.stride_d = kv.get_int("data.stride_d", d.patch_d);
  d.stride_hw = kv.get_int("data.stride_hw", d.stride_hw);
  d.max_patches = static_cast<int>(kv.get_int("data.max_patches", d.max_patches));
  d.validate();
  return d;
}

}  // namespace lit
