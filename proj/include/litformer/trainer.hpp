#pragma once

#include <chrono>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "litformer/checkpoint.hpp"
#include "litformer/metrics.hpp"
#include "litformer/network.hpp"
#include "litformer/objectives.hpp"
#include "litformer/optim.hpp"
#include "litformer/run_config.hpp"
#include "litformer/volume.hpp"

namespace lit {

struct RunRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0;
  double charbonnier = 0;
  double ssim = 0;
  double total = 0;
  double wall_ms = 0;

  std::string line() const {
    std::ostringstream os;
    os.precision(8);
    os << "step=" << step << " epoch=" << epoch << " lr=" << lr << " charb=" << charbonnier
       << " ssim=" << ssim << " total=" << total << " wall_ms=" << wall_ms;
    return os.str();
  }
};

struct TrainResult {
  double first_charbonnier = 0;
  double final_charbonnier = 0;
  std::int64_t steps = 0;
  std::vector<RunRecord> records;
};

template <typename R>
class AdamW;

template <typename R>
void save_with_config(const std::string& path, const LitFormer<R>& model, const AdamW<R>* opt,
                      const KvConfig* config_echo);

// Model parameters (and optionally optimizer moments) to a checkpoint.
template <typename R>
Checkpoint snapshot(const LitFormer<R>& model, const AdamW<R>* opt = nullptr) {
  Checkpoint ckpt;
  for (const auto& [name, t] : model.params().items) {
    std::vector<float> data(t.value().begin(), t.value().end());
    ckpt.add("param/" + name, t.shape(), std::move(data));
  }
  if (opt) {
    std::map<std::string, std::vector<R>> state;
    opt->export_state(state, model.params());
    for (auto& [name, data] : state) {
      std::vector<float> f(data.begin(), data.end());
      const auto n = static_cast<std::int64_t>(f.size());
      ckpt.add(name, {n}, std::move(f));
    }
    ckpt.step = opt->steps_taken();
  }
  return ckpt;
}

template <typename R>
void restore_params(LitFormer<R>& model, const Checkpoint& ckpt) {
  for (auto& [name, t] : model.params().items) {
    auto it = ckpt.entries.find("param/" + name);
    if (it == ckpt.entries.end()) throw ContractError("checkpoint is missing parameter " + name);
    if (static_cast<std::int64_t>(it->second.second.size()) != t.size())
      throw ContractError("checkpoint parameter " + name + " has wrong size");
    for (std::size_t i = 0; i < t.value().size(); ++i)
      t.value()[i] = static_cast<R>(it->second.second[i]);
  }
}

template <typename R>
void restore_optimizer(AdamW<R>& opt, const LitFormer<R>& model, const Checkpoint& ckpt) {
  std::map<std::string, std::vector<R>> state;
  for (const auto& [name, entry] : ckpt.entries) {
    if (name.rfind("adam_", 0) == 0)
      state[name] = std::vector<R>(entry.second.begin(), entry.second.end());
  }
  opt.import_state(state, model.params(), ckpt.step);
}

// Normalized network input batch from HU patches.
template <typename R>
Tensor<R> batch_from_patches(const std::vector<const PatchPair*>& batch, bool target) {
  const auto n = static_cast<std::int64_t>(batch.size());
  const std::int64_t d = target ? batch[0]->d * batch[0]->depth_factor : batch[0]->d;
  const std::int64_t h = batch[0]->h, w = batch[0]->w;
  std::vector<R> data(static_cast<std::size_t>(n * d * h * w));
  std::vector<float> unit(static_cast<std::size_t>(d * h * w));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& src = target ? batch[static_cast<std::size_t>(i)]->target
                             : batch[static_cast<std::size_t>(i)]->input;
    normalize_hu(src.data(), unit.data(), d * h * w);
    for (std::int64_t j = 0; j < d * h * w; ++j)
      data[static_cast<std::size_t>(i * d * h * w + j)] = static_cast<R>(unit[static_cast<std::size_t>(j)]);
  }
  return Tensor<R>::from({n, 1, d, h, w}, std::move(data));
}

// Deterministic training loop. Batches are scheduled statelessly from
// (seed, step) so a resumed run replays the identical stream.
template <typename R>
TrainResult train(LitFormer<R>& model, const std::vector<PatchPair>& patches,
                  const TrainConfig& tcfg, const LossConfig& lcfg, AdamW<R>& opt,
                  std::ostream* log = nullptr, const std::string& checkpoint_dir = "",
                  const KvConfig* config_echo = nullptr, std::int64_t stop_after_steps = 0) {
  tcfg.validate();
  if (patches.empty()) throw ContractError("training requires at least one patch pair");
  const auto steps_per_epoch = static_cast<std::int64_t>(
      (patches.size() + static_cast<std::size_t>(tcfg.batch) - 1) / static_cast<std::size_t>(tcfg.batch));
  std::int64_t total_steps = steps_per_epoch * tcfg.epochs;
  const std::int64_t warmup_steps = steps_per_epoch * tcfg.warmup_epochs;
  TrainResult result;
  const std::int64_t start_step = opt.steps_taken();
  std::int64_t end_step = total_steps;
  if (stop_after_steps > 0) end_step = std::min(end_step, start_step + stop_after_steps);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t step = start_step; step < end_step; ++step) {
    const double lr = lr_at(step, total_steps, warmup_steps, tcfg.lr_max, tcfg.lr_min);
    // patch indices for this step, shuffled per epoch from the seed
    std::vector<const PatchPair*> batch;
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::int64_t epoch = step / steps_per_epoch;
    Rng shuffle_rng = Rng(tcfg.seed).fork(0x5u).fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    const std::int64_t in_epoch = step % steps_per_epoch;
    for (std::int64_t b = 0; b < tcfg.batch; ++b) {
      const std::size_t idx = static_cast<std::size_t>((in_epoch * tcfg.batch + b)) % order.size();
      batch.push_back(&patches[order[idx]]);
    }
    // augmented copies, chosen from (seed, step, slot)
    std::vector<PatchPair> augmented;
    augmented.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      PatchPair p = *batch[b];
      augment(p, Rng(tcfg.seed).fork(0xAu).fork(static_cast<std::uint64_t>(step)).fork(b).next_u64());
      augmented.push_back(std::move(p));
    }
    std::vector<const PatchPair*> views;
    for (const auto& p : augmented) views.push_back(&p);
    Tensor<R> input = batch_from_patches<R>(views, false);
    Tensor<R> target = batch_from_patches<R>(views, true);

    model.params().zero_grad();
    LossTerms terms;
    Tensor<R> loss;
    try {
      Tensor<R> pred = model.forward(input);
      loss = total_loss(pred, target, lcfg, &terms);
      backward(loss);
    } catch (const NumericsError& e) {
      throw NumericsError("training aborted at step " + std::to_string(step + 1) + ": " + e.what());
    }
    opt.step(model.params(), lr);

    RunRecord rec;
    rec.step = step + 1;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.charbonnier = terms.charbonnier;
    rec.ssim = terms.ssim;
    rec.total = terms.total;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (step == start_step) result.first_charbonnier = terms.charbonnier;
    result.final_charbonnier = terms.charbonnier;
    if (log && (tcfg.log_every > 0 && (rec.step % tcfg.log_every == 0 || rec.step == total_steps)))
      (*log) << rec.line() << "\n";
    result.records.push_back(rec);
    if (!checkpoint_dir.empty() && tcfg.checkpoint_every > 0 &&
        rec.step % tcfg.checkpoint_every == 0 && rec.step != total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_step%06lld.litckpt",
                    static_cast<long long>(rec.step));
      save_with_config(checkpoint_dir + name, model, &opt, config_echo);
    }
  }
  result.steps = end_step - start_step;
  if (!checkpoint_dir.empty())
    save_with_config(checkpoint_dir + "/checkpoint_final.litckpt", model, &opt, config_echo);
  return result;
}

template <typename R>
void save_with_config(const std::string& path, const LitFormer<R>& model, const AdamW<R>* opt,
                      const KvConfig* config_echo) {
  write_checkpoint(path, snapshot(model, opt));
  KvConfig kv = config_echo ? *config_echo : KvConfig();
  model_config_to(model.config(), kv);
  kv.save(path + ".cfg");
}

// Restored volume for one degraded input, on the HU scale.
template <typename R>
Volume run_model(const LitFormer<R>& model, const Volume& degraded) {
  NoGradGuard ng;
  std::vector<float> unit = normalize_hu(degraded);
  std::vector<R> data(unit.begin(), unit.end());
  Tensor<R> x = Tensor<R>::from({1, 1, degraded.d, degraded.h, degraded.w}, std::move(data));
  Tensor<R> y = model.forward(x);
  std::vector<float> out(y.value().begin(), y.value().end());
  return denormalize_hu(out, y.extent(2), y.extent(3), y.extent(4),
                        {degraded.spacing[0] / static_cast<float>(model.config().depth_scale),
                         degraded.spacing[1], degraded.spacing[2]});
}

// Depth-only trilinear baseline: normalize, interpolate, denormalize.
inline Volume trilinear_baseline(const Volume& degraded, double depth_scale, bool align_corners) {
  NoGradGuard ng;
  std::vector<float> unit = normalize_hu(degraded);
  Tensor<float> x =
      Tensor<float>::from({1, 1, degraded.d, degraded.h, degraded.w}, std::move(unit));
  Tensor<float> y = upsample_depth(x, depth_scale, align_corners);
  std::vector<float> out = y.value();
  return denormalize_hu(out, y.extent(2), y.extent(3), y.extent(4),
                        {degraded.spacing[0] / static_cast<float>(depth_scale),
                         degraded.spacing[1], degraded.spacing[2]});
}

// Metrics on the normalized scale for a (restored, reference) pair.
inline MetricReport metrics_for(const std::string& id, const Volume& restored,
                                const Volume& reference) {
  if (restored.size() != reference.size())
    throw ContractError("metrics: volume extents disagree for " + id);
  std::vector<float> a = normalize_hu(restored), b = normalize_hu(reference);
  std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
  return evaluate_pair(id, da, db, reference.d, reference.h, reference.w);
}

}  // namespace lit
