// Command-line front end: dataset simulation, training, evaluation,
// gradient checking, and complexity analysis.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "litformer/complexity.hpp"
#include "litformer/gradcheck.hpp"
#include "litformer/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out_dir = ".";
  std::string checkpoint_path;
  bool deterministic = true;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool wants_checkpoint = false) {
  cmd->add_option("--config", args.config_path, "key/value configuration file");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--out", args.out_dir, "output directory");
  if (wants_checkpoint)
    cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint to load or resume from");
  cmd->add_flag("--deterministic", args.deterministic,
                "single-threaded, bit-reproducible execution (always on)");
}

lit::KvConfig load_config(const CommonArgs& args) {
  lit::KvConfig kv;
  if (!args.config_path.empty()) kv = lit::KvConfig::load(args.config_path);
  if (args.seed) kv.set_int("train.seed", *args.seed);
  if (args.seed) kv.set_int("data.seed", *args.seed);
  return kv;
}

std::uint64_t data_seed(const lit::KvConfig& kv) {
  return static_cast<std::uint64_t>(kv.get_int("data.seed", 0));
}

// manifest lines: <degraded path> TAB <full path>
std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw lit::ContractError("cannot open manifest " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  const fs::path base = fs::path(path).parent_path();
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw lit::FormatError("manifest line without a tab separator: " + line, 0);
    fs::path ldr = line.substr(0, tab), ndr = line.substr(tab + 1);
    if (ldr.is_relative()) ldr = base / ldr;
    if (ndr.is_relative()) ndr = base / ndr;
    pairs.emplace_back(ldr.string(), ndr.string());
  }
  if (pairs.empty()) throw lit::ContractError("manifest " + path + " lists no volume pairs");
  return pairs;
}

int cmd_simulate(const CommonArgs& args) {
  lit::KvConfig kv = load_config(args);
  lit::DataConfig dcfg = lit::data_config_from(kv);
  const std::uint64_t seed = data_seed(kv);
  fs::create_directories(args.out_dir);
  std::ofstream manifest(fs::path(args.out_dir) / "manifest.txt", std::ios::trunc);
  for (int i = 0; i < dcfg.volumes; ++i) {
    lit::Rng fork = lit::Rng(seed).fork(static_cast<std::uint64_t>(i));
    lit::Volume full = lit::make_phantom(fork.next_u64(), dcfg.depth, dcfg.height, dcfg.width);
    lit::DegradeConfig deg;
    deg.depth_factor = dcfg.depth_factor;
    deg.noise_sigma_hu = dcfg.noise_sigma_hu;
    deg.seed = fork.next_u64();
    lit::Volume degraded = lit::degrade(full, deg);
    char ldr[32], ndr[32];
    std::snprintf(ldr, sizeof(ldr), "ldr_%03d.vol", i);
    std::snprintf(ndr, sizeof(ndr), "ndr_%03d.vol", i);
    lit::write_volume((fs::path(args.out_dir) / ldr).string(), degraded);
    lit::write_volume((fs::path(args.out_dir) / ndr).string(), full);
    manifest << ldr << "\t" << ndr << "\n";
  }
  std::cout << "wrote " << dcfg.volumes << " volume pairs (full " << dcfg.depth << "x"
            << dcfg.height << "x" << dcfg.width << ", depth factor " << dcfg.depth_factor
            << ", noise " << dcfg.noise_sigma_hu << " HU) to " << args.out_dir << "\n";
  return 0;
}

std::vector<lit::PatchPair> gather_patches(const lit::DataConfig& dcfg,
                                           const std::string& manifest_path, std::uint64_t seed) {
  auto pairs = read_manifest(manifest_path);
  std::vector<lit::PatchPair> patches;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    lit::Volume degraded = lit::read_volume(pairs[i].first);
    lit::Volume full = lit::read_volume(pairs[i].second);
    auto from_pair = lit::extract_patches(degraded, full, dcfg.patch_d, dcfg.patch_h, dcfg.patch_w,
                                          dcfg.stride_d, dcfg.stride_hw,
                                          lit::Rng(seed).fork(i).next_u64());
    for (auto& p : from_pair) patches.push_back(std::move(p));
  }
  // one more deterministic shuffle across volumes, then the optional cap
  lit::Rng rng(lit::Rng(seed).fork(0xBEEF).next_u64());
  for (std::size_t i = patches.size(); i > 1; --i)
    std::swap(patches[i - 1], patches[rng.below(i)]);
  if (dcfg.max_patches > 0 && patches.size() > static_cast<std::size_t>(dcfg.max_patches))
    patches.resize(static_cast<std::size_t>(dcfg.max_patches));
  return patches;
}

int cmd_train(const CommonArgs& args, const std::string& manifest_path) {
  lit::KvConfig kv = load_config(args);
  lit::ModelConfig mcfg = lit::model_config_from(kv);
  lit::TrainConfig tcfg = lit::train_config_from(kv);
  lit::LossConfig lcfg = lit::loss_config_from(kv);
  lit::DataConfig dcfg = lit::data_config_from(kv);
  auto patches = gather_patches(dcfg, manifest_path, tcfg.seed);
  std::cout << "training on " << patches.size() << " patch pairs\n";

  lit::LitFormer<float> model(mcfg, tcfg.seed);
  lit::AdamW<float> opt(tcfg.beta1, tcfg.beta2, tcfg.weight_decay);
  if (!args.checkpoint_path.empty()) {
    lit::Checkpoint ck = lit::read_checkpoint(args.checkpoint_path);
    lit::restore_params(model, ck);
    lit::restore_optimizer(opt, model, ck);
    std::cout << "resumed from " << args.checkpoint_path << " at step " << ck.step << "\n";
  }
  fs::create_directories(args.out_dir);
  std::ofstream log(fs::path(args.out_dir) / "train_log.txt", std::ios::trunc);
  auto result = lit::train(model, patches, tcfg, lcfg, opt, &log, args.out_dir, &kv);
  std::cout << "ran " << result.steps << " steps; charbonnier " << result.first_charbonnier
            << " -> " << result.final_charbonnier << "\n";
  std::cout << "final checkpoint: " << (fs::path(args.out_dir) / "checkpoint_final.litckpt").string()
            << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& manifest_path) {
  lit::KvConfig kv = load_config(args);
  if (args.checkpoint_path.empty()) throw lit::ContractError("eval requires --checkpoint");
  // the config echoed next to the checkpoint pins the architecture
  lit::KvConfig model_kv = kv;
  if (fs::exists(args.checkpoint_path + ".cfg"))
    model_kv = lit::KvConfig::load(args.checkpoint_path + ".cfg");
  lit::ModelConfig mcfg = lit::model_config_from(model_kv);
  lit::LitFormer<float> model(mcfg, 0);
  lit::restore_params(model, lit::read_checkpoint(args.checkpoint_path));

  auto pairs = read_manifest(manifest_path);
  fs::create_directories(args.out_dir);
  std::ofstream metrics(fs::path(args.out_dir) / "metrics.txt", std::ios::trunc);
  lit::ResidualHistogram model_hist, baseline_hist;
  double sum_psnr = 0, sum_rmse = 0, sum_s2 = 0, sum_s3 = 0;
  double base_psnr = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    lit::Volume degraded = lit::read_volume(pairs[i].first);
    lit::Volume full = lit::read_volume(pairs[i].second);
    lit::Volume restored = lit::run_model(model, degraded);
    lit::Volume baseline = lit::trilinear_baseline(degraded, mcfg.depth_scale, mcfg.align_corners);
    const std::string id = fs::path(pairs[i].first).stem().string();
    lit::MetricReport rep = lit::metrics_for(id, restored, full);
    lit::MetricReport base = lit::metrics_for(id + "/trilinear", baseline, full);
    metrics << rep.json_line() << "\n" << base.json_line() << "\n";
    std::cout << std::fixed << std::setprecision(4) << id << "  psnr " << rep.psnr << " (trilinear "
              << base.psnr << ")  rmse[x1e-2] " << rep.rmse * 100 << "  ssim2d " << rep.ssim2d
              << "  ssim3d " << rep.ssim3d << "\n";
    sum_psnr += rep.psnr;
    sum_rmse += rep.rmse;
    sum_s2 += rep.ssim2d;
    sum_s3 += rep.ssim3d;
    base_psnr += base.psnr;
    for (std::size_t v = 0; v < restored.data.size(); ++v) {
      model_hist.add(static_cast<double>(restored.data[v]) - full.data[v]);
      baseline_hist.add(static_cast<double>(baseline.data[v]) - full.data[v]);
    }
  }
  const auto n = static_cast<double>(pairs.size());
  lit::MetricReport mean;
  mean.id = "mean";
  mean.psnr = sum_psnr / n;
  mean.rmse = sum_rmse / n;
  mean.ssim2d = sum_s2 / n;
  mean.ssim3d = sum_s3 / n;
  metrics << mean.json_line() << "\n";
  std::ofstream hist(fs::path(args.out_dir) / "residual_histogram.txt", std::ios::trunc);
  hist << model_hist.to_text("model") << baseline_hist.to_text("trilinear");
  std::cout << "mean psnr " << mean.psnr << " dB vs trilinear " << base_psnr / n << " dB\n";
  std::cout << "wrote " << (fs::path(args.out_dir) / "metrics.txt").string() << " and "
            << (fs::path(args.out_dir) / "residual_histogram.txt").string() << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  lit::KvConfig kv = load_config(args);
  // desk default: micro network in double precision
  lit::ModelConfig mcfg;
  mcfg.base_channels = 4;
  mcfg.levels = 3;
  if (!args.config_path.empty()) mcfg = lit::model_config_from(kv);
  const auto seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 17));
  const std::int64_t d = kv.get_int("gradcheck.depth", 4);
  const std::int64_t h = kv.get_int("gradcheck.height", 16);
  const std::int64_t w = kv.get_int("gradcheck.width", 16);
  const int probes = static_cast<int>(kv.get_int("gradcheck.probes_per_tensor", 2));

  lit::LitFormer<double> net(mcfg, seed);
  lit::Rng rng(seed + 1);
  std::vector<double> xd(static_cast<std::size_t>(d * h * w));
  for (auto& v : xd) v = rng.uniform(0, 1);
  const auto d_out = static_cast<std::int64_t>(std::llround(mcfg.depth_scale * static_cast<double>(d)));
  std::vector<double> td(static_cast<std::size_t>(d_out * h * w));
  for (auto& v : td) v = rng.uniform(0, 1);
  lit::Tensor<double> x = lit::Tensor<double>::from({1, 1, d, h, w}, xd);
  lit::Tensor<double> target = lit::Tensor<double>::from({1, 1, d_out, h, w}, td);
  lit::LossConfig lcfg;
  auto loss_fn = [&]() { return lit::total_loss(net.forward(x), target, lcfg); };
  auto res = lit::gradient_check(net.params(), loss_fn, probes, 1e-5);
  std::cout << "checked " << res.probes << " parameter probes on a " << mcfg.base_channels
            << "-channel " << mcfg.levels << "-level network, input 1x1x" << d << "x" << h << "x"
            << w << "\n";
  std::cout << "max relative error " << res.max_rel_err << " at " << res.worst_param << "["
            << res.worst_index << "]\n";
  const bool ok = res.max_rel_err < 1e-4;
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
  return ok ? 0 : 1;
}

int cmd_analyze(const CommonArgs& args, const std::string& input_shape) {
  lit::KvConfig kv = load_config(args);
  lit::ModelConfig mcfg;  // full scale unless a config says otherwise
  if (!args.config_path.empty()) mcfg = lit::model_config_from(kv);
  lit::Shape input = {1, 1, 16, 64, 64};
  if (!input_shape.empty()) {
    input.clear();
    std::istringstream is(input_shape);
    std::string tok;
    while (std::getline(is, tok, ',')) input.push_back(std::stoll(tok));
    if (input.size() != 5) throw lit::ContractError("--input-shape needs N,C,D,H,W");
  }

  lit::LitFormer<float> full(mcfg, 0);
  lit::LitFormer<float> unet(lit::unet_variant(mcfg), 0);
  auto rep = lit::analyze_model(full, input, "lit-former");
  auto urep = lit::analyze_model(unet, input, "factorized-unet");
  rep.notes.push_back(
      "reported-cost rows assume the published profile input matches this input shape and that "
      "one MAC equals one FLOP unit; neither is stated with the published figures");

  // exact structural verification runs on a small probe input
  {
    lit::ModelConfig probe_cfg = mcfg;
    probe_cfg.base_channels = std::min(mcfg.base_channels, 8);
    lit::LitFormer<float> probe(probe_cfg, 0);
    auto probe_rep = lit::analyze_model(probe, {1, 1, 4, 8, 8}, "probe");
    lit::append_structure_checks(probe_rep, probe);
    for (auto& c : probe_rep.checks) rep.checks.push_back(c);
  }
  lit::append_attention_formula_check<float>(rep, 16, 4, 8, 8, 0);
  lit::append_attention_reduction_note(rep, mcfg.base_channels, input[2], input[3], input[4]);
  // published-figure rows only make sense for the full-scale architecture
  if (mcfg.base_channels == 64 && mcfg.levels == 4)
    lit::append_published_targets(rep, full.params().total_count(), unet.params().total_count(),
                                  static_cast<double>(rep.total_macs));

  std::cout << lit::report_table(urep) << "\n" << lit::report_table(rep);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream js(fs::path(args.out_dir) / "complexity_report.json", std::ios::trunc);
    js << lit::report_json(rep) << "\n";
    std::cout << "wrote " << (fs::path(args.out_dir) / "complexity_report.json").string() << "\n";
  }
  return rep.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D CT restoration toolkit: factorized in-plane/through-plane attention network"};
  app.require_subcommand(1);

  CommonArgs sim_args, train_args, eval_args, grad_args, analyze_args;
  std::string train_manifest, eval_manifest, input_shape;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic paired dataset");
  add_common(sim, sim_args);

  CLI::App* train = app.add_subcommand("train", "train a model on a simulated dataset");
  add_common(train, train_args, true);
  train->add_option("--manifest", train_manifest, "dataset manifest")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint against ground truth");
  add_common(eval, eval_args, true);
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(grad, grad_args);

  CLI::App* analyze = app.add_subcommand("analyze", "parameter/MAC accounting and formula checks");
  add_common(analyze, analyze_args);
  analyze->add_option("--input-shape", input_shape, "N,C,D,H,W for the cost table");

  CLI11_PARSE(app, argc, argv);
  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (train->parsed()) return cmd_train(train_args, train_manifest);
    if (eval->parsed()) return cmd_eval(eval_args, eval_manifest);
    if (grad->parsed()) return cmd_gradcheck(grad_args);
    if (analyze->parsed()) return cmd_analyze(analyze_args, input_shape);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
