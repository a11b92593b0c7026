#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "litformer/axial_attention.hpp"
#include "litformer/gradcheck.hpp"
#include "oracles.hpp"

using T = lit::Tensor<double>;
using lit::AttentionConfig;
using lit::DualAttentionBlock;
using lit::Fusion;

namespace {

T random_map(lit::Shape shape, lit::Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(lit::numel(shape)));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return T::from(shape, v);
}

AttentionConfig both_parallel() { return {}; }

}  // namespace

TEST_CASE("zeroed output projections make the block an exact identity") {
  lit::Rng rng(41);
  for (Fusion fusion : {Fusion::kParallel, Fusion::kCascaded}) {
    AttentionConfig cfg;
    cfg.fusion = fusion;
    DualAttentionBlock<double> block(4, 2, 2, cfg, rng);
    lit::ParamSet<double> ps;
    block.params(ps, "attn");
    CHECK(ps.zero_values_matching(".out_pw") == 4);  // both branches, w and b
    T x = random_map({2, 4, 3, 4, 4}, rng);
    T y = block.forward(x);
    CHECK(y.value() == x.value());
  }
}

TEST_CASE("zeroed output projections silence each branch output") {
  lit::Rng rng(40);
  lit::InplaneChannelAttention<double> in_branch(4, 2, rng);
  std::fill(in_branch.out_w.value().begin(), in_branch.out_w.value().end(), 0.0);
  T pooled2d = random_map({1, 4, 6, 6}, rng);
  T in_out = in_branch.forward(pooled2d);
  for (double v : in_out.value()) CHECK(v == 0.0);

  lit::ThroughplaneTokenAttention<double> th_branch(4, 2, rng);
  std::fill(th_branch.out_w.value().begin(), th_branch.out_w.value().end(), 0.0);
  T pooled1d = random_map({1, 4, 5}, rng);
  T th_out = th_branch.forward(pooled1d);
  for (double v : th_out.value()) CHECK(v == 0.0);
}

TEST_CASE("bypassed block is the identity with no parameters") {
  lit::Rng rng(42);
  AttentionConfig cfg;
  cfg.bypass = true;
  DualAttentionBlock<double> block(4, 1, 2, cfg, rng);
  lit::ParamSet<double> ps;
  block.params(ps, "attn");
  CHECK(ps.total_count() == 0);
  T x = random_map({1, 4, 2, 4, 4}, rng);
  CHECK(block.forward(x).value() == x.value());
}

TEST_CASE("both branches disabled without bypass is a config error") {
  lit::Rng rng(43);
  AttentionConfig cfg;
  cfg.enable_inplane = false;
  cfg.enable_throughplane = false;
  CHECK_THROWS_AS(DualAttentionBlock<double>(4, 1, 2, cfg, rng), lit::ConfigError);
}

TEST_CASE("head counts must divide channels") {
  lit::Rng rng(44);
  CHECK_THROWS_AS(lit::InplaneChannelAttention<double>(6, 4, rng), lit::ConfigError);
  CHECK_THROWS_AS(lit::ThroughplaneTokenAttention<double>(6, 4, rng), lit::ConfigError);
}

TEST_CASE("attention maps are row stochastic") {
  lit::Rng rng(45);
  DualAttentionBlock<double> block(8, 2, 2, both_parallel(), rng);
  T x = random_map({2, 8, 4, 6, 6}, rng);
  T a_in = block.inplane->attention_map(lit::gap_through(x));
  // (N, heads, Ch, Ch): every row sums to one
  const auto ch = a_in.extent(3);
  for (std::int64_t row = 0; row < a_in.size() / ch; ++row) {
    double total = 0;
    for (std::int64_t i = 0; i < ch; ++i) {
      double v = a_in.value()[static_cast<std::size_t>(row * ch + i)];
      CHECK(v >= 0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
  T a_th = block.throughplane->attention_map(lit::gap_inplane(x));
  const auto d = a_th.extent(2);
  for (std::int64_t row = 0; row < a_th.size() / d; ++row) {
    double total = 0;
    for (std::int64_t i = 0; i < d; ++i) total += a_th.value()[static_cast<std::size_t>(row * d + i)];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("depth 1 through-plane attention map is [[1]]") {
  lit::Rng rng(46);
  lit::ThroughplaneTokenAttention<double> branch(4, 2, rng);
  T pooled = random_map({1, 4, 1}, rng);
  T a = branch.attention_map(pooled);
  CHECK(a.shape() == lit::Shape{2, 1, 1});
  CHECK(a.value()[0] == doctest::Approx(1.0));
  CHECK(a.value()[1] == doctest::Approx(1.0));
}

TEST_CASE("in-plane branch matches a scalar hand evaluation (C=2, 1x1 map)") {
  lit::Rng rng(47);
  lit::InplaneChannelAttention<double> branch(2, 1, rng);
  // pointwise weights chosen by hand; depthwise kernels reduced to their
  // center tap so the 1x1 map passes through them unchanged
  const double wq[4] = {0.3, -0.2, 0.5, 0.1};
  const double wk[4] = {-0.4, 0.6, 0.2, 0.7};
  const double wv[4] = {0.8, 0.1, -0.3, 0.9};
  const double wg[4] = {0.2, -0.5, 0.4, 0.6};
  auto fill = [](T& t, const double* v, int n) {
    for (int i = 0; i < n; ++i) t.value()[static_cast<std::size_t>(i)] = v[i];
  };
  fill(branch.q_pw_w, wq, 4);
  fill(branch.k_pw_w, wk, 4);
  fill(branch.v_pw_w, wv, 4);
  fill(branch.out_w, wg, 4);
  for (T* t : {&branch.q_pw_b, &branch.k_pw_b, &branch.v_pw_b, &branch.out_b, &branch.q_dw_b,
               &branch.k_dw_b, &branch.v_dw_b})
    std::fill(t->value().begin(), t->value().end(), 0.0);
  for (T* t : {&branch.q_dw_w, &branch.k_dw_w, &branch.v_dw_w}) {
    std::fill(t->value().begin(), t->value().end(), 0.0);
    t->value()[4] = 1.0;       // channel 0 center tap
    t->value()[9 + 4] = 1.0;   // channel 1 center tap
  }
  branch.logit_scale.value()[0] = 1.0;

  const double x0 = 0.7, x1 = -0.4;
  T pooled = T::from({1, 2, 1, 1}, {x0, x1});
  auto got = branch.forward(pooled).value();

  // scalar evaluation of the same arithmetic
  const double q[2] = {wq[0] * x0 + wq[1] * x1, wq[2] * x0 + wq[3] * x1};
  const double k[2] = {wk[0] * x0 + wk[1] * x1, wk[2] * x0 + wk[3] * x1};
  const double v[2] = {wv[0] * x0 + wv[1] * x1, wv[2] * x0 + wv[3] * x1};
  double s[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) s[i][j] = k[i] * q[j];
  double attn[2][2];
  for (int i = 0; i < 2; ++i) {
    const double m = std::max(s[i][0], s[i][1]);
    const double e0 = std::exp(s[i][0] - m), e1 = std::exp(s[i][1] - m);
    attn[i][0] = e0 / (e0 + e1);
    attn[i][1] = e1 / (e0 + e1);
  }
  const double mixed[2] = {attn[0][0] * v[0] + attn[1][0] * v[1],
                           attn[0][1] * v[0] + attn[1][1] * v[1]};
  const double expect[2] = {wg[0] * mixed[0] + wg[1] * mixed[1],
                            wg[2] * mixed[0] + wg[3] * mixed[1]};
  CHECK(got[0] == doctest::Approx(expect[0]).epsilon(1e-6));
  CHECK(got[1] == doctest::Approx(expect[1]).epsilon(1e-6));
}

TEST_CASE("through-plane branch matches a hand evaluation (C=2, D=2)") {
  lit::Rng rng(48);
  lit::ThroughplaneTokenAttention<double> branch(2, 1, rng);
  const double wq[4] = {0.5, 0.1, -0.3, 0.4};
  const double wk[4] = {0.2, -0.6, 0.7, 0.3};
  const double wv[4] = {-0.1, 0.8, 0.4, 0.2};
  const double wg[4] = {0.6, 0.2, -0.4, 0.5};
  auto fill = [](T& t, const double* v, int n) {
    for (int i = 0; i < n; ++i) t.value()[static_cast<std::size_t>(i)] = v[i];
  };
  fill(branch.q_pw_w, wq, 4);
  fill(branch.k_pw_w, wk, 4);
  fill(branch.v_pw_w, wv, 4);
  fill(branch.out_w, wg, 4);
  for (T* t : {&branch.q_pw_b, &branch.k_pw_b, &branch.v_pw_b, &branch.out_b, &branch.q_dw_b,
               &branch.k_dw_b, &branch.v_dw_b})
    std::fill(t->value().begin(), t->value().end(), 0.0);
  for (T* t : {&branch.q_dw_w, &branch.k_dw_w, &branch.v_dw_w}) {
    std::fill(t->value().begin(), t->value().end(), 0.0);
    t->value()[1] = 1.0;  // center taps
    t->value()[3 + 1] = 1.0;
  }

  const std::vector<double> x = {0.3, -0.5, 0.9, 0.2};  // (C=2, D=2) row-major
  T pooled = T::from({1, 2, 2}, x);
  auto got = branch.forward(pooled).value();

  auto q = oracle::conv_pointwise(x, 1, 2, 2, {wq[0], wq[1], wq[2], wq[3]}, 2, {});
  auto k = oracle::conv_pointwise(x, 1, 2, 2, {wk[0], wk[1], wk[2], wk[3]}, 2, {});
  auto v = oracle::conv_pointwise(x, 1, 2, 2, {wv[0], wv[1], wv[2], wv[3]}, 2, {});
  // scores[query][key] = sum_c q[c][query] k[c][key] / sqrt(D)
  double s[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      s[a][b] = (q[static_cast<std::size_t>(a)] * k[static_cast<std::size_t>(b)] +
                 q[static_cast<std::size_t>(2 + a)] * k[static_cast<std::size_t>(2 + b)]) /
                std::sqrt(2.0);
  double attn[2][2];
  for (int a = 0; a < 2; ++a) {
    const double m = std::max(s[a][0], s[a][1]);
    const double e0 = std::exp(s[a][0] - m), e1 = std::exp(s[a][1] - m);
    attn[a][0] = e0 / (e0 + e1);
    attn[a][1] = e1 / (e0 + e1);
  }
  // mixed[c][query] = sum_key v[c][key] attn[query][key]
  std::vector<double> mixed(4);
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < 2; ++a)
      mixed[static_cast<std::size_t>(c * 2 + a)] = v[static_cast<std::size_t>(c * 2)] * attn[a][0] +
                                                   v[static_cast<std::size_t>(c * 2 + 1)] * attn[a][1];
  auto expect = oracle::conv_pointwise(mixed, 1, 2, 2, {wg[0], wg[1], wg[2], wg[3]}, 2, {});
  for (int i = 0; i < 4; ++i)
    CHECK(got[static_cast<std::size_t>(i)] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("parallel fusion composes branch terms computed from the input") {
  lit::Rng rng(49);
  DualAttentionBlock<double> block(4, 2, 2, both_parallel(), rng);
  T x = random_map({1, 4, 3, 4, 4}, rng);
  T y = block.forward(x);
  T in_term = block.inplane->forward(lit::gap_through(x));
  T th_term = block.throughplane->forward(lit::gap_inplane(x));
  T manual = lit::broadcast_add(
      lit::broadcast_add(x, lit::reshape(in_term, {1, 4, 1, 4, 4}), {2}),
      lit::reshape(th_term, {1, 4, 3, 1, 1}), {3, 4});
  CHECK(y.value() == manual.value());
}

TEST_CASE("cascaded fusion feeds the shifted map to the second branch") {
  lit::Rng rng(50);
  AttentionConfig cfg;
  cfg.fusion = Fusion::kCascaded;
  DualAttentionBlock<double> block(4, 2, 2, cfg, rng);
  T x = random_map({1, 4, 3, 4, 4}, rng);
  T y = block.forward(x);
  T in_term = block.inplane->forward(lit::gap_through(x));
  T shifted = lit::broadcast_add(x, lit::reshape(in_term, {1, 4, 1, 4, 4}), {2});
  T th_term = block.throughplane->forward(lit::gap_inplane(shifted));
  T manual = lit::broadcast_add(shifted, lit::reshape(th_term, {1, 4, 3, 1, 1}), {3, 4});
  CHECK(y.value() == manual.value());
}

TEST_CASE("parallel and cascaded fusion differ on a random instance") {
  lit::Rng rng(51);
  DualAttentionBlock<double> block(4, 2, 2, both_parallel(), rng);
  T x = random_map({1, 4, 3, 4, 4}, rng);
  T parallel = block.forward(x);
  block.cfg.fusion = Fusion::kCascaded;
  T cascaded = block.forward(x);
  CHECK(parallel.value() != cascaded.value());
}

TEST_CASE("in-plane contribution is invariant to depth permutation") {
  lit::Rng rng(52);
  AttentionConfig cfg;
  cfg.enable_throughplane = false;
  DualAttentionBlock<double> block(4, 1, 2, cfg, rng);
  T x = random_map({1, 4, 3, 4, 4}, rng);
  // reverse the depth order
  std::vector<double> perm(x.value().size());
  const std::int64_t hw = 16;
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t d = 0; d < 3; ++d)
      for (std::int64_t i = 0; i < hw; ++i)
        perm[static_cast<std::size_t>((c * 3 + d) * hw + i)] =
            x.value()[static_cast<std::size_t>((c * 3 + (2 - d)) * hw + i)];
  T xp = T::from({1, 4, 3, 4, 4}, perm);
  T contrib = lit::sub(block.forward(x), x);
  T contrib_p = lit::sub(block.forward(xp), xp);
  // both contributions are the same per-depth broadcast map
  for (std::size_t i = 0; i < contrib.value().size(); ++i)
    CHECK(contrib.value()[i] == doctest::Approx(contrib_p.value()[i]).epsilon(1e-12));
}

TEST_CASE("attention map construction cost matches (D^2 + HWC)C at one head") {
  lit::Rng rng(53);
  DualAttentionBlock<double> block(16, 1, 1, both_parallel(), rng);
  T x = T::zeros({1, 16, 4, 8, 8});
  lit::OpCounter counter;
  {
    lit::ScopedCounter sc(counter);
    block.forward(x);
  }
  const std::uint64_t attn_map = counter.prefix_total("in/attn_map") + counter.prefix_total("th/attn_map");
  CHECK(attn_map == (4 * 4 + 8 * 8 * 16) * 16);  // 16640
}

TEST_CASE("block gradients match finite differences") {
  lit::Rng rng(54);
  for (Fusion fusion : {Fusion::kParallel, Fusion::kCascaded}) {
    AttentionConfig cfg;
    cfg.fusion = fusion;
    DualAttentionBlock<double> block(4, 2, 2, cfg, rng);
    lit::ParamSet<double> params;
    block.params(params, "attn");
    T x = random_map({1, 4, 4, 8, 8}, rng);
    T target = random_map({1, 4, 4, 8, 8}, rng);
    auto loss_fn = [&]() {
      T r = lit::sub(block.forward(x), target);
      return lit::mean_all(lit::mul(r, r));
    };
    auto res = lit::gradient_check(params, loss_fn, 2, 1e-5);
    CAPTURE(fusion == Fusion::kParallel);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("pre-norm toggle keeps gradients intact") {
  lit::Rng rng(55);
  AttentionConfig cfg;
  cfg.pre_norm = true;
  DualAttentionBlock<double> block(4, 2, 2, cfg, rng);
  lit::ParamSet<double> params;
  block.params(params, "attn");
  T x = random_map({1, 4, 3, 8, 8}, rng);
  auto loss_fn = [&]() {
    T y = block.forward(x);
    return lit::mean_all(lit::mul(y, y));
  };
  auto res = lit::gradient_check(params, loss_fn, 2, 1e-5);
  CHECK(res.max_rel_err < 1e-4);
}
