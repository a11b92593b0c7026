#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "litformer/factored_ffn.hpp"
#include "litformer/gradcheck.hpp"
#include "oracles.hpp"

using T = lit::Tensor<double>;
using lit::FactoredConvUnit;
using lit::FactoredFfnBlock;
using lit::FfnConfig;
using lit::Fusion;

namespace {

T random_map(lit::Shape shape, lit::Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(lit::numel(shape)));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return T::from(shape, v);
}

void zero_convs(FactoredConvUnit<double>& u, bool also_projection) {
  for (T* t : {&u.w_in, &u.b_in, &u.w_th, &u.b_th})
    std::fill(t->value().begin(), t->value().end(), 0.0);
  if (also_projection && u.w_proj) {
    std::fill(u.w_proj.value().begin(), u.w_proj.value().end(), 0.0);
    std::fill(u.b_proj.value().begin(), u.b_proj.value().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("zero kernels with matched channels reduce the unit to its identity path") {
  lit::Rng rng(61);
  FactoredConvUnit<double> unit(3, 3, Fusion::kParallel, rng);
  zero_convs(unit, false);
  T x = random_map({2, 3, 2, 4, 4}, rng);
  CHECK(unit.forward(x).value() == x.value());
}

TEST_CASE("zero kernels with a channel change leave only the projection") {
  lit::Rng rng(62);
  FactoredConvUnit<double> unit(2, 1, Fusion::kParallel, rng);
  zero_convs(unit, false);
  // channel-sum projection
  unit.w_proj.value() = {1.0, 1.0};
  unit.b_proj.value() = {0.0};
  T x = T::from({1, 2, 1, 1, 2}, {1, 2, 3, 4});
  CHECK(unit.forward(x).value() == std::vector<double>{4, 6});
}

TEST_CASE("parallel unit equals the sum of independent oracle convolutions") {
  lit::Rng rng(63);
  FactoredConvUnit<double> unit(2, 2, Fusion::kParallel, rng);
  auto xd = std::vector<double>(2ull * 2 * 3 * 4 * 4);
  for (auto& v : xd) v = rng.uniform(-1, 1);
  T x = T::from({2, 2, 3, 4, 4}, xd);
  auto got = unit.forward(x).value();
  auto a = oracle::conv_inplane(xd, 2, 2, 3, 4, 4, unit.w_in.value(), 2, 3, unit.b_in.value());
  auto b = oracle::conv_throughplane(xd, 2, 2, 3, 4, 4, unit.w_th.value(), 2, 3, unit.b_th.value());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(a[i] + b[i] + xd[i]).epsilon(1e-6));
}

TEST_CASE("cascaded unit composes the kernels around one skip") {
  lit::Rng rng(64);
  FactoredConvUnit<double> unit(2, 3, Fusion::kCascaded, rng);
  auto xd = std::vector<double>(1ull * 2 * 3 * 4 * 4);
  for (auto& v : xd) v = rng.uniform(-1, 1);
  T x = T::from({1, 2, 3, 4, 4}, xd);
  auto got = unit.forward(x).value();
  auto mid = oracle::conv_inplane(xd, 1, 2, 3, 4, 4, unit.w_in.value(), 3, 3, unit.b_in.value());
  auto comp = oracle::conv_throughplane(mid, 1, 3, 3, 4, 4, unit.w_th.value(), 3, 3, unit.b_th.value());
  auto proj = oracle::conv_pointwise(xd, 1, 2, 3 * 4 * 4, unit.w_proj.value(), 3, unit.b_proj.value());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(comp[i] + proj[i]).epsilon(1e-6));
}

TEST_CASE("delta kernels in a channel-preserving parallel unit triple the input") {
  lit::Rng rng(65);
  FactoredConvUnit<double> unit(2, 2, Fusion::kParallel, rng);
  zero_convs(unit, false);
  for (int c = 0; c < 2; ++c) {
    unit.w_in.value()[static_cast<std::size_t>((c * 2 + c) * 9 + 4)] = 1.0;  // center tap
    unit.w_th.value()[static_cast<std::size_t>((c * 2 + c) * 3 + 1)] = 1.0;
  }
  T x = random_map({1, 2, 3, 4, 4}, rng);
  auto got = unit.forward(x).value();
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(3.0 * x.value()[i]).epsilon(1e-12));
}

TEST_CASE("parallel and cascaded units differ on a random instance") {
  lit::Rng rng(66);
  FactoredConvUnit<double> unit(2, 2, Fusion::kParallel, rng);
  T x = random_map({1, 2, 3, 4, 4}, rng);
  auto parallel = unit.forward(x).value();
  unit.fusion = Fusion::kCascaded;
  auto cascaded = unit.forward(x).value();
  CHECK(parallel != cascaded);
}

TEST_CASE("channel mismatch raises") {
  lit::Rng rng(67);
  FactoredConvUnit<double> unit(3, 3, Fusion::kParallel, rng);
  T x = T::zeros({1, 2, 2, 4, 4});
  CHECK_THROWS_AS(unit.forward(x), lit::ShapeError);
}

TEST_CASE("block shape contract and zero propagation") {
  lit::Rng rng(68);
  FfnConfig cfg;
  FactoredFfnBlock<double> block(3, 5, cfg, rng);
  T x = random_map({2, 3, 2, 4, 4}, rng);
  CHECK(block.forward(x).shape() == lit::Shape{2, 5, 2, 4, 4});

  // zero weights and zero input propagate zero through both units
  FactoredFfnBlock<double> zeroed(3, 3, cfg, rng);
  zero_convs(zeroed.unit1, true);
  zero_convs(zeroed.unit2, true);
  T z = T::zeros({1, 3, 2, 4, 4});
  T zero_out = zeroed.forward(z);
  for (double v : zero_out.value()) CHECK(v == 0.0);

  // with the rectifier off, zeroed channel-preserving units pass through
  FfnConfig plain;
  plain.nonlinearity = false;
  FactoredFfnBlock<double> passthrough(3, 3, plain, rng);
  zero_convs(passthrough.unit1, true);
  zero_convs(passthrough.unit2, true);
  CHECK(passthrough.forward(x).value() == x.value());
}

TEST_CASE("block mac count matches the factorized formula") {
  lit::Rng rng(69);
  FfnConfig cfg;
  FactoredFfnBlock<double> block(4, 4, cfg, rng);
  T x = T::zeros({1, 4, 8, 8, 8});
  lit::OpCounter counter;
  {
    lit::ScopedCounter sc(counter);
    block.forward(x);
  }
  // two channel-preserving units: 2 * C * C' * (3^2 + 3) * D * H * W
  const std::uint64_t convs = counter.prefix_total("unit1/conv") + counter.prefix_total("unit2/conv");
  CHECK(convs == 2ull * 4 * 4 * 12 * 8 * 8 * 8);
  CHECK(convs == 98304 * 2);

  // one unit at (Ci=Co=4, K=3, D=H=W=8) costs 4/9 of the 3D kernel
  const std::uint64_t one_unit = counter.prefix_total("unit1/conv");
  CHECK(one_unit == 98304);
  CHECK(one_unit * 9 == 4ull * 4 * 27 * 512 * 4);  // ratio (K^2+K)/K^3 = 4/9
}

TEST_CASE("block gradients match finite differences") {
  lit::Rng rng(70);
  for (Fusion fusion : {Fusion::kParallel, Fusion::kCascaded}) {
    FfnConfig cfg;
    cfg.fusion = fusion;
    FactoredFfnBlock<double> block(2, 3, cfg, rng);
    lit::ParamSet<double> params;
    block.params(params, "ffn");
    T x = random_map({1, 2, 3, 4, 4}, rng);
    auto loss_fn = [&]() {
      T y = block.forward(x);
      return lit::mean_all(lit::mul(y, y));
    };
    auto res = lit::gradient_check(params, loss_fn, 3, 1e-5);
    CHECK(res.max_rel_err < 1e-4);
  }
}
