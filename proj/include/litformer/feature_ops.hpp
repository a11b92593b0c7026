#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "litformer/tensor.hpp"

namespace lit {

// Feature maps are rank-5 tensors (N, C, D, H, W): batch, channels,
// through-plane slices, transverse extent. The resampling ops below never
// touch D except upsample_depth, which is the single depth-changing op.

namespace detail {

template <typename R>
void check_rank(const Tensor<R>& t, int rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
}

// Per-slice 2D correlation with zero padding, used by forward and the
// input-gradient pass (which flips the kernel via index remapping).
template <typename R>
void conv2d_accumulate(const R* in, R* out, std::int64_t H, std::int64_t W, R wv, std::int64_t ky,
                       std::int64_t kx, std::int64_t pad) {
  const std::int64_t y0 = std::max<std::int64_t>(0, pad - ky);
  const std::int64_t y1 = std::min<std::int64_t>(H, H + pad - ky);
  const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
  const std::int64_t x1 = std::min<std::int64_t>(W, W + pad - kx);
  for (std::int64_t y = y0; y < y1; ++y) {
    const R* irow = in + (y + ky - pad) * W + (kx - pad);
    R* orow = out + y * W;
    for (std::int64_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
  }
}

}  // namespace detail

// In-plane convolution: a k x k kernel applied independently per depth slice.
// x: (N, Ci, D, H, W); w: (Co, Ci, k, k); optional bias (Co).
template <typename R>
Tensor<R> conv_inplane(Tensor<R> x, Tensor<R> w, Tensor<R> b = {}) {
  detail::check_rank(x, 5, "conv_inplane");
  detail::check_rank(w, 4, "conv_inplane weights");
  const std::int64_t N = x.extent(0), Ci = x.extent(1), D = x.extent(2), H = x.extent(3),
                     W = x.extent(4);
  const std::int64_t Co = w.extent(0), k = w.extent(2);
  if (w.extent(1) != Ci)
    throw ShapeError("conv_inplane: input has " + std::to_string(Ci) + " channels, kernel expects " +
                     std::to_string(w.extent(1)));
  if (w.extent(3) != k || k % 2 == 0) throw ShapeError("conv_inplane: kernel must be odd square");
  if (b && b.size() != Co) throw ShapeError("conv_inplane: bias extent mismatch");
  const std::int64_t pad = k / 2, HW = H * W;
  std::vector<R> out(static_cast<std::size_t>(N * Co * D * HW), R(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Co; ++co) {
      R* obase = out.data() + ((n * Co + co) * D) * HW;
      if (b) {
        R bv = b.value()[static_cast<std::size_t>(co)];
        std::fill(obase, obase + D * HW, bv);
      }
      for (std::int64_t ci = 0; ci < Ci; ++ci) {
        const R* ibase = x.value().data() + ((n * Ci + ci) * D) * HW;
        const R* wbase = w.value().data() + (co * Ci + ci) * k * k;
        for (std::int64_t d = 0; d < D; ++d)
          for (std::int64_t ky = 0; ky < k; ++ky)
            for (std::int64_t kx = 0; kx < k; ++kx)
              detail::conv2d_accumulate(ibase + d * HW, obase + d * HW, H, W,
                                        wbase[ky * k + kx], ky, kx, pad);
      }
    }
  count_macs(static_cast<std::uint64_t>(N * Ci * Co * k * k * D * HW));
  return Tensor<R>::make_result(
      {N, Co, D, H, W}, std::move(out), {x, w, b ? b : Tensor<R>::zeros({Co})},
      [x, w, b, N, Ci, Co, D, H, W, k, pad, HW](typename Tensor<R>::Node& nd) mutable {
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
              R* gbase = gx.data() + ((n * Ci + ci) * D) * HW;
              for (std::int64_t co = 0; co < Co; ++co) {
                const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
                const R* wbase = w.value().data() + (co * Ci + ci) * k * k;
                for (std::int64_t d = 0; d < D; ++d)
                  for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                      // flipped kernel: grad_in = gout (*) flip(w)
                      detail::conv2d_accumulate(obase + d * HW, gbase + d * HW, H, W,
                                                wbase[ky * k + kx], k - 1 - ky, k - 1 - kx, pad);
              }
            }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co)
              for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
                const R* ibase = x.value().data() + ((n * Ci + ci) * D) * HW;
                R* gwbase = gw.data() + (co * Ci + ci) * k * k;
                for (std::int64_t ky = 0; ky < k; ++ky)
                  for (std::int64_t kx = 0; kx < k; ++kx) {
                    R acc = 0;
                    const std::int64_t y0 = std::max<std::int64_t>(0, pad - ky);
                    const std::int64_t y1 = std::min<std::int64_t>(H, H + pad - ky);
                    const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
                    const std::int64_t x1 = std::min<std::int64_t>(W, W + pad - kx);
                    for (std::int64_t d = 0; d < D; ++d)
                      for (std::int64_t y = y0; y < y1; ++y) {
                        const R* orow = obase + d * HW + y * W;
                        const R* irow = ibase + d * HW + (y + ky - pad) * W + (kx - pad);
                        for (std::int64_t xx = x0; xx < x1; ++xx) acc += orow[xx] * irow[xx];
                      }
                    gwbase[ky * k + kx] += acc;
                  }
              }
        }
        if (b && b.requires_grad()) {
          auto& gb = b.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
              const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
              R acc = 0;
              for (std::int64_t i = 0; i < D * HW; ++i) acc += obase[i];
              gb[static_cast<std::size_t>(co)] += acc;
            }
        }
      },
      "conv_inplane");
}

// Through-plane convolution: a k-tap kernel along depth, per transverse site.
// x: (N, Ci, D, H, W); w: (Co, Ci, k); optional bias (Co).
template <typename R>
Tensor<R> conv_throughplane(Tensor<R> x, Tensor<R> w, Tensor<R> b = {}) {
  detail::check_rank(x, 5, "conv_throughplane");
  detail::check_rank(w, 3, "conv_throughplane weights");
  const std::int64_t N = x.extent(0), Ci = x.extent(1), D = x.extent(2), H = x.extent(3),
                     W = x.extent(4);
  const std::int64_t Co = w.extent(0), k = w.extent(2);
  if (w.extent(1) != Ci) throw ShapeError("conv_throughplane: channel mismatch");
  if (k % 2 == 0) throw ShapeError("conv_throughplane: kernel must be odd");
  if (b && b.size() != Co) throw ShapeError("conv_throughplane: bias extent mismatch");
  const std::int64_t pad = k / 2, HW = H * W;
  std::vector<R> out(static_cast<std::size_t>(N * Co * D * HW), R(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Co; ++co) {
      R* obase = out.data() + ((n * Co + co) * D) * HW;
      if (b) std::fill(obase, obase + D * HW, b.value()[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < Ci; ++ci) {
        const R* ibase = x.value().data() + ((n * Ci + ci) * D) * HW;
        const R* wbase = w.value().data() + (co * Ci + ci) * k;
        for (std::int64_t kd = 0; kd < k; ++kd) {
          R wv = wbase[kd];
          const std::int64_t d0 = std::max<std::int64_t>(0, pad - kd);
          const std::int64_t d1 = std::min<std::int64_t>(D, D + pad - kd);
          for (std::int64_t d = d0; d < d1; ++d) {
            const R* islab = ibase + (d + kd - pad) * HW;
            R* oslab = obase + d * HW;
            for (std::int64_t i = 0; i < HW; ++i) oslab[i] += wv * islab[i];
          }
        }
      }
    }
  count_macs(static_cast<std::uint64_t>(N * Ci * Co * k * D * HW));
  return Tensor<R>::make_result(
      {N, Co, D, H, W}, std::move(out), {x, w, b ? b : Tensor<R>::zeros({Co})},
      [x, w, b, N, Ci, Co, D, HW, k, pad](typename Tensor<R>::Node& nd) mutable {
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
              R* gbase = gx.data() + ((n * Ci + ci) * D) * HW;
              for (std::int64_t co = 0; co < Co; ++co) {
                const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
                const R* wbase = w.value().data() + (co * Ci + ci) * k;
                for (std::int64_t kd = 0; kd < k; ++kd) {
                  R wv = wbase[k - 1 - kd];
                  const std::int64_t d0 = std::max<std::int64_t>(0, pad - kd);
                  const std::int64_t d1 = std::min<std::int64_t>(D, D + pad - kd);
                  for (std::int64_t d = d0; d < d1; ++d) {
                    const R* oslab = obase + (d + kd - pad) * HW;
                    R* gslab = gbase + d * HW;
                    for (std::int64_t i = 0; i < HW; ++i) gslab[i] += wv * oslab[i];
                  }
                }
              }
            }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co)
              for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
                const R* ibase = x.value().data() + ((n * Ci + ci) * D) * HW;
                R* gwbase = gw.data() + (co * Ci + ci) * k;
                for (std::int64_t kd = 0; kd < k; ++kd) {
                  R acc = 0;
                  const std::int64_t d0 = std::max<std::int64_t>(0, pad - kd);
                  const std::int64_t d1 = std::min<std::int64_t>(D, D + pad - kd);
                  for (std::int64_t d = d0; d < d1; ++d) {
                    const R* oslab = obase + d * HW;
                    const R* islab = ibase + (d + kd - pad) * HW;
                    for (std::int64_t i = 0; i < HW; ++i) acc += oslab[i] * islab[i];
                  }
                  gwbase[kd] += acc;
                }
              }
        }
        if (b && b.requires_grad()) {
          auto& gb = b.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
              const R* obase = nd.grad.data() + ((n * Co + co) * D) * HW;
              R acc = 0;
              for (std::int64_t i = 0; i < D * HW; ++i) acc += obase[i];
              gb[static_cast<std::size_t>(co)] += acc;
            }
        }
      },
      "conv_throughplane");
}

// Per-voxel channel mixing. Works on any rank >= 3 tensor laid out
// (N, C, spatial...). w: (Co, Ci); optional bias (Co).
template <typename R>
Tensor<R> conv_pointwise(Tensor<R> x, Tensor<R> w, Tensor<R> b = {}) {
  if (x.rank() < 3) throw ShapeError("conv_pointwise: input must be rank >= 3");
  detail::check_rank(w, 2, "conv_pointwise weights");
  const std::int64_t N = x.extent(0), Ci = x.extent(1);
  const std::int64_t S = x.size() / (N * Ci);
  const std::int64_t Co = w.extent(0);
  if (w.extent(1) != Ci) throw ShapeError("conv_pointwise: channel mismatch");
  if (b && b.size() != Co) throw ShapeError("conv_pointwise: bias extent mismatch");
  Shape out_shape = x.shape();
  out_shape[1] = Co;
  std::vector<R> out(static_cast<std::size_t>(N * Co * S), R(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Co; ++co) {
      R* orow = out.data() + (n * Co + co) * S;
      if (b) std::fill(orow, orow + S, b.value()[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < Ci; ++ci) {
        R wv = w.value()[static_cast<std::size_t>(co * Ci + ci)];
        const R* irow = x.value().data() + (n * Ci + ci) * S;
        for (std::int64_t i = 0; i < S; ++i) orow[i] += wv * irow[i];
      }
    }
  count_macs(static_cast<std::uint64_t>(N * Ci * Co * S));
  return Tensor<R>::make_result(
      std::move(out_shape), std::move(out), {x, w, b ? b : Tensor<R>::zeros({Co})},
      [x, w, b, N, Ci, Co, S](typename Tensor<R>::Node& nd) mutable {
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
              R* grow = gx.data() + (n * Ci + ci) * S;
              for (std::int64_t co = 0; co < Co; ++co) {
                R wv = w.value()[static_cast<std::size_t>(co * Ci + ci)];
                const R* orow = nd.grad.data() + (n * Co + co) * S;
                for (std::int64_t i = 0; i < S; ++i) grow[i] += wv * orow[i];
              }
            }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co)
              for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const R* orow = nd.grad.data() + (n * Co + co) * S;
                const R* irow = x.value().data() + (n * Ci + ci) * S;
                R acc = 0;
                for (std::int64_t i = 0; i < S; ++i) acc += orow[i] * irow[i];
                gw[static_cast<std::size_t>(co * Ci + ci)] += acc;
              }
        }
        if (b && b.requires_grad()) {
          auto& gb = b.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
              const R* orow = nd.grad.data() + (n * Co + co) * S;
              R acc = 0;
              for (std::int64_t i = 0; i < S; ++i) acc += orow[i];
              gb[static_cast<std::size_t>(co)] += acc;
            }
        }
      },
      "conv_pointwise");
}

// Depth-wise 2D convolution: one k x k kernel per channel, same padding.
// x: (N, C, H, W); w: (C, k, k); optional bias (C). pad_same=false gives the
// valid form (output (H-k+1, W-k+1)) used by windowed statistics.
template <typename R>
Tensor<R> dwconv2d(Tensor<R> x, Tensor<R> w, Tensor<R> b = {},
                   bool pad_same = true) {
  detail::check_rank(x, 4, "dwconv2d");
  detail::check_rank(w, 3, "dwconv2d weights");
  const std::int64_t N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::int64_t k = w.extent(1);
  if (w.extent(0) != C) throw ShapeError("dwconv2d: one kernel per channel required");
  if (w.extent(2) != k || k % 2 == 0) throw ShapeError("dwconv2d: kernel must be odd square");
  if (!pad_same && (H < k || W < k)) throw ShapeError("dwconv2d: input smaller than valid window");
  const std::int64_t pad = pad_same ? k / 2 : 0;
  const std::int64_t Ho = pad_same ? H : H - k + 1;
  const std::int64_t Wo = pad_same ? W : W - k + 1;
  std::vector<R> out(static_cast<std::size_t>(N * C * Ho * Wo), R(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const R* ibase = x.value().data() + (n * C + c) * H * W;
      R* obase = out.data() + (n * C + c) * Ho * Wo;
      if (b) std::fill(obase, obase + Ho * Wo, b.value()[static_cast<std::size_t>(c)]);
      const R* wbase = w.value().data() + c * k * k;
      for (std::int64_t ky = 0; ky < k; ++ky)
        for (std::int64_t kx = 0; kx < k; ++kx) {
          R wv = wbase[ky * k + kx];
          for (std::int64_t y = 0; y < Ho; ++y) {
            std::int64_t iy = y + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const R* irow = ibase + iy * W + (kx - pad);
            R* orow = obase + y * Wo;
            const std::int64_t x0 = pad_same ? std::max<std::int64_t>(0, pad - kx) : 0;
            const std::int64_t x1 = pad_same ? std::min<std::int64_t>(Wo, W + pad - kx) : Wo;
            for (std::int64_t xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
          }
        }
    }
  count_macs(static_cast<std::uint64_t>(N * C * k * k * Ho * Wo));
  return Tensor<R>::make_result(
      {N, C, Ho, Wo}, std::move(out), {x, w, b ? b : Tensor<R>::zeros({C})},
      [x, w, b, N, C, H, W, Ho, Wo, k, pad](typename Tensor<R>::Node& nd) mutable {
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
              R* gbase = gx.data() + (n * C + c) * H * W;
              const R* obase = nd.grad.data() + (n * C + c) * Ho * Wo;
              const R* wbase = w.value().data() + c * k * k;
              for (std::int64_t ky = 0; ky < k; ++ky)
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  R wv = wbase[ky * k + kx];
                  for (std::int64_t y = 0; y < Ho; ++y) {
                    std::int64_t iy = y + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const R* orow = obase + y * Wo;
                    R* grow = gbase + iy * W + (kx - pad);
                    const std::int64_t x0 = (pad > 0) ? std::max<std::int64_t>(0, pad - kx) : 0;
                    const std::int64_t x1 = (pad > 0) ? std::min<std::int64_t>(Wo, W + pad - kx) : Wo;
                    for (std::int64_t xx = x0; xx < x1; ++xx) grow[xx] += wv * orow[xx];
                  }
                }
            }
        }
        if (w.requires_grad()) {
          auto& gw = w.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
              const R* ibase = x.value().data() + (n * C + c) * H * W;
              const R* obase = nd.grad.data() + (n * C + c) * Ho * Wo;
              R* gwbase = gw.data() + c * k * k;
              for (std::int64_t ky = 0; ky < k; ++ky)
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  R acc = 0;
                  for (std::int64_t y = 0; y < Ho; ++y) {
                    std::int64_t iy = y + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const R* orow = obase + y * Wo;
                    const R* irow = ibase + iy * W + (kx - pad);
                    const std::int64_t x0 = (pad > 0) ? std::max<std::int64_t>(0, pad - kx) : 0;
                    const std::int64_t x1 = (pad > 0) ? std::min<std::int64_t>(Wo, W + pad - kx) : Wo;
                    for (std::int64_t xx = x0; xx < x1; ++xx) acc += orow[xx] * irow[xx];
                  }
                  gwbase[ky * k + kx] += acc;
                }
            }
        }
        if (b && b.requires_grad()) {
          auto& gb = b.grad();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
              const R* obase = nd.grad.data() + (n * C + c) * Ho * Wo;
              R acc = 0;
              for (std::int64_t i = 0; i < Ho * Wo; ++i) acc += obase[i];
              gb[static_cast<std::size_t>(c)] += acc;
            }
        }
      },
      "dwconv2d");
}

// Depth-wise 1D convolution along the last axis. x: (N, C, L); w: (C, k).
template <typename R>
Tensor<R> dwconv1d(Tensor<R> x, Tensor<R> w, Tensor<R> b = {}) {
  detail::check_rank(x, 3, "dwconv1d");
  detail::check_rank(w, 2, "dwconv1d weights");
  const std::int64_t N = x.extent(0), C = x.extent(1), L = x.extent(2);
  const std::int64_t k = w.extent(1);
  if (w.extent(0) != C) throw ShapeError("dwconv1d: one kernel per channel required");
  if (k % 2 == 0) throw ShapeError("dwconv1d: kernel must be odd");
  const std::int64_t pad = k / 2;
  std::vector<R> out(static_cast<std::size_t>(N * C * L), R(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const R* irow = x.value().data() + (n * C + c) * L;
      R* orow = out.data() + (n * C + c) * L;
      R bv = b ? b.value()[static_cast<std::size_t>(c)] : R(0);
      const R* wrow = w.value().data() + c * k;
      for (std::int64_t i = 0; i < L; ++i) {
        R acc = bv;
        for (std::int64_t kk = 0; kk < k; ++kk) {
          std::int64_t j = i + kk - pad;
          if (j >= 0 && j < L) acc += wrow[kk] * irow[j];
        }
        orow[i] = acc;
      }
    }
  count_macs(static_cast<std::uint64_t>(N * C * k * L));
  return Tensor<R>::make_result(
      {N, C, L}, std::move(out), {x, w, b ? b : Tensor<R>::zeros({C})},
      [x, w, b, N, C, L, k, pad](typename Tensor<R>::Node& nd) mutable {
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t c = 0; c < C; ++c) {
            const R* orow = nd.grad.data() + (n * C + c) * L;
            const R* irow = x.value().data() + (n * C + c) * L;
            const R* wrow = w.value().data() + c * k;
            for (std::int64_t i = 0; i < L; ++i) {
              for (std::int64_t kk = 0; kk < k; ++kk) {
                std::int64_t j = i + kk - pad;
                if (j < 0 || j >= L) continue;
                if (x.requires_grad()) x.grad()[static_cast<std::size_t>((n * C + c) * L + j)] += wrow[kk] * orow[i];
                if (w.requires_grad()) w.grad()[static_cast<std::size_t>(c * k + kk)] += orow[i] * irow[j];
              }
              if (b && b.requires_grad()) b.grad()[static_cast<std::size_t>(c)] += orow[i];
            }
          }
      },
      "dwconv1d");
}

// Mean over the through-plane axis: (N, C, D, H, W) -> (N, C, H, W).
template <typename R>
Tensor<R> gap_through(Tensor<R> x) {
  detail::check_rank(x, 5, "gap_through");
  const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), HW = x.extent(3) * x.extent(4);
  std::vector<R> out(static_cast<std::size_t>(N * C * HW), R(0));
  const R inv = R(1) / static_cast<R>(D);
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const R* ibase = x.value().data() + nc * D * HW;
    R* obase = out.data() + nc * HW;
    for (std::int64_t d = 0; d < D; ++d)
      for (std::int64_t i = 0; i < HW; ++i) obase[i] += ibase[d * HW + i];
    for (std::int64_t i = 0; i < HW; ++i) obase[i] *= inv;
  }
  count_macs(static_cast<std::uint64_t>(N * C * HW), "gap");
  return Tensor<R>::make_result(
      {N, C, x.extent(3), x.extent(4)}, std::move(out), {x},
      [x, N, C, D, HW, inv](typename Tensor<R>::Node& nd) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          const R* orow = nd.grad.data() + nc * HW;
          R* gbase = gx.data() + nc * D * HW;
          for (std::int64_t d = 0; d < D; ++d)
            for (std::int64_t i = 0; i < HW; ++i) gbase[d * HW + i] += orow[i] * inv;
        }
      },
      "gap_through");
}

// Mean over the transverse axes: (N, C, D, H, W) -> (N, C, D).
template <typename R>
Tensor<R> gap_inplane(Tensor<R> x) {
  detail::check_rank(x, 5, "gap_inplane");
  const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), HW = x.extent(3) * x.extent(4);
  std::vector<R> out(static_cast<std::size_t>(N * C * D), R(0));
  const R inv = R(1) / static_cast<R>(HW);
  for (std::int64_t ncd = 0; ncd < N * C * D; ++ncd) {
    const R* ibase = x.value().data() + ncd * HW;
    R acc = 0;
    for (std::int64_t i = 0; i < HW; ++i) acc += ibase[i];
    out[static_cast<std::size_t>(ncd)] = acc * inv;
  }
  count_macs(static_cast<std::uint64_t>(N * C * D), "gap");
  return Tensor<R>::make_result(
      {N, C, D}, std::move(out), {x},
      [x, N, C, D, HW, inv](typename Tensor<R>::Node& nd) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (std::int64_t ncd = 0; ncd < N * C * D; ++ncd) {
          R g = nd.grad[static_cast<std::size_t>(ncd)] * inv;
          R* gbase = gx.data() + ncd * HW;
          for (std::int64_t i = 0; i < HW; ++i) gbase[i] += g;
        }
      },
      "gap_inplane");
}

// 2x2 transverse max pooling, depth untouched. Requires even H and W.
// Ties go to the first index in scan order; the gradient follows it.
template <typename R>
Tensor<R> maxpool_inplane(Tensor<R> x) {
  detail::check_rank(x, 5, "maxpool_inplane");
  const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), H = x.extent(3),
                     W = x.extent(4);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("maxpool_inplane: H and W must be even, got " + shape_str(x.shape()));
  const std::int64_t Ho = H / 2, Wo = W / 2;
  std::vector<R> out(static_cast<std::size_t>(N * C * D * Ho * Wo));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t ncd = 0; ncd < N * C * D; ++ncd) {
    const R* ibase = x.value().data() + ncd * H * W;
    R* obase = out.data() + ncd * Ho * Wo;
    std::int64_t* abase = argmax->data() + ncd * Ho * Wo;
    for (std::int64_t y = 0; y < Ho; ++y)
      for (std::int64_t xx = 0; xx < Wo; ++xx) {
        const std::int64_t corners[4] = {(2 * y) * W + 2 * xx, (2 * y) * W + 2 * xx + 1,
                                         (2 * y + 1) * W + 2 * xx, (2 * y + 1) * W + 2 * xx + 1};
        std::int64_t best = corners[0];
        for (int c = 1; c < 4; ++c)
          if (ibase[corners[c]] > ibase[best]) best = corners[c];
        obase[y * Wo + xx] = ibase[best];
        abase[y * Wo + xx] = ncd * H * W + best;
      }
  }
  return Tensor<R>::make_result(
      {N, C, D, Ho, Wo}, std::move(out), {x},
      [x, argmax](typename Tensor<R>::Node& nd) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (std::size_t i = 0; i < nd.grad.size(); ++i)
          gx[static_cast<std::size_t>((*argmax)[i])] += nd.grad[i];
      },
      "maxpool_inplane");
}

namespace detail {

struct LinearTap {
  std::int64_t i0, i1;
  double w0, w1;
};

inline std::vector<LinearTap> linear_taps(std::int64_t in_len, std::int64_t out_len,
                                          bool align_corners) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_len));
  for (std::int64_t o = 0; o < out_len; ++o) {
    double pos;
    if (align_corners) {
      pos = (out_len == 1) ? 0.0
                           : static_cast<double>(o) * static_cast<double>(in_len - 1) /
                                 static_cast<double>(out_len - 1);
    } else {
      double s = static_cast<double>(in_len) / static_cast<double>(out_len);
      pos = (static_cast<double>(o) + 0.5) * s - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(in_len - 1));
    }
    auto i0 = static_cast<std::int64_t>(std::floor(pos));
    std::int64_t i1 = std::min(i0 + 1, in_len - 1);
    double w1 = pos - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - w1, w1};
  }
  return taps;
}

}  // namespace detail

// Bilinear x2 upsampling of the transverse plane, per depth slice.
template <typename R>
Tensor<R> upsample_transverse(Tensor<R> x, bool align_corners = true) {
  detail::check_rank(x, 5, "upsample_transverse");
  const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), H = x.extent(3),
                     W = x.extent(4);
  const std::int64_t Ho = 2 * H, Wo = 2 * W;
  const auto ytaps = detail::linear_taps(H, Ho, align_corners);
  const auto xtaps = detail::linear_taps(W, Wo, align_corners);
  std::vector<R> out(static_cast<std::size_t>(N * C * D * Ho * Wo));
  for (std::int64_t ncd = 0; ncd < N * C * D; ++ncd) {
    const R* ibase = x.value().data() + ncd * H * W;
    R* obase = out.data() + ncd * Ho * Wo;
    for (std::int64_t y = 0; y < Ho; ++y) {
      const auto& ty = ytaps[static_cast<std::size_t>(y)];
      const R* r0 = ibase + ty.i0 * W;
      const R* r1 = ibase + ty.i1 * W;
      R* orow = obase + y * Wo;
      for (std::int64_t xx = 0; xx < Wo; ++xx) {
        const auto& tx = xtaps[static_cast<std::size_t>(xx)];
        double v0 = ty.w0 * r0[tx.i0] + ty.w1 * r1[tx.i0];
        double v1 = ty.w0 * r0[tx.i1] + ty.w1 * r1[tx.i1];
        orow[xx] = static_cast<R>(tx.w0 * v0 + tx.w1 * v1);
      }
    }
  }
  count_macs(static_cast<std::uint64_t>(out.size() * 2), "interp");
  return Tensor<R>::make_result(
      {N, C, D, Ho, Wo}, std::move(out), {x},
      [x, N, C, D, H, W, Ho, Wo, ytaps, xtaps](typename Tensor<R>::Node& nd) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (std::int64_t ncd = 0; ncd < N * C * D; ++ncd) {
          R* gbase = gx.data() + ncd * H * W;
          const R* obase = nd.grad.data() + ncd * Ho * Wo;
          for (std::int64_t y = 0; y < Ho; ++y) {
            const auto& ty = ytaps[static_cast<std::size_t>(y)];
            for (std::int64_t xx = 0; xx < Wo; ++xx) {
              const auto& tx = xtaps[static_cast<std::size_t>(xx)];
              R g = obase[y * Wo + xx];
              gbase[ty.i0 * W + tx.i0] += static_cast<R>(ty.w0 * tx.w0) * g;
              gbase[ty.i0 * W + tx.i1] += static_cast<R>(ty.w0 * tx.w1) * g;
              gbase[ty.i1 * W + tx.i0] += static_cast<R>(ty.w1 * tx.w0) * g;
              gbase[ty.i1 * W + tx.i1] += static_cast<R>(ty.w1 * tx.w1) * g;
            }
          }
        }
      },
      "upsample_transverse");
}

// Linear interpolation along depth only; D_out = round(r * D). The one op in
// the stack that changes D.
template <typename R>
Tensor<R> upsample_depth(Tensor<R> x, double r, bool align_corners = true) {
  detail::check_rank(x, 5, "upsample_depth");
  if (r < 1.0) throw ContractError("upsample_depth: depth scale must be >= 1, got " + std::to_string(r));
  const std::int64_t N = x.extent(0), C = x.extent(1), D = x.extent(2), H = x.extent(3),
                     W = x.extent(4);
  const auto Do = static_cast<std::int64_t>(std::llround(r * static_cast<double>(D)));
  const std::int64_t HW = H * W;
  const auto taps = detail::linear_taps(D, Do, align_corners);
  std::vector<R> out(static_cast<std::size_t>(N * C * Do * HW));
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const R* ibase = x.value().data() + nc * D * HW;
    R* obase = out.data() + nc * Do * HW;
    for (std::int64_t d = 0; d < Do; ++d) {
      const auto& t = taps[static_cast<std::size_t>(d)];
      const R* s0 = ibase + t.i0 * HW;
      const R* s1 = ibase + t.i1 * HW;
      R* orow = obase + d * HW;
      for (std::int64_t i = 0; i < HW; ++i)
        orow[i] = static_cast<R>(t.w0 * s0[i] + t.w1 * s1[i]);
    }
  }
  count_macs(static_cast<std::uint64_t>(out.size() * 2), "interp");
  return Tensor<R>::make_result(
      {N, C, Do, H, W}, std::move(out), {x},
      [x, N, C, D, Do, HW, taps](typename Tensor<R>::Node& nd) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          R* gbase = gx.data() + nc * D * HW;
          const R* obase = nd.grad.data() + nc * Do * HW;
          for (std::int64_t d = 0; d < Do; ++d) {
            const auto& t = taps[static_cast<std::size_t>(d)];
            const R* orow = obase + d * HW;
            R* g0 = gbase + t.i0 * HW;
            R* g1 = gbase + t.i1 * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
              g0[i] += static_cast<R>(t.w0) * orow[i];
              g1[i] += static_cast<R>(t.w1) * orow[i];
            }
          }
        }
      },
      "upsample_depth");
}

}  // namespace lit
