#include "litformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "litformer/errors.hpp"

namespace lit {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_taps(int k, double sigma) {
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

std::vector<double> clamped(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i], 0.0, 1.0);
  return out;
}

// Separable valid blur along one axis of a (d, h, w) grid.
std::vector<double> blur_axis(const std::vector<double>& in, std::int64_t d, std::int64_t h,
                              std::int64_t w, int axis, const std::vector<double>& taps,
                              std::int64_t& d_out, std::int64_t& h_out, std::int64_t& w_out) {
  const auto k = static_cast<std::int64_t>(taps.size());
  d_out = d;
  h_out = h;
  w_out = w;
  std::int64_t len = axis == 0 ? d : axis == 1 ? h : w;
  std::int64_t out_len = len - k + 1;
  (axis == 0 ? d_out : axis == 1 ? h_out : w_out) = out_len;
  std::vector<double> out(static_cast<std::size_t>(d_out * h_out * w_out));
  for (std::int64_t z = 0; z < d_out; ++z)
    for (std::int64_t y = 0; y < h_out; ++y)
      for (std::int64_t x = 0; x < w_out; ++x) {
        double acc = 0;
        for (std::int64_t t = 0; t < k; ++t) {
          std::int64_t zz = axis == 0 ? z + t : z;
          std::int64_t yy = axis == 1 ? y + t : y;
          std::int64_t xx = axis == 2 ? x + t : x;
          acc += taps[static_cast<std::size_t>(t)] * in[static_cast<std::size_t>((zz * h + yy) * w + xx)];
        }
        out[static_cast<std::size_t>((z * h_out + y) * w_out + x)] = acc;
      }
  return out;
}

// SSIM over local Gaussian statistics with per-axis tap lengths.
double ssim_windowed(const std::vector<double>& a, const std::vector<double>& b, std::int64_t d,
                     std::int64_t h, std::int64_t w, int kd, int kh, int kw, double sigma) {
  if (h < kh || w < kw || d < kd) throw ContractError("ssim: volume smaller than window");
  auto blur = [&](const std::vector<double>& v) {
    std::int64_t dd = d, hh = h, ww = w;
    std::vector<double> out = v;
    if (kd > 1) out = blur_axis(out, dd, hh, ww, 0, gaussian_taps(kd, sigma), dd, hh, ww);
    out = blur_axis(out, dd, hh, ww, 1, gaussian_taps(kh, sigma), dd, hh, ww);
    out = blur_axis(out, dd, hh, ww, 2, gaussian_taps(kw, sigma), dd, hh, ww);
    return out;
  };
  std::vector<double> aa(a.size()), bb(b.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = blur(a), mu_b = blur(b);
  const auto m_aa = blur(aa), m_bb = blur(bb), m_ab = blur(ab);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = m_aa[i] - ma * ma;
    const double vb = m_bb[i] - mb * mb;
    const double cab = m_ab[i] - ma * mb;
    total += ((2 * ma * mb + kC1) * (2 * cab + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double mse_2d(const double* a, const double* b, std::int64_t n) {
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    double r = a[i] - b[i];
    acc += r * r;
  }
  return acc / static_cast<double>(n);
}

double psnr_volume(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("psnr: size mismatch");
  const auto ca = clamped(a), cb = clamped(b);
  const double mse = mse_2d(ca.data(), cb.data(), static_cast<std::int64_t>(ca.size()));
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double rmse_volume(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("rmse: size mismatch");
  const auto ca = clamped(a), cb = clamped(b);
  return std::sqrt(mse_2d(ca.data(), cb.data(), static_cast<std::int64_t>(ca.size())));
}

double ssim_2d(const std::vector<double>& a, const std::vector<double>& b, std::int64_t h,
               std::int64_t w) {
  if (a.size() != b.size() || static_cast<std::int64_t>(a.size()) != h * w)
    throw ContractError("ssim_2d: size mismatch");
  return ssim_windowed(clamped(a), clamped(b), 1, h, w, 1, 11, 11, 1.5);
}

double ssim_2d_mean(const std::vector<double>& a, const std::vector<double>& b, std::int64_t d,
                    std::int64_t h, std::int64_t w) {
  double total = 0;
  for (std::int64_t z = 0; z < d; ++z) {
    std::vector<double> sa(a.begin() + z * h * w, a.begin() + (z + 1) * h * w);
    std::vector<double> sb(b.begin() + z * h * w, b.begin() + (z + 1) * h * w);
    total += ssim_2d(sa, sb, h, w);
  }
  return total / static_cast<double>(d);
}

double ssim_3d(const std::vector<double>& a, const std::vector<double>& b, std::int64_t d,
               std::int64_t h, std::int64_t w) {
  if (a.size() != b.size() || static_cast<std::int64_t>(a.size()) != d * h * w)
    throw ContractError("ssim_3d: size mismatch");
  int kd = 11;
  if (d < 11) kd = static_cast<int>(d % 2 == 0 ? d - 1 : d);  // shallow volumes
  return ssim_windowed(clamped(a), clamped(b), d, h, w, kd, 11, 11, 1.5);
}

MetricReport evaluate_pair(const std::string& id, const std::vector<double>& pred,
                           const std::vector<double>& target, std::int64_t d, std::int64_t h,
                           std::int64_t w) {
  MetricReport r;
  r.id = id;
  r.psnr = psnr_volume(pred, target);
  r.rmse = rmse_volume(pred, target);
  r.ssim2d = ssim_2d_mean(clamped(pred), clamped(target), d, h, w);
  r.ssim3d = ssim_3d(pred, target, d, h, w);
  return r;
}

std::string MetricReport::json_line() const {
  std::ostringstream os;
  os.precision(10);
  os << "{\"id\":\"" << id << "\",\"psnr\":" << psnr << ",\"rmse\":" << rmse
     << ",\"ssim2d\":" << ssim2d << ",\"ssim3d\":" << ssim3d << "}";
  return os.str();
}

void ResidualHistogram::add(double residual_hu) {
  if (residual_hu < kLo) {
    ++underflow;
  } else if (residual_hu >= kHi) {
    ++overflow;
  } else {
    auto bin = static_cast<int>((residual_hu - kLo) / kStep);
    bin = std::clamp(bin, 0, kBins - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
}

std::string ResidualHistogram::to_text(const std::string& label) const {
  std::ostringstream os;
  os << "# residual HU histogram: " << label << "\n";
  os << "# bin_lo bin_hi count\n";
  for (int i = 0; i < kBins; ++i)
    os << (kLo + i * kStep) << " " << (kLo + (i + 1) * kStep) << " "
       << counts[static_cast<std::size_t>(i)] << "\n";
  os << "# underflow " << underflow << "\n# overflow " << overflow << "\n";
  return os.str();
}

}  // namespace lit
