#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lit {

// Evaluation metrics on the normalized [0, 1] intensity scale. Inputs are
// clamped to that range first, which keeps PSNR non-negative and matches the
// windowed convention of the data pipeline.
struct MetricReport {
  std::string id;
  double psnr = 0;    // dB; capped at kPsnrCap for identical volumes
  double rmse = 0;    // normalized intensity units
  double ssim2d = 0;  // mean per-slice structural similarity
  double ssim3d = 0;  // volumetric structural similarity
  std::string json_line() const;
};

inline constexpr double kPsnrCap = 120.0;

double mse_2d(const double* a, const double* b, std::int64_t n);
double psnr_volume(const std::vector<double>& a, const std::vector<double>& b);
double rmse_volume(const std::vector<double>& a, const std::vector<double>& b);

// Gaussian-window structural similarity (11 taps, sigma 1.5, valid
// windowing, stabilizers 0.01/0.03 on unit range).
double ssim_2d(const std::vector<double>& a, const std::vector<double>& b, std::int64_t h,
               std::int64_t w);
// Mean of ssim_2d over the depth slices of (D, H, W) volumes.
double ssim_2d_mean(const std::vector<double>& a, const std::vector<double>& b, std::int64_t d,
                    std::int64_t h, std::int64_t w);
// Volumetric form with a separable 3D window; the depth taps shrink to the
// largest odd length <= D when the volume is shallow.
double ssim_3d(const std::vector<double>& a, const std::vector<double>& b, std::int64_t d,
               std::int64_t h, std::int64_t w);

MetricReport evaluate_pair(const std::string& id, const std::vector<double>& pred,
                           const std::vector<double>& target, std::int64_t d, std::int64_t h,
                           std::int64_t w);

// Fixed-bin residual histogram in HU, [-200, 200] in steps of 5.
struct ResidualHistogram {
  static constexpr double kLo = -200.0, kHi = 200.0, kStep = 5.0;
  static constexpr int kBins = 80;
  std::vector<std::int64_t> counts = std::vector<std::int64_t>(kBins, 0);
  std::int64_t underflow = 0, overflow = 0;

  void add(double residual_hu);
  std::string to_text(const std::string& label) const;
};

}  // namespace lit
