#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "litformer/rng.hpp"

namespace lit {

// A scalar 3D grid of Hounsfield Units with voxel spacing metadata,
// (slice interval mm, pixel mm, pixel mm). Row-major, W fastest.
struct Volume {
  std::int64_t d = 0, h = 0, w = 0;
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};
  std::vector<float> data;

  std::int64_t size() const { return d * h * w; }
  float& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((z * h + y) * w + x)];
  }
  float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((z * h + y) * w + x)];
  }
};

// Binary volume file, magic "LITVOL01":
//   8 bytes magic, u32 D H W, u32 dtype (0 = 32-bit float),
//   3x f32 spacing, then D*H*W little-endian f32 values (W fastest).
void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

struct DegradeConfig {
  int depth_factor = 2;        // consecutive slices averaged together
  double noise_sigma_hu = 25;  // additive Gaussian noise in HU
  std::uint64_t seed = 0;
};

// Deterministic synthetic scan: overlapping ellipsoids with tissue-like HU
// plateaus and smooth interior gradients over an exact -1000 background.
Volume make_phantom(std::uint64_t seed, std::int64_t d, std::int64_t h, std::int64_t w);

// Low-dose, low-longitudinal-resolution counterpart: disjoint groups of
// depth_factor slices are HU-averaged (slice interval scales up) and seeded
// Gaussian noise is added.
Volume degrade(const Volume& v, const DegradeConfig& cfg);

// HU window [-1000, 2000] clamped and mapped affinely to [0, 1]. The double
// forms keep the round trip exact to working precision; the float forms are
// limited by the 32-bit storage of the normalized value.
void normalize_hu(const float* hu, float* unit, std::int64_t n);
void denormalize_hu(const float* unit, float* hu, std::int64_t n);
void normalize_hu(const double* hu, double* unit, std::int64_t n);
void denormalize_hu(const double* unit, double* hu, std::int64_t n);
std::vector<float> normalize_hu(const Volume& v);
Volume denormalize_hu(const std::vector<float>& unit, std::int64_t d, std::int64_t h,
                      std::int64_t w, const std::array<float, 3>& spacing);

// Aligned training pair: the degraded patch and its full-resolution target.
// Target depth is patch depth times the depth factor; transverse extents
// match.
struct PatchPair {
  std::int64_t d = 0, h = 0, w = 0;  // degraded patch extents
  int depth_factor = 1;
  std::vector<float> input;   // (d, h, w), HU
  std::vector<float> target;  // (d * depth_factor, h, w), HU
};

// Sliding-window extraction with the final window clamped to the volume
// edge, shuffled deterministically from the seed.
std::vector<PatchPair> extract_patches(const Volume& degraded, const Volume& full,
                                       std::int64_t pd, std::int64_t ph, std::int64_t pw,
                                       std::int64_t stride_d, std::int64_t stride_hw,
                                       std::uint64_t seed);

// Transverse dihedral transforms: an optional horizontal flip followed by
// rotation by k quarter turns, applied to every slice.
struct Dihedral {
  int quarter_turns = 0;  // 0..3
  bool flip = false;

  Dihedral inverse() const;
  Dihedral compose(const Dihedral& then) const;  // this first, then `then`
};

std::vector<float> apply_transverse(const std::vector<float>& data, std::int64_t d, std::int64_t h,
                                    std::int64_t w, const Dihedral& t);

// One of {identity, h-flip, rot90, rot180, rot270}, chosen from the seed and
// applied identically to input and target. Depth is never touched.
void augment(PatchPair& pair, std::uint64_t seed);

}  // namespace lit
