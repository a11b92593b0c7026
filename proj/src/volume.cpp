#include "litformer/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "litformer/errors.hpp"

namespace lit {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'T', 'V', 'O', 'L', '0', '1'};
constexpr float kHuFloor = -1024.0f;
constexpr float kHuCeil = 3071.0f;
constexpr float kWindowLo = -1000.0f;
constexpr float kWindowHi = 2000.0f;

void write_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& is, long long offset) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated header", offset);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_volume(const std::string& path, const Volume& v) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ContractError("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(v.d));
  write_u32(os, static_cast<std::uint32_t>(v.h));
  write_u32(os, static_cast<std::uint32_t>(v.w));
  write_u32(os, 0);  // dtype 0: 32-bit float
  for (float s : v.spacing) {
    std::uint32_t bits;
    std::memcpy(&bits, &s, 4);
    write_u32(os, bits);
  }
  // Assumes a little-endian host, as does the rest of the format.
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size() * 4));
  if (!os) throw ContractError("short write to " + path);
}

Volume read_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad magic in " + path, 0);
  Volume v;
  v.d = read_u32(is, 8);
  v.h = read_u32(is, 12);
  v.w = read_u32(is, 16);
  std::uint32_t dtype = read_u32(is, 20);
  if (dtype != 0) throw FormatError("unknown dtype " + std::to_string(dtype) + " in " + path, 20);
  for (int i = 0; i < 3; ++i) {
    std::uint32_t bits = read_u32(is, 24 + 4 * i);
    std::memcpy(&v.spacing[static_cast<std::size_t>(i)], &bits, 4);
  }
  v.data.resize(static_cast<std::size_t>(v.size()));
  if (!is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * 4)))
    throw FormatError("truncated payload in " + path + ", expected " +
                          std::to_string(v.size() * 4) + " data bytes",
                      36);
  return v;
}

Volume make_phantom(std::uint64_t seed, std::int64_t d, std::int64_t h, std::int64_t w) {
  Rng rng(seed);
  Volume v;
  v.d = d;
  v.h = h;
  v.w = w;
  v.spacing = {1.5f, 1.0f, 1.0f};
  v.data.assign(static_cast<std::size_t>(d * h * w), -1000.0f);

  struct Ellipsoid {
    double cz, cy, cx, rz, ry, rx, value, gz, gy, gx;
  };
  std::vector<Ellipsoid> shapes;
  // One large soft-tissue body, then smaller internal structures.
  shapes.push_back({d / 2.0, h / 2.0, w / 2.0, d * 0.45, h * 0.38, w * 0.38,
                    rng.uniform(20, 60), rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)});
  const int extra = 5 + static_cast<int>(rng.below(5));
  for (int i = 0; i < extra; ++i) {
    double value = (rng.uniform() < 0.35) ? rng.uniform(400, 1000)   // bone
                                          : rng.uniform(0, 100);     // soft tissue
    shapes.push_back({rng.uniform(0.25, 0.75) * d, rng.uniform(0.3, 0.7) * h,
                      rng.uniform(0.3, 0.7) * w, rng.uniform(0.08, 0.3) * d,
                      rng.uniform(0.06, 0.22) * h, rng.uniform(0.06, 0.22) * w, value,
                      rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)});
  }
  for (std::int64_t z = 0; z < d; ++z)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        for (const auto& e : shapes) {
          const double dz = (z - e.cz) / e.rz, dy = (y - e.cy) / e.ry, dx = (x - e.cx) / e.rx;
          if (dz * dz + dy * dy + dx * dx <= 1.0) {
            // later shapes overwrite earlier ones; gradient stays inside
            double val = e.value + e.gz * dz + e.gy * dy + e.gx * dx;
            v.at(z, y, x) = static_cast<float>(std::clamp(val, double(kHuFloor), double(kHuCeil)));
          }
        }
      }
  return v;
}

Volume degrade(const Volume& v, const DegradeConfig& cfg) {
  if (cfg.depth_factor < 2) throw ContractError("degrade: depth_factor must be >= 2");
  if (v.d % cfg.depth_factor != 0)
    throw ContractError("degrade: depth_factor " + std::to_string(cfg.depth_factor) +
                        " does not divide depth " + std::to_string(v.d));
  Volume out;
  out.d = v.d / cfg.depth_factor;
  out.h = v.h;
  out.w = v.w;
  out.spacing = {v.spacing[0] * static_cast<float>(cfg.depth_factor), v.spacing[1], v.spacing[2]};
  out.data.resize(static_cast<std::size_t>(out.size()));
  const std::int64_t hw = v.h * v.w;
  for (std::int64_t z = 0; z < out.d; ++z)
    for (std::int64_t i = 0; i < hw; ++i) {
      double acc = 0;
      for (int g = 0; g < cfg.depth_factor; ++g)
        acc += v.data[static_cast<std::size_t>((z * cfg.depth_factor + g) * hw + i)];
      out.data[static_cast<std::size_t>(z * hw + i)] =
          static_cast<float>(acc / cfg.depth_factor);
    }
  if (cfg.noise_sigma_hu > 0) {
    Rng rng(cfg.seed);
    for (auto& x : out.data) x += static_cast<float>(cfg.noise_sigma_hu * rng.normal());
  }
  return out;
}

void normalize_hu(const float* hu, float* unit, std::int64_t n) {
  constexpr float span = kWindowHi - kWindowLo;
  for (std::int64_t i = 0; i < n; ++i)
    unit[i] = (std::clamp(hu[i], kWindowLo, kWindowHi) - kWindowLo) / span;
}

void denormalize_hu(const float* unit, float* hu, std::int64_t n) {
  constexpr float span = kWindowHi - kWindowLo;
  for (std::int64_t i = 0; i < n; ++i) hu[i] = unit[i] * span + kWindowLo;
}

void normalize_hu(const double* hu, double* unit, std::int64_t n) {
  constexpr double lo = kWindowLo, hi = kWindowHi;
  for (std::int64_t i = 0; i < n; ++i) unit[i] = (std::clamp(hu[i], lo, hi) - lo) / (hi - lo);
}

void denormalize_hu(const double* unit, double* hu, std::int64_t n) {
  constexpr double lo = kWindowLo, hi = kWindowHi;
  for (std::int64_t i = 0; i < n; ++i) hu[i] = unit[i] * (hi - lo) + lo;
}

std::vector<float> normalize_hu(const Volume& v) {
  std::vector<float> out(v.data.size());
  normalize_hu(v.data.data(), out.data(), v.size());
  return out;
}

Volume denormalize_hu(const std::vector<float>& unit, std::int64_t d, std::int64_t h,
                      std::int64_t w, const std::array<float, 3>& spacing) {
  Volume v;
  v.d = d;
  v.h = h;
  v.w = w;
  v.spacing = spacing;
  v.data.resize(unit.size());
  denormalize_hu(unit.data(), v.data.data(), static_cast<std::int64_t>(unit.size()));
  return v;
}

namespace {

// 0, s, 2s, ... plus a final window clamped to the edge.
std::vector<std::int64_t> window_starts(std::int64_t extent, std::int64_t window,
                                        std::int64_t stride) {
  if (window > extent) throw ContractError("patch extent exceeds volume extent");
  std::vector<std::int64_t> starts;
  for (std::int64_t p = 0; p + window <= extent; p += stride) starts.push_back(p);
  if (starts.empty() || starts.back() != extent - window) starts.push_back(extent - window);
  return starts;
}

std::vector<float> crop(const std::vector<float>& data, std::int64_t d, std::int64_t h,
                        std::int64_t w, std::int64_t z0, std::int64_t y0, std::int64_t x0,
                        std::int64_t pd, std::int64_t ph, std::int64_t pw) {
  (void)d;
  std::vector<float> out(static_cast<std::size_t>(pd * ph * pw));
  for (std::int64_t z = 0; z < pd; ++z)
    for (std::int64_t y = 0; y < ph; ++y)
      std::memcpy(&out[static_cast<std::size_t>((z * ph + y) * pw)],
                  &data[static_cast<std::size_t>(((z0 + z) * h + y0 + y) * w + x0)],
                  static_cast<std::size_t>(pw) * 4);
  return out;
}

}  // namespace

std::vector<PatchPair> extract_patches(const Volume& degraded, const Volume& full, std::int64_t pd,
                                       std::int64_t ph, std::int64_t pw, std::int64_t stride_d,
                                       std::int64_t stride_hw, std::uint64_t seed) {
  if (degraded.h != full.h || degraded.w != full.w)
    throw ContractError("extract_patches: transverse extents disagree");
  if (full.d % degraded.d != 0) throw ContractError("extract_patches: depths are not an integer ratio");
  const auto r = static_cast<int>(full.d / degraded.d);
  const auto zs = window_starts(degraded.d, pd, stride_d);
  const auto ys = window_starts(degraded.h, ph, stride_hw);
  const auto xs = window_starts(degraded.w, pw, stride_hw);
  std::vector<PatchPair> pairs;
  for (std::int64_t z0 : zs)
    for (std::int64_t y0 : ys)
      for (std::int64_t x0 : xs) {
        PatchPair p;
        p.d = pd;
        p.h = ph;
        p.w = pw;
        p.depth_factor = r;
        p.input = crop(degraded.data, degraded.d, degraded.h, degraded.w, z0, y0, x0, pd, ph, pw);
        p.target = crop(full.data, full.d, full.h, full.w, z0 * r, y0, x0, pd * r, ph, pw);
        pairs.push_back(std::move(p));
      }
  // Fisher-Yates with the seeded stream.
  Rng rng(seed);
  for (std::size_t i = pairs.size(); i > 1; --i)
    std::swap(pairs[i - 1], pairs[rng.below(i)]);
  return pairs;
}

Dihedral Dihedral::inverse() const {
  // flips are involutions; a flip conjugates the rotation
  if (flip) return *this;
  return {(4 - quarter_turns) % 4, false};
}

Dihedral Dihedral::compose(const Dihedral& then) const {
  // apply *this, then `then`:  (k2, f2) . (k1, f1)
  Dihedral out;
  if (then.flip)
    out.quarter_turns = (then.quarter_turns - quarter_turns + 8) % 4;
  else
    out.quarter_turns = (then.quarter_turns + quarter_turns) % 4;
  out.flip = (flip != then.flip);
  return out;
}

std::vector<float> apply_transverse(const std::vector<float>& data, std::int64_t d, std::int64_t h,
                                    std::int64_t w, const Dihedral& t) {
  if ((t.quarter_turns % 2) != 0 && h != w)
    throw ContractError("quarter-turn rotation requires square transverse extents");
  std::vector<float> out(data.size());
  for (std::int64_t z = 0; z < d; ++z) {
    const float* in = &data[static_cast<std::size_t>(z * h * w)];
    float* o = &out[static_cast<std::size_t>(z * h * w)];
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        std::int64_t sy = y, sx = x;
        // invert the rotation to find the source pixel
        switch (t.quarter_turns) {
          case 1: sy = x, sx = h - 1 - y; break;           // rot90: (y,x) <- (x, H-1-y)
          case 2: sy = h - 1 - y, sx = w - 1 - x; break;   // rot180
          case 3: sy = w - 1 - x, sx = y; break;           // rot270
          default: break;
        }
        if (t.flip) sx = w - 1 - sx;
        o[y * w + x] = in[sy * w + sx];
      }
  }
  return out;
}

void augment(PatchPair& pair, std::uint64_t seed) {
  Rng rng(seed);
  // identity, h-flip, rot90, rot180, rot270
  static const Dihedral kChoices[5] = {{0, false}, {0, true}, {1, false}, {2, false}, {3, false}};
  const Dihedral& t = kChoices[rng.below(5)];
  if ((t.quarter_turns % 2) != 0 && pair.h != pair.w) return;  // non-square: skip rotations
  pair.input = apply_transverse(pair.input, pair.d, pair.h, pair.w, t);
  pair.target = apply_transverse(pair.target, pair.d * pair.depth_factor, pair.h, pair.w, t);
}

}  // namespace lit
