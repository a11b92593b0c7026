#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lit {

// One conv or attention-matmul layer as seen by the complexity analyzer.
// macs are the analytic multiply-accumulate count for a specific input size,
// mirroring exactly what the instrumented forward pass records under `path`.
struct LayerEntry {
  std::string path;
  std::int64_t weight_params = 0;
  std::int64_t bias_params = 0;
  std::int64_t macs = 0;
  // For factorized (2+1)D conv pairs: cost of the K^3 kernel with the same
  // receptive footprint, for the reduction-ratio report. Zero elsewhere.
  std::int64_t params_3d_equiv = 0;
  std::int64_t macs_3d_equiv = 0;
};

using LayerEntries = std::vector<LayerEntry>;

// Scope-path helper mirroring OpScope nesting.
inline std::string join_path(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "/" + name;
}

}  // namespace lit
