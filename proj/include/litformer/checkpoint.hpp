#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lit {

// Checkpoint container, magic "LITCKPT1":
//   8 bytes magic
//   u64 step counter
//   u32 entry count, then per entry:
//     u16 name length, name bytes, u8 rank, u32 extents..., u64 data offset
//   raw 32-bit little-endian float data, offsets relative to the data block
// Writes go to a temp file renamed into place, so an interrupted run always
// leaves the previous checkpoint intact.
struct Checkpoint {
  std::int64_t step = 0;
  // name -> (shape, data)
  std::map<std::string, std::pair<std::vector<std::int64_t>, std::vector<float>>> entries;

  void add(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data);
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace lit
