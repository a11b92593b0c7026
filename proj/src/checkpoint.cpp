#include "litformer/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "litformer/errors.hpp"

namespace lit {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ofstream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& is, long long offset) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T)))
    throw FormatError("truncated checkpoint", offset);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, std::vector<std::int64_t> shape,
                     std::vector<float> data) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  if (n != static_cast<std::int64_t>(data.size()))
    throw ContractError("checkpoint entry '" + name + "' shape does not match data length");
  entries[name] = {std::move(shape), std::move(data)};
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ContractError("cannot open " + tmp + " for writing");
    os.write(kMagic, 8);
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(ckpt.step));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, entry] : ckpt.entries) {
      write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_le<std::uint8_t>(os, static_cast<std::uint8_t>(entry.first.size()));
      for (auto e : entry.first) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
      write_le<std::uint64_t>(os, offset);
      offset += entry.second.size() * 4;
    }
    for (const auto& [name, entry] : ckpt.entries)
      os.write(reinterpret_cast<const char*>(entry.second.data()),
               static_cast<std::streamsize>(entry.second.size() * 4));
    if (!os) throw ContractError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ContractError("cannot move " + tmp + " into place");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad magic in " + path, 0);
  Checkpoint ckpt;
  ckpt.step = static_cast<std::int64_t>(read_le<std::uint64_t>(is, 8));
  const auto count = read_le<std::uint32_t>(is, 16);
  struct Pending {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset;
    std::int64_t count;
  };
  std::vector<Pending> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    const long long where = is.tellg();
    const auto name_len = read_le<std::uint16_t>(is, where);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("truncated manifest name", where);
    const auto rank = read_le<std::uint8_t>(is, where);
    std::vector<std::int64_t> shape(rank);
    std::int64_t n = 1;
    for (auto& e : shape) {
      e = read_le<std::uint32_t>(is, where);
      n *= e;
    }
    const auto offset = read_le<std::uint64_t>(is, where);
    manifest.push_back({std::move(name), std::move(shape), offset, n});
  }
  const long long data_start = is.tellg();
  for (auto& entry : manifest) {
    is.seekg(data_start + static_cast<long long>(entry.offset));
    std::vector<float> data(static_cast<std::size_t>(entry.count));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4)))
      throw FormatError("truncated data for checkpoint entry '" + entry.name + "'",
                        data_start + static_cast<long long>(entry.offset));
    ckpt.entries[entry.name] = {std::move(entry.shape), std::move(data)};
  }
  return ckpt;
}

}  // namespace lit
