#include "sgglc/sgt_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace sgglc {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("truncated SGT1 header: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_sgt(const std::string& path, const std::vector<i64>& dims,
               const float* data, i64 count) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write("SGT1", 4);
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  i64 expect = 1;
  for (i64 d : dims) {
    if (d < 0) throw ShapeError("negative dim in SGT1 write");
    put_u32(os, static_cast<std::uint32_t>(d));
    expect *= d;
  }
  if (expect != count) throw ShapeError("SGT1 payload length does not match dims");
  static_assert(sizeof(float) == 4);
  // x86-64/little-endian: payload goes out verbatim.
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  if (!os) throw IoError("short write: " + path);
}

void read_sgt(const std::string& path, std::vector<i64>& dims, std::vector<float>& data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SGT1", 4) != 0)
    throw FormatError("bad SGT1 magic: " + path);
  const std::uint32_t rank = get_u32(is, path);
  if (rank > 8) throw FormatError("SGT1 rank too large: " + path);
  dims.clear();
  i64 count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(is, path);
    dims.push_back(static_cast<i64>(d));
    count *= static_cast<i64>(d);
    if (count > (i64(1) << 36))  // 256 GiB of f32 is never a real tensor here
      throw FormatError("SGT1 dims implausibly large: " + path);
  }
  data.resize(static_cast<size_t>(count));
  if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4)))
    throw FormatError("truncated SGT1 payload: " + path);
}

}  // namespace sgglc
