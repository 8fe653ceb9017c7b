#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "btnn/common.hpp"
#include "btnn/tensors.hpp"

namespace btnn {

namespace binio {

// File formats are little-endian; this engine only targets such hosts.
static_assert(std::endian::native == std::endian::little);

inline void write_raw(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw io_error("write failed");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  write_raw(os, &v, sizeof v);
}

template <class T>
void write_span(std::ostream& os, const T* p, std::size_t count) {
  if (count) write_raw(os, p, count * sizeof(T));
}

inline void read_raw(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw io_error("unexpected end of file");
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  read_raw(is, &v, sizeof v);
  return v;
}

template <class T>
std::vector<T> read_vec(std::istream& is, std::size_t count) {
  std::vector<T> v(count);
  if (count) read_raw(is, v.data(), count * sizeof(T));
  return v;
}

inline void write_magic(std::ostream& os, const char (&m)[5]) { write_raw(os, m, 4); }

inline void expect_magic(std::istream& is, const char (&m)[5], const char* what) {
  char got[4];
  read_raw(is, got, 4);
  if (got[0] != m[0] || got[1] != m[1] || got[2] != m[2] || got[3] != m[3])
    throw io_error(std::string("bad magic, not a ") + what + " file");
}

}  // namespace binio

/// Batch input file: magic BTIN, u32 height, width, channels (16-byte
/// header), then raw f32 NHWC samples. The batch size is whatever the
/// payload holds.
inline void write_batch(const std::string& path, const RealTensorNHWC& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  binio::write_magic(os, "BTIN");
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.height));
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.width));
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.channels));
  binio::write_span(os, t.v.data(), t.v.size());
}

inline RealTensorNHWC read_batch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  std::error_code ec;
  const auto fsize = std::filesystem::file_size(path, ec);
  if (ec) throw io_error("cannot stat " + path);
  binio::expect_magic(is, "BTIN", "batch");
  const auto h = binio::read_pod<std::uint32_t>(is);
  const auto w = binio::read_pod<std::uint32_t>(is);
  const auto c = binio::read_pod<std::uint32_t>(is);
  if (h == 0 || w == 0 || c == 0) throw io_error(path + ": zero dimension");
  if (fsize < 16) throw io_error(path + ": truncated header");
  const std::uint64_t payload = fsize - 16;
  const std::uint64_t sample = std::uint64_t{h} * w * c * sizeof(float);
  if (payload == 0 || payload % sample != 0)
    throw io_error(path + ": payload is not a whole number of samples");
  const std::size_t n = payload / sample;
  RealTensorNHWC t(n, h, w, c);
  binio::read_raw(is, t.v.data(), t.v.size() * sizeof(float));
  return t;
}

}  // namespace btnn
