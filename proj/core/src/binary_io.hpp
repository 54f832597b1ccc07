#pragma once

// Little-endian primitive encoding shared by the token cache and checkpoints.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter::detail {

template <typename Error>
class LittleEndianReader {
 public:
  explicit LittleEndianReader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(std::string("truncated file reading ") + what);
  }

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(unsigned_value(4, what)); }
  std::uint64_t u64(const char* what) { return unsigned_value(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::uint64_t unsigned_value(std::size_t width, const char* what) {
    std::array<unsigned char, 8> buf{};
    bytes(reinterpret_cast<char*>(buf.data()), width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& in_;
};

class LittleEndianWriter {
 public:
  explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

  void bytes(const char* src, std::size_t n) { out_.write(src, static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { unsigned_value(v, 4); }
  void u64(std::uint64_t v) { unsigned_value(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  void unsigned_value(std::uint64_t v, std::size_t width) {
    std::array<char, 8> buf{};
    for (std::size_t i = 0; i < width; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf.data(), static_cast<std::streamsize>(width));
  }

  std::ostream& out_;
};

}  // namespace nodefilter::detail
