#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "oodbench/errors.hpp"

namespace oodbench {

// Little-endian writer. All binary containers in this project go through
// these helpers so layouts do not depend on host byte order.
struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void put_u8(std::uint8_t v) { bytes.push_back(v); }
  void put_u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(bits);
  }
  void put_magic(const char m[4]) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(m[i]));
  }
  void put_str(const std::string& s) {
    if (s.size() > UINT16_MAX) throw ParameterError("string too long to serialize");
    put_u16(static_cast<std::uint16_t>(s.size()));
    for (char c : s) bytes.push_back(static_cast<std::uint8_t>(c));
  }
};

// Bounds-checked reader; errors carry the byte offset where data ran out.
struct ByteReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  ByteReader(const std::uint8_t* d, std::size_t n) : data(d), size(n) {}
  explicit ByteReader(const std::vector<std::uint8_t>& v) : data(v.data()), size(v.size()) {}

  void need(std::size_t n) const {
    if (pos + n > size)
      throw FormatError("truncated data at offset " + std::to_string(pos));
  }
  std::uint8_t get_u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t get_u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data[pos + i]) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double get_f64() {
    const std::uint64_t bits = get_u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  void expect_magic(const char m[4], const std::string& what) {
    need(4);
    for (int i = 0; i < 4; ++i) {
      if (data[pos + i] != static_cast<std::uint8_t>(m[i]))
        throw FormatError("bad magic for " + what + " at offset " + std::to_string(pos));
    }
    pos += 4;
  }
  std::string get_str() {
    const std::uint16_t n = get_u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

// FNV-1a over raw bytes; used as the provenance hash of config files.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);
std::string hash_hex(std::uint64_t h);

}  // namespace oodbench
