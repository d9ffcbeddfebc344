#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "meshmotion/mesh.hpp"

namespace meshmotion {

/// Little-endian byte sink for the cache and checkpoint containers.
class BinaryWriter {
 public:
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_string(std::string_view s) {
    put_u64(s.size());
    put_bytes(s);
  }

  const std::string& bytes() const { return buf_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  template <class U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string bytes, std::string what = "binary file")
      : buf_(std::move(bytes)), what_(std::move(what)) {}
  static BinaryReader from_file(const std::filesystem::path& path);

  std::string_view take(std::size_t n) {
    if (n > buf_.size() - pos_) throw Error(what_ + ": truncated at byte " + std::to_string(pos_));
    std::string_view out(buf_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string string() {
    const std::uint64_t n = u64();
    return std::string(take(n));
  }
  /// Reads a count and rejects values that cannot fit in the remaining bytes.
  std::uint64_t count(std::size_t min_bytes_each = 1) {
    const std::uint64_t n = u64();
    if (min_bytes_each && n > (buf_.size() - pos_) / min_bytes_each) {
      throw Error(what_ + ": implausible count " + std::to_string(n));
    }
    return n;
  }
  bool done() const { return pos_ == buf_.size(); }
  const std::string& what() const { return what_; }

 private:
  template <class U>
  U get_le() {
    const auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_binary_file(const std::filesystem::path& path);

/// 64-bit FNV-1a; used as the content hash recorded in derived artifacts.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace meshmotion
