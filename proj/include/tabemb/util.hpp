#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabemb/types.hpp"

namespace tabemb {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

constexpr uint64_t kFnvOffset = 14695981039346656037ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

// Raw-byte form carries a distinct name: a string literal passed to an
// (void*, size_t) overload set would silently bind its second argument as
// the length.
inline uint64_t fnv1a64_bytes(const void* data, size_t len, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  return fnv1a64_bytes(s.data(), s.size(), h);
}

inline uint64_t hash_mix(uint64_t h, uint64_t v) {
  return fnv1a64_bytes(&v, sizeof(v), h);
}

std::string to_hex16(uint64_t v);

// Little-endian binary stream helpers used by the pool, cache and
// checkpoint formats. Readers throw ParseError on short reads so a
// truncated file surfaces as a structured error, not garbage.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i32(int32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(std::string_view s);
  void f32_array(std::span<const float> v);
  void f64_array(std::span<const double> v);
  void close();

 private:
  void raw(const void* p, size_t n);
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  int32_t i32();
  float f32();
  double f64();
  std::string str();
  void f32_array(std::span<float> out);
  void f64_array(std::span<double> out);
  bool at_eof();

 private:
  void raw(void* p, size_t n);
  std::ifstream in_;
  std::filesystem::path path_;
};

// Runs fn(i) for i in [0, n). With jobs <= 1 the loop is sequential; with
// jobs > 1, indices are processed by a small worker pool. Callers that
// need ordered output write into preallocated slots by index.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace tabemb
