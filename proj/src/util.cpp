#include "tabemb/util.hpp"

#include <cstdio>
#include <sstream>
#include <thread>

namespace tabemb {

std::string to_string(Task task) {
  switch (task) {
    case Task::Cta: return "cta";
    case Task::Cpa: return "cpa";
    case Task::Tta: return "tta";
  }
  throw std::logic_error("unknown task");
}

Task task_from_string(const std::string& name) {
  if (name == "cta" || name == "CTA") return Task::Cta;
  if (name == "cpa" || name == "CPA") return Task::Cpa;
  if (name == "tta" || name == "TTA") return Task::Tta;
  throw ValidationError("unknown task '" + name + "' (expected cta, cpa or tta)");
}

std::string to_hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void BinaryWriter::raw(const void* p, size_t n) {
  out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void BinaryWriter::f32_array(std::span<const float> v) {
  raw(v.data(), v.size() * sizeof(float));
}

void BinaryWriter::f64_array(std::span<const double> v) {
  raw(v.data(), v.size() * sizeof(double));
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("close failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw std::runtime_error("cannot open " + path.string());
}

void BinaryReader::raw(void* p, size_t n) {
  in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in_.gcount()) != n)
    throw ParseError("truncated file: " + path_.string());
}

uint8_t BinaryReader::u8() { uint8_t v; raw(&v, 1); return v; }
uint32_t BinaryReader::u32() { uint32_t v; raw(&v, 4); return v; }
uint64_t BinaryReader::u64() { uint64_t v; raw(&v, 8); return v; }
int32_t BinaryReader::i32() { int32_t v; raw(&v, 4); return v; }
float BinaryReader::f32() { float v; raw(&v, 4); return v; }
double BinaryReader::f64() { double v; raw(&v, 8); return v; }

std::string BinaryReader::str() {
  uint32_t n = u32();
  if (n > (1u << 24)) throw ParseError("implausible string length in " + path_.string());
  std::string s(n, '\0');
  if (n > 0) raw(s.data(), n);
  return s;
}

void BinaryReader::f32_array(std::span<float> out) {
  raw(out.data(), out.size() * sizeof(float));
}

void BinaryReader::f64_array(std::span<double> out) {
  raw(out.data(), out.size() * sizeof(double));
}

bool BinaryReader::at_eof() {
  return in_.peek() == std::char_traits<char>::eof();
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  size_t count = std::min<size_t>(static_cast<size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace tabemb
