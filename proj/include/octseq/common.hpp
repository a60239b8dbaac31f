#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace octseq {

// Error taxonomy mapped onto CLI exit codes: DataError -> 1,
// UsageError -> 2, ExternalDependencyError -> 3.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ExternalDependencyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace rng {

// All randomness flows through mt19937_64 with the draw->value mappings
// below. std::uniform_*_distribution is implementation-defined, so results
// would not be reproducible across standard libraries; these mappings are
// pinned byte-for-byte.
using Engine = std::mt19937_64;

// Uniform double in [0, 1) using the top 53 bits of one draw.
inline double uniform_unit(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(eng);
}

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t bounded(Engine& eng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("bounded: n must be positive");
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t draw = eng();
    if (draw >= threshold) return draw % n;
  }
}

template <typename T>
void shuffle(std::vector<T>& items, Engine& eng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded(eng, i));
    std::swap(items[i - 1], items[j]);
  }
}

// Standard normal via Box-Muller on the pinned uniform mapping.
inline double gaussian(Engine& eng) {
  double u1 = uniform_unit(eng);
  while (u1 <= 0.0) u1 = uniform_unit(eng);
  const double u2 = uniform_unit(eng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives independent stream seeds, e.g. per (epoch, batch, item).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(base ^ 0x6f4a7c15u);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

}  // namespace rng

namespace io {

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Little-endian scalar append/read for the binary cache/checkpoint formats.
void append_u32(std::string& out, std::uint32_t v);
void append_u64(std::string& out, std::uint64_t v);
void append_f32(std::string& out, float v);
void append_f64(std::string& out, double v);
void append_str(std::string& out, const std::string& s);  // u32 length + bytes

class Reader {
public:
  Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n);
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace io

// FNV-1a, used for preprocessing fingerprints.
std::uint64_t fnv1a(const std::string& data);
std::string hex64(std::uint64_t v);

// Formats a double with 17 significant digits so the text round-trips.
std::string format_g17(double v);

std::vector<std::string> split(const std::string& line, char sep);

}  // namespace octseq
