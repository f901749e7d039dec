#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace edr {

// Error taxonomy. std::invalid_argument is used for precondition violations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents. Carries the byte offset of the offending record.
struct FormatError : DataError {
  FormatError(const std::string& msg, uint64_t offset)
      : DataError(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  uint64_t byte_offset;
};

// Non-finite values encountered during optimization or sampling.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Combine a base seed with stream identifiers to get independent substreams.
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

// Deterministic RNG. Gaussian draws use Box-Muller on explicit uniforms so the
// byte stream does not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in (0, 1]
  double uniform() {
    uint64_t bits = gen_() >> 11;
    double u = static_cast<double>(bits) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  // uniform integer in [0, bound)
  uint64_t below(uint64_t bound) {
    // rejection sampling keeps the draw exactly uniform
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % bound;
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

// -- little-endian stream helpers -------------------------------------------

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& os, uint8_t v) { write_bytes(os, &v, 1); }

inline void write_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
  write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = uint8_t(v >> (8 * i));
  write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline void write_i64(std::ostream& os, int64_t v) { write_u64(os, static_cast<uint64_t>(v)); }

inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

// Readers throw FormatError on truncation, reporting where the read started.
inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  uint64_t at = static_cast<uint64_t>(is.tellg());
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw FormatError(std::string("truncated file while reading ") + what, at);
}

inline uint8_t read_u8(std::istream& is, const char* what) {
  uint8_t v;
  read_bytes(is, &v, 1, what);
  return v;
}

inline uint16_t read_u16(std::istream& is, const char* what) {
  uint8_t b[2];
  read_bytes(is, b, 2, what);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

inline uint32_t read_u32(std::istream& is, const char* what) {
  uint8_t b[4];
  read_bytes(is, b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

inline uint64_t read_u64(std::istream& is, const char* what) {
  uint8_t b[8];
  read_bytes(is, b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

inline int64_t read_i64(std::istream& is, const char* what) {
  return static_cast<int64_t>(read_u64(is, what));
}

inline float read_f32(std::istream& is, const char* what) {
  uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

// Static-partition parallel loop. Results must be written to disjoint slots so
// that the final reduction order (and hence the float result) is independent
// of the thread count.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int64_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace edr
