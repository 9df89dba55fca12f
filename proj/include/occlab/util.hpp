#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace occlab::util {

// Deterministic RNG used everywhere. std::uniform_real_distribution is
// implementation-defined, so draws are derived from the raw engine output
// to keep artifacts byte-stable across library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

// Stateless per-item seed derivation so parallel fills stay deterministic
// regardless of scheduling.
inline uint64_t derive_seed(uint64_t base, uint64_t item) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (item + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. Workers must write disjoint outputs; there is no reduction, so
// results are identical for any thread count.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn);

int default_threads();

// Git-style content hash: sha1("blob <size>\0" + bytes), hex-encoded.
std::string content_hash(const void* data, size_t size);
std::string content_hash(const std::string& s);
std::string file_hash(const std::filesystem::path& p);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

// Shortest round-trip decimal form of a double; used by every CSV writer so
// reruns produce byte-identical files.
std::string format_double(double v);

// One CSV row from already-formatted cells.
std::string csv_row(const std::vector<std::string>& cells);

}  // namespace occlab::util
