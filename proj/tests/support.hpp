#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(FIXTURES_DIR) / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("readtrace-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  std::uint64_t raw() { return rng_(); }

  std::string bytes(std::size_t maxLen) {
    std::string s(static_cast<std::size_t>(integer(0, static_cast<int>(maxLen))), '\0');
    for (auto& c : s) c = static_cast<char>(integer(0, 255));
    return s;
  }
  std::string word(int minLen = 1, int maxLen = 8) {
    std::string s(static_cast<std::size_t>(integer(minLen, maxLen)), 'a');
    for (auto& c : s) c = static_cast<char>('a' + integer(0, 25));
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace testing
