#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vcal/scoring.hpp"

namespace testing_support {

inline std::filesystem::path fixtures() { return VCAL_TEST_FIXTURES; }
inline std::filesystem::path templates() { return VCAL_TEST_TEMPLATES; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("vcal-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
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

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline vcal::CalibrationRecord record(double conf, bool correct, bool attempted = true,
                                      vcal::TaskKind kind = vcal::TaskKind::mcq) {
  vcal::CalibrationRecord r;
  r.item_id = "r";
  r.confidence = conf;
  r.correct = correct;
  r.attempted = attempted;
  r.group.task_kind = kind;
  return r;
}

/// Random records; confidences are drawn from a coarse grid half the time so
/// bin edges and ties occur.
inline std::vector<vcal::CalibrationRecord> random_records(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 20);
  std::bernoulli_distribution coin(0.5);
  std::vector<vcal::CalibrationRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    double c = coin(rng) ? u(rng) : grid(rng) / 20.0;
    out.push_back(record(c, coin(rng)));
  }
  return out;
}

}  // namespace testing_support
