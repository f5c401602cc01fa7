#pragma once

// Brute-force reference implementations used only by the tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "vcal/scoring.hpp"

namespace oracle {

struct Scored {
  double confidence;
  bool correct;
};

inline std::vector<Scored> scored(const std::vector<vcal::CalibrationRecord>& recs, bool attempted_only) {
  std::vector<Scored> out;
  for (const auto& r : recs) {
    if (attempted_only && !r.attempted) continue;
    out.push_back({r.confidence, r.correct});
  }
  return out;
}

// Scans every bin and tests (m-1)/M < c <= m/M directly; 0 goes to bin 1.
inline int bin_by_scan(double c, int M) {
  if (c == 0.0) return 1;
  for (int m = 1; m <= M; ++m) {
    double lo = static_cast<double>(m - 1) / M;
    double hi = static_cast<double>(m) / M;
    if (lo < c && c <= hi) return m;
  }
  return -1;
}

// Sum over bins of (|B_m|/n) * |acc(B_m) - avgConf(B_m)|, straight from the definition.
inline double ece(const std::vector<Scored>& s, int M) {
  const double n = static_cast<double>(s.size());
  double total = 0.0;
  for (int m = 1; m <= M; ++m) {
    std::vector<Scored> bin;
    for (const auto& x : s) {
      if (bin_by_scan(x.confidence, M) == m) bin.push_back(x);
    }
    if (bin.empty()) continue;
    long double conf = 0.0L;
    std::size_t right = 0;
    for (const auto& x : bin) {
      conf += x.confidence;
      right += x.correct ? 1 : 0;
    }
    const double size = static_cast<double>(bin.size());
    const double acc = static_cast<double>(right) / size;
    const double avg = static_cast<double>(conf / static_cast<long double>(bin.size()));
    total += (size / n) * std::fabs(acc - avg);
  }
  return total;
}

// Pairwise Mann-Whitney: every (correct, wrong) pair, ties worth one half.
inline double auroc(const std::vector<Scored>& s) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& c : s) {
    if (!c.correct) continue;
    for (const auto& w : s) {
      if (w.correct) continue;
      ++pairs;
      if (c.confidence > w.confidence) {
        wins += 1.0;
      } else if (c.confidence == w.confidence) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

inline std::vector<std::size_t> frame_indices(std::size_t N, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) {
    // floor(i * N / k) by repeated subtraction on exact integers.
    std::uint64_t num = static_cast<std::uint64_t>(i) * N;
    std::size_t q = 0;
    while (num >= k) {
      num -= k;
      ++q;
    }
    out.push_back(q);
  }
  return out;
}

}  // namespace oracle
