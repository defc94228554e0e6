#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mcep {

// Partition of level indices {0..dj-1}; canonical form sorts members within
// blocks and blocks by smallest member.
struct Partition {
  std::vector<std::vector<int>> blocks;

  int n_blocks() const { return static_cast<int>(blocks.size()); }

  void canonicalize() {
    for (auto& b : blocks) std::sort(b.begin(), b.end());
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
  }

  bool operator==(const Partition& o) const { return blocks == o.blocks; }
};

// log of x(x+1)...(x+m-1); m = 0 gives the empty product.
inline double log_rising_factorial(double x, int m) {
  if (!(x > 0.0)) throw std::domain_error("log_rising_factorial: x must be > 0");
  if (m < 0) throw std::domain_error("log_rising_factorial: m must be >= 0");
  return std::lgamma(x + m) - std::lgamma(x);
}

// log of x(x-1)...(x-m+1); requires x >= m so all factors are positive.
inline double log_falling_factorial(double x, int m) {
  if (m < 0) throw std::domain_error("log_falling_factorial: m must be >= 0");
  if (m == 0) return 0.0;
  if (x < m) throw std::domain_error("log_falling_factorial: requires x >= m");
  return std::lgamma(x + 1.0) - std::lgamma(x - m + 1.0);
}

// Partition induced by cluster labels (labels are 0-based here).
inline Partition partition_from_z(std::span<const int> z, int kj) {
  Partition part;
  std::vector<int> block_of(kj, -1);
  for (int level = 0; level < static_cast<int>(z.size()); ++level) {
    const int h = z[level];
    if (block_of[h] < 0) {
      block_of[h] = part.n_blocks();
      part.blocks.emplace_back();
    }
    part.blocks[block_of[h]].push_back(level);
  }
  part.canonicalize();
  return part;
}

inline int k_tilde_from_z(std::span<const int> z) {
  std::vector<int> labels(z.begin(), z.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return static_cast<int>(labels.size());
}

// Prior probability of a partition under the finite clustering model:
//   k_(m) / (k a)^(d) * prod_blocks a^(|block|)
// with rising/falling factorials as above. More blocks than k gets mass 0.
inline double partition_prior_prob(const Partition& part, int kj, double alphaj) {
  int dj = 0;
  for (const auto& b : part.blocks) dj += static_cast<int>(b.size());
  const int m = part.n_blocks();
  if (m > kj) return 0.0;
  double logp = log_falling_factorial(static_cast<double>(kj), m) -
                log_rising_factorial(kj * alphaj, dj);
  for (const auto& b : part.blocks) logp += log_rising_factorial(alphaj, static_cast<int>(b.size()));
  return std::exp(logp);
}

// Prior probability of the single-block (null) partition.
inline double null_prior_prob(int dj, int kj, double alphaj) {
  return std::exp(std::log(static_cast<double>(kj)) + log_rising_factorial(alphaj, dj) -
                  log_rising_factorial(kj * alphaj, dj));
}

struct AlphaCalibration {
  double alpha = 1.0;
  double achieved = 0.0;  // null prior probability at the returned alpha
  bool saturated = false; // target unattainable inside [1e-8, 1e6]
};

// Solves null_prior_prob(dj, kj, alpha) = target for alpha. The null
// probability is strictly decreasing in alpha, so a log-scale bisection
// suffices; targets outside the attainable range saturate at the bounds
// (for dj = 2 the infimum as alpha -> inf is 1/2, so target 1/2 saturates).
inline AlphaCalibration calibrate_alpha(int dj, int kj, double target) {
  if (dj < 2) throw std::domain_error("calibrate_alpha: dj must be >= 2");
  if (!(target > 0.0 && target < 1.0)) throw std::domain_error("calibrate_alpha: target in (0,1)");

  constexpr double kAlphaMin = 1e-8;
  constexpr double kAlphaMax = 1e6;
  constexpr double kTol = 1e-10;

  AlphaCalibration out;
  const double at_min = null_prior_prob(dj, kj, kAlphaMin);
  const double at_max = null_prior_prob(dj, kj, kAlphaMax);
  if (target <= at_max) {
    out.alpha = kAlphaMax;
    out.achieved = at_max;
    out.saturated = std::fabs(at_max - target) > kTol;
    return out;
  }
  if (target >= at_min) {
    out.alpha = kAlphaMin;
    out.achieved = at_min;
    out.saturated = std::fabs(at_min - target) > kTol;
    return out;
  }

  double lo = std::log(kAlphaMin), hi = std::log(kAlphaMax);
  double mid = 0.0, val = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    val = null_prior_prob(dj, kj, std::exp(mid));
    if (std::fabs(val - target) <= kTol) break;
    if (val > target) {
      lo = mid;  // need larger alpha to push the null probability down
    } else {
      hi = mid;
    }
  }
  out.alpha = std::exp(mid);
  out.achieved = val;
  out.saturated = false;
  return out;
}

}  // namespace mcep
