#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mcep {

// SplitMix64 step; used to scramble seeds and derive substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Random stream with hand-rolled samplers so that draws are reproducible
// across standard-library implementations. All continuous draws reduce to
// mt19937_64 output bits, which the standard pins down exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    gen_.seed(splitmix64(s));
  }

  // Substream derived deterministically from (seed, path...). Streams with
  // distinct paths are effectively independent.
  static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    std::uint64_t acc = splitmix64(s);
    for (std::uint64_t p : path) {
      s = acc ^ (p + 0x9e3779b97f4a7c15ULL);
      acc = splitmix64(s);
    }
    return Rng(acc);
  }

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe to take logs of.
  double uniform_pos() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  int uniform_int(int lo, int hi) {  // inclusive range
    const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % n);
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * m;
    have_cached_ = true;
    return u * m;
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; shapes below one use the
  // boost-and-power transform Ga(a) = Ga(a+1) * U^(1/a).
  double gamma(double shape) {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform_pos(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double gamma(double shape, double rate) { return gamma(shape) / rate; }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    const double s = x + y;
    if (s <= 0.0) return 0.5;
    return x / s;
  }

  // Dirichlet draw into `out`; zero-sum degenerate draws fall back to uniform.
  void dirichlet(std::span<const double> alpha, std::span<double> out) {
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      out[i] = alpha[i] > 0.0 ? gamma(alpha[i]) : 0.0;
      total += out[i];
    }
    if (total <= 0.0) {
      const double u = 1.0 / static_cast<double>(alpha.size());
      for (auto& x : out) x = u;
      return;
    }
    for (auto& x : out) x /= total;
  }

  // Categorical draw from nonnegative weights (need not be normalized).
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Categorical draw from log-weights, normalized by max-subtraction.
  int categorical_from_log(std::span<const double> logw, std::vector<double>& scratch) {
    double mx = logw[0];
    for (double w : logw) mx = std::max(mx, w);
    scratch.resize(logw.size());
    for (std::size_t i = 0; i < logw.size(); ++i) scratch[i] = std::exp(logw[i] - mx);
    return categorical(scratch);
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace mcep
