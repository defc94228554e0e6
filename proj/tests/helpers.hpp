#pragma once

// Shared oracles and builders for the test suites. Everything here is
// deliberately independent of the library implementation paths it checks.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mcep/model.hpp"
#include "mcep/partition.hpp"
#include "mcep/rng.hpp"

namespace testutil {

// Enumerates every set partition of {0..n-1} via restricted growth strings.
namespace detail {
inline void rgs_recurse(int i, int n, std::vector<int>& a, int mx,
                        const std::function<void(const mcep::Partition&)>& fn) {
  if (i == n) {
    mcep::Partition part;
    part.blocks.resize(mx + 1);
    for (int k = 0; k < n; ++k) part.blocks[a[k]].push_back(k);
    part.canonicalize();
    fn(part);
    return;
  }
  for (int v = 0; v <= mx + 1; ++v) {
    a[i] = v;
    rgs_recurse(i + 1, n, a, std::max(mx, v), fn);
  }
}
}  // namespace detail

inline void for_each_set_partition(int n, const std::function<void(const mcep::Partition&)>& fn) {
  std::vector<int> a(n, 0);
  detail::rgs_recurse(0, n, a, -1, fn);
}

// Exact prior mass of a label vector z under pi ~ Dir(alpha,...,alpha)
// marginalized out: prod_h alpha^(count_h rising) / (k alpha)^(d rising).
inline double z_vector_prior_mass(const std::vector<int>& z, int k, double alpha) {
  std::vector<int> counts(k, 0);
  for (int h : z) counts[h] += 1;
  double logp = -(std::lgamma(k * alpha + z.size()) - std::lgamma(k * alpha));
  for (int h = 0; h < k; ++h) logp += std::lgamma(alpha + counts[h]) - std::lgamma(alpha);
  return std::exp(logp);
}

// Enumerates all k^d label vectors.
inline void for_each_z_vector(int d, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> z(d, 0);
  for (;;) {
    fn(z);
    int i = 0;
    while (i < d && z[i] == k - 1) z[i++] = 0;
    if (i == d) break;
    ++z[i];
  }
}

// Small deterministic dataset builder.
inline mcep::SequenceDataset make_dataset(const std::vector<std::string>& tokens,
                                          const std::vector<mcep::PredictorSpec>& preds,
                                          const std::vector<std::string>& subjects,
                                          const std::vector<mcep::Sequence>& seqs) {
  mcep::SequenceDataset d;
  d.states.tokens = tokens;
  d.predictors = preds;
  d.subject_ids = subjects;
  d.sequences = seqs;
  d.finalize();
  return d;
}

// Random dataset with the given shape; tokens and levels drawn uniformly.
inline mcep::SequenceDataset random_dataset(int d0, std::vector<int> dj, int n_subjects, int n_seq,
                                            int len_lo, int len_hi, std::uint64_t seed) {
  mcep::SequenceDataset d;
  for (int y = 0; y < d0; ++y) d.states.tokens.push_back("t" + std::to_string(y));
  d.predictors.resize(dj.size());
  for (std::size_t j = 0; j < dj.size(); ++j) {
    d.predictors[j].name = "p" + std::to_string(j);
    for (int l = 0; l < dj[j]; ++l) d.predictors[j].levels.push_back("l" + std::to_string(l));
  }
  for (int i = 0; i < n_subjects; ++i) d.subject_ids.push_back("s" + std::to_string(i));
  mcep::Rng rng(seed);
  for (int s = 0; s < n_seq; ++s) {
    mcep::Sequence seq;
    seq.id = "seq" + std::to_string(s);
    seq.subject = rng.uniform_int(0, n_subjects - 1);
    for (std::size_t j = 0; j < dj.size(); ++j) seq.levels.push_back(rng.uniform_int(0, dj[j] - 1));
    const int T = rng.uniform_int(len_lo, len_hi);
    for (int t = 0; t < T; ++t) seq.tokens.push_back(rng.uniform_int(0, d0 - 1));
    d.sequences.push_back(std::move(seq));
  }
  d.finalize();
  return d;
}

inline double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

inline double var_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return v / (xs.size() - 1);
}

}  // namespace testutil
