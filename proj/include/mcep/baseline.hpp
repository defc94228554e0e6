#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mcep/errors.hpp"
#include "mcep/matrix.hpp"
#include "mcep/model.hpp"
#include "mcep/rng.hpp"

namespace mcep {

// ---------------------------------------------------------------------------
// Per-sequence estimates
// ---------------------------------------------------------------------------

struct PerSequenceEstimates {
  struct Entry {
    Matrix props;                          // row proportions; all-zero rows flagged below
    std::vector<std::uint8_t> row_visited;  // conditioning state seen at least once
    std::vector<int> levels;
    int subject = 0;
  };
  int d0 = 0;
  std::vector<Entry> entries;
};

// Independent MLE transition proportions per sequence; rows whose
// conditioning state never occurs stay all-zero and are flagged out.
inline PerSequenceEstimates per_sequence_mle(const SequenceDataset& data) {
  PerSequenceEstimates out;
  out.d0 = data.d0();
  out.entries.reserve(data.s0());
  for (const auto& seq : data.sequences) {
    PerSequenceEstimates::Entry e;
    e.levels = seq.levels;
    e.subject = seq.subject;
    e.props = Matrix(out.d0, out.d0);
    e.row_visited.assign(out.d0, 0);
    CountMatrix counts(out.d0, out.d0);
    for (int t = 1; t < static_cast<int>(seq.tokens.size()); ++t) counts(seq.tokens[t - 1], seq.tokens[t]) += 1;
    for (int a = 0; a < out.d0; ++a) {
      std::int64_t n = 0;
      for (int b = 0; b < out.d0; ++b) n += counts(a, b);
      if (n == 0) continue;
      e.row_visited[a] = 1;
      for (int b = 0; b < out.d0; ++b) e.props(a, b) = static_cast<double>(counts(a, b)) / static_cast<double>(n);
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank-sum test
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> midranks(std::span<const double> pooled) {
  const int n = static_cast<int>(pooled.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * (i + j) + 1.0;  // average of ranks i+1..j+1
    for (int k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double wilcoxon_exact_p(std::span<const double> ranks, int na) {
  const int n = static_cast<int>(ranks.size());
  double w_obs = 0.0;
  for (int i = 0; i < na; ++i) w_obs += ranks[i];
  const double mu = na * (n + 1) / 2.0;
  const double dev_obs = std::fabs(w_obs - mu);

  // Walk every size-na subset of the pooled ranks.
  std::vector<int> idx(na);
  std::iota(idx.begin(), idx.end(), 0);
  std::int64_t extreme = 0, total = 0;
  for (;;) {
    double w = 0.0;
    for (int i : idx) w += ranks[i];
    ++total;
    if (std::fabs(w - mu) >= dev_obs - 1e-12) ++extreme;
    int i = na - 1;
    while (i >= 0 && idx[i] == n - na + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int k = i + 1; k < na; ++k) idx[k] = idx[k - 1] + 1;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

// Normal approximation with an Edgeworth kurtosis term. Ties enter through
// the exact finite-population moments of the mid-rank multiset, which
// reproduces the classical tie-corrected variance.
inline double wilcoxon_normal_p(std::span<const double> pooled, std::span<const double> ranks, int na) {
  const int n = static_cast<int>(pooled.size());
  double w = 0.0;
  for (int i = 0; i < na; ++i) w += ranks[i];
  const double mu = na * (n + 1) / 2.0;

  double s2 = 0.0, s4 = 0.0;
  const double rbar = (n + 1) / 2.0;
  for (double r : ranks) {
    const double y = r - rbar;
    s2 += y * y;
    s4 += y * y * y * y;
  }
  auto subset_ratio = [&](int k) {
    double num = 1.0, den = 1.0;
    for (int t = 0; t < k; ++t) {
      num *= na - t;
      den *= n - t;
    }
    return num / den;
  };
  const double var = s2 * na * (n - na) / (static_cast<double>(n) * (n - 1));
  if (var <= 0.0) return 1.0;
  // Exact fourth central moment of the rank sum under label permutation.
  const double m4 = s4 * subset_ratio(1) + (3.0 * (s2 * s2 - s4) - 4.0 * s4) * subset_ratio(2) +
                    6.0 * (2.0 * s4 - s2 * s2) * subset_ratio(3) +
                    (3.0 * s2 * s2 - 6.0 * s4) * subset_ratio(4);
  const double kurt = m4 / (var * var) - 3.0;

  const double z = std::max(0.0, std::fabs(w - mu) - 0.5) / std::sqrt(var);
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
  double upper = 1.0 - normal_cdf(z) + phi * (kurt / 24.0) * (z * z * z - 3.0 * z);
  upper = std::max(0.0, upper);
  return std::min(1.0, 2.0 * upper);
}

}  // namespace detail

// Two-sided Wilcoxon-Mann-Whitney rank sum p-value with mid-rank ties:
// exact by enumeration for combined n <= 12, continuity-corrected normal
// approximation with tie correction above that.
inline double wilcoxon_rank_sum(std::span<const double> group_a, std::span<const double> group_b) {
  if (group_a.empty() || group_b.empty()) throw DataError("wilcoxon_rank_sum: both groups must be non-empty");
  const int na = static_cast<int>(group_a.size());
  const int n = na + static_cast<int>(group_b.size());
  std::vector<double> pooled;
  pooled.reserve(n);
  pooled.insert(pooled.end(), group_a.begin(), group_a.end());
  pooled.insert(pooled.end(), group_b.begin(), group_b.end());
  const std::vector<double> ranks = detail::midranks(pooled);
  if (n <= 12) return detail::wilcoxon_exact_p(ranks, na);
  return detail::wilcoxon_normal_p(pooled, ranks, na);
}

// ---------------------------------------------------------------------------
// Multiple-testing adjustment and calibration
// ---------------------------------------------------------------------------

// Benjamini-Hochberg step-up adjustment, monotone and capped at 1; output in
// the input order.
inline std::vector<double> bh_adjust(std::span<const double> pvalues) {
  const int m = static_cast<int>(pvalues.size());
  for (double p : pvalues)
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("bh_adjust: p-values must lie in [0,1]");
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (int i = m - 1; i >= 0; --i) {
    const double ratio = static_cast<double>(m) / (i + 1);  // exactly 1 at the top rank
    const double v = std::min(1.0, pvalues[order[i]] * ratio);
    running = std::min(running, v);
    adj[order[i]] = running;
  }
  return adj;
}

// Lower bound on P(H0 | data) from a p-value: (1 + (-e p log p)^-1)^-1 for
// p < 1/e, 1/2 beyond that point.
inline double calibrate_pvalue(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::domain_error("calibrate_pvalue: p must be in (0,1]");
  const double e = std::exp(1.0);
  if (p >= 1.0 / e) return 0.5;
  return 1.0 / (1.0 + 1.0 / (-e * p * std::log(p)));
}

// ---------------------------------------------------------------------------
// Local tests and the permutation-combined global test
// ---------------------------------------------------------------------------

struct BaselineLocalBlock {
  int level_a = 0, level_b = 0;     // unordered level pair of the tested predictor
  std::vector<int> other_levels;    // levels of the remaining predictors, in order
  Matrix p_raw;                     // rank-sum p per cell
  Matrix p_adj;                     // BH-adjusted within this block (d0*d0 tests)
};

struct BaselineLocalReport {
  int predictor = 0;
  std::vector<BaselineLocalBlock> blocks;
};

namespace detail {

// Enumerates level combinations of every predictor except `skip`.
inline std::vector<std::vector<int>> other_level_combos(const SequenceDataset& data, int skip) {
  std::vector<std::vector<int>> combos{{}};
  for (int j = 0; j < data.p(); ++j) {
    if (j == skip) continue;
    std::vector<std::vector<int>> next;
    for (const auto& c : combos) {
      for (int l = 0; l < data.predictors[j].dj(); ++l) {
        auto e = c;
        e.push_back(l);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

inline bool matches_others(const PerSequenceEstimates::Entry& e, int skip,
                           std::span<const int> others) {
  int o = 0;
  for (int j = 0; j < static_cast<int>(e.levels.size()); ++j) {
    if (j == skip) continue;
    if (e.levels[j] != others[o++]) return false;
  }
  return true;
}

// Rank-sum p-values per cell for one (level pair, other-combo) block, with a
// caller-supplied group lookup so permutations can swap subject labels.
template <class LevelOf>
Matrix block_pvalues(const PerSequenceEstimates& est, int j, int la, int lb,
                     std::span<const int> others, LevelOf level_of) {
  const int d0 = est.d0;
  Matrix p(d0, d0);
  std::vector<double> ga, gb;
  for (int a = 0; a < d0; ++a) {
    for (int b = 0; b < d0; ++b) {
      ga.clear();
      gb.clear();
      for (const auto& e : est.entries) {
        if (!e.row_visited[a]) continue;  // unvisited rows dropped from the sample
        if (!matches_others(e, j, others)) continue;
        const int lvl = level_of(e);
        if (lvl == la) ga.push_back(e.props(a, b));
        else if (lvl == lb) gb.push_back(e.props(a, b));
      }
      p(a, b) = (ga.empty() || gb.empty()) ? 1.0 : wilcoxon_rank_sum(ga, gb);
    }
  }
  return p;
}

template <class LevelOf>
double min_adjusted_p(const PerSequenceEstimates& est, const SequenceDataset& data, int j,
                      LevelOf level_of) {
  const auto combos = other_level_combos(data, j);
  const int dj = data.predictors[j].dj();
  double stat = 1.0;
  std::vector<double> flat;
  for (int la = 0; la < dj; ++la) {
    for (int lb = la + 1; lb < dj; ++lb) {
      for (const auto& oth : combos) {
        const Matrix p = block_pvalues(est, j, la, lb, oth, level_of);
        flat.assign(p.data().begin(), p.data().end());
        for (double v : bh_adjust(flat)) stat = std::min(stat, v);
      }
    }
  }
  return stat;
}

}  // namespace detail

// Per-cell rank-sum tests for every level pair of predictor j and every
// combination of the remaining predictors, BH-adjusted within each block.
inline BaselineLocalReport baseline_local_tests(const PerSequenceEstimates& est,
                                                const SequenceDataset& data, int j) {
  BaselineLocalReport rep;
  rep.predictor = j;
  const auto combos = detail::other_level_combos(data, j);
  const int dj = data.predictors[j].dj();
  auto level_of = [&](const PerSequenceEstimates::Entry& e) { return e.levels[j]; };
  for (int la = 0; la < dj; ++la) {
    for (int lb = la + 1; lb < dj; ++lb) {
      for (const auto& oth : combos) {
        BaselineLocalBlock blk;
        blk.level_a = la;
        blk.level_b = lb;
        blk.other_levels = oth;
        blk.p_raw = detail::block_pvalues(est, j, la, lb, oth, level_of);
        std::vector<double> flat(blk.p_raw.data().begin(), blk.p_raw.data().end());
        const auto adj = bh_adjust(flat);
        blk.p_adj = Matrix(est.d0, est.d0);
        for (int a = 0; a < est.d0; ++a)
          for (int b = 0; b < est.d0; ++b) blk.p_adj(a, b) = adj[static_cast<std::size_t>(a) * est.d0 + b];
        rep.blocks.push_back(std::move(blk));
      }
    }
  }
  return rep;
}

// Global influence of predictor j: the observed statistic is the minimum
// BH-adjusted local p-value; the null distribution permutes subject-to-group
// labels (subjects, not sequences, preserving within-subject dependence).
inline double permutation_global_test(const PerSequenceEstimates& est, const SequenceDataset& data,
                                      int j, int n_perm, std::uint64_t seed) {
  if (n_perm < 99) throw ConfigError("permutation_global_test: n_perm must be >= 99");
  const int ns = data.n_subjects();
  const int dj = data.predictors[j].dj();
  if (dj < 2) throw DataError("permutation_global_test: need at least 2 groups");
  if (ns < dj) throw DataError("permutation_global_test: fewer subjects than groups");

  // Each subject must sit at exactly one level of the tested predictor.
  std::vector<int> subj_level(ns, -1);
  for (const auto& e : est.entries) {
    int& sl = subj_level[e.subject];
    if (sl < 0) sl = e.levels[j];
    else if (sl != e.levels[j])
      throw DataError("permutation_global_test: subject spans multiple levels of the tested predictor");
  }

  auto level_of_obs = [&](const PerSequenceEstimates::Entry& e) { return e.levels[j]; };
  const double observed = detail::min_adjusted_p(est, data, j, level_of_obs);

  Rng rng(seed);
  std::vector<int> perm(subj_level);
  int hits = 0;
  for (int r = 0; r < n_perm; ++r) {
    for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    auto level_of = [&](const PerSequenceEstimates::Entry& e) { return perm[e.subject]; };
    if (detail::min_adjusted_p(est, data, j, level_of) <= observed) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(1 + n_perm);
}

}  // namespace mcep
