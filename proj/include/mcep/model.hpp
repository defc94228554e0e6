#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcep/errors.hpp"
#include "mcep/matrix.hpp"

namespace mcep {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// The categorical state space of the sequences. Token order fixes state
// indices for the life of a run.
struct StateSpace {
  std::vector<std::string> tokens;

  int d0() const { return static_cast<int>(tokens.size()); }

  int index_of(const std::string& tok) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == tok) return static_cast<int>(i);
    }
    return -1;
  }

  void validate() const {
    if (d0() < 2) throw DataError("state space needs at least 2 tokens");
    for (std::size_t a = 0; a < tokens.size(); ++a)
      for (std::size_t b = a + 1; b < tokens.size(); ++b)
        if (tokens[a] == tokens[b]) throw DataError("duplicate token label: " + tokens[a]);
  }
};

// One exogenous categorical predictor: its observed levels, the latent
// cluster budget k (defaults to the level count) and the partition
// concentration alpha.
struct PredictorSpec {
  std::string name;
  std::vector<std::string> levels;
  int k = 0;
  double alpha = 1.0;

  int dj() const { return static_cast<int>(levels.size()); }

  int level_index(const std::string& lab) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] == lab) return static_cast<int>(i);
    }
    return -1;
  }

  void validate() const {
    if (dj() < 1) throw DataError("predictor " + name + " has no levels");
    if (k < 1) throw DataError("predictor " + name + ": cluster budget must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("predictor " + name + ": alpha must be > 0");
    for (std::size_t a = 0; a < levels.size(); ++a)
      for (std::size_t b = a + 1; b < levels.size(); ++b)
        if (levels[a] == levels[b]) throw DataError("predictor " + name + ": duplicate level " + levels[a]);
  }
};

// Mixed-radix coding of level / cluster combinations; the first coordinate
// varies fastest.
inline int encode_combo(std::span<const int> digits, std::span<const int> radix) {
  int code = 0;
  for (int j = static_cast<int>(digits.size()) - 1; j >= 0; --j) {
    code = code * radix[j] + digits[j];
  }
  return code;
}

inline void decode_combo(int code, std::span<const int> radix, std::span<int> out) {
  for (std::size_t j = 0; j < radix.size(); ++j) {
    out[j] = code % radix[j];
    code /= radix[j];
  }
}

struct Sequence {
  std::string id;
  int subject = 0;
  std::vector<int> levels;  // one observed level per predictor
  std::vector<int> tokens;  // state indices; first token is conditioning-only
  int level_combo = 0;      // cached mixed-radix code of `levels`

  int n_transitions() const { return std::max<int>(0, static_cast<int>(tokens.size()) - 1); }
};

// The observed data: tokenized sequences with per-sequence predictor values
// and subject identifiers. A dataset with no sequences is structurally valid
// (the sampler then draws from the prior); ingestion rejects it separately.
struct SequenceDataset {
  StateSpace states;
  std::vector<PredictorSpec> predictors;
  std::vector<std::string> subject_ids;
  std::vector<Sequence> sequences;

  int d0() const { return states.d0(); }
  int p() const { return static_cast<int>(predictors.size()); }
  int s0() const { return static_cast<int>(sequences.size()); }
  int n_subjects() const { return static_cast<int>(subject_ids.size()); }

  std::vector<int> level_radix() const {
    std::vector<int> r(predictors.size());
    for (std::size_t j = 0; j < predictors.size(); ++j) r[j] = predictors[j].dj();
    return r;
  }

  std::vector<int> cluster_radix() const {
    std::vector<int> r(predictors.size());
    for (std::size_t j = 0; j < predictors.size(); ++j) r[j] = predictors[j].k;
    return r;
  }

  int n_level_combos() const {
    int n = 1;
    for (const auto& pr : predictors) n *= pr.dj();
    return n;
  }

  int n_cluster_combos() const {
    int n = 1;
    for (const auto& pr : predictors) n *= pr.k;
    return n;
  }

  std::int64_t total_transitions() const {
    std::int64_t t = 0;
    for (const auto& s : sequences) t += s.n_transitions();
    return t;
  }

  // Recomputes cached combo codes and checks structural invariants.
  void finalize() {
    states.validate();
    for (auto& pr : predictors) {
      if (pr.k == 0) pr.k = pr.dj();
      pr.validate();
    }
    const auto radix = level_radix();
    for (auto& s : sequences) {
      if (s.tokens.size() < 2) throw DataError("sequence " + s.id + " has fewer than 2 tokens");
      if (s.subject < 0 || s.subject >= n_subjects()) throw DataError("sequence " + s.id + ": bad subject index");
      if (static_cast<int>(s.levels.size()) != p()) throw DataError("sequence " + s.id + ": wrong predictor count");
      for (int j = 0; j < p(); ++j) {
        if (s.levels[j] < 0 || s.levels[j] >= predictors[j].dj())
          throw DataError("sequence " + s.id + ": predictor level out of range");
      }
      for (int tok : s.tokens) {
        if (tok < 0 || tok >= d0()) throw DataError("sequence " + s.id + ": token index out of range");
      }
      s.level_combo = encode_combo(s.levels, radix);
    }
  }
};

// Fixed prior constants.
struct Hyperparams {
  double alpha00 = 1.0;
  std::vector<double> lambda00;  // base measure over states; strictly positive
  double a0 = 1.0, a1 = 1.0;           // Beta shapes for pi0
  double a_alpha0 = 1.0, b_alpha0 = 1.0;
  double a_alpha_re = 1.0, b_alpha_re = 1.0;
  double delta = 0.02;  // local-test threshold

  void validate() const {
    if (!(alpha00 > 0.0 && a0 > 0.0 && a1 > 0.0 && a_alpha0 > 0.0 && b_alpha0 > 0.0 &&
          a_alpha_re > 0.0 && b_alpha_re > 0.0))
      throw ConfigError("all prior shapes and rates must be strictly positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (lambda00.empty()) throw ConfigError("lambda00 is unset");
    double s = 0.0;
    for (double x : lambda00) {
      if (!(x > 0.0)) throw ConfigError("lambda00 entries must be strictly positive");
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-12) throw ConfigError("lambda00 must sum to 1");
  }
};

// One full configuration of the latent state.
struct ModelState {
  std::vector<std::vector<int>> z;          // [predictor][level] -> cluster label, 0-based
  std::vector<std::vector<double>> pi_cluster;  // [predictor] -> weights over k clusters
  std::vector<std::vector<std::uint8_t>> v;     // [sequence][transition]; 0 = fixed, 1 = random
  std::vector<double> pi0;                  // fixed-effect weight per conditioning state
  Matrix lambda0;
  std::vector<Matrix> lambda_fixed;         // per cluster combination
  std::vector<Matrix> lambda_rand;          // per subject
  double alpha0 = 1.0;
  double alpha_re = 1.0;

  // Cluster combination for observed levels `x` under the current labels.
  int cluster_combo_for(std::span<const int> x, std::span<const int> cluster_radix) const {
    int code = 0;
    for (int j = static_cast<int>(z.size()) - 1; j >= 0; --j) {
      code = code * cluster_radix[j] + z[j][x[j]];
    }
    return code;
  }

  void validate(const SequenceDataset& data, double tol = 1e-10) const {
    for (int j = 0; j < data.p(); ++j) {
      for (int l = 0; l < data.predictors[j].dj(); ++l) {
        if (z[j][l] < 0 || z[j][l] >= data.predictors[j].k)
          throw DataError("z label out of range");
      }
      if (!is_prob_vector(pi_cluster[j], tol)) throw DataError("pi_cluster is not a probability vector");
    }
    for (double w : pi0) {
      if (!(w >= 0.0 && w <= 1.0)) throw DataError("pi0 outside [0,1]");
    }
    if (!is_row_stochastic(lambda0, tol)) throw DataError("lambda0 row not stochastic");
    for (const auto& m : lambda_fixed)
      if (!is_row_stochastic(m, tol)) throw DataError("lambda_fixed row not stochastic");
    for (const auto& m : lambda_rand)
      if (!is_row_stochastic(m, tol)) throw DataError("lambda_rand row not stochastic");
    if (v.size() != static_cast<std::size_t>(data.s0())) throw DataError("v has wrong sequence count");
    for (int s = 0; s < data.s0(); ++s) {
      if (v[s].size() != static_cast<std::size_t>(data.sequences[s].n_transitions()))
        throw DataError("v length mismatch for sequence " + data.sequences[s].id);
    }
  }
};

// ---------------------------------------------------------------------------
// Transition counts
// ---------------------------------------------------------------------------

// Count tensors sliced by mixture indicator. Fixed-effect transitions are
// kept per observed level combination so that the z-update can re-aggregate
// them under candidate labels; `fixed` caches the aggregation under the
// current labels.
struct TransitionCounts {
  std::vector<CountMatrix> fixed_by_level;  // [level combo], v = 0
  std::vector<CountMatrix> fixed;           // [cluster combo], v = 0
  std::vector<CountMatrix> rand;            // [subject], v = 1
  CountMatrix n_v;                          // [y_prev][v]
  std::vector<int> lc_to_cc;                // level combo -> cluster combo under current z

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& m : fixed_by_level) t += m.total();
    for (const auto& m : rand) t += m.total();
    return t;
  }

  void refresh_mapping(const SequenceDataset& data, const ModelState& state) {
    const auto lrad = data.level_radix();
    const auto crad = data.cluster_radix();
    std::vector<int> digits(data.p());
    lc_to_cc.resize(data.n_level_combos());
    for (int lc = 0; lc < data.n_level_combos(); ++lc) {
      decode_combo(lc, lrad, digits);
      lc_to_cc[lc] = state.cluster_combo_for(digits, crad);
    }
  }

  // Re-sums `fixed` from the per-level slices under the current mapping.
  void aggregate_fixed(const SequenceDataset& data) {
    const int d0 = data.d0();
    fixed.assign(data.n_cluster_combos(), CountMatrix(d0, d0));
    for (int lc = 0; lc < static_cast<int>(fixed_by_level.size()); ++lc) {
      CountMatrix& dst = fixed[lc_to_cc[lc]];
      const CountMatrix& src = fixed_by_level[lc];
      for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d0; ++b) dst(a, b) += src(a, b);
    }
  }
};

// Accumulates all count tensors from scratch. Iteration order cannot affect
// the result (integer adds), so any parallel-by-sequence split merges to the
// identical tensors.
inline TransitionCounts count_transitions(const SequenceDataset& data, const ModelState& state) {
  const int d0 = data.d0();
  if (state.v.size() != static_cast<std::size_t>(data.s0()))
    throw DataError("count_transitions: v does not match dataset");

  TransitionCounts counts;
  counts.fixed_by_level.assign(data.n_level_combos(), CountMatrix(d0, d0));
  counts.rand.assign(data.n_subjects(), CountMatrix(d0, d0));
  counts.n_v = CountMatrix(d0, 2);

  for (int s = 0; s < data.s0(); ++s) {
    const Sequence& seq = data.sequences[s];
    if (state.v[s].size() != static_cast<std::size_t>(seq.n_transitions()))
      throw DataError("count_transitions: v length mismatch for sequence " + seq.id);
    CountMatrix& lvl = counts.fixed_by_level[seq.level_combo];
    CountMatrix& sub = counts.rand[seq.subject];
    for (int t = 1; t < static_cast<int>(seq.tokens.size()); ++t) {
      const int yp = seq.tokens[t - 1];
      const int y = seq.tokens[t];
      const int vi = state.v[s][t - 1];
      counts.n_v(yp, vi) += 1;
      if (vi == 0) {
        lvl(yp, y) += 1;
      } else {
        sub(yp, y) += 1;
      }
    }
  }
  counts.refresh_mapping(data, state);
  counts.aggregate_fixed(data);
  return counts;
}

// ---------------------------------------------------------------------------
// Empirical estimators used for prior centering and initialization
// ---------------------------------------------------------------------------

// Overall token proportions. Zero cells are floored at 1e-6 and the vector
// renormalized so it can serve as a Dirichlet base measure.
inline std::vector<double> empirical_marginal(const SequenceDataset& data) {
  if (data.sequences.empty()) throw DataError("empirical_marginal: empty dataset");
  std::vector<std::int64_t> counts(data.d0(), 0);
  std::int64_t total = 0;
  for (const auto& s : data.sequences) {
    for (int tok : s.tokens) {
      counts[tok] += 1;
      ++total;
    }
  }
  std::vector<double> out(data.d0());
  bool floored = false;
  for (int y = 0; y < data.d0(); ++y) {
    out[y] = static_cast<double>(counts[y]) / static_cast<double>(total);
    if (counts[y] == 0) {
      out[y] = 1e-6;
      floored = true;
    }
  }
  if (floored) {
    const double s = row_sum(out);
    for (auto& x : out) x /= s;
  }
  return out;
}

namespace detail {

inline Matrix rows_from_counts(const CountMatrix& counts, std::span<const double> lambda00) {
  const int d0 = counts.rows();
  Matrix rows(d0, d0);
  for (int a = 0; a < d0; ++a) {
    std::int64_t n = 0;
    for (int b = 0; b < d0; ++b) n += counts(a, b);
    if (n == 0) {
      for (int b = 0; b < d0; ++b) rows(a, b) = lambda00[b];  // degenerate row fallback
    } else {
      for (int b = 0; b < d0; ++b) rows(a, b) = static_cast<double>(counts(a, b)) / static_cast<double>(n);
    }
  }
  return rows;
}

template <class Pred>
Matrix empirical_rows_if(const SequenceDataset& data, std::span<const double> lambda00, Pred keep) {
  CountMatrix counts(data.d0(), data.d0());
  for (const auto& s : data.sequences) {
    if (!keep(s)) continue;
    for (int t = 1; t < static_cast<int>(s.tokens.size()); ++t) counts(s.tokens[t - 1], s.tokens[t]) += 1;
  }
  return rows_from_counts(counts, lambda00);
}

}  // namespace detail

// MLE transition rows over the sequences matching one predictor-level
// combination; unvisited conditioning states fall back to lambda00.
inline Matrix empirical_transition_rows(const SequenceDataset& data, std::span<const int> levels,
                                        std::span<const double> lambda00) {
  return detail::empirical_rows_if(data, lambda00, [&](const Sequence& s) {
    for (std::size_t j = 0; j < levels.size(); ++j)
      if (s.levels[j] != levels[j]) return false;
    return true;
  });
}

// Same, restricted to one subject.
inline Matrix empirical_transition_rows_subject(const SequenceDataset& data, int subject,
                                                std::span<const double> lambda00) {
  return detail::empirical_rows_if(data, lambda00, [&](const Sequence& s) { return s.subject == subject; });
}

// Same, over the whole corpus.
inline Matrix empirical_transition_rows(const SequenceDataset& data, std::span<const double> lambda00) {
  return detail::empirical_rows_if(data, lambda00, [](const Sequence&) { return true; });
}

}  // namespace mcep
