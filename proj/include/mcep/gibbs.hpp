#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "mcep/errors.hpp"
#include "mcep/matrix.hpp"
#include "mcep/model.hpp"
#include "mcep/partition.hpp"
#include "mcep/rng.hpp"

namespace mcep {

struct McmcSettings {
  int iterations = 5000;
  int burn_in = 2000;
  int thin = 5;
  std::uint64_t seed = 0;
  bool parallel = false;
  int threads = 0;               // 0 = hardware count; only used when parallel
  bool check_invariants = true;  // validate ModelState after every sweep
  bool debug_recount = false;    // rebuild counts from scratch each sweep and compare

  int retained() const { return (iterations - burn_in) / thin; }

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn-in must satisfy 0 <= burn_in < iterations");
    if (thin < 1) throw ConfigError("thin must be >= 1");
  }
};

struct TraceDraw {
  std::vector<std::vector<int>> z;
  std::vector<std::vector<double>> pi_cluster;
  std::vector<double> pi0;
  double alpha0 = 0.0;
  double alpha_re = 0.0;
  Matrix lambda0;
  std::vector<Matrix> lambda_fixed;
  std::vector<Matrix> lambda_rand;
  std::vector<int> k_tilde;  // occupied blocks per predictor
};

// Retained post-burn-in, thinned draws plus the schema needed to interpret
// them without the original dataset.
struct Trace {
  std::vector<std::string> tokens;
  std::vector<PredictorSpec> predictors;
  std::vector<std::string> subject_ids;
  McmcSettings settings;
  Hyperparams hyper;
  std::vector<TraceDraw> draws;
  int shape_floor_events = 0;  // nonpositive Gamma shapes floored (should stay 0)

  int d0() const { return static_cast<int>(tokens.size()); }

  std::vector<int> cluster_radix() const {
    std::vector<int> r(predictors.size());
    for (std::size_t j = 0; j < predictors.size(); ++j) r[j] = predictors[j].k;
    return r;
  }
};

namespace detail {

// log of the Dirichlet-multinomial marginal ratio beta(a + n) / beta(a).
inline double log_dm_ratio(std::span<const std::int64_t> n, std::span<const double> a) {
  double lw = 0.0;
  double atot = 0.0;
  std::int64_t ntot = 0;
  for (std::size_t y = 0; y < n.size(); ++y) {
    atot += a[y];
    if (n[y] > 0) {
      lw += std::lgamma(a[y] + static_cast<double>(n[y])) - std::lgamma(a[y]);
      ntot += n[y];
    }
  }
  if (ntot == 0) return 0.0;
  return lw - (std::lgamma(atot + static_cast<double>(ntot)) - std::lgamma(atot));
}

// Dirichlet row draw with the 1e-12 floor-and-renormalize guard, so later
// likelihood ratios never divide by zero.
inline void sample_prob_row(Rng& rng, std::span<const double> alpha, std::span<double> out) {
  rng.dirichlet(alpha, out);
  bool floored = false;
  for (auto& x : out) {
    if (x < 1e-12) {
      x = 1e-12;
      floored = true;
    }
  }
  if (floored) {
    const double s = row_sum(out);
    for (auto& x : out) x /= s;
  }
}

template <class Fn>
void parallel_units(int n_units, int threads, Fn fn) {
  if (threads <= 1 || n_units <= 1) {
    for (int u = 0; u < n_units; ++u) fn(u);
    return;
  }
  const int nt = std::min(threads, n_units);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([=] {
      for (int u = t; u < n_units; u += nt) fn(u);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

struct GibbsWorkspace {
  std::vector<std::int64_t> agg;
  std::vector<double> logw;
  std::vector<double> scratch;
  std::vector<int> digits;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Start the chain per the reference recipe: identity cluster labels, uniform
// cluster weights, empirical transition rows for the fixed and random
// components, pi0 = 0.8, v ~ Bernoulli with P(v=0) = pi0, both
// concentrations at 1, and lambda0 rows set to lambda00 (resampled in the
// first sweep's final step).
inline ModelState init_state(const SequenceDataset& data, const Hyperparams& hyper, Rng& rng) {
  hyper.validate();
  const int d0 = data.d0();
  ModelState st;

  st.z.resize(data.p());
  st.pi_cluster.resize(data.p());
  for (int j = 0; j < data.p(); ++j) {
    const int dj = data.predictors[j].dj();
    const int kj = data.predictors[j].k;
    st.z[j].resize(dj);
    for (int l = 0; l < dj; ++l) st.z[j][l] = l % kj;
    st.pi_cluster[j].assign(kj, 1.0 / kj);
  }

  st.pi0.assign(d0, 0.8);
  st.alpha0 = 1.0;
  st.alpha_re = 1.0;

  st.lambda0 = Matrix(d0, d0);
  for (int a = 0; a < d0; ++a)
    for (int b = 0; b < d0; ++b) st.lambda0(a, b) = hyper.lambda00[b];

  // Raw per-slice transition counts (all transitions, v not yet assigned).
  const int nlc = data.n_level_combos();
  std::vector<CountMatrix> raw(nlc, CountMatrix(d0, d0));
  for (const auto& s : data.sequences) {
    CountMatrix& m = raw[s.level_combo];
    for (int t = 1; t < static_cast<int>(s.tokens.size()); ++t) m(s.tokens[t - 1], s.tokens[t]) += 1;
  }

  const auto lrad = data.level_radix();
  const auto crad = data.cluster_radix();
  std::vector<int> digits(data.p());
  const int ncc = data.n_cluster_combos();
  std::vector<CountMatrix> by_cc(ncc, CountMatrix(d0, d0));
  for (int lc = 0; lc < nlc; ++lc) {
    decode_combo(lc, lrad, digits);
    CountMatrix& dst = by_cc[st.cluster_combo_for(digits, crad)];
    for (int a = 0; a < d0; ++a)
      for (int b = 0; b < d0; ++b) dst(a, b) += raw[lc](a, b);
  }
  st.lambda_fixed.resize(ncc);
  for (int cc = 0; cc < ncc; ++cc) st.lambda_fixed[cc] = detail::rows_from_counts(by_cc[cc], hyper.lambda00);

  st.lambda_rand.resize(data.n_subjects());
  for (int i = 0; i < data.n_subjects(); ++i)
    st.lambda_rand[i] = empirical_transition_rows_subject(data, i, hyper.lambda00);

  st.v.resize(data.s0());
  for (int s = 0; s < data.s0(); ++s) {
    const Sequence& seq = data.sequences[s];
    st.v[s].resize(seq.n_transitions());
    for (int t = 1; t < static_cast<int>(seq.tokens.size()); ++t) {
      st.v[s][t - 1] = rng.bernoulli(st.pi0[seq.tokens[t - 1]]) ? 0 : 1;
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Gibbs steps
// ---------------------------------------------------------------------------

// Full conditional for one cluster label, with the fixed-effect rows
// integrated out: mass(h) = pi_cluster[h] * prod over rows and cluster
// combinations of Dirichlet-multinomial ratios under the re-aggregated
// counts. Returned normalized (max-subtraction in log space).
inline std::vector<double> z_full_conditional(const ModelState& state, const TransitionCounts& counts,
                                              const SequenceDataset& data, int j, int level,
                                              GibbsWorkspace& ws) {
  const int d0 = data.d0();
  const int kj = data.predictors[j].k;
  const int ncc = data.n_cluster_combos();
  const auto lrad = data.level_radix();
  const auto crad = data.cluster_radix();
  const int p = data.p();

  ws.digits.resize(p);
  ws.agg.assign(static_cast<std::size_t>(ncc) * d0 * d0, 0);
  ws.logw.assign(kj, 0.0);

  // Row-wise Dirichlet parameters alpha0 * lambda0(y_prev, .)
  std::vector<double> arow(static_cast<std::size_t>(d0) * d0);
  for (int a = 0; a < d0; ++a)
    for (int b = 0; b < d0; ++b) arow[static_cast<std::size_t>(a) * d0 + b] = state.alpha0 * state.lambda0(a, b);

  for (int h = 0; h < kj; ++h) {
    std::fill(ws.agg.begin(), ws.agg.end(), 0);
    for (int lc = 0; lc < data.n_level_combos(); ++lc) {
      const CountMatrix& src = counts.fixed_by_level[lc];
      decode_combo(lc, lrad, ws.digits);
      int cc = 0;
      for (int jj = p - 1; jj >= 0; --jj) {
        const int lab = (jj == j && ws.digits[jj] == level) ? h : state.z[jj][ws.digits[jj]];
        cc = cc * crad[jj] + lab;
      }
      std::int64_t* dst = ws.agg.data() + static_cast<std::size_t>(cc) * d0 * d0;
      for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d0; ++b) dst[static_cast<std::size_t>(a) * d0 + b] += src(a, b);
    }
    double lw = std::log(std::max(state.pi_cluster[j][h], 1e-300));
    for (int cc = 0; cc < ncc; ++cc) {
      const std::int64_t* n = ws.agg.data() + static_cast<std::size_t>(cc) * d0 * d0;
      for (int a = 0; a < d0; ++a) {
        lw += detail::log_dm_ratio({n + static_cast<std::size_t>(a) * d0, static_cast<std::size_t>(d0)},
                                   {arow.data() + static_cast<std::size_t>(a) * d0, static_cast<std::size_t>(d0)});
      }
    }
    ws.logw[h] = lw;
  }

  double mx = ws.logw[0];
  for (double w : ws.logw) mx = std::max(mx, w);
  std::vector<double> probs(kj);
  double tot = 0.0;
  for (int h = 0; h < kj; ++h) {
    probs[h] = std::exp(ws.logw[h] - mx);
    tot += probs[h];
  }
  for (auto& pr : probs) pr /= tot;
  return probs;
}

// Step 1: scan all (predictor, level) pairs in index order and redraw each
// label from its collapsed full conditional. Leaves `counts.fixed` and the
// combo mapping refreshed for the new labels.
inline void step1_sample_z(ModelState& state, const SequenceDataset& data, TransitionCounts& counts,
                           GibbsWorkspace& ws, Rng& rng) {
  for (int j = 0; j < data.p(); ++j) {
    for (int level = 0; level < data.predictors[j].dj(); ++level) {
      const auto probs = z_full_conditional(state, counts, data, j, level, ws);
      state.z[j][level] = rng.categorical(probs);
    }
  }
  counts.refresh_mapping(data, state);
  counts.aggregate_fixed(data);
}

// Step 2: Dirichlet update of the cluster weights from label occupancy.
inline void step2_sample_cluster_weights(ModelState& state, const SequenceDataset& data, Rng& rng) {
  std::vector<double> alpha;
  for (int j = 0; j < data.p(); ++j) {
    const int kj = data.predictors[j].k;
    alpha.assign(kj, data.predictors[j].alpha);
    for (int lab : state.z[j]) alpha[lab] += 1.0;
    rng.dirichlet(alpha, state.pi_cluster[j]);
    bool floored = false;
    for (auto& x : state.pi_cluster[j]) {
      if (x < 1e-15) {
        x = 1e-15;
        floored = true;
      }
    }
    if (floored) {
      const double s = row_sum(state.pi_cluster[j]);
      for (auto& x : state.pi_cluster[j]) x /= s;
    }
  }
}

// Step 3: Bernoulli update of every mixture indicator; counts are kept in
// sync incrementally as indicators flip.
inline void step3_sample_v(ModelState& state, const SequenceDataset& data, TransitionCounts& counts,
                           Rng& rng) {
  for (int s = 0; s < data.s0(); ++s) {
    const Sequence& seq = data.sequences[s];
    const int lc = seq.level_combo;
    const int cc = counts.lc_to_cc[lc];
    const Matrix& fix = state.lambda_fixed[cc];
    const Matrix& rnd = state.lambda_rand[seq.subject];
    CountMatrix& lvl = counts.fixed_by_level[lc];
    CountMatrix& agg = counts.fixed[cc];
    CountMatrix& sub = counts.rand[seq.subject];
    for (int t = 1; t < static_cast<int>(seq.tokens.size()); ++t) {
      const int yp = seq.tokens[t - 1];
      const int y = seq.tokens[t];
      const double w0 = state.pi0[yp] * fix(yp, y);
      const double w1 = (1.0 - state.pi0[yp]) * rnd(yp, y);
      const double tot = w0 + w1;
      const double p0 = tot > 0.0 ? w0 / tot : state.pi0[yp];
      const std::uint8_t nv = rng.uniform() < p0 ? 0 : 1;
      const std::uint8_t ov = state.v[s][t - 1];
      if (nv != ov) {
        if (nv == 0) {
          lvl(yp, y) += 1;
          agg(yp, y) += 1;
          sub(yp, y) -= 1;
        } else {
          lvl(yp, y) -= 1;
          agg(yp, y) -= 1;
          sub(yp, y) += 1;
        }
        counts.n_v(yp, ov) -= 1;
        counts.n_v(yp, nv) += 1;
        state.v[s][t - 1] = nv;
      }
    }
  }
}

// Step 4: Beta update of the mixture weights per conditioning state.
inline void step4_sample_pi0(ModelState& state, const TransitionCounts& counts, const Hyperparams& hyper,
                             Rng& rng) {
  for (int yp = 0; yp < static_cast<int>(state.pi0.size()); ++yp) {
    state.pi0[yp] = rng.beta(hyper.a0 + static_cast<double>(counts.n_v(yp, 0)),
                             hyper.a1 + static_cast<double>(counts.n_v(yp, 1)));
  }
}

namespace detail {

inline void sample_lambda_rows(Matrix& dst, const Matrix& center, double conc, const CountMatrix& n,
                               Rng& rng, std::vector<double>& alpha) {
  const int d0 = center.rows();
  alpha.resize(d0);
  for (int a = 0; a < d0; ++a) {
    for (int b = 0; b < d0; ++b) alpha[b] = conc * center(a, b) + static_cast<double>(n(a, b));
    sample_prob_row(rng, alpha, dst.row(a));
  }
}

}  // namespace detail

// Step 5: Dirichlet update of each subject's random-effect rows. In parallel
// mode each subject draws from its own substream (seed, sweep, subject).
inline void step5_sample_lambda_rand(ModelState& state, const TransitionCounts& counts, Rng& rng,
                                     const McmcSettings& settings, int sweep, int threads) {
  const int n = static_cast<int>(state.lambda_rand.size());
  if (!settings.parallel) {
    std::vector<double> alpha;
    for (int i = 0; i < n; ++i)
      detail::sample_lambda_rows(state.lambda_rand[i], state.lambda0, state.alpha_re, counts.rand[i], rng, alpha);
    return;
  }
  detail::parallel_units(n, threads, [&](int i) {
    Rng sub = Rng::substream(settings.seed, {5, static_cast<std::uint64_t>(sweep), static_cast<std::uint64_t>(i)});
    std::vector<double> alpha;
    detail::sample_lambda_rows(state.lambda_rand[i], state.lambda0, state.alpha_re, counts.rand[i], sub, alpha);
  });
}

// Step 6: Dirichlet update of each cluster-combination row block; empty
// combinations draw from the prior (their counts are all zero).
inline void step6_sample_lambda_fixed(ModelState& state, const TransitionCounts& counts, Rng& rng,
                                      const McmcSettings& settings, int sweep, int threads) {
  const int n = static_cast<int>(state.lambda_fixed.size());
  if (!settings.parallel) {
    std::vector<double> alpha;
    for (int cc = 0; cc < n; ++cc)
      detail::sample_lambda_rows(state.lambda_fixed[cc], state.lambda0, state.alpha0, counts.fixed[cc], rng, alpha);
    return;
  }
  detail::parallel_units(n, threads, [&](int cc) {
    Rng sub = Rng::substream(settings.seed, {6, static_cast<std::uint64_t>(sweep), static_cast<std::uint64_t>(cc)});
    std::vector<double> alpha;
    detail::sample_lambda_rows(state.lambda_fixed[cc], state.lambda0, state.alpha0, counts.fixed[cc], sub, alpha);
  });
}

// Auxiliary statistics from step 7 feeding the concentration and lambda0
// updates.
struct AuxStats {
  CountMatrix tables;      // v(y | y_prev), fixed and random tables pooled
  std::int64_t v_fixed = 0;
  std::int64_t v_rand = 0;
  double log_r_fixed = 0.0;
  double log_r_rand = 0.0;
  std::int64_t s_fixed = 0;
  std::int64_t s_rand = 0;
};

namespace detail {

// Chinese-restaurant table count: number of Bernoulli successes with
// success probability a / (r + a), r = 0..count-1. The first draw always
// succeeds, so count >= 1 yields at least one table.
inline std::int64_t crt_tables(std::int64_t count, double a, Rng& rng) {
  std::int64_t tables = 0;
  for (std::int64_t r = 0; r < count; ++r) {
    if (rng.uniform() * (static_cast<double>(r) + a) < a) ++tables;
  }
  return tables;
}

inline void aux_block(const CountMatrix& n, double conc, const Matrix& lambda0, Rng& rng, AuxStats& aux,
                      std::int64_t& v_out, double& log_r_out, std::int64_t& s_out) {
  const int d0 = n.rows();
  for (int a = 0; a < d0; ++a) {
    std::int64_t row_total = 0;
    for (int b = 0; b < d0; ++b) {
      const std::int64_t c = n(a, b);
      if (c == 0) continue;
      row_total += c;
      const std::int64_t t = crt_tables(c, conc * lambda0(a, b), rng);
      aux.tables(a, b) += t;
      v_out += t;
    }
    if (row_total > 0) {
      log_r_out += std::log(rng.beta(conc + 1.0, static_cast<double>(row_total)));
      s_out += rng.bernoulli(static_cast<double>(row_total) / (static_cast<double>(row_total) + conc)) ? 1 : 0;
    }
    // row_total == 0: r degenerates to 1 (log r = 0) and s to 0.
  }
}

}  // namespace detail

// Step 7: sequential-Bernoulli table counts for every fixed-effect and
// random-effect cell, plus the Beta/Bernoulli auxiliaries per conditioning
// row that make the concentration updates conjugate.
inline AuxStats step7_sample_auxiliaries(const ModelState& state, const TransitionCounts& counts, Rng& rng) {
  const int d0 = state.lambda0.rows();
  AuxStats aux;
  aux.tables = CountMatrix(d0, d0);
  for (const auto& n : counts.fixed)
    detail::aux_block(n, state.alpha0, state.lambda0, rng, aux, aux.v_fixed, aux.log_r_fixed, aux.s_fixed);
  for (const auto& n : counts.rand)
    detail::aux_block(n, state.alpha_re, state.lambda0, rng, aux, aux.v_rand, aux.log_r_rand, aux.s_rand);
  return aux;
}

// Steps 8/9: Gamma updates of the concentration parameters. The shape
// a + v - s is positive whenever the shapes a are (every occupied row
// contributes at least one table); the floor is a numeric guard only.
inline double step8_sample_alpha0(const AuxStats& aux, const Hyperparams& hyper, Rng& rng, int* floor_events = nullptr) {
  double shape = hyper.a_alpha0 + static_cast<double>(aux.v_fixed - aux.s_fixed);
  if (!(shape > 0.0)) {
    shape = 1e-3;
    if (floor_events) ++(*floor_events);
  }
  return std::max(rng.gamma(shape, hyper.b_alpha0 - aux.log_r_fixed), 1e-300);
}

inline double step9_sample_alpha_re(const AuxStats& aux, const Hyperparams& hyper, Rng& rng, int* floor_events = nullptr) {
  double shape = hyper.a_alpha_re + static_cast<double>(aux.v_rand - aux.s_rand);
  if (!(shape > 0.0)) {
    shape = 1e-3;
    if (floor_events) ++(*floor_events);
  }
  return std::max(rng.gamma(shape, hyper.b_alpha_re - aux.log_r_rand), 1e-300);
}

// Step 10: Dirichlet update of the global rows from the pooled table counts.
inline void step10_sample_lambda0(ModelState& state, const AuxStats& aux, const Hyperparams& hyper, Rng& rng) {
  const int d0 = state.lambda0.rows();
  std::vector<double> alpha(d0);
  for (int a = 0; a < d0; ++a) {
    for (int b = 0; b < d0; ++b)
      alpha[b] = hyper.alpha00 * hyper.lambda00[b] + static_cast<double>(aux.tables(a, b));
    detail::sample_prob_row(rng, alpha, state.lambda0.row(a));
  }
}

// ---------------------------------------------------------------------------
// Sweep and chain driver
// ---------------------------------------------------------------------------

// One systematic sweep over steps 1-10. The collapsed label update in step 1
// integrates the fixed-effect rows out, so they are refreshed from their
// Dirichlet conditional immediately afterwards; later steps then condition
// on rows that are coherent with the new labels. Step 6 runs again in its
// listed position.
inline void gibbs_sweep(ModelState& state, const SequenceDataset& data, const Hyperparams& hyper,
                        TransitionCounts& counts, GibbsWorkspace& ws, Rng& rng,
                        const McmcSettings& settings, int sweep, int threads, int* floor_events = nullptr) {
  step1_sample_z(state, data, counts, ws, rng);
  step6_sample_lambda_fixed(state, counts, rng, settings, sweep, threads);
  step2_sample_cluster_weights(state, data, rng);
  step3_sample_v(state, data, counts, rng);
  counts.aggregate_fixed(data);
  if (settings.debug_recount) {
    const TransitionCounts fresh = count_transitions(data, state);
    if (!(fresh.n_v == counts.n_v) || fresh.fixed_by_level != counts.fixed_by_level ||
        fresh.rand != counts.rand || fresh.fixed != counts.fixed)
      throw DataError("incremental counts diverged from full recount");
  }
  step4_sample_pi0(state, counts, hyper, rng);
  step5_sample_lambda_rand(state, counts, rng, settings, sweep, threads);
  step6_sample_lambda_fixed(state, counts, rng, settings, sweep, threads);
  const AuxStats aux = step7_sample_auxiliaries(state, counts, rng);
  state.alpha0 = step8_sample_alpha0(aux, hyper, rng, floor_events);
  state.alpha_re = step9_sample_alpha_re(aux, hyper, rng, floor_events);
  step10_sample_lambda0(state, aux, hyper, rng);
}

inline TraceDraw record_draw(const ModelState& state) {
  TraceDraw d;
  d.z = state.z;
  d.pi_cluster = state.pi_cluster;
  d.pi0 = state.pi0;
  d.alpha0 = state.alpha0;
  d.alpha_re = state.alpha_re;
  d.lambda0 = state.lambda0;
  d.lambda_fixed = state.lambda_fixed;
  d.lambda_rand = state.lambda_rand;
  d.k_tilde.resize(state.z.size());
  for (std::size_t j = 0; j < state.z.size(); ++j) d.k_tilde[j] = k_tilde_from_z(state.z[j]);
  return d;
}

// Runs the full chain. Deterministic given the seed in sequential mode;
// parallel mode draws steps 5/6 from per-unit substreams and is identically
// distributed, not bit-identical.
inline Trace run_chain(const SequenceDataset& data, const Hyperparams& hyper, const McmcSettings& settings) {
  settings.validate();
  hyper.validate();
  if (static_cast<int>(hyper.lambda00.size()) != data.d0())
    throw ConfigError("lambda00 dimension does not match the state space");

  int threads = settings.threads > 0 ? settings.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
  if (!settings.parallel) threads = 1;

  Rng rng(settings.seed);
  ModelState state = init_state(data, hyper, rng);
  TransitionCounts counts = count_transitions(data, state);
  GibbsWorkspace ws;

  Trace trace;
  trace.tokens = data.states.tokens;
  trace.predictors = data.predictors;
  trace.subject_ids = data.subject_ids;
  trace.settings = settings;
  trace.hyper = hyper;
  trace.draws.reserve(std::max(0, settings.retained()));

  for (int sweep = 1; sweep <= settings.iterations; ++sweep) {
    gibbs_sweep(state, data, hyper, counts, ws, rng, settings, sweep, threads, &trace.shape_floor_events);
    if (settings.check_invariants) state.validate(data);
    if (sweep > settings.burn_in && (sweep - settings.burn_in) % settings.thin == 0)
      trace.draws.push_back(record_draw(state));
  }
  return trace;
}

// Regenerates tokens and indicators forward from the current parameters,
// keeping each sequence's first token fixed. Used by joint-distribution
// (successive-conditional) checks; counts must be rebuilt afterwards.
inline void forward_generate(SequenceDataset& data, ModelState& state, Rng& rng) {
  const auto crad = data.cluster_radix();
  for (int s = 0; s < data.s0(); ++s) {
    Sequence& seq = data.sequences[s];
    const int cc = state.cluster_combo_for(seq.levels, crad);
    const Matrix& fix = state.lambda_fixed[cc];
    const Matrix& rnd = state.lambda_rand[seq.subject];
    for (int t = 1; t < static_cast<int>(seq.tokens.size()); ++t) {
      const int yp = seq.tokens[t - 1];
      const std::uint8_t v = rng.bernoulli(state.pi0[yp]) ? 0 : 1;
      const Matrix& row_src = v == 0 ? fix : rnd;
      seq.tokens[t] = rng.categorical(row_src.row(yp));
      state.v[s][t - 1] = v;
    }
  }
}

}  // namespace mcep
