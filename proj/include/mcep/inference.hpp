#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcep/errors.hpp"
#include "mcep/gibbs.hpp"
#include "mcep/matrix.hpp"

namespace mcep {

// ---------------------------------------------------------------------------
// Per-draw transition matrices
// ---------------------------------------------------------------------------

// Population-level rows for predictor values x: the random effect is
// integrated out, leaving lambda0 + pi0 * (lambda_fixed - lambda0), i.e. the
// convex combination pi0 * lambda_fixed + pi1 * lambda0.
inline Matrix population_transition(const Trace& trace, const TraceDraw& draw, std::span<const int> x) {
  const auto crad = trace.cluster_radix();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < 0 || x[j] >= trace.predictors[j].dj())
      throw DataError("population_transition: unknown level for predictor " + trace.predictors[j].name);
  }
  int cc = 0;
  for (int j = static_cast<int>(x.size()) - 1; j >= 0; --j) cc = cc * crad[j] + draw.z[j][x[j]];
  const Matrix& fix = draw.lambda_fixed[cc];
  const int d0 = trace.d0();
  Matrix out(d0, d0);
  for (int a = 0; a < d0; ++a) {
    const double w = draw.pi0[a];
    for (int b = 0; b < d0; ++b) out(a, b) = w * fix(a, b) + (1.0 - w) * draw.lambda0(a, b);
  }
  return out;
}

// Subject-level rows: pi0 * lambda_fixed + pi1 * lambda_rand.
inline Matrix subject_transition(const Trace& trace, const TraceDraw& draw, int subject,
                                 std::span<const int> x) {
  if (subject < 0 || subject >= static_cast<int>(draw.lambda_rand.size()))
    throw DataError("subject_transition: unknown subject index");
  const auto crad = trace.cluster_radix();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < 0 || x[j] >= trace.predictors[j].dj())
      throw DataError("subject_transition: unknown level for predictor " + trace.predictors[j].name);
  }
  int cc = 0;
  for (int j = static_cast<int>(x.size()) - 1; j >= 0; --j) cc = cc * crad[j] + draw.z[j][x[j]];
  const Matrix& fix = draw.lambda_fixed[cc];
  const Matrix& rnd = draw.lambda_rand[subject];
  const int d0 = trace.d0();
  Matrix out(d0, d0);
  for (int a = 0; a < d0; ++a) {
    const double w = draw.pi0[a];
    for (int b = 0; b < d0; ++b) out(a, b) = w * fix(a, b) + (1.0 - w) * rnd(a, b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior summaries
// ---------------------------------------------------------------------------

struct MeanSd {
  Matrix mean;
  Matrix sd;
};

namespace detail {

// Two-pass cellwise mean/sd over a family of matrices.
template <class Gen>
MeanSd mean_sd_over_draws(int n, int d0, Gen gen) {
  MeanSd out{Matrix(d0, d0), Matrix(d0, d0)};
  for (int k = 0; k < n; ++k) {
    const Matrix m = gen(k);
    for (int a = 0; a < d0; ++a)
      for (int b = 0; b < d0; ++b) out.mean(a, b) += m(a, b);
  }
  for (int a = 0; a < d0; ++a)
    for (int b = 0; b < d0; ++b) out.mean(a, b) /= n;
  if (n > 1) {
    for (int k = 0; k < n; ++k) {
      const Matrix m = gen(k);
      for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d0; ++b) {
          const double d = m(a, b) - out.mean(a, b);
          out.sd(a, b) += d * d;
        }
    }
    for (int a = 0; a < d0; ++a)
      for (int b = 0; b < d0; ++b) out.sd(a, b) = std::sqrt(out.sd(a, b) / (n - 1));
  }
  return out;
}

}  // namespace detail

// Cellwise posterior mean and sd of the population-level transition matrix.
inline MeanSd posterior_transition_summary(const Trace& trace, std::span<const int> x) {
  if (trace.draws.empty()) throw DataError("posterior_transition_summary: empty trace");
  const int n = static_cast<int>(trace.draws.size());
  return detail::mean_sd_over_draws(n, trace.d0(), [&](int k) {
    return population_transition(trace, trace.draws[k], x);
  });
}

// ---------------------------------------------------------------------------
// Hypothesis tests
// ---------------------------------------------------------------------------

struct GlobalTest {
  std::vector<double> k_probs;  // posterior mass on k_tilde = 1..k
  double p_h1 = 0.0;            // fraction of draws with more than one occupied block
};

inline GlobalTest global_test(const Trace& trace, int j) {
  if (trace.draws.empty()) throw DataError("global_test: empty trace");
  GlobalTest out;
  out.k_probs.assign(trace.predictors[j].k, 0.0);
  for (const auto& d : trace.draws) {
    const int k = d.k_tilde[j];
    out.k_probs[k - 1] += 1.0;
    if (k > 1) out.p_h1 += 1.0;
  }
  const double n = static_cast<double>(trace.draws.size());
  for (auto& p : out.k_probs) p /= n;
  out.p_h1 /= n;
  return out;
}

struct LocalTest {
  Matrix mean_abs_diff;  // posterior mean of |Delta P| per cell
  Matrix p_h0;           // posterior probability of |Delta P| <= delta per cell
};

// Pairwise comparison of population-level transition probabilities between
// levels a and b of predictor j, holding the other predictors at the values
// given in x_base (slot j is ignored).
inline LocalTest local_test(const Trace& trace, int j, int level_a, int level_b,
                            std::span<const int> x_base, double delta) {
  if (trace.draws.empty()) throw DataError("local_test: empty trace");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("local_test: delta must be in (0,1)");
  const int d0 = trace.d0();
  std::vector<int> xa(x_base.begin(), x_base.end());
  std::vector<int> xb(x_base.begin(), x_base.end());
  xa[j] = level_a;
  xb[j] = level_b;

  LocalTest out{Matrix(d0, d0), Matrix(d0, d0)};
  for (const auto& draw : trace.draws) {
    const Matrix pa = population_transition(trace, draw, xa);
    const Matrix pb = population_transition(trace, draw, xb);
    for (int r = 0; r < d0; ++r)
      for (int c = 0; c < d0; ++c) {
        const double ad = std::fabs(pa(r, c) - pb(r, c));
        out.mean_abs_diff(r, c) += ad;
        if (ad <= delta) out.p_h0(r, c) += 1.0;
      }
  }
  const double n = static_cast<double>(trace.draws.size());
  for (int r = 0; r < d0; ++r)
    for (int c = 0; c < d0; ++c) {
      out.mean_abs_diff(r, c) /= n;
      out.p_h0(r, c) /= n;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Random-effects spread
// ---------------------------------------------------------------------------

struct RandomEffectsSummary {
  std::vector<Matrix> per_subject_sd;  // sd of pi1(y_prev) * lambda_rand(y | y_prev)
  Matrix pooled_sd;                    // average of the per-subject maps
};

inline RandomEffectsSummary random_effects_summary(const Trace& trace) {
  if (trace.draws.empty()) throw DataError("random_effects_summary: empty trace");
  const int d0 = trace.d0();
  const int ns = static_cast<int>(trace.subject_ids.size());
  const int n = static_cast<int>(trace.draws.size());
  RandomEffectsSummary out;
  out.per_subject_sd.reserve(ns);
  out.pooled_sd = Matrix(d0, d0);
  for (int i = 0; i < ns; ++i) {
    const MeanSd ms = detail::mean_sd_over_draws(n, d0, [&](int k) {
      const TraceDraw& dr = trace.draws[k];
      Matrix m(d0, d0);
      for (int a = 0; a < d0; ++a) {
        const double w = 1.0 - dr.pi0[a];
        for (int b = 0; b < d0; ++b) m(a, b) = w * dr.lambda_rand[i](a, b);
      }
      return m;
    });
    for (int a = 0; a < d0; ++a)
      for (int b = 0; b < d0; ++b) out.pooled_sd(a, b) += ms.sd(a, b) / ns;
    out.per_subject_sd.push_back(ms.sd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form prior identities (checked against Monte Carlo in the tests)
// ---------------------------------------------------------------------------

// Prior variance of a Dirichlet child cell around its center.
inline double prior_variance_check(double alpha, double lambda0_cell) {
  return lambda0_cell * (1.0 - lambda0_cell) / (alpha + 1.0);
}

struct PriorCorrelation {
  double within_subject = 0.0;    // same subject, different cluster combinations
  double between_subjects = 0.0;  // different subjects, same combination
};

inline PriorCorrelation prior_correlation_check(double pi0, double alpha0, double alpha_re) {
  const double pi1 = 1.0 - pi0;
  const double re_part = pi1 * pi1 / (alpha_re + 1.0);
  const double fix_part = pi0 * pi0 / (alpha0 + 1.0);
  PriorCorrelation out;
  out.within_subject = re_part / (fix_part + re_part);
  out.between_subjects = 1.0 - out.within_subject;  // exact complement by construction
  return out;
}

}  // namespace mcep
