#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcep/errors.hpp"
#include "mcep/json_util.hpp"
#include "mcep/matrix.hpp"
#include "mcep/model.hpp"
#include "mcep/rng.hpp"

namespace mcep {

// ---------------------------------------------------------------------------
// Stationary distributions
// ---------------------------------------------------------------------------

// Solves pi P = pi, sum(pi) = 1 by direct elimination. Chains whose
// stationary distribution is not unique (null space of P^T - I larger than
// one dimension) are rejected.
inline std::vector<double> stationary_distribution(const Matrix& P) {
  const int d = P.rows();
  if (P.cols() != d) throw DataError("stationary_distribution: matrix must be square");
  if (!is_row_stochastic(P, 1e-9)) throw DataError("stationary_distribution: matrix is not row-stochastic");

  // Rank of A = P^T - I decides uniqueness; must be d - 1.
  std::vector<double> A(static_cast<std::size_t>(d) * d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) A[static_cast<std::size_t>(r) * d + c] = P(c, r) - (r == c ? 1.0 : 0.0);
  {
    std::vector<double> U = A;
    const double tol = 1e-9 * d;
    int rank = 0;
    for (int col = 0; col < d && rank < d; ++col) {
      int piv = -1;
      double best = tol;
      for (int r = rank; r < d; ++r) {
        const double v = std::fabs(U[static_cast<std::size_t>(r) * d + col]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (piv < 0) continue;
      for (int c = 0; c < d; ++c) std::swap(U[static_cast<std::size_t>(piv) * d + c], U[static_cast<std::size_t>(rank) * d + c]);
      const double pv = U[static_cast<std::size_t>(rank) * d + col];
      for (int r = rank + 1; r < d; ++r) {
        const double f = U[static_cast<std::size_t>(r) * d + col] / pv;
        for (int c = col; c < d; ++c) U[static_cast<std::size_t>(r) * d + c] -= f * U[static_cast<std::size_t>(rank) * d + c];
      }
      ++rank;
    }
    if (rank < d - 1)
      throw DataError("stationary_distribution: stationary distribution is not unique (reducible chain)");
  }

  // Solve A x = 0 with the last equation replaced by the normalization.
  std::vector<double> B = A;
  std::vector<double> rhs(d, 0.0);
  for (int c = 0; c < d; ++c) B[static_cast<std::size_t>(d - 1) * d + c] = 1.0;
  rhs[d - 1] = 1.0;
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::fabs(B[static_cast<std::size_t>(r) * d + col]) > std::fabs(B[static_cast<std::size_t>(piv) * d + col])) piv = r;
    if (std::fabs(B[static_cast<std::size_t>(piv) * d + col]) < 1e-13)
      throw DataError("stationary_distribution: singular solve (reducible chain)");
    if (piv != col) {
      for (int c = 0; c < d; ++c) std::swap(B[static_cast<std::size_t>(piv) * d + c], B[static_cast<std::size_t>(col) * d + c]);
      std::swap(rhs[piv], rhs[col]);
    }
    const double pv = B[static_cast<std::size_t>(col) * d + col];
    for (int r = col + 1; r < d; ++r) {
      const double f = B[static_cast<std::size_t>(r) * d + col] / pv;
      if (f == 0.0) continue;
      for (int c = col; c < d; ++c) B[static_cast<std::size_t>(r) * d + c] -= f * B[static_cast<std::size_t>(col) * d + c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> pi(d);
  for (int r = d - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int c = r + 1; c < d; ++c) s -= B[static_cast<std::size_t>(r) * d + c] * pi[c];
    pi[r] = s / B[static_cast<std::size_t>(r) * d + r];
  }
  double total = 0.0;
  for (auto& x : pi) {
    if (x < 0.0 && x > -1e-12) x = 0.0;
    if (x < 0.0) throw DataError("stationary_distribution: negative solution (reducible chain)");
    total += x;
  }
  for (auto& x : pi) x /= total;
  return pi;
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

// One chain of length T from transition matrix P, the initial state drawn
// from the stationary distribution.
inline std::vector<int> simulate_chain(const Matrix& P, int T, Rng& rng) {
  if (T < 2) throw DataError("simulate_chain: length must be >= 2");
  const std::vector<double> pi = stationary_distribution(P);
  std::vector<int> tokens(T);
  tokens[0] = rng.categorical(pi);
  for (int t = 1; t < T; ++t) tokens[t] = rng.categorical(P.row(tokens[t - 1]));
  return tokens;
}

// ---------------------------------------------------------------------------
// Scenario fixtures
// ---------------------------------------------------------------------------

// Bundled generative parameters mimicking the motivating two-predictor
// design: a base transition matrix per (genotype, context), subject-specific
// random-effect matrices, mixture weights, and sparse perturbation maps for
// the localized-difference scenario.
struct ScenarioParams {
  std::vector<std::string> tokens;
  std::string predictor1_name = "genotype";
  std::string predictor2_name = "context";
  std::vector<std::string> levels1;        // genotype labels
  std::vector<std::string> levels2;        // context labels
  std::vector<int> subjects_per_level1;    // subjects per genotype
  std::vector<std::string> subject_ids;
  std::vector<double> pi0;
  std::vector<Matrix> base_lambda;         // indexed g + d1 * c
  std::vector<Matrix> subject_lambda;      // per subject
  std::vector<Matrix> delta;               // per context; rows sum to zero
  int len_min = 600;
  int len_max = 6000;

  int d0() const { return static_cast<int>(tokens.size()); }
  int d1() const { return static_cast<int>(levels1.size()); }
  int d2() const { return static_cast<int>(levels2.size()); }
  int n_subjects() const { return static_cast<int>(subject_ids.size()); }

  const Matrix& base(int g, int c) const { return base_lambda[g + d1() * c]; }

  void validate() const {
    if (d0() < 2) throw DataError("scenario params: need at least 2 tokens");
    if (d1() < 2 || d2() < 1) throw DataError("scenario params: bad predictor levels");
    int total_subj = 0;
    for (int n : subjects_per_level1) total_subj += n;
    if (total_subj != n_subjects()) throw DataError("scenario params: subject counts inconsistent");
    if (static_cast<int>(pi0.size()) != d0()) throw DataError("scenario params: pi0 dimension");
    for (double w : pi0)
      if (!(w >= 0.0 && w <= 1.0)) throw DataError("scenario params: pi0 outside [0,1]");
    if (static_cast<int>(base_lambda.size()) != d1() * d2()) throw DataError("scenario params: base matrix count");
    for (const auto& m : base_lambda)
      if (!is_row_stochastic(m, 1e-9)) throw DataError("scenario params: base matrix not row-stochastic");
    for (const auto& m : subject_lambda)
      if (!is_row_stochastic(m, 1e-9)) throw DataError("scenario params: subject matrix not row-stochastic");
    if (static_cast<int>(delta.size()) != d2()) throw DataError("scenario params: need one delta map per context");
    for (int c = 0; c < d2(); ++c) {
      for (int a = 0; a < d0(); ++a) {
        double s = 0.0;
        for (int b = 0; b < d0(); ++b) {
          s += delta[c](a, b);
          const double perturbed = base(0, c)(a, b) + delta[c](a, b);
          if (perturbed < 0.0 || perturbed > 1.0) throw DataError("scenario params: base + delta leaves the simplex");
        }
        if (std::fabs(s) > 1e-9) throw DataError("scenario params: delta rows must sum to zero");
      }
    }
    if (len_min < 2 || len_max < len_min) throw DataError("scenario params: bad length range");
  }

  int genotype_of_subject(int i) const {
    int g = 0, acc = 0;
    for (; g < static_cast<int>(subjects_per_level1.size()); ++g) {
      acc += subjects_per_level1[g];
      if (i < acc) return g;
    }
    throw DataError("scenario params: subject index out of range");
  }
};

struct ScenarioTruth {
  int k1 = 0;                       // distinct dynamics across genotypes
  int k2 = 0;                       // distinct dynamics across contexts
  std::vector<Matrix> true_abs_dp;  // |P_1,c - P_2,c| at population level, per context
};

struct ScenarioData {
  SequenceDataset data;
  ScenarioTruth truth;
  std::vector<Matrix> effective_lambda;  // per (genotype, context), indexed g + d1 * c
};

namespace detail {

inline bool matrices_equal(const Matrix& a, const Matrix& b) {
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      if (a(r, c) != b(r, c)) return false;
  return true;
}

}  // namespace detail

// Effective fixed-effect matrices per scenario letter. The tying pattern
// determines the ground-truth cluster counts.
inline std::vector<Matrix> scenario_effective_lambda(char id, const ScenarioParams& par) {
  const int d1 = par.d1(), d2 = par.d2();
  std::vector<Matrix> eff(static_cast<std::size_t>(d1) * d2);
  auto at = [&](int g, int c) -> Matrix& { return eff[g + d1 * c]; };
  for (int c = 0; c < d2; ++c) {
    for (int g = 0; g < d1; ++g) {
      switch (id) {
        case 'A': at(g, c) = par.base(0, 0); break;
        case 'B': at(g, c) = par.base(g, 0); break;
        case 'C': at(g, c) = par.base(0, c); break;
        case 'D': at(g, c) = par.base(g, c); break;
        case 'E': at(g, c) = par.base(g, std::min(c, 1)); break;
        case 'F': {
          at(g, c) = par.base(0, c);
          if (g == 1) {
            for (int a = 0; a < par.d0(); ++a)
              for (int b = 0; b < par.d0(); ++b) at(g, c)(a, b) += par.delta[c](a, b);
          }
          break;
        }
        default:
          throw ConfigError(std::string("unknown scenario id: ") + id);
      }
    }
  }
  return eff;
}

// Simulates the full design: every subject contributes one sequence per
// context, generated from pi0 * lambda_fixed + pi1 * lambda_subject with
// per-sequence random substreams.
inline SequenceDataset simulate_sequences(const ScenarioParams& par, const std::vector<Matrix>& eff,
                                          const std::vector<int>& lengths, std::uint64_t seed) {
  const int d0 = par.d0();
  SequenceDataset data;
  data.states.tokens = par.tokens;
  data.predictors.resize(2);
  data.predictors[0].name = par.predictor1_name;
  data.predictors[0].levels = par.levels1;
  data.predictors[1].name = par.predictor2_name;
  data.predictors[1].levels = par.levels2;
  data.subject_ids = par.subject_ids;

  const int n_seq = par.n_subjects() * par.d2();
  if (static_cast<int>(lengths.size()) != n_seq) throw DataError("simulate_sequences: wrong number of lengths");

  int s = 0;
  for (int i = 0; i < par.n_subjects(); ++i) {
    const int g = par.genotype_of_subject(i);
    for (int c = 0; c < par.d2(); ++c, ++s) {
      const Matrix& fix = eff[g + par.d1() * c];
      Matrix P(d0, d0);
      for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d0; ++b)
          P(a, b) = par.pi0[a] * fix(a, b) + (1.0 - par.pi0[a]) * par.subject_lambda[i](a, b);
      Rng rng = Rng::substream(seed, {0x5e9, static_cast<std::uint64_t>(s)});
      Sequence seq;
      seq.id = par.subject_ids[i] + "_" + par.levels2[c];
      seq.subject = i;
      seq.levels = {g, c};
      seq.tokens = simulate_chain(P, lengths[s], rng);
      data.sequences.push_back(std::move(seq));
    }
  }
  data.finalize();
  return data;
}

// Builds one scenario dataset plus its ground truth. Sequence lengths are
// drawn uniformly from the fixture's range.
inline ScenarioData build_scenario(char id, const ScenarioParams& par, std::uint64_t seed) {
  par.validate();
  ScenarioData out;
  out.effective_lambda = scenario_effective_lambda(id, par);

  // Ground-truth cluster counts: distinct matrix tuples along each axis.
  const int d1 = par.d1(), d2 = par.d2();
  auto eff_at = [&](int g, int c) -> const Matrix& { return out.effective_lambda[g + d1 * c]; };
  {
    std::vector<int> reps;
    for (int g = 0; g < d1; ++g) {
      bool found = false;
      for (int r : reps) {
        bool all_eq = true;
        for (int c = 0; c < d2; ++c) all_eq = all_eq && detail::matrices_equal(eff_at(g, c), eff_at(r, c));
        if (all_eq) {
          found = true;
          break;
        }
      }
      if (!found) reps.push_back(g);
    }
    out.truth.k1 = static_cast<int>(reps.size());
  }
  {
    std::vector<int> reps;
    for (int c = 0; c < d2; ++c) {
      bool found = false;
      for (int r : reps) {
        bool all_eq = true;
        for (int g = 0; g < d1; ++g) all_eq = all_eq && detail::matrices_equal(eff_at(g, c), eff_at(g, r));
        if (all_eq) {
          found = true;
          break;
        }
      }
      if (!found) reps.push_back(c);
    }
    out.truth.k2 = static_cast<int>(reps.size());
  }

  // True population-level |Delta P| between the first two genotypes.
  out.truth.true_abs_dp.resize(d2);
  for (int c = 0; c < d2; ++c) {
    Matrix m(par.d0(), par.d0());
    for (int a = 0; a < par.d0(); ++a)
      for (int b = 0; b < par.d0(); ++b)
        m(a, b) = par.pi0[a] * std::fabs(eff_at(0, c)(a, b) - eff_at(1, c)(a, b));
    out.truth.true_abs_dp[c] = std::move(m);
  }

  Rng len_rng = Rng::substream(seed, {0x1e4});
  std::vector<int> lengths(par.n_subjects() * d2);
  for (auto& L : lengths) L = len_rng.uniform_int(par.len_min, par.len_max);
  out.data = simulate_sequences(par, out.effective_lambda, lengths, seed);
  return out;
}

// ---------------------------------------------------------------------------
// Fixture I/O
// ---------------------------------------------------------------------------

inline ScenarioParams scenario_params_from_json(const nlohmann::json& j) {
  ScenarioParams par;
  par.tokens = j.at("tokens").get<std::vector<std::string>>();
  par.predictor1_name = j.at("predictor1").at("name").get<std::string>();
  par.levels1 = j.at("predictor1").at("levels").get<std::vector<std::string>>();
  par.predictor2_name = j.at("predictor2").at("name").get<std::string>();
  par.levels2 = j.at("predictor2").at("levels").get<std::vector<std::string>>();
  par.subjects_per_level1 = j.at("subjects_per_level1").get<std::vector<int>>();
  par.subject_ids = j.at("subject_ids").get<std::vector<std::string>>();
  par.pi0 = j.at("pi0").get<std::vector<double>>();
  for (const auto& m : j.at("base_lambda")) par.base_lambda.push_back(detail::matrix_from_json(m));
  for (const auto& m : j.at("subject_lambda")) par.subject_lambda.push_back(detail::matrix_from_json(m));
  for (const auto& m : j.at("delta")) par.delta.push_back(detail::matrix_from_json(m));
  par.len_min = j.at("len_min").get<int>();
  par.len_max = j.at("len_max").get<int>();
  par.validate();
  return par;
}

inline ScenarioParams load_scenario_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario params: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad scenario params json (" + path + "): " + e.what());
  }
  return scenario_params_from_json(j);
}

}  // namespace mcep
