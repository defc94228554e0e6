#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcep/simulate.hpp"
#include "helpers.hpp"

using namespace mcep;
using Catch::Approx;

namespace {

ScenarioParams fixture() {
  static const ScenarioParams par = load_scenario_params(std::string(MCEP_DATA_DIR) + "/pseudo_foxp2_params.json");
  return par;
}

bool exactly_equal(const Matrix& a, const Matrix& b) { return a == b; }

}  // namespace

TEST_CASE("stationary distribution") {
  SECTION("iid rows return the common row") {
    Matrix P(3, 3);
    const double q[3] = {0.2, 0.5, 0.3};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) P(a, b) = q[b];
    const auto pi = stationary_distribution(P);
    for (int b = 0; b < 3; ++b) CHECK(pi[b] == Approx(q[b]).margin(1e-12));
  }
  SECTION("half identity plus half anti-identity") {
    Matrix P(2, 2);
    P(0, 0) = 0.5;
    P(0, 1) = 0.5;
    P(1, 0) = 0.5;
    P(1, 1) = 0.5;
    const auto pi = stationary_distribution(P);
    CHECK(pi[0] == Approx(0.5).margin(1e-12));
    CHECK(pi[1] == Approx(0.5).margin(1e-12));
  }
  SECTION("identity matrix has no unique stationary distribution") {
    Matrix I(3, 3);
    for (int a = 0; a < 3; ++a) I(a, a) = 1.0;
    CHECK_THROWS_AS(stationary_distribution(I), DataError);
  }
  SECTION("block-diagonal reducible chain is rejected") {
    Matrix P(4, 4);
    P(0, 0) = 0.5;
    P(0, 1) = 0.5;
    P(1, 0) = 0.5;
    P(1, 1) = 0.5;
    P(2, 2) = 0.3;
    P(2, 3) = 0.7;
    P(3, 2) = 0.6;
    P(3, 3) = 0.4;
    CHECK_THROWS_AS(stationary_distribution(P), DataError);
  }
  SECTION("solution satisfies pi P = pi on random chains") {
    Rng rng(17);
    std::vector<double> alpha(4, 0.8);
    for (int rep = 0; rep < 50; ++rep) {
      Matrix P(4, 4);
      for (int a = 0; a < 4; ++a) rng.dirichlet(alpha, P.row(a));
      const auto pi = stationary_distribution(P);
      for (int b = 0; b < 4; ++b) {
        double s = 0.0;
        for (int a = 0; a < 4; ++a) s += pi[a] * P(a, b);
        CHECK(s == Approx(pi[b]).margin(1e-10));
      }
    }
  }
}

TEST_CASE("simulate_chain") {
  SECTION("one-hot rows force the orbit") {
    Matrix P(3, 3);
    P(0, 1) = 1.0;
    P(1, 2) = 1.0;
    P(2, 0) = 1.0;
    Rng rng(3);
    const auto tokens = simulate_chain(P, 12, rng);
    for (std::size_t t = 1; t < tokens.size(); ++t) CHECK(tokens[t] == (tokens[t - 1] + 1) % 3);
  }
  SECTION("iid rows reproduce the marginal at large T") {
    Matrix P(4, 4);
    const double q[4] = {0.1, 0.2, 0.3, 0.4};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) P(a, b) = q[b];
    Rng rng(11);
    const auto tokens = simulate_chain(P, 100000, rng);
    std::vector<double> freq(4, 0.0);
    for (int tok : tokens) freq[tok] += 1.0 / tokens.size();
    for (int b = 0; b < 4; ++b) CHECK(freq[b] == Approx(q[b]).margin(0.01));
  }
  SECTION("transition MLE of a long chain matches the matrix") {
    Matrix P(3, 3);
    P(0, 0) = 0.6;
    P(0, 1) = 0.3;
    P(0, 2) = 0.1;
    P(1, 0) = 0.2;
    P(1, 1) = 0.5;
    P(1, 2) = 0.3;
    P(2, 0) = 0.25;
    P(2, 1) = 0.25;
    P(2, 2) = 0.5;
    Rng rng(29);
    const auto tokens = simulate_chain(P, 100000, rng);
    std::vector<std::vector<double>> counts(3, std::vector<double>(3, 0.0));
    for (std::size_t t = 1; t < tokens.size(); ++t) counts[tokens[t - 1]][tokens[t]] += 1.0;
    for (int a = 0; a < 3; ++a) {
      const double n = counts[a][0] + counts[a][1] + counts[a][2];
      for (int b = 0; b < 3; ++b) CHECK(counts[a][b] / n == Approx(P(a, b)).margin(0.01));
    }
  }
}

TEST_CASE("scenario construction") {
  ScenarioParams par = fixture();
  par.len_min = 40;
  par.len_max = 60;

  SECTION("tying patterns and ground truth per scenario") {
    struct Want {
      char id;
      int k1, k2;
    };
    for (const Want w : {Want{'A', 1, 1}, Want{'B', 2, 1}, Want{'C', 1, 3}, Want{'D', 2, 3},
                         Want{'E', 2, 2}, Want{'F', 2, 3}}) {
      const ScenarioData sd = build_scenario(w.id, par, 5);
      CHECK(sd.truth.k1 == w.k1);
      CHECK(sd.truth.k2 == w.k2);

      // Independent distinctness count along each axis.
      auto eff = [&](int g, int c) -> const Matrix& { return sd.effective_lambda[g + 2 * c]; };
      int k1 = 1;
      {
        bool same = true;
        for (int c = 0; c < 3; ++c) same = same && exactly_equal(eff(0, c), eff(1, c));
        k1 = same ? 1 : 2;
      }
      CHECK(sd.truth.k1 == k1);
      int k2 = 0;
      std::vector<int> reps;
      for (int c = 0; c < 3; ++c) {
        bool found = false;
        for (int r : reps)
          if (exactly_equal(eff(0, c), eff(0, r)) && exactly_equal(eff(1, c), eff(1, r))) found = true;
        if (!found) reps.push_back(c);
      }
      k2 = static_cast<int>(reps.size());
      CHECK(sd.truth.k2 == k2);
    }
  }
  SECTION("scenario A shares one matrix everywhere") {
    const ScenarioData sd = build_scenario('A', par, 1);
    for (const auto& m : sd.effective_lambda) CHECK(exactly_equal(m, par.base(0, 0)));
  }
  SECTION("scenario E ties contexts two and three") {
    const ScenarioData sd = build_scenario('E', par, 1);
    for (int g = 0; g < 2; ++g)
      CHECK(exactly_equal(sd.effective_lambda[g + 2 * 2], sd.effective_lambda[g + 2 * 1]));
  }
  SECTION("scenario F applies the sparse delta to the second genotype only") {
    const ScenarioData sd = build_scenario('F', par, 1);
    for (int c = 0; c < 3; ++c) {
      const Matrix& g1 = sd.effective_lambda[0 + 2 * c];
      const Matrix& g2 = sd.effective_lambda[1 + 2 * c];
      CHECK(exactly_equal(g1, par.base(0, c)));
      int nonzero = 0;
      for (int a = 0; a < par.d0(); ++a)
        for (int b = 0; b < par.d0(); ++b) {
          const double diff = g2(a, b) - g1(a, b);
          if (par.delta[c](a, b) == 0.0) {
            CHECK(diff == 0.0);  // untouched cells are exactly zero
          } else {
            CHECK(diff == Approx(par.delta[c](a, b)).margin(1e-15));
            ++nonzero;
          }
        }
      CHECK(nonzero == 6);
      // population-level truth includes the pi0 weights
      for (int a = 0; a < par.d0(); ++a)
        for (int b = 0; b < par.d0(); ++b)
          CHECK(sd.truth.true_abs_dp[c](a, b) ==
                Approx(par.pi0[a] * std::fabs(par.delta[c](a, b))).margin(1e-15));
    }
  }
  SECTION("dataset shape matches the design") {
    const ScenarioData sd = build_scenario('D', par, 7);
    CHECK(sd.data.s0() == 42);
    CHECK(sd.data.n_subjects() == 14);
    CHECK(sd.data.p() == 2);
    for (const auto& seq : sd.data.sequences) {
      CHECK(static_cast<int>(seq.tokens.size()) >= par.len_min);
      CHECK(static_cast<int>(seq.tokens.size()) <= par.len_max);
    }
  }
  SECTION("bit-for-bit reproducible given the seed") {
    const ScenarioData a = build_scenario('D', par, 42);
    const ScenarioData b = build_scenario('D', par, 42);
    REQUIRE(a.data.s0() == b.data.s0());
    for (int s = 0; s < a.data.s0(); ++s) CHECK(a.data.sequences[s].tokens == b.data.sequences[s].tokens);
    const ScenarioData c = build_scenario('D', par, 43);
    bool any_diff = false;
    for (int s = 0; s < a.data.s0(); ++s)
      any_diff = any_diff || a.data.sequences[s].tokens != c.data.sequences[s].tokens;
    CHECK(any_diff);
  }
  SECTION("subject-level matrices are row-stochastic for every scenario") {
    for (char id : {'A', 'B', 'C', 'D', 'E', 'F'}) {
      const auto eff = scenario_effective_lambda(id, par);
      for (int i = 0; i < par.n_subjects(); ++i) {
        const int g = par.genotype_of_subject(i);
        for (int c = 0; c < par.d2(); ++c) {
          Matrix P(par.d0(), par.d0());
          for (int a = 0; a < par.d0(); ++a)
            for (int b = 0; b < par.d0(); ++b)
              P(a, b) = par.pi0[a] * eff[g + 2 * c](a, b) + (1 - par.pi0[a]) * par.subject_lambda[i](a, b);
          CHECK(is_row_stochastic(P, 1e-9));
        }
      }
    }
  }
}

TEST_CASE("fixture sanity") {
  const ScenarioParams par = fixture();
  CHECK(par.d0() == 5);
  CHECK(par.d1() == 2);
  CHECK(par.d2() == 3);
  CHECK(par.n_subjects() == 14);
  CHECK(par.subjects_per_level1 == std::vector<int>{8, 6});
  CHECK(par.len_min == 600);
  CHECK(par.len_max == 6000);
  for (int c = 0; c < 3; ++c) {
    int nonzero = 0;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        if (par.delta[c](a, b) != 0.0) {
          ++nonzero;
          CHECK(std::fabs(par.delta[c](a, b)) >= 0.05);
          CHECK(std::fabs(par.delta[c](a, b)) <= 0.15);
        }
    CHECK(nonzero == 6);
  }
}
