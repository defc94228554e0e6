#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcep/inference.hpp"
#include "helpers.hpp"

using namespace mcep;
using Catch::Approx;

namespace {

// Hand-built trace over a 2-state space, one binary predictor, one subject.
Trace tiny_trace() {
  Trace t;
  t.tokens = {"a", "b"};
  PredictorSpec p;
  p.name = "g";
  p.levels = {"l0", "l1"};
  p.k = 2;
  t.predictors = {p};
  t.subject_ids = {"m1"};
  return t;
}

TraceDraw make_draw(double pi0, double f00, double r00, double l000, std::vector<int> z) {
  TraceDraw d;
  d.z = {std::move(z)};
  d.pi_cluster = {{0.5, 0.5}};
  d.pi0 = {pi0, pi0};
  d.alpha0 = 1.0;
  d.alpha_re = 1.0;
  d.lambda0 = Matrix(2, 2);
  d.lambda0(0, 0) = l000;
  d.lambda0(0, 1) = 1 - l000;
  d.lambda0(1, 0) = 0.5;
  d.lambda0(1, 1) = 0.5;
  auto mk = [](double p00) {
    Matrix m(2, 2);
    m(0, 0) = p00;
    m(0, 1) = 1 - p00;
    m(1, 0) = 0.4;
    m(1, 1) = 0.6;
    return m;
  };
  d.lambda_fixed = {mk(f00), mk(1 - f00)};
  d.lambda_rand = {mk(r00)};
  d.k_tilde = {k_tilde_from_z(d.z[0])};
  return d;
}

}  // namespace

TEST_CASE("population transition") {
  Trace t = tiny_trace();
  const TraceDraw d = make_draw(0.8, 0.9, 0.2, 0.3, {0, 1});
  const std::vector<int> x0{0}, x1{1};

  SECTION("pi0 = 1 returns the fixed rows") {
    TraceDraw d1 = d;
    std::fill(d1.pi0.begin(), d1.pi0.end(), 1.0);
    const Matrix m = population_transition(t, d1, x0);
    CHECK(m(0, 0) == Approx(0.9).margin(1e-15));
  }
  SECTION("pi0 = 0 returns lambda0") {
    TraceDraw d0 = d;
    std::fill(d0.pi0.begin(), d0.pi0.end(), 0.0);
    const Matrix m = population_transition(t, d0, x1);
    CHECK(m(0, 0) == Approx(0.3).margin(1e-15));
  }
  SECTION("generic convex combination, checked cellwise") {
    const Matrix m = population_transition(t, d, x0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        CHECK(m(a, b) == Approx(0.8 * d.lambda_fixed[0](a, b) + 0.2 * d.lambda0(a, b)).margin(1e-15));
    CHECK(is_row_stochastic(m, 1e-12));
  }
  SECTION("labels route through z") {
    TraceDraw dz = make_draw(1.0, 0.9, 0.2, 0.3, {1, 1});
    const Matrix m = population_transition(t, dz, x0);  // level 0 now sits in cluster 1
    CHECK(m(0, 0) == Approx(1 - 0.9).margin(1e-15));
  }
  SECTION("unknown level errors") {
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(population_transition(t, d, bad), DataError);
  }
}

TEST_CASE("subject transition") {
  Trace t = tiny_trace();
  const TraceDraw d = make_draw(0.8, 0.9, 0.2, 0.3, {0, 1});
  const std::vector<int> x0{0};

  SECTION("pi1 = 0 equals the fixed rows") {
    TraceDraw d1 = d;
    std::fill(d1.pi0.begin(), d1.pi0.end(), 1.0);
    const Matrix m = subject_transition(t, d1, 0, x0);
    CHECK(m(0, 0) == Approx(0.9).margin(1e-15));
  }
  SECTION("identical components collapse") {
    TraceDraw de = d;
    de.lambda_rand[0] = de.lambda_fixed[0];
    const Matrix m = subject_transition(t, de, 0, x0);
    CHECK(m(0, 0) == Approx(0.9).margin(1e-15));
  }
  SECTION("generic recomputation") {
    const Matrix m = subject_transition(t, d, 0, x0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        CHECK(m(a, b) == Approx(0.8 * d.lambda_fixed[0](a, b) + 0.2 * d.lambda_rand[0](a, b)).margin(1e-15));
  }
  SECTION("unknown subject errors") {
    CHECK_THROWS_AS(subject_transition(t, d, 3, x0), DataError);
  }
}

TEST_CASE("posterior transition summary") {
  Trace t = tiny_trace();
  const std::vector<int> x0{0};

  SECTION("single draw: mean is the draw, sd is zero") {
    t.draws = {make_draw(0.8, 0.9, 0.2, 0.3, {0, 1})};
    const MeanSd ms = posterior_transition_summary(t, x0);
    const Matrix m = population_transition(t, t.draws[0], x0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        CHECK(ms.mean(a, b) == Approx(m(a, b)).margin(1e-15));
        CHECK(ms.sd(a, b) == 0.0);
      }
  }
  SECTION("two symmetric draws average to one half") {
    TraceDraw d1 = make_draw(1.0, 0.7, 0.2, 0.3, {0, 1});
    TraceDraw d2 = make_draw(1.0, 0.3, 0.2, 0.3, {0, 1});
    t.draws = {d1, d2};
    const MeanSd ms = posterior_transition_summary(t, x0);
    CHECK(ms.mean(0, 0) == Approx(0.5).margin(1e-15));
  }
  SECTION("matches a direct two-pass recomputation") {
    Rng rng(3);
    for (int k = 0; k < 20; ++k) t.draws.push_back(make_draw(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), {0, 1}));
    const MeanSd ms = posterior_transition_summary(t, x0);
    std::vector<double> cell;
    for (const auto& d : t.draws) cell.push_back(population_transition(t, d, x0)(0, 1));
    CHECK(ms.mean(0, 1) == Approx(testutil::mean_of(cell)).margin(1e-12));
    CHECK(ms.sd(0, 1) == Approx(std::sqrt(testutil::var_of(cell))).margin(1e-12));
  }
  SECTION("empty trace errors") {
    CHECK_THROWS_AS(posterior_transition_summary(t, x0), DataError);
  }
}

TEST_CASE("global test") {
  Trace t = tiny_trace();
  SECTION("all merged") {
    for (int k = 0; k < 10; ++k) t.draws.push_back(make_draw(0.8, 0.9, 0.2, 0.3, {1, 1}));
    const GlobalTest g = global_test(t, 0);
    CHECK(g.p_h1 == 0.0);
    CHECK(g.k_probs[0] == 1.0);
  }
  SECTION("all split") {
    for (int k = 0; k < 10; ++k) t.draws.push_back(make_draw(0.8, 0.9, 0.2, 0.3, {0, 1}));
    const GlobalTest g = global_test(t, 0);
    CHECK(g.p_h1 == 1.0);
  }
  SECTION("mixed trace counts directly") {
    for (int k = 0; k < 7; ++k) t.draws.push_back(make_draw(0.8, 0.9, 0.2, 0.3, {0, 1}));
    for (int k = 0; k < 3; ++k) t.draws.push_back(make_draw(0.8, 0.9, 0.2, 0.3, {0, 0}));
    const GlobalTest g = global_test(t, 0);
    CHECK(g.p_h1 == Approx(0.7).margin(1e-15));
    CHECK(g.k_probs[1] == Approx(0.7).margin(1e-15));
    CHECK(g.p_h1 == Approx(1.0 - g.k_probs[0]).margin(1e-15));
  }
}

TEST_CASE("local test") {
  Trace t = tiny_trace();
  Rng rng(9);
  for (int k = 0; k < 25; ++k)
    t.draws.push_back(make_draw(0.6 + 0.3 * rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), {0, 1}));
  const std::vector<int> base{0};

  SECTION("same level on both sides accepts everywhere") {
    const LocalTest lt = local_test(t, 0, 1, 1, base, 0.02);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        CHECK(lt.p_h0(a, b) == 1.0);
        CHECK(lt.mean_abs_diff(a, b) == 0.0);
      }
  }
  SECTION("shared cluster forces delta to zero") {
    Trace ts = tiny_trace();
    for (int k = 0; k < 10; ++k) ts.draws.push_back(make_draw(0.8, 0.9, 0.2, 0.3, {1, 1}));
    const LocalTest lt = local_test(ts, 0, 0, 1, base, 0.02);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(lt.p_h0(a, b) == 1.0);
  }
  SECTION("swap invariance") {
    const LocalTest ab = local_test(t, 0, 0, 1, base, 0.05);
    const LocalTest ba = local_test(t, 0, 1, 0, base, 0.05);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        CHECK(ab.p_h0(a, b) == ba.p_h0(a, b));
        CHECK(ab.mean_abs_diff(a, b) == Approx(ba.mean_abs_diff(a, b)).margin(1e-15));
      }
  }
  SECTION("fraction matches a direct count on known deltas") {
    const double delta = 0.05;
    const LocalTest lt = local_test(t, 0, 0, 1, base, delta);
    int below = 0;
    double sum = 0.0;
    for (const auto& d : t.draws) {
      const Matrix pa = population_transition(t, d, std::vector<int>{0});
      const Matrix pb = population_transition(t, d, std::vector<int>{1});
      const double ad = std::fabs(pa(0, 0) - pb(0, 0));
      sum += ad;
      if (ad <= delta) ++below;
    }
    CHECK(lt.p_h0(0, 0) == Approx(static_cast<double>(below) / t.draws.size()).margin(1e-15));
    CHECK(lt.mean_abs_diff(0, 0) == Approx(sum / t.draws.size()).margin(1e-13));
  }
}

TEST_CASE("random effects summary") {
  Trace t = tiny_trace();
  SECTION("single draw has zero spread") {
    t.draws = {make_draw(0.8, 0.9, 0.2, 0.3, {0, 1})};
    const RandomEffectsSummary re = random_effects_summary(t);
    CHECK(re.per_subject_sd[0](0, 0) == 0.0);
    CHECK(re.pooled_sd(0, 0) == 0.0);
  }
  SECTION("pi1 = 0 zeroes the maps") {
    for (int k = 0; k < 5; ++k) {
      TraceDraw d = make_draw(1.0, 0.9, 0.2 + 0.1 * k, 0.3, {0, 1});
      t.draws.push_back(d);
    }
    const RandomEffectsSummary re = random_effects_summary(t);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(re.per_subject_sd[0](a, b) == 0.0);
  }
  SECTION("two-draw hand computation") {
    t.draws = {make_draw(0.8, 0.9, 0.2, 0.3, {0, 1}), make_draw(0.6, 0.9, 0.5, 0.3, {0, 1})};
    const RandomEffectsSummary re = random_effects_summary(t);
    // values of pi1 * lambda_rand(0,0): 0.2*0.2 = 0.04 and 0.4*0.5 = 0.20
    const double m = (0.04 + 0.20) / 2.0;
    const double sd = std::sqrt((0.04 - m) * (0.04 - m) + (0.20 - m) * (0.20 - m));  // n-1 = 1
    CHECK(re.per_subject_sd[0](0, 0) == Approx(sd).margin(1e-14));
  }
}

TEST_CASE("prior variance identity") {
  CHECK(prior_variance_check(1.0, 0.5) == Approx(0.125).margin(1e-15));
  CHECK(prior_variance_check(1e12, 0.5) == Approx(0.0).margin(1e-12));

  SECTION("Monte Carlo Dirichlet check") {
    Rng rng(123);
    const std::vector<double> lam0{0.3, 0.25, 0.2, 0.15, 0.1};
    const double alpha = 2.5;
    std::vector<double> a(5);
    for (int i = 0; i < 5; ++i) a[i] = alpha * lam0[i];
    const int n = 200000;
    double m = 0.0, m2 = 0.0;
    std::vector<double> draw(5);
    for (int k = 0; k < n; ++k) {
      rng.dirichlet(a, draw);
      m += draw[0];
      m2 += draw[0] * draw[0];
    }
    m /= n;
    m2 /= n;
    const double var = m2 - m * m;
    CHECK(var == Approx(prior_variance_check(alpha, lam0[0])).epsilon(0.02));
  }
}

TEST_CASE("prior correlation identity") {
  const PriorCorrelation sym = prior_correlation_check(0.5, 2.0, 2.0);
  CHECK(sym.within_subject == Approx(0.5).margin(1e-15));
  CHECK(sym.between_subjects == Approx(0.5).margin(1e-15));
  CHECK(sym.within_subject + sym.between_subjects == 1.0);  // exact

  const PriorCorrelation lim = prior_correlation_check(1e-9, 1.0, 1.0);
  CHECK(lim.within_subject == Approx(1.0).margin(1e-6));

  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const PriorCorrelation pc =
        prior_correlation_check(rng.uniform(), 0.1 + 5 * rng.uniform(), 0.1 + 5 * rng.uniform());
    CHECK(pc.within_subject + pc.between_subjects == 1.0);
  }
}
