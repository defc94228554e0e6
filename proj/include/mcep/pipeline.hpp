#pragma once

#include <string>
#include <vector>

#include "mcep/baseline.hpp"
#include "mcep/gibbs.hpp"
#include "mcep/inference.hpp"
#include "mcep/io.hpp"
#include "mcep/partition.hpp"

namespace mcep {

inline constexpr const char* kVersion = "0.1.0";

struct FitOptions {
  McmcSettings settings;
  double delta = 0.02;
  double alpha_target = 0.5;  // prior null probability each predictor is calibrated to
  std::string data_path;
  std::string notes;
  Hyperparams hyper;  // lambda00 left empty means "use the empirical marginal"
};

struct FitResult {
  ResultBundle bundle;
  Trace trace;
  std::vector<PredictorMeta> predictor_meta;
};

namespace detail {

inline void mean_sd_scalar(const std::vector<double>& xs, double& mean, double& sd) {
  const int n = static_cast<int>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  sd = 0.0;
  if (n > 1) {
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / (n - 1));
  }
}

}  // namespace detail

// Full fit: calibrate partition concentrations, center the priors
// empirically, run the chain, and reduce the trace to the reportable bundle.
inline FitResult fit_dataset(SequenceDataset& data, const FitOptions& opts) {
  FitResult res;

  for (auto& pr : data.predictors) {
    if (pr.dj() < 2) {
      pr.alpha = 1.0;
      continue;
    }
    const AlphaCalibration cal = calibrate_alpha(pr.dj(), pr.k, opts.alpha_target);
    pr.alpha = cal.alpha;
    PredictorMeta meta;
    meta.name = pr.name;
    meta.levels = pr.levels;
    meta.k = pr.k;
    meta.alpha = cal.alpha;
    meta.alpha_saturated = cal.saturated;
    meta.null_prior = cal.achieved;
    res.predictor_meta.push_back(std::move(meta));
  }

  Hyperparams hyper = opts.hyper;
  hyper.delta = opts.delta;
  if (hyper.lambda00.empty()) hyper.lambda00 = empirical_marginal(data);

  res.trace = run_chain(data, hyper, opts.settings);
  const Trace& trace = res.trace;
  const int n = static_cast<int>(trace.draws.size());
  if (n == 0) throw ConfigError("no retained draws; increase iterations or reduce burn-in/thin");
  const int d0 = data.d0();

  ResultBundle& b = res.bundle;
  b.meta.command = "fit";
  b.meta.version = kVersion;
  b.meta.data_path = opts.data_path;
  b.meta.settings = opts.settings;
  b.meta.hyper = hyper;
  b.meta.tokens = data.states.tokens;
  b.meta.subject_ids = data.subject_ids;
  b.meta.notes = opts.notes;
  for (int j = 0; j < data.p(); ++j) {
    PredictorMeta meta;
    meta.name = data.predictors[j].name;
    meta.levels = data.predictors[j].levels;
    meta.k = data.predictors[j].k;
    meta.alpha = data.predictors[j].alpha;
    for (const auto& m : res.predictor_meta) {
      if (m.name == meta.name) {
        meta.alpha_saturated = m.alpha_saturated;
        meta.null_prior = m.null_prior;
      }
    }
    b.meta.predictors.push_back(std::move(meta));
  }

  // Scalar and row summaries.
  std::vector<double> xs(n);
  for (int k = 0; k < n; ++k) xs[k] = trace.draws[k].alpha0;
  detail::mean_sd_scalar(xs, b.summaries.alpha0_mean, b.summaries.alpha0_sd);
  for (int k = 0; k < n; ++k) xs[k] = trace.draws[k].alpha_re;
  detail::mean_sd_scalar(xs, b.summaries.alpha_re_mean, b.summaries.alpha_re_sd);

  b.summaries.pi0_mean.resize(d0);
  b.summaries.pi0_sd.resize(d0);
  for (int y = 0; y < d0; ++y) {
    for (int k = 0; k < n; ++k) xs[k] = trace.draws[k].pi0[y];
    detail::mean_sd_scalar(xs, b.summaries.pi0_mean[y], b.summaries.pi0_sd[y]);
  }

  b.summaries.lambda0_mean = Matrix(d0, d0);
  for (const auto& dr : trace.draws)
    for (int a = 0; a < d0; ++a)
      for (int c = 0; c < d0; ++c) b.summaries.lambda0_mean(a, c) += dr.lambda0(a, c) / n;

  // Population transition summaries for every predictor-level combination.
  const auto lrad = data.level_radix();
  std::vector<int> digits(data.p());
  for (int lc = 0; lc < data.n_level_combos(); ++lc) {
    decode_combo(lc, lrad, digits);
    ComboSummary cs;
    for (int j = 0; j < data.p(); ++j) cs.levels.push_back(data.predictors[j].levels[digits[j]]);
    const MeanSd ms = posterior_transition_summary(trace, digits);
    cs.mean = ms.mean;
    cs.sd = ms.sd;
    b.summaries.population.push_back(std::move(cs));
  }

  if (data.n_subjects() > 0) {
    const RandomEffectsSummary re = random_effects_summary(trace);
    b.summaries.random_effects_pooled_sd = re.pooled_sd;
    b.summaries.random_effects_subject_sd = re.per_subject_sd;
  } else {
    b.summaries.random_effects_pooled_sd = Matrix(d0, d0);
  }

  // Hypothesis tests.
  b.tests.delta = opts.delta;
  for (int j = 0; j < data.p(); ++j) {
    const GlobalTest gt = global_test(trace, j);
    GlobalTestReport rep;
    rep.predictor = data.predictors[j].name;
    rep.k_probs = gt.k_probs;
    rep.p_h1 = gt.p_h1;
    b.tests.global.push_back(std::move(rep));
  }
  for (int j = 0; j < data.p(); ++j) {
    const int dj = data.predictors[j].dj();
    if (dj < 2) continue;
    const auto other_combos = detail::other_level_combos(data, j);
    for (int la = 0; la < dj; ++la) {
      for (int lb = la + 1; lb < dj; ++lb) {
        for (const auto& oth : other_combos) {
          std::vector<int> x_base(data.p(), 0);
          int o = 0;
          for (int jj = 0; jj < data.p(); ++jj)
            if (jj != j) x_base[jj] = oth[o++];
          const LocalTest lt = local_test(trace, j, la, lb, x_base, opts.delta);
          LocalTestReport rep;
          rep.predictor = data.predictors[j].name;
          rep.level_a = data.predictors[j].levels[la];
          rep.level_b = data.predictors[j].levels[lb];
          o = 0;
          for (int jj = 0; jj < data.p(); ++jj)
            if (jj != j) rep.others.emplace_back(data.predictors[jj].name, data.predictors[jj].levels[oth[o++]]);
          rep.mean_abs_diff = lt.mean_abs_diff;
          rep.p_h0 = lt.p_h0;
          b.tests.local.push_back(std::move(rep));
        }
      }
    }
  }
  return res;
}

}  // namespace mcep
