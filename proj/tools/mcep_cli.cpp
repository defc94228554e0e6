// Command-line front end: fit, simulate, baseline, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcep/mcep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw mcep::DataError("cannot write: " + path.string());
  out << j.dump(2) << '\n';
}

struct FitFlags {
  std::string data_path;
  std::string out_dir;
  std::string config_path;
  std::string trace_out;
  int iters = 5000;
  int burnin = 2000;
  int thin = 5;
  std::uint64_t seed = 0;
  double delta = 0.02;
  bool parallel = false;
  int threads = 0;
};

// Config file overrides flags, flags override defaults.
void apply_fit_config(const json& cfg, FitFlags& f, mcep::IngestOptions& ingest, mcep::Hyperparams& hyper) {
  if (cfg.contains("iterations")) f.iters = cfg["iterations"].get<int>();
  if (cfg.contains("burn_in")) f.burnin = cfg["burn_in"].get<int>();
  if (cfg.contains("thin")) f.thin = cfg["thin"].get<int>();
  if (cfg.contains("seed")) f.seed = cfg["seed"].get<std::uint64_t>();
  if (cfg.contains("delta")) f.delta = cfg["delta"].get<double>();
  if (cfg.contains("parallel")) f.parallel = cfg["parallel"].get<bool>();
  if (cfg.contains("threads")) f.threads = cfg["threads"].get<int>();
  if (cfg.contains("tokens")) ingest.tokens = cfg["tokens"].get<std::vector<std::string>>();
  if (cfg.contains("levels")) {
    for (auto it = cfg["levels"].begin(); it != cfg["levels"].end(); ++it)
      ingest.levels[it.key()] = it.value().get<std::vector<std::string>>();
  }
  if (cfg.contains("hyper")) {
    const json& h = cfg["hyper"];
    if (h.contains("alpha00")) hyper.alpha00 = h["alpha00"].get<double>();
    if (h.contains("a0")) hyper.a0 = h["a0"].get<double>();
    if (h.contains("a1")) hyper.a1 = h["a1"].get<double>();
    if (h.contains("a_alpha0")) hyper.a_alpha0 = h["a_alpha0"].get<double>();
    if (h.contains("b_alpha0")) hyper.b_alpha0 = h["b_alpha0"].get<double>();
    if (h.contains("a_alpha_re")) hyper.a_alpha_re = h["a_alpha_re"].get<double>();
    if (h.contains("b_alpha_re")) hyper.b_alpha_re = h["b_alpha_re"].get<double>();
    if (h.contains("lambda00")) hyper.lambda00 = h["lambda00"].get<std::vector<double>>();
  }
}

std::string combo_tag(const std::vector<std::string>& levels) {
  std::string tag;
  for (const auto& l : levels) {
    if (!tag.empty()) tag += "_";
    tag += l;
  }
  return tag.empty() ? "all" : tag;
}

int run_fit(const FitFlags& flags_in) {
  FitFlags flags = flags_in;
  mcep::IngestOptions ingest;
  mcep::Hyperparams hyper;
  json cfg;
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) throw mcep::ConfigError("cannot open config: " + flags.config_path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw mcep::ConfigError("bad config json: " + std::string(e.what()));
    }
    apply_fit_config(cfg, flags, ingest, hyper);
  }

  mcep::FitOptions opts;
  opts.settings.iterations = flags.iters;
  opts.settings.burn_in = flags.burnin;
  opts.settings.thin = flags.thin;
  opts.settings.seed = flags.seed;
  opts.settings.parallel = flags.parallel;
  opts.settings.threads = flags.threads;
  opts.settings.validate();
  opts.delta = flags.delta;
  opts.data_path = flags.data_path;
  opts.hyper = hyper;
  if (!(opts.delta > 0.0 && opts.delta < 1.0)) throw mcep::ConfigError("--delta must be in (0,1)");

  mcep::SequenceDataset data = mcep::read_dataset(flags.data_path, ingest);
  std::cerr << "read " << data.s0() << " sequences, " << data.n_subjects() << " subjects, "
            << data.total_transitions() << " transitions\n";

  mcep::FitResult res = mcep::fit_dataset(data, opts);
  for (const auto& m : res.bundle.meta.predictors) {
    if (m.alpha_saturated) {
      std::fprintf(stderr,
                   "warning: predictor %s: prior null target not attainable; alpha saturated at %.6g "
                   "(achieved p0 = %.8f)\n",
                   m.name.c_str(), m.alpha, m.null_prior);
    }
  }

  const fs::path out_dir(flags.out_dir);
  fs::create_directories(out_dir);
  mcep::write_summary(res.bundle, (out_dir / "result.json").string());

  json meta = {{"command", "fit"},
               {"version", mcep::kVersion},
               {"data", flags.data_path},
               {"settings", res.bundle.meta.settings},
               {"delta", opts.delta},
               {"hyper", res.bundle.meta.hyper},
               {"config", flags.config_path}};
  write_json_file(meta, out_dir / "meta.json");

  for (const auto& cs : res.bundle.summaries.population) {
    const std::string tag = combo_tag(cs.levels);
    mcep::export_matrix_csv(cs.mean, data.states.tokens, data.states.tokens,
                            (out_dir / ("P_mean_" + tag + ".csv")).string());
    mcep::export_matrix_csv(cs.sd, data.states.tokens, data.states.tokens,
                            (out_dir / ("P_sd_" + tag + ".csv")).string());
  }

  if (!flags.trace_out.empty()) {
    std::ofstream tr(flags.trace_out);
    if (!tr) throw mcep::DataError("cannot write trace: " + flags.trace_out);
    tr << "draw,alpha0,alpha_re";
    for (const auto& tok : data.states.tokens) tr << ",pi0_" << tok;
    for (const auto& pr : data.predictors) tr << ",k_tilde_" << pr.name;
    tr << '\n';
    char buf[64];
    for (std::size_t k = 0; k < res.trace.draws.size(); ++k) {
      const auto& d = res.trace.draws[k];
      tr << k;
      std::snprintf(buf, sizeof(buf), "%.17g", d.alpha0);
      tr << ',' << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", d.alpha_re);
      tr << ',' << buf;
      for (double w : d.pi0) {
        std::snprintf(buf, sizeof(buf), "%.17g", w);
        tr << ',' << buf;
      }
      for (int kt : d.k_tilde) tr << ',' << kt;
      tr << '\n';
    }
  }

  std::printf("global tests (delta = %g, %d retained draws)\n", opts.delta,
              static_cast<int>(res.trace.draws.size()));
  std::printf("%-12s %-10s %s\n", "predictor", "P(H1|Data)", "P(k_tilde|Data)");
  for (const auto& g : res.bundle.tests.global) {
    std::string dist;
    char cell[48];
    for (std::size_t k = 0; k < g.k_probs.size(); ++k) {
      std::snprintf(cell, sizeof(cell), "%zu:%.3f ", k + 1, g.k_probs[k]);
      dist += cell;
    }
    std::printf("%-12s %-10.4f %s\n", g.predictor.c_str(), g.p_h1, dist.c_str());
  }
  return kExitOk;
}

int run_simulate(const std::string& scenario, const std::string& params_path, std::uint64_t seed,
                 const std::string& out_dir_s, int len_min, int len_max) {
  if (scenario.size() != 1 || scenario[0] < 'A' || scenario[0] > 'F')
    throw mcep::ConfigError("--scenario must be one of A..F");
  mcep::ScenarioParams par = mcep::load_scenario_params(params_path);
  if (len_min > 0) par.len_min = len_min;
  if (len_max > 0) par.len_max = len_max;
  const mcep::ScenarioData sim = mcep::build_scenario(scenario[0], par, seed);

  const fs::path out_dir(out_dir_s);
  fs::create_directories(out_dir);
  mcep::write_dataset(sim.data, (out_dir / "dataset.csv").string());

  json truth = {{"scenario", scenario},
                {"k_tilde_true", {sim.truth.k1, sim.truth.k2}},
                {"predictors", {par.predictor1_name, par.predictor2_name}}};
  json dp = json::array();
  for (const auto& m : sim.truth.true_abs_dp) dp.push_back(mcep::detail::matrix_to_json(m));
  truth["true_abs_dp_by_context"] = dp;
  write_json_file(truth, out_dir / "truth.json");

  json meta = {{"command", "simulate"}, {"version", mcep::kVersion}, {"scenario", scenario},
               {"params", params_path}, {"seed", seed},             {"len_min", par.len_min},
               {"len_max", par.len_max}};
  write_json_file(meta, out_dir / "meta.json");

  std::printf("scenario %s: %d sequences, true k_tilde = (%d, %d)\n", scenario.c_str(), sim.data.s0(),
              sim.truth.k1, sim.truth.k2);
  return kExitOk;
}

int run_baseline(const std::string& data_path, const std::string& predictor, int nperm,
                 std::uint64_t seed, const std::string& out_dir_s) {
  const mcep::SequenceDataset data = mcep::read_dataset(data_path);
  int j = -1;
  for (int jj = 0; jj < data.p(); ++jj)
    if (data.predictors[jj].name == predictor) j = jj;
  if (j < 0) throw mcep::ConfigError("unknown predictor: " + predictor);

  const mcep::PerSequenceEstimates est = mcep::per_sequence_mle(data);
  const mcep::BaselineLocalReport rep = mcep::baseline_local_tests(est, data, j);
  const double global_p = mcep::permutation_global_test(est, data, j, nperm, seed);

  json blocks = json::array();
  for (const auto& blk : rep.blocks) {
    json others = json::array();
    int o = 0;
    for (int jj = 0; jj < data.p(); ++jj) {
      if (jj == j) continue;
      others.push_back({{"predictor", data.predictors[jj].name},
                        {"level", data.predictors[jj].levels[blk.other_levels[o++]]}});
    }
    blocks.push_back({{"level_a", data.predictors[j].levels[blk.level_a]},
                      {"level_b", data.predictors[j].levels[blk.level_b]},
                      {"others", others},
                      {"p_raw", mcep::detail::matrix_to_json(blk.p_raw)},
                      {"p_adj", mcep::detail::matrix_to_json(blk.p_adj)},
                      {"p_adj_calibrated_h0_bound", [&] {
                         json cal = json::array();
                         for (int a = 0; a < est.d0; ++a) {
                           json row = json::array();
                           for (int b = 0; b < est.d0; ++b) row.push_back(mcep::calibrate_pvalue(std::max(1e-300, blk.p_adj(a, b))));
                           cal.push_back(row);
                         }
                         return cal;
                       }()}});
  }
  json out = {{"command", "baseline"},
              {"version", mcep::kVersion},
              {"data", data_path},
              {"predictor", predictor},
              {"n_perm", nperm},
              {"seed", seed},
              {"permutation_unit", "subjects"},
              {"global_p", global_p},
              {"tokens", data.states.tokens},
              {"local", blocks}};

  const fs::path out_dir(out_dir_s);
  fs::create_directories(out_dir);
  write_json_file(out, out_dir / "baseline.json");
  json meta = {{"command", "baseline"}, {"version", mcep::kVersion}, {"data", data_path},
               {"predictor", predictor}, {"n_perm", nperm},          {"seed", seed}};
  write_json_file(meta, out_dir / "meta.json");

  std::printf("baseline global permutation p for %s: %.6f (permutation unit: subjects)\n",
              predictor.c_str(), global_p);
  return kExitOk;
}

int run_report(const std::string& bundle_path, const std::string& out_dir_s) {
  const mcep::ResultBundle b = mcep::read_summary(bundle_path);
  const fs::path out_dir(out_dir_s);
  fs::create_directories(out_dir);

  const auto& tokens = b.meta.tokens;
  for (const auto& cs : b.summaries.population) {
    const std::string tag = combo_tag(cs.levels);
    mcep::export_heatmap_svg(cs.mean, tokens, tokens, (out_dir / ("P_mean_" + tag + ".svg")).string(),
                             "posterior mean P, " + tag);
    mcep::export_heatmap_svg(cs.sd, tokens, tokens, (out_dir / ("P_sd_" + tag + ".svg")).string(),
                             "posterior sd P, " + tag);
  }
  for (const auto& lt : b.tests.local) {
    std::string tag = lt.predictor + "_" + lt.level_a + "-" + lt.level_b;
    for (const auto& [name, level] : lt.others) tag += "_" + level;
    mcep::export_heatmap_svg(lt.mean_abs_diff, tokens, tokens,
                             (out_dir / ("absdP_" + tag + ".svg")).string(), "mean |dP|, " + tag);
    mcep::export_heatmap_svg(lt.p_h0, tokens, tokens, (out_dir / ("pH0_" + tag + ".svg")).string(),
                             "P(H0|Data), " + tag);
  }
  mcep::export_heatmap_svg(b.summaries.random_effects_pooled_sd, tokens, tokens,
                           (out_dir / "random_effects_sd.svg").string(), "random effects sd (pooled)");

  std::ofstream txt(out_dir / "global_tests.txt");
  txt << "predictor\tP(H1|Data)\tk_tilde distribution\n";
  for (const auto& g : b.tests.global) {
    txt << g.predictor << '\t' << g.p_h1 << '\t';
    for (std::size_t k = 0; k < g.k_probs.size(); ++k) txt << (k + 1) << ":" << g.k_probs[k] << ' ';
    txt << '\n';
  }
  json meta = {{"command", "report"}, {"version", mcep::kVersion}, {"bundle", bundle_path}};
  write_json_file(meta, out_dir / "meta.json");
  std::printf("report written to %s\n", out_dir_s.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-effects Markov chains with exogenous predictors"};
  app.require_subcommand(1);

  FitFlags fit;
  CLI::App* cfit = app.add_subcommand("fit", "fit the model and run global/local tests");
  cfit->add_option("--data", fit.data_path, "dataset csv")->required();
  cfit->add_option("--out", fit.out_dir, "output directory")->required();
  cfit->add_option("--iters", fit.iters, "MCMC iterations");
  cfit->add_option("--burnin", fit.burnin, "burn-in sweeps");
  cfit->add_option("--thin", fit.thin, "thinning interval");
  cfit->add_option("--seed", fit.seed, "RNG seed");
  cfit->add_option("--delta", fit.delta, "local-test threshold");
  cfit->add_option("--config", fit.config_path, "json config (overrides flags)");
  cfit->add_option("--trace-out", fit.trace_out, "csv dump of scalar trace draws");
  cfit->add_flag("--parallel", fit.parallel, "substream-parallel row updates");
  cfit->add_option("--threads", fit.threads, "thread count for --parallel (0 = auto)");

  std::string sim_scenario, sim_params, sim_out;
  std::uint64_t sim_seed = 0;
  int sim_len_min = 0, sim_len_max = 0;
  CLI::App* csim = app.add_subcommand("simulate", "generate a scenario dataset with ground truth");
  csim->add_option("--scenario", sim_scenario, "scenario id A..F")->required();
  csim->add_option("--params", sim_params, "scenario params json")->required();
  csim->add_option("--out", sim_out, "output directory")->required();
  csim->add_option("--seed", sim_seed, "RNG seed");
  csim->add_option("--len-min", sim_len_min, "override minimum sequence length");
  csim->add_option("--len-max", sim_len_max, "override maximum sequence length");

  std::string bas_data, bas_pred, bas_out;
  int bas_nperm = 999;
  std::uint64_t bas_seed = 0;
  CLI::App* cbas = app.add_subcommand("baseline", "per-sequence rank-sum/permutation comparator");
  cbas->add_option("--data", bas_data, "dataset csv")->required();
  cbas->add_option("--predictor", bas_pred, "predictor to test")->required();
  cbas->add_option("--out", bas_out, "output directory")->required();
  cbas->add_option("--nperm", bas_nperm, "permutation replicates");
  cbas->add_option("--seed", bas_seed, "RNG seed");

  std::string rep_bundle, rep_out;
  CLI::App* crep = app.add_subcommand("report", "render heatmaps and tables from a result bundle");
  crep->add_option("--bundle", rep_bundle, "result.json from fit")->required();
  crep->add_option("--out", rep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (cfit->parsed()) return run_fit(fit);
    if (csim->parsed()) return run_simulate(sim_scenario, sim_params, sim_seed, sim_out, sim_len_min, sim_len_max);
    if (cbas->parsed()) return run_baseline(bas_data, bas_pred, bas_nperm, bas_seed, bas_out);
    if (crep->parsed()) return run_report(rep_bundle, rep_out);
  } catch (const mcep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mcep::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
