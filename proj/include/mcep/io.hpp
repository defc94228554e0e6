#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcep/errors.hpp"
#include "mcep/gibbs.hpp"
#include "mcep/json_util.hpp"
#include "mcep/matrix.hpp"
#include "mcep/model.hpp"

namespace mcep {

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------
// Format: UTF-8, comma-separated, header required:
//   sequence_id, subject_id, token, <predictor names...>
// one row per time step, rows of a sequence contiguous and in time order.

struct IngestOptions {
  std::vector<std::string> tokens;  // fixed state vocabulary when non-empty
  std::map<std::string, std::vector<std::string>> levels;  // fixed per-predictor level order
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline SequenceDataset read_dataset(const std::string& path, const IngestOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file (header required)");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "sequence_id" || header[1] != "subject_id" || header[2] != "token")
    throw DataError(path + ": header must start with sequence_id,subject_id,token");

  SequenceDataset data;
  const int p = static_cast<int>(header.size()) - 3;
  const bool fixed_vocab = !opts.tokens.empty();
  data.states.tokens = opts.tokens;
  data.predictors.resize(p);
  for (int j = 0; j < p; ++j) {
    data.predictors[j].name = header[3 + j];
    auto it = opts.levels.find(header[3 + j]);
    if (it != opts.levels.end()) data.predictors[j].levels = it->second;
  }
  std::vector<bool> fixed_levels(p);
  for (int j = 0; j < p; ++j) fixed_levels[j] = !data.predictors[j].levels.empty();

  std::map<std::string, int> subject_idx;
  std::set<std::string> closed_sequences;
  Sequence* cur = nullptr;
  std::size_t line_no = 1;

  auto token_index = [&](const std::string& tok) {
    int idx = data.states.index_of(tok);
    if (idx < 0) {
      if (fixed_vocab)
        throw DataError(path + ":" + std::to_string(line_no) + ": unknown token '" + tok + "'");
      data.states.tokens.push_back(tok);
      idx = data.states.d0() - 1;
    }
    return idx;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != 3 + p)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(3 + p) + " columns");

    if (cur == nullptr || cells[0] != cur->id) {
      if (cur != nullptr) closed_sequences.insert(cur->id);
      if (closed_sequences.count(cells[0]))
        throw DataError(path + ":" + std::to_string(line_no) + ": sequence_id '" + cells[0] + "' is not contiguous");
      Sequence seq;
      seq.id = cells[0];
      auto [it, inserted] = subject_idx.try_emplace(cells[1], static_cast<int>(subject_idx.size()));
      if (inserted) data.subject_ids.push_back(cells[1]);
      seq.subject = it->second;
      seq.levels.resize(p);
      for (int j = 0; j < p; ++j) {
        int lvl = data.predictors[j].level_index(cells[3 + j]);
        if (lvl < 0) {
          if (fixed_levels[j])
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown level '" + cells[3 + j] +
                            "' for predictor " + data.predictors[j].name);
          data.predictors[j].levels.push_back(cells[3 + j]);
          lvl = data.predictors[j].dj() - 1;
        }
        seq.levels[j] = lvl;
      }
      data.sequences.push_back(std::move(seq));
      cur = &data.sequences.back();
    } else {
      if (cells[1] != data.subject_ids[cur->subject])
        throw DataError(path + ":" + std::to_string(line_no) + ": subject_id changes within sequence '" + cur->id + "'");
      for (int j = 0; j < p; ++j) {
        const int lvl = data.predictors[j].level_index(cells[3 + j]);
        if (lvl != cur->levels[j])
          throw DataError(path + ":" + std::to_string(line_no) + ": predictor " + data.predictors[j].name +
                          " changes within sequence '" + cur->id + "'");
      }
    }
    cur->tokens.push_back(token_index(cells[2]));
  }
  if (data.sequences.empty()) throw DataError(path + ": no data rows");
  data.finalize();
  return data;
}

inline void write_dataset(const SequenceDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset: " + path);
  out << "sequence_id,subject_id,token";
  for (const auto& pr : data.predictors) out << ',' << pr.name;
  out << '\n';
  for (const auto& seq : data.sequences) {
    std::string suffix;
    for (int j = 0; j < data.p(); ++j) suffix += "," + data.predictors[j].levels[seq.levels[j]];
    for (int tok : seq.tokens) {
      out << seq.id << ',' << data.subject_ids[seq.subject] << ',' << data.states.tokens[tok] << suffix << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Result bundle
// ---------------------------------------------------------------------------

struct PredictorMeta {
  std::string name;
  std::vector<std::string> levels;
  int k = 0;
  double alpha = 1.0;
  bool alpha_saturated = false;
  double null_prior = 0.0;  // achieved p0(k_tilde = 1)
};

struct RunMeta {
  std::string command;
  std::string version;
  std::string data_path;
  McmcSettings settings;
  Hyperparams hyper;
  std::vector<std::string> tokens;
  std::vector<std::string> subject_ids;
  std::vector<PredictorMeta> predictors;
  std::string notes;
};

struct ComboSummary {
  std::vector<std::string> levels;  // one label per predictor
  Matrix mean;
  Matrix sd;
};

struct SummaryBlock {
  Matrix lambda0_mean;
  std::vector<double> pi0_mean;
  std::vector<double> pi0_sd;
  double alpha0_mean = 0.0, alpha0_sd = 0.0;
  double alpha_re_mean = 0.0, alpha_re_sd = 0.0;
  std::vector<ComboSummary> population;
  Matrix random_effects_pooled_sd;
  std::vector<Matrix> random_effects_subject_sd;
};

struct GlobalTestReport {
  std::string predictor;
  std::vector<double> k_probs;
  double p_h1 = 0.0;
};

struct LocalTestReport {
  std::string predictor;
  std::string level_a;
  std::string level_b;
  std::vector<std::pair<std::string, std::string>> others;  // (predictor, level)
  Matrix mean_abs_diff;
  Matrix p_h0;
};

struct TestReport {
  double delta = 0.02;
  std::vector<GlobalTestReport> global;
  std::vector<LocalTestReport> local;
};

struct ResultBundle {
  RunMeta meta;
  SummaryBlock summaries;
  TestReport tests;
};

// --- JSON conversions ------------------------------------------------------

inline void to_json(nlohmann::json& j, const McmcSettings& s) {
  j = {{"iterations", s.iterations}, {"burn_in", s.burn_in},   {"thin", s.thin},
       {"seed", s.seed},             {"parallel", s.parallel}, {"threads", s.threads}};
}

inline void from_json(const nlohmann::json& j, McmcSettings& s) {
  j.at("iterations").get_to(s.iterations);
  j.at("burn_in").get_to(s.burn_in);
  j.at("thin").get_to(s.thin);
  j.at("seed").get_to(s.seed);
  j.at("parallel").get_to(s.parallel);
  j.at("threads").get_to(s.threads);
}

inline void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = {{"alpha00", h.alpha00},       {"lambda00", h.lambda00},
       {"a0", h.a0},                 {"a1", h.a1},
       {"a_alpha0", h.a_alpha0},     {"b_alpha0", h.b_alpha0},
       {"a_alpha_re", h.a_alpha_re}, {"b_alpha_re", h.b_alpha_re},
       {"delta", h.delta}};
}

inline void from_json(const nlohmann::json& j, Hyperparams& h) {
  j.at("alpha00").get_to(h.alpha00);
  j.at("lambda00").get_to(h.lambda00);
  j.at("a0").get_to(h.a0);
  j.at("a1").get_to(h.a1);
  j.at("a_alpha0").get_to(h.a_alpha0);
  j.at("b_alpha0").get_to(h.b_alpha0);
  j.at("a_alpha_re").get_to(h.a_alpha_re);
  j.at("b_alpha_re").get_to(h.b_alpha_re);
  j.at("delta").get_to(h.delta);
}

inline void to_json(nlohmann::json& j, const PredictorMeta& m) {
  j = {{"name", m.name},   {"levels", m.levels},
       {"k", m.k},         {"alpha", m.alpha},
       {"alpha_saturated", m.alpha_saturated}, {"null_prior", m.null_prior}};
}

inline void from_json(const nlohmann::json& j, PredictorMeta& m) {
  j.at("name").get_to(m.name);
  j.at("levels").get_to(m.levels);
  j.at("k").get_to(m.k);
  j.at("alpha").get_to(m.alpha);
  j.at("alpha_saturated").get_to(m.alpha_saturated);
  j.at("null_prior").get_to(m.null_prior);
}

inline void to_json(nlohmann::json& j, const RunMeta& m) {
  j = {{"command", m.command},       {"version", m.version},
       {"data_path", m.data_path},   {"settings", m.settings},
       {"hyper", m.hyper},           {"tokens", m.tokens},
       {"subject_ids", m.subject_ids}, {"predictors", m.predictors},
       {"notes", m.notes}};
}

inline void from_json(const nlohmann::json& j, RunMeta& m) {
  j.at("command").get_to(m.command);
  j.at("version").get_to(m.version);
  j.at("data_path").get_to(m.data_path);
  j.at("settings").get_to(m.settings);
  j.at("hyper").get_to(m.hyper);
  j.at("tokens").get_to(m.tokens);
  j.at("subject_ids").get_to(m.subject_ids);
  j.at("predictors").get_to(m.predictors);
  j.at("notes").get_to(m.notes);
}

inline void to_json(nlohmann::json& j, const ComboSummary& c) {
  j = {{"levels", c.levels}, {"mean", detail::matrix_to_json(c.mean)}, {"sd", detail::matrix_to_json(c.sd)}};
}

inline void from_json(const nlohmann::json& j, ComboSummary& c) {
  j.at("levels").get_to(c.levels);
  c.mean = detail::matrix_from_json(j.at("mean"));
  c.sd = detail::matrix_from_json(j.at("sd"));
}

inline void to_json(nlohmann::json& j, const SummaryBlock& s) {
  nlohmann::json subj = nlohmann::json::array();
  for (const auto& m : s.random_effects_subject_sd) subj.push_back(detail::matrix_to_json(m));
  j = {{"lambda0_mean", detail::matrix_to_json(s.lambda0_mean)},
       {"pi0_mean", s.pi0_mean},
       {"pi0_sd", s.pi0_sd},
       {"alpha0_mean", s.alpha0_mean},
       {"alpha0_sd", s.alpha0_sd},
       {"alpha_re_mean", s.alpha_re_mean},
       {"alpha_re_sd", s.alpha_re_sd},
       {"population", s.population},
       {"random_effects_pooled_sd", detail::matrix_to_json(s.random_effects_pooled_sd)},
       {"random_effects_subject_sd", subj}};
}

inline void from_json(const nlohmann::json& j, SummaryBlock& s) {
  s.lambda0_mean = detail::matrix_from_json(j.at("lambda0_mean"));
  j.at("pi0_mean").get_to(s.pi0_mean);
  j.at("pi0_sd").get_to(s.pi0_sd);
  j.at("alpha0_mean").get_to(s.alpha0_mean);
  j.at("alpha0_sd").get_to(s.alpha0_sd);
  j.at("alpha_re_mean").get_to(s.alpha_re_mean);
  j.at("alpha_re_sd").get_to(s.alpha_re_sd);
  j.at("population").get_to(s.population);
  s.random_effects_pooled_sd = detail::matrix_from_json(j.at("random_effects_pooled_sd"));
  s.random_effects_subject_sd.clear();
  for (const auto& m : j.at("random_effects_subject_sd"))
    s.random_effects_subject_sd.push_back(detail::matrix_from_json(m));
}

inline void to_json(nlohmann::json& j, const GlobalTestReport& g) {
  j = {{"predictor", g.predictor}, {"k_probs", g.k_probs}, {"p_h1", g.p_h1}};
}

inline void from_json(const nlohmann::json& j, GlobalTestReport& g) {
  j.at("predictor").get_to(g.predictor);
  j.at("k_probs").get_to(g.k_probs);
  j.at("p_h1").get_to(g.p_h1);
}

inline void to_json(nlohmann::json& j, const LocalTestReport& l) {
  nlohmann::json others = nlohmann::json::array();
  for (const auto& [name, level] : l.others) others.push_back({{"predictor", name}, {"level", level}});
  j = {{"predictor", l.predictor},
       {"level_a", l.level_a},
       {"level_b", l.level_b},
       {"others", others},
       {"mean_abs_diff", detail::matrix_to_json(l.mean_abs_diff)},
       {"p_h0", detail::matrix_to_json(l.p_h0)}};
}

inline void from_json(const nlohmann::json& j, LocalTestReport& l) {
  j.at("predictor").get_to(l.predictor);
  j.at("level_a").get_to(l.level_a);
  j.at("level_b").get_to(l.level_b);
  l.others.clear();
  for (const auto& o : j.at("others"))
    l.others.emplace_back(o.at("predictor").get<std::string>(), o.at("level").get<std::string>());
  l.mean_abs_diff = detail::matrix_from_json(j.at("mean_abs_diff"));
  l.p_h0 = detail::matrix_from_json(j.at("p_h0"));
}

inline void to_json(nlohmann::json& j, const TestReport& t) {
  j = {{"delta", t.delta}, {"global", t.global}, {"local", t.local}};
}

inline void from_json(const nlohmann::json& j, TestReport& t) {
  j.at("delta").get_to(t.delta);
  j.at("global").get_to(t.global);
  j.at("local").get_to(t.local);
}

inline void to_json(nlohmann::json& j, const ResultBundle& b) {
  j = {{"meta", b.meta}, {"summaries", b.summaries}, {"tests", b.tests}};
}

inline void from_json(const nlohmann::json& j, ResultBundle& b) {
  j.at("meta").get_to(b.meta);
  j.at("summaries").get_to(b.summaries);
  j.at("tests").get_to(b.tests);
}

inline void write_summary(const ResultBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write summary: " + path);
  const nlohmann::json j = bundle;
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

inline ResultBundle read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open summary: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad summary json (" + path + "): " + e.what());
  }
  try {
    return j.get<ResultBundle>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("summary schema mismatch (" + path + "): " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matrix exports
// ---------------------------------------------------------------------------

inline void export_matrix_csv(const Matrix& m, std::span<const std::string> row_labels,
                              std::span<const std::string> col_labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv: " + path);
  for (const auto& c : col_labels) out << ',' << c;
  out << '\n';
  char buf[64];
  for (int r = 0; r < m.rows(); ++r) {
    out << row_labels[r];
    for (int c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

// Deterministic SVG heatmap: one value-labeled rect per cell on a linear
// white-to-blue scale declared in the file. Identical input gives
// byte-identical output.
inline void export_heatmap_svg(const Matrix& m, std::span<const std::string> row_labels,
                               std::span<const std::string> col_labels, const std::string& path,
                               const std::string& title = "") {
  if (m.rows() == 0 || m.cols() == 0) throw DataError("export_heatmap_svg: empty matrix");
  double vmax = 0.0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) vmax = std::max(vmax, m(r, c));
  if (vmax <= 0.0) vmax = 1.0;

  const int cell = 64, margin = 56, top = title.empty() ? 24 : 44;
  const int width = margin + cell * m.cols() + 16;
  const int height = top + cell * m.rows() + 16;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write svg: " + path);
  char buf[128];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  std::snprintf(buf, sizeof(buf), "%.6g", vmax);
  out << "<desc>linear color scale: 0 -> rgb(255,255,255), " << buf << " -> rgb(31,119,180)</desc>\n";
  if (!title.empty()) out << "<text x=\"" << margin << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
  for (int c = 0; c < m.cols(); ++c) {
    out << "<text x=\"" << margin + c * cell + cell / 2 << "\" y=\"" << top - 6
        << "\" font-size=\"12\" text-anchor=\"middle\">" << col_labels[c] << "</text>\n";
  }
  for (int r = 0; r < m.rows(); ++r) {
    out << "<text x=\"" << margin - 8 << "\" y=\"" << top + r * cell + cell / 2 + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << row_labels[r] << "</text>\n";
    for (int c = 0; c < m.cols(); ++c) {
      const double f = m(r, c) / vmax;
      const int red = static_cast<int>(255.0 + f * (31.0 - 255.0) + 0.5);
      const int green = static_cast<int>(255.0 + f * (119.0 - 255.0) + 0.5);
      const int blue = static_cast<int>(255.0 + f * (180.0 - 255.0) + 0.5);
      out << "<rect x=\"" << margin + c * cell << "\" y=\"" << top + r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << red << ',' << green << ',' << blue
          << ")\" stroke=\"rgb(64,64,64)\"/>\n";
      std::snprintf(buf, sizeof(buf), "%.3f", m(r, c));
      out << "<text x=\"" << margin + c * cell + cell / 2 << "\" y=\"" << top + r * cell + cell / 2 + 4
          << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"rgb(" << (f > 0.55 ? 255 : 0) << ','
          << (f > 0.55 ? 255 : 0) << ',' << (f > 0.55 ? 255 : 0) << ")\">" << buf << "</text>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace mcep
