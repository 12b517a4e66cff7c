#pragma once

#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/common/csv.hpp"
#include "cxr/evalstats/delong.hpp"

namespace cxr::evalstats {

// One model's scores, per label, in first-appearance order.
struct ScoreTable {
  std::vector<std::string> label_order;
  std::map<std::string, ScoredSet> by_label;

  void add(const std::string& id, const std::string& label, double score, int truth,
           const std::string& group = "") {
    auto [it, fresh] = by_label.try_emplace(label);
    if (fresh) label_order.push_back(label);
    auto& s = it->second;
    s.ids.push_back(id);
    s.scores.push_back(score);
    s.labels.push_back(truth);
    if (!group.empty() || !s.groups.empty()) {
      s.groups.resize(s.ids.size() - 1);
      s.groups.push_back(group);
    }
  }
};

inline const std::vector<std::string> kScoreHeader{"example_id", "label_name", "score", "true_label"};

inline void write_scores(std::ostream& os, const ScoreTable& t) {
  csv::write_row(os, kScoreHeader);
  for (const auto& label : t.label_order) {
    const auto& s = t.by_label.at(label);
    for (std::size_t i = 0; i < s.size(); ++i)
      csv::write_row(os, {s.ids[i], label, csv::format_double(s.scores[i]), std::to_string(s.labels[i])});
  }
}

// Reads `example_id,label_name,score,true_label`. Group ids for a grouped
// bootstrap are taken from the part of example_id before the first '/'.
inline ScoreTable read_scores(const std::string& path) {
  const auto rows = csv::read_file(path);
  csv::expect_header(rows, kScoreHeader, path);
  ScoreTable t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::string where = path + ":" + std::to_string(rows[r].line);
    if (f.size() != 4) throw ParseError(where + ": expected 4 fields");
    if (f[3] != "0" && f[3] != "1") throw ParseError(where + ": true_label must be 0 or 1");
    const double score = csv::parse_double(f[2], where + ": score");
    const auto slash = f[0].find('/');
    t.add(f[0], f[1], score, f[3] == "1", slash == std::string::npos ? f[0] : f[0].substr(0, slash));
  }
  return t;
}

struct ReportRow {
  std::string model, label;
  ConfidenceInterval ci;
};

struct PairRow {
  std::string model_a, model_b, label;
  PairedDiff bootstrap;
  DeLongResult delong;
};

struct EvaluationReport {
  std::vector<std::string> models;
  std::vector<std::string> labels;
  std::vector<ReportRow> rows;
  std::vector<PairRow> pairs;
};

// Per-label CIs for every model and, for every ordered pair (a before b),
// paired bootstrap and DeLong tests of a against b.
inline EvaluationReport evaluate(const std::vector<std::pair<std::string, ScoreTable>>& models,
                                 const BootstrapOptions& opt, double alpha = 0.05) {
  if (models.empty()) throw InvalidInputError("evaluate: no score tables");
  EvaluationReport rep;
  rep.labels = models[0].second.label_order;
  for (const auto& [name, table] : models) {
    rep.models.push_back(name);
    if (table.label_order != rep.labels)
      throw ContractError("evaluate: model '" + name + "' scores a different label set");
  }
  for (const auto& label : rep.labels) {
    for (const auto& [name, table] : models) {
      const auto& s = table.by_label.at(label);
      try {
        rep.rows.push_back({name, label, bootstrap_ci(s, opt)});
      } catch (const UndefinedMetricError& e) {
        throw UndefinedMetricError("label '" + label + "' of model '" + name + "': " + e.what());
      }
    }
    for (std::size_t i = 0; i < models.size(); ++i)
      for (std::size_t j = i + 1; j < models.size(); ++j) {
        const auto& a = models[i].second.by_label.at(label);
        const auto& b = models[j].second.by_label.at(label);
        rep.pairs.push_back({models[i].first, models[j].first, label, paired_bootstrap_diff(a, b, opt, alpha),
                             delong_test(a, b)});
      }
  }
  return rep;
}

inline void write_report_csv(std::ostream& os, const EvaluationReport& r) {
  csv::write_row(os, {"model", "label", "auc", "ci_lo", "ci_hi"});
  for (const auto& row : r.rows)
    csv::write_row(os, {row.model, row.label, csv::format_double(row.ci.auc), csv::format_double(row.ci.lo),
                        csv::format_double(row.ci.hi)});
}

inline void write_pairwise_csv(std::ostream& os, const EvaluationReport& r) {
  csv::write_row(os, {"model_a", "model_b", "label", "auc_diff", "bootstrap_mean_diff", "bootstrap_p",
                      "significant", "delong_z", "delong_p_two_sided"});
  for (const auto& p : r.pairs)
    csv::write_row(os, {p.model_a, p.model_b, p.label, csv::format_double(p.bootstrap.observed),
                        csv::format_double(p.bootstrap.mean_diff), csv::format_double(p.bootstrap.p_value),
                        p.bootstrap.significant ? "1" : "0", csv::format_double(p.delong.z),
                        csv::format_double(p.delong.p_two_sided)});
}

// Two rows per model: AUCs, then "(lo, hi)" intervals; one column per label.
// A '*' marks AUCs significantly above every later model in the list.
inline std::string format_table(const EvaluationReport& r) {
  auto fmt = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", v);
    return std::string(b);
  };
  std::size_t name_w = 5;
  for (const auto& m : r.models) name_w = std::max(name_w, m.size());
  const std::size_t col_w = 16;
  std::ostringstream os;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  os << pad("model", name_w) << "  ";
  for (const auto& l : r.labels) os << pad(l, col_w);
  os << '\n';
  for (const auto& m : r.models) {
    std::string auc_line = pad(m, name_w) + "  ", ci_line = pad("", name_w) + "  ";
    for (const auto& l : r.labels) {
      for (const auto& row : r.rows)
        if (row.model == m && row.label == l) {
          bool beats_all = false;
          for (const auto& p : r.pairs)
            if (p.model_a == m && p.label == l) beats_all = p.bootstrap.significant;
          for (const auto& p : r.pairs)
            if (p.model_a == m && p.label == l && !p.bootstrap.significant) beats_all = false;
          auc_line += pad(fmt(row.ci.auc) + (beats_all ? "*" : ""), col_w);
          ci_line += pad("(" + fmt(row.ci.lo) + ", " + fmt(row.ci.hi) + ")", col_w);
        }
    }
    os << auc_line << '\n' << ci_line << '\n';
  }
  return os.str();
}

}  // namespace cxr::evalstats
