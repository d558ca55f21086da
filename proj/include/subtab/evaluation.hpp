#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "subtab/baselines.hpp"
#include "subtab/binning.hpp"
#include "subtab/error.hpp"
#include "subtab/metrics.hpp"
#include "subtab/pipeline.hpp"
#include "subtab/table.hpp"

namespace subtab {

// ---------------------------------------------------------------------------
// Session logs

struct Fragment {
  enum class Kind { column, value };
  Kind kind = Kind::column;
  std::string column;
  Value literal;  // value fragments only
};

struct SessionStep {
  std::optional<SPQuery> query;
  std::vector<Fragment> fragments;
};

struct SessionLog {
  std::string id;
  std::vector<SessionStep> steps;
};

inline nlohmann::json to_json(const Fragment& f) {
  nlohmann::json j{{"column", f.column}};
  if (f.kind == Fragment::Kind::value) j["value"] = value_to_json(f.literal);
  return j;
}

// One step per line: {"session": id, "query": {...}?, "fragments": [{"column": c, "value": v?}]}.
// Lines of a session must be contiguous in step order.
inline std::vector<SessionLog> parse_session_logs(std::string_view text) {
  std::vector<SessionLog> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fail = [&](const std::string& why) {
      throw ValidationError("session log line " + std::to_string(line_no) + ": " + why);
    };
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    if (!j.contains("fragments") || !j["fragments"].is_array()) fail("missing fragments array");
    SessionStep step;
    try {
      if (j.contains("query") && !j["query"].is_null()) step.query = query_from_json(j["query"]);
      for (const auto& fj : j["fragments"]) {
        Fragment f;
        f.column = fj.at("column").get<std::string>();
        if (fj.contains("value")) {
          f.kind = Fragment::Kind::value;
          f.literal = value_from_json(fj["value"]);
        }
        step.fragments.push_back(std::move(f));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    } catch (const Error& e) {
      fail(e.what());
    }
    const std::string id = j.value("session", std::string("default"));
    if (out.empty() || out.back().id != id) {
      for (const auto& s : out)
        if (s.id == id) fail("session '" + id + "' is not contiguous");
      out.push_back({id, {}});
    }
    out.back().steps.push_back(std::move(step));
    if (end == text.size()) break;
  }
  return out;
}

inline std::string sessions_to_jsonl(const std::vector<SessionLog>& logs) {
  std::string out;
  for (const auto& log : logs)
    for (const auto& s : log.steps) {
      nlohmann::json j{{"session", log.id}};
      if (s.query) j["query"] = query_to_json(*s.query);
      j["fragments"] = nlohmann::json::array();
      for (const auto& f : s.fragments) j["fragments"].push_back(to_json(f));
      out += j.dump() + "\n";
    }
  return out;
}

inline void validate_session(const SessionLog& log, const Table& t) {
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const auto& s = log.steps[i];
    if (s.query) {
      try {
        validate_query(t.schema(), *s.query);
      } catch (const Error& e) {
        throw ValidationError("session '" + log.id + "' step " + std::to_string(i) + ": " + e.what());
      }
    }
    for (const auto& f : s.fragments)
      if (!t.schema().index_of(f.column))
        throw ValidationError("session '" + log.id + "' step " + std::to_string(i) + " references unknown column '" +
                              f.column + "'");
  }
}

struct ReplayOptions {
  SelectOptions select;  // method, k, l, alpha, seed; query is taken from the log
  // Force the next step's fragment columns into the sub-table as targets.
  bool targets_from_next_step = false;
};

struct CaptureStats {
  std::size_t column_captured = 0, column_total = 0;
  std::size_t value_captured = 0, value_total = 0;

  std::size_t captured() const noexcept { return column_captured + value_captured; }
  std::size_t total() const noexcept { return column_total + value_total; }
  double rate() const noexcept { return total() ? static_cast<double>(captured()) / static_cast<double>(total()) : 0.0; }
  double column_rate() const noexcept {
    return column_total ? static_cast<double>(column_captured) / static_cast<double>(column_total) : 0.0;
  }
  CaptureStats& operator+=(const CaptureStats& o) {
    column_captured += o.column_captured;
    column_total += o.column_total;
    value_captured += o.value_captured;
    value_total += o.value_total;
    return *this;
  }
};

inline nlohmann::json to_json(const CaptureStats& s) {
  return {{"captureRate", s.rate()},         {"columnCaptureRate", s.column_rate()},
          {"captured", s.captured()},        {"total", s.total()},
          {"columnCaptured", s.column_captured}, {"columnTotal", s.column_total},
          {"valueCaptured", s.value_captured},   {"valueTotal", s.value_total}};
}

// For each step but the last, build a sub-table of that step's query result
// and count how many fragments of the following step it shows. A value
// fragment counts when its column is shown and its literal falls in the bin
// of some shown cell of that column.
inline CaptureStats replay_session(const Table& t, const SessionLog& log, const Artifacts& a, const ReplayOptions& o,
                                   const Config& c = {}) {
  validate_session(log, t);
  CaptureStats stats;
  const Table nt = normalize_values(t);
  const auto binning = a.binning ? a.binning : std::make_shared<const BinningMap>(compute_binning(nt, c.bins));
  for (std::size_t i = 0; i + 1 < log.steps.size(); ++i) {
    const auto& next = log.steps[i + 1];
    SelectOptions so = o.select;
    so.request.query = log.steps[i].query;
    if (o.targets_from_next_step) {
      so.request.targets.clear();
      for (const auto& f : next.fragments)
        if (std::find(so.request.targets.begin(), so.request.targets.end(), f.column) == so.request.targets.end())
          so.request.targets.push_back(f.column);
      if (so.request.targets.size() > so.request.l) so.request.targets.resize(so.request.l);
    }
    std::optional<SubTableResult> r;
    try {
      r = run_selection(t, a, so, c);
    } catch (const SelectionError&) {
      // Empty query result: nothing displayed, nothing captured.
    }
    for (const auto& f : next.fragments) {
      const bool value = f.kind == Fragment::Kind::value;
      (value ? stats.value_total : stats.column_total) += 1;
      if (!r) continue;
      const auto& cols = r->subtable.columns;
      if (std::find(cols.begin(), cols.end(), f.column) == cols.end()) continue;
      if (!value) {
        ++stats.column_captured;
        continue;
      }
      const auto gcol = *binning->index_of(f.column);
      const auto& cb = (*binning)[gcol];
      Value lit = f.literal;
      if (auto s = std::get_if<std::string>(&lit)) lit = normalize_text(*s);
      const auto want = cb.bin_of(lit);
      const auto jt = *t.schema().index_of(f.column);
      bool hit = false;
      for (auto id : r->subtable.row_ids) {
        const auto pos = *nt.position_of(id);
        if (cb.bin_of(nt.value(pos, jt)) == want) {
          hit = true;
          break;
        }
      }
      if (hit) ++stats.value_captured;
    }
  }
  return stats;
}

inline CaptureStats replay_sessions(const Table& t, const std::vector<SessionLog>& logs, const Artifacts& a,
                                    const ReplayOptions& o, const Config& c = {}) {
  CaptureStats total;
  for (const auto& log : logs) total += replay_session(t, log, a, o, c);
  return total;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct PlantedRule {
  std::size_t cluster = 0;
  std::vector<std::pair<std::string, std::string>> antecedent;  // (column, value)
  std::vector<std::pair<std::string, std::string>> consequent;
};

struct PlantedTable {
  Table table;
  std::vector<PlantedRule> rules;
  std::vector<std::size_t> cluster_of_row;
};

// Categorical table whose rows come from `clusters` equal-sized groups. Each
// group plants `rules_per_cluster` rules {a, b} -> {c} over distinct columns by
// fixing those cells to a group-specific value; every other cell is one of
// six background values. Each cell is then replaced by a random background
// value with probability `noise`.
inline PlantedTable generate_planted_table(std::size_t n, std::size_t m, std::size_t clusters,
                                           std::size_t rules_per_cluster, double noise, std::uint64_t seed) {
  if (n == 0 || m == 0 || clusters == 0) throw ParameterError("n, m and clusters must be positive");
  if (!(noise >= 0 && noise < 1)) throw ParameterError("noise must lie in [0,1)");
  if (3 * rules_per_cluster > m) throw ParameterError("each cluster needs 3 distinct columns per rule");
  constexpr std::size_t kBackground = 6;
  std::mt19937_64 rng(seed);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m; ++j) names.push_back((j < 10 ? "c0" : "c") + std::to_string(j));

  PlantedTable p;
  // planted[c][j] = true when column j carries cluster c's value.
  std::vector<std::vector<char>> planted(clusters, std::vector<char>(m, 0));
  for (std::size_t c = 0; c < clusters; ++c) {
    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    const std::string value = "p" + std::to_string(c);
    for (std::size_t r = 0; r < rules_per_cluster; ++r) {
      PlantedRule rule;
      rule.cluster = c;
      for (std::size_t x = 0; x < 3; ++x) {
        const auto j = cols[3 * r + x];
        planted[c][j] = 1;
        (x < 2 ? rule.antecedent : rule.consequent).emplace_back(names[j], value);
      }
      std::sort(rule.antecedent.begin(), rule.antecedent.end());
      p.rules.push_back(std::move(rule));
    }
  }

  std::uniform_int_distribution<std::size_t> bg(0, kBackground - 1);
  std::bernoulli_distribution flip(noise);
  std::vector<std::vector<std::string>> rows(n, std::vector<std::string>(m));
  p.cluster_of_row.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % clusters;
    p.cluster_of_row[i] = c;
    for (std::size_t j = 0; j < m; ++j) {
      std::string v = planted[c][j] ? "p" + std::to_string(c) : "n" + std::to_string(bg(rng));
      if (noise > 0 && flip(rng)) v = "n" + std::to_string(bg(rng));
      rows[i][j] = std::move(v);
    }
  }
  p.table = table_from_rows(names, rows);
  return p;
}

// Whether `rs` contains the planted rule, compared through the binning.
inline bool contains_planted(const RuleSet& rs, const BinningMap& b, const PlantedRule& pr) {
  auto items = [&](const std::vector<std::pair<std::string, std::string>>& side) {
    std::vector<Item> out;
    for (const auto& [col, val] : side) {
      auto c = b.index_of(col);
      if (!c) return std::vector<Item>{};
      out.push_back({static_cast<std::uint32_t>(*c), b[*c].bin_of_text(val)});
    }
    return out;
  };
  const auto ante = items(pr.antecedent), cons = items(pr.consequent);
  if (ante.empty() || cons.empty()) return false;
  const AssociationRule want(ante, cons);
  return std::any_of(rs.begin(), rs.end(), [&](const AssociationRule& r) { return r.same_rule(want); });
}

// Sessions that walk through planted rules: each step filters on one
// antecedent cell of a rule and mentions that rule's columns plus its
// consequent value.
inline std::vector<SessionLog> generate_planted_sessions(const PlantedTable& p, std::size_t sessions, std::size_t steps,
                                                         std::uint64_t seed) {
  if (p.rules.empty()) throw ParameterError("planted table has no rules");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, p.rules.size() - 1);
  std::vector<SessionLog> out;
  for (std::size_t s = 0; s < sessions; ++s) {
    SessionLog log;
    log.id = "s" + std::to_string(s);
    for (std::size_t i = 0; i < steps; ++i) {
      const auto& r = p.rules[pick(rng)];
      SessionStep step;
      SPQuery q;
      q.predicates.push_back({r.antecedent[0].first, Comparator::eq, {Value{r.antecedent[0].second}}});
      step.query = q;
      for (const auto& [col, val] : r.antecedent) step.fragments.push_back({Fragment::Kind::column, col, {}});
      step.fragments.push_back({Fragment::Kind::value, r.consequent[0].first, Value{r.consequent[0].second}});
      log.steps.push_back(std::move(step));
    }
    out.push_back(std::move(log));
  }
  return out;
}

// Continuous table with a few shifted Gaussian row groups, for throughput runs.
inline Table generate_numeric_table(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t groups = 4) {
  if (n == 0 || m == 0 || groups == 0) throw ParameterError("n, m and groups must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centers(groups, std::vector<double>(m));
  std::uniform_real_distribution<double> u(0, 100);
  for (auto& g : centers)
    for (auto& x : g) x = u(rng);
  std::normal_distribution<double> noise(0, 5);
  std::vector<ColumnSpec> specs;
  std::vector<Column> cols(m);
  for (std::size_t j = 0; j < m; ++j) {
    specs.push_back({"x" + std::to_string(j), ColumnKind::continuous});
    cols[j].numbers.resize(n);
    cols[j].missing.assign(n, 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = centers[rng() % groups];
    for (std::size_t j = 0; j < m; ++j) cols[j].numbers[i] = std::round((g[j] + noise(rng)) * 100) / 100;
  }
  std::vector<std::int64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return Table(Schema(std::move(specs)), std::move(ids), std::move(cols));
}

// ---------------------------------------------------------------------------
// Parameter sweeps

struct SweepGrid {
  // Axis name -> values; each axis is varied alone with defaults elsewhere.
  std::map<std::string, std::vector<double>> axes;
};

inline SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"bins", "support", "confidence", "alpha", "k", "l", "dim"};
  SweepGrid g;
  if (!j.is_object()) throw ConfigError("sweep grid must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown sweep axis '" + it.key() + "'");
    if (!it.value().is_array() || it.value().empty()) throw ConfigError("sweep axis '" + it.key() + "' needs values");
    for (const auto& v : it.value()) {
      if (!v.is_number()) throw ConfigError("sweep axis '" + it.key() + "' values must be numbers");
      g.axes[it.key()].push_back(v.get<double>());
    }
  }
  if (g.axes.empty()) throw ConfigError("sweep grid is empty");
  return g;
}

struct BenchmarkRow {
  std::string method;
  std::string axis;
  double value = 0;
  std::uint64_t seed = 0;
  double cell_coverage = 0;
  double diversity = 0;
  double combined = 0;
  double wall_ms = 0;
  std::size_t rules = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
};

struct SweepOptions {
  std::vector<Method> methods{Method::embedding, Method::random, Method::naive};
  std::vector<std::uint64_t> seeds{42};
  // Random search gets the embedding selector's wall-clock at the same point;
  // otherwise it runs `random_iterations` draws.
  bool random_equal_time = true;
  std::size_t random_iterations = 1000;
};

inline Config apply_axis(Config c, const std::string& axis, double v) {
  if (axis == "bins") c.bins = static_cast<std::size_t>(v);
  else if (axis == "support") c.support = v;
  else if (axis == "confidence") c.confidence = v;
  else if (axis == "alpha") c.alpha = v;
  else if (axis == "k") c.k = static_cast<std::size_t>(v);
  else if (axis == "l") c.l = static_cast<std::size_t>(v);
  else if (axis == "dim") c.dim = static_cast<std::size_t>(v);
  else throw ConfigError("unknown sweep axis '" + axis + "'");
  return c;
}

// Each grid point re-bins, re-mines and re-embeds only as far as its varied
// parameter requires; sub-tables of methods that ignore a parameter are
// reused across its values and only re-scored.
inline BenchmarkReport sweep_parameters(const Table& t, const SweepGrid& grid, const SweepOptions& o,
                                        const Config& defaults = {}) {
  if (grid.axes.empty()) throw ConfigError("sweep grid is empty");
  BenchmarkReport report;
  const Table nt = normalize_values(t);

  std::map<std::size_t, std::shared_ptr<const BinningMap>> binnings;
  std::map<std::string, std::shared_ptr<const RuleSet>> rule_cache;
  std::map<std::string, std::shared_ptr<const EmbeddingModel>> models;
  struct Cached {
    SubTable s;
    double ms;
  };
  std::map<std::string, Cached> selections;

  auto binning_for = [&](const Config& c) {
    auto& b = binnings[c.bins];
    if (!b) b = std::make_shared<const BinningMap>(compute_binning(nt, c.bins));
    return b;
  };

  for (const auto& [axis, values] : grid.axes) {
    for (double v : values) {
      const Config c = apply_axis(defaults, axis, v);
      validate_config(c);
      const auto binning = binning_for(c);
      const BinnedTable bt = apply_binning(nt, binning);
      std::ostringstream rk;
      rk << c.bins << '|' << c.support << '|' << c.confidence << '|' << c.min_rule_size;
      auto& rules = rule_cache[rk.str()];
      if (!rules) {
        AprioriParams p;
        p.min_support = c.support;
        p.min_confidence = c.confidence;
        p.min_rule_size = c.min_rule_size;
        p.max_consequent_size = c.max_consequent_size;
        rules = std::make_shared<const RuleSet>(mine_rules_apriori(bt, p));
      }
      const CoverageEvaluator ev(bt, *rules);
      const std::size_t k = std::min(c.k, bt.rows()), l = std::min(c.l, bt.cols());

      for (auto seed : o.seeds) {
        double embed_ms = 0;
        for (auto method : o.methods) {
          std::string key;
          SubTable s;
          double ms = 0;
          auto timed = [&](auto&& fn) {
            const auto start = std::chrono::steady_clock::now();
            fn();
            ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
          };
          switch (method) {
            case Method::embedding: {
              std::ostringstream mk;
              mk << c.bins << '|' << c.dim << '|' << seed;
              auto& model = models[mk.str()];
              if (!model) {
                TrainingOptions to;
                to.dimension = c.dim;
                to.epochs = c.epochs;
                to.negatives = c.negatives;
                to.seed = seed;
                to.context_cap = c.context_cap;
                model = std::make_shared<const EmbeddingModel>(
                    train_embedding(build_corpus(bt, {c.corpus_cap, c.chunk, seed}), to));
              }
              key = "embedding|" + mk.str() + '|' + std::to_string(k) + '|' + std::to_string(l);
              if (auto it = selections.find(key); it != selections.end()) {
                s = it->second.s;
                ms = it->second.ms;
              } else {
                SelectionRequest req;
                req.k = k;
                req.l = l;
                req.seed = seed;
                timed([&] { s = select_subtable(t, req, *model, binning).subtable; });
                selections[key] = {s, ms};
              }
              embed_ms = ms;
              break;
            }
            case Method::naive: {
              key = "naive|" + std::to_string(k) + '|' + std::to_string(l) + '|' + std::to_string(seed);
              if (auto it = selections.find(key); it != selections.end()) {
                s = it->second.s;
                ms = it->second.ms;
              } else {
                timed([&] { s = naive_clustering(t, k, l, seed); });
                selections[key] = {s, ms};
              }
              break;
            }
            case Method::random: {
              SearchBudget b;
              if (o.random_equal_time && embed_ms > 0)
                b.wall_clock = std::chrono::milliseconds(std::max<long long>(1, std::llround(embed_ms)));
              else
                b.iterations = o.random_iterations;
              timed([&] { s = random_best(bt, k, l, *rules, c.alpha, b, seed).subtable; });
              break;
            }
            case Method::greedy:
              timed([&] { s = exact_column_selection(bt, k, l, *rules).subtable; });
              break;
            case Method::mab: {
              MabOptions mo;
              mo.seed = seed;
              timed([&] { s = mab_ucb(bt, k, l, *rules, c.alpha, mo).subtable; });
              break;
            }
          }
          const auto score = combined_score(ev, s, c.alpha);
          report.rows.push_back({to_string(method), axis, v, seed, score.cell_coverage, score.diversity,
                                 score.combined, ms, rules->size()});
        }
      }
    }
  }
  return report;
}

inline void write_report_csv(const BenchmarkReport& r, std::ostream& out) {
  out << "method,axis,value,seed,cellCoverage,diversity,combined,wallClockMs,rules\n";
  for (const auto& x : r.rows)
    out << x.method << ',' << x.axis << ',' << format_number(x.value) << ',' << x.seed << ',' << x.cell_coverage << ','
        << x.diversity << ',' << x.combined << ',' << x.wall_ms << ',' << x.rules << '\n';
}

struct SummaryRow {
  std::string method, axis;
  double value = 0;
  std::size_t runs = 0;
  double coverage_mean = 0, coverage_sd = 0;
  double combined_mean = 0, combined_sd = 0;
};

// Mean and sample standard deviation over seeds per (method, axis, value).
inline std::vector<SummaryRow> summarize(const BenchmarkReport& r) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const BenchmarkRow*>> groups;
  for (const auto& x : r.rows) groups[{x.axis, x.method, x.value}].push_back(&x);
  std::vector<SummaryRow> out;
  for (const auto& [key, rows] : groups) {
    SummaryRow s;
    s.axis = std::get<0>(key);
    s.method = std::get<1>(key);
    s.value = std::get<2>(key);
    s.runs = rows.size();
    auto stats = [&](auto field, double& mean, double& sd) {
      double sum = 0;
      for (auto* x : rows) sum += field(*x);
      mean = sum / static_cast<double>(rows.size());
      double sq = 0;
      for (auto* x : rows) sq += (field(*x) - mean) * (field(*x) - mean);
      sd = rows.size() > 1 ? std::sqrt(sq / static_cast<double>(rows.size() - 1)) : 0.0;
    };
    stats([](const BenchmarkRow& x) { return x.cell_coverage; }, s.coverage_mean, s.coverage_sd);
    stats([](const BenchmarkRow& x) { return x.combined; }, s.combined_mean, s.combined_sd);
    out.push_back(s);
  }
  return out;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "axis,method,value,runs,cellCoverageMean,cellCoverageSd,combinedMean,combinedSd\n";
  for (const auto& s : rows)
    out << s.axis << ',' << s.method << ',' << format_number(s.value) << ',' << s.runs << ',' << s.coverage_mean << ','
        << s.coverage_sd << ',' << s.combined_mean << ',' << s.combined_sd << '\n';
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
inline double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0;
  for (std::size_t x = wins; x <= n; ++x)
    p += std::exp(std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(x) + 1) -
                  std::lgamma(static_cast<double>(n - x) + 1) - static_cast<double>(n) * std::log(2.0));
  return std::min(1.0, p);
}

}  // namespace subtab
