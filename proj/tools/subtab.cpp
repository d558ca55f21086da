// Command-line front end. Every subcommand prints JSON (or CSV where noted)
// to stdout; errors go to stderr as {"error": {...}} with exit status 2.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "subtab/service.hpp"
#include "subtab/subtab.hpp"

using namespace subtab;
using nlohmann::json;

namespace {

// Options shared by every subcommand that reads a table and a config.
struct Common {
  std::string table;
  std::string config_file;
  std::string delimiter = ",";
  std::optional<std::size_t> bins, dim, epochs, k, l, threads;
  std::optional<double> support, confidence, alpha;
  std::optional<std::uint64_t> seed;
};

void add_table(CLI::App* app, Common& c) {
  app->add_option("table", c.table, "CSV file")->required()->check(CLI::ExistingFile);
  app->add_option("--delimiter", c.delimiter, "CSV delimiter");
}

void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--bins", c.bins);
  app->add_option("--support", c.support);
  app->add_option("--confidence", c.confidence);
  app->add_option("--dim", c.dim);
  app->add_option("--epochs", c.epochs);
  app->add_option("--seed", c.seed);
  app->add_option("--threads", c.threads);
}

void add_shape(CLI::App* app, Common& c) {
  app->add_option("--k", c.k, "rows to show");
  app->add_option("--l", c.l, "columns to show");
  app->add_option("--alpha", c.alpha, "coverage weight in the combined score");
}

Config resolve_config(const Common& o) {
  Config c;
  if (!o.config_file.empty()) c = load_config_file(o.config_file);
  if (o.bins) c.bins = *o.bins;
  if (o.support) c.support = *o.support;
  if (o.confidence) c.confidence = *o.confidence;
  if (o.dim) c.dim = *o.dim;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = static_cast<unsigned>(*o.threads);
  if (o.k) c.k = *o.k;
  if (o.l) c.l = *o.l;
  if (o.alpha) c.alpha = *o.alpha;
  validate_config(c);
  return c;
}

Table read_table(const Common& o) {
  if (o.delimiter.size() != 1) throw ConfigError("delimiter must be one character");
  CsvOptions csv;
  csv.delimiter = o.delimiter[0];
  return load_csv_file(o.table, csv);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ','))
    if (auto t = trim(part); !t.empty()) out.emplace_back(t);
  return out;
}

// "COL<op>VALUE" with op one of = != < <= > >=.
Predicate parse_where(const std::string& s) {
  static const char* ops[] = {"!=", "<=", ">=", "=", "<", ">"};
  for (const char* op : ops) {
    const auto at = s.find(op);
    if (at == std::string::npos || at == 0) continue;
    Predicate p;
    p.column = std::string(trim(s.substr(0, at)));
    p.op = comparator_from_string(op);
    const auto lit = std::string(trim(s.substr(at + std::strlen(op))));
    if (auto d = parse_number(lit)) p.literals.push_back(*d);
    else p.literals.push_back(lit);
    return p;
  }
  throw QueryError("cannot parse predicate '" + s + "'; expected COLUMN<op>VALUE");
}

struct QueryArgs {
  std::string json_text;
  std::vector<std::string> where;
  std::string project;
};

void add_query(CLI::App* app, QueryArgs& q) {
  app->add_option("--query", q.json_text, "SP query as JSON, or @file");
  app->add_option("--where", q.where, "predicate COLUMN<op>VALUE (repeatable)");
  app->add_option("--project", q.project, "comma-separated projection");
}

std::optional<SPQuery> resolve_query(const QueryArgs& a) {
  std::optional<SPQuery> q;
  if (!a.json_text.empty()) {
    const std::string text = a.json_text[0] == '@' ? read_file(a.json_text.substr(1)) : a.json_text;
    try {
      q = query_from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw QueryError(std::string("invalid query JSON: ") + e.what());
    }
  }
  if (!a.where.empty() || !a.project.empty()) {
    if (!q) q.emplace();
    for (const auto& w : a.where) q->predicates.push_back(parse_where(w));
    for (auto& c : split_list(a.project)) q->projection.push_back(c);
  }
  return q;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::filesystem::path default_artifact_dir(const Table& t, const Config& c) {
  const char* env = std::getenv("SUBTAB_DATA_DIR");
  if (!env || !*env) throw ConfigError("no --artifacts directory given and SUBTAB_DATA_DIR is unset");
  return std::filesystem::path(env) / cache_key(t, c);
}

// Rules from the artifact directory when present, otherwise mined on the fly.
RuleSet rules_for(const BinnedTable& bt, const Config& c, const std::optional<Artifacts>& a) {
  if (a && a->rules) return *a->rules;
  AprioriParams p;
  p.min_support = c.support;
  p.min_confidence = c.confidence;
  p.min_rule_size = c.min_rule_size;
  p.max_consequent_size = c.max_consequent_size;
  return mine_rules_apriori(bt, p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Informative sub-table selection"};
  app.require_subcommand(1);

  // load
  Common load_o;
  auto* load = app.add_subcommand("load", "parse a CSV and print its schema");
  add_table(load, load_o);
  add_config(load, load_o);

  // preprocess
  Common pre_o;
  std::string pre_out;
  bool pre_no_rules = false;
  auto* pre = app.add_subcommand("preprocess", "bin, embed and mine rules once; write the artifact directory");
  add_table(pre, pre_o);
  add_config(pre, pre_o);
  pre->add_option("--out", pre_out, "artifact directory (default $SUBTAB_DATA_DIR/<cache key>)");
  pre->add_flag("--no-rules", pre_no_rules, "skip rule mining");

  // select
  Common sel_o;
  QueryArgs sel_q;
  std::string sel_artifacts, sel_method = "embedding", sel_targets;
  bool sel_no_highlight = false;
  std::optional<std::size_t> sel_iterations;
  std::optional<long> sel_budget_ms;
  auto* sel = app.add_subcommand("select", "choose a k x l sub-table of a query result");
  add_table(sel, sel_o);
  add_config(sel, sel_o);
  add_shape(sel, sel_o);
  add_query(sel, sel_q);
  sel->add_option("--artifacts", sel_artifacts, "artifact directory from preprocess");
  sel->add_option("--method", sel_method, "embedding|random|naive|greedy|mab");
  sel->add_option("--targets", sel_targets, "comma-separated target columns");
  sel->add_option("--iterations", sel_iterations, "iteration budget for random and mab");
  sel->add_option("--budget-ms", sel_budget_ms, "wall-clock budget for random");
  sel->add_flag("--no-highlight", sel_no_highlight);

  // baseline: same as select, restricted to the baseline methods.
  Common base_o;
  QueryArgs base_q;
  std::string base_artifacts, base_method = "random", base_targets;
  std::optional<std::size_t> base_iterations;
  std::optional<long> base_budget_ms;
  auto* base = app.add_subcommand("baseline", "run a baseline selector (random, naive, mab)");
  add_table(base, base_o);
  add_config(base, base_o);
  add_shape(base, base_o);
  add_query(base, base_q);
  base->add_option("--artifacts", base_artifacts);
  base->add_option("--method", base_method)->check(CLI::IsMember({"random", "naive", "mab"}));
  base->add_option("--targets", base_targets);
  base->add_option("--iterations", base_iterations);
  base->add_option("--budget", base_budget_ms, "wall-clock budget in ms");

  // rules
  std::string rules_artifacts;
  std::size_t rules_limit = 100, rules_offset = 0;
  auto* rules = app.add_subcommand("rules", "page through mined rules, by support then confidence");
  rules->add_option("--artifacts", rules_artifacts)->required()->check(CLI::ExistingDirectory);
  rules->add_option("--limit", rules_limit);
  rules->add_option("--offset", rules_offset);

  // optimize
  Common opt_o;
  std::string opt_method = "greedy", opt_artifacts, opt_targets;
  long opt_budget_ms = 60000;
  std::optional<std::uint64_t> opt_combos;
  auto* opt = app.add_subcommand("optimize", "exact and budgeted optimizers for small tables");
  add_table(opt, opt_o);
  add_config(opt, opt_o);
  add_shape(opt, opt_o);
  opt->add_option("--method", opt_method)->check(CLI::IsMember({"greedy", "semi-greedy", "brute"}));
  opt->add_option("--artifacts", opt_artifacts, "use mined rules from here instead of mining");
  opt->add_option("--targets", opt_targets);
  opt->add_option("--budget", opt_budget_ms, "semi-greedy wall-clock budget in ms");
  opt->add_option("--max-combos", opt_combos, "semi-greedy column-set budget");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluation harnesses");
  eval->require_subcommand(1);
  Common rep_o;
  std::string rep_sessions, rep_artifacts, rep_method = "embedding";
  bool rep_force = false;
  auto* rep = eval->add_subcommand("replay", "session-log capture rate");
  add_table(rep, rep_o);
  add_config(rep, rep_o);
  add_shape(rep, rep_o);
  rep->add_option("--sessions", rep_sessions, "JSONL session log")->required()->check(CLI::ExistingFile);
  rep->add_option("--artifacts", rep_artifacts);
  rep->add_option("--method", rep_method);
  rep->add_flag("--force-targets", rep_force, "force the next step's columns in as targets");

  Common sw_o;
  std::string sw_grid, sw_csv, sw_summary, sw_methods = "embedding,random,naive";
  std::size_t sw_seeds = 1, sw_random_iterations = 1000;
  bool sw_equal_iterations = false;
  auto* sw = eval->add_subcommand("sweep", "vary one parameter at a time and score every method");
  add_table(sw, sw_o);
  add_config(sw, sw_o);
  add_shape(sw, sw_o);
  sw->add_option("--grid", sw_grid, "JSON grid, e.g. {\"bins\": [2, 5, 10]}")->required();
  sw->add_option("--methods", sw_methods);
  sw->add_option("--seeds", sw_seeds, "number of seeds, starting at --seed");
  sw->add_option("--csv", sw_csv, "write per-run rows here");
  sw->add_option("--summary", sw_summary, "write mean/sd per grid point here");
  sw->add_flag("--fixed-iterations", sw_equal_iterations, "give random a fixed iteration budget, not equal time");
  sw->add_option("--random-iterations", sw_random_iterations);

  // generate
  std::string gen_kind = "planted", gen_out, gen_sessions;
  std::size_t gen_n = 10000, gen_m = 20, gen_clusters = 4, gen_rules = 2, gen_session_count = 10, gen_steps = 5;
  double gen_noise = 0.05;
  std::uint64_t gen_seed = 42;
  auto* gen = app.add_subcommand("generate", "write a synthetic table (and optional session log)");
  gen->add_option("kind", gen_kind, "planted|numeric")->check(CLI::IsMember({"planted", "numeric"}));
  gen->add_option("--out", gen_out, "CSV path")->required();
  gen->add_option("--n", gen_n);
  gen->add_option("--m", gen_m);
  gen->add_option("--clusters", gen_clusters);
  gen->add_option("--rules-per-cluster", gen_rules);
  gen->add_option("--noise", gen_noise);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--sessions", gen_sessions, "also write a planted session log here");
  gen->add_option("--session-count", gen_session_count);
  gen->add_option("--steps", gen_steps);

  // serve
  std::string host = "127.0.0.1", data_dir, serve_config;
  int port = 8080;
  std::size_t max_upload_mb = 512;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--data-dir", data_dir, "artifact cache (default $SUBTAB_DATA_DIR)");
  serve->add_option("--max-upload-mb", max_upload_mb);
  serve->add_option("--config", serve_config, "default config for preprocessing")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*load) {
      const auto t = read_table(load_o);
      print({{"n", t.rows()},
             {"m", t.cols()},
             {"schema", schema_to_json(t.schema())},
             {"cacheKey", cache_key(t, resolve_config(load_o))}});
    } else if (*pre) {
      const auto t = read_table(pre_o);
      auto c = resolve_config(pre_o);
      if (pre_no_rules) c.mine_rules = false;
      const auto dir = pre_out.empty() ? default_artifact_dir(t, c) : std::filesystem::path(pre_out);
      const auto a = preprocess(t, c, [](const std::string& phase) { std::cerr << "phase " << phase << "\n"; });
      save_artifacts(a, c, dir);
      print({{"artifacts", dir.string()},
             {"cacheKey", cache_key(t, c)},
             {"timings", a.timings},
             {"vocabulary", a.model->vocabulary().size()},
             {"rules", a.rules ? json(a.rules->size()) : json(nullptr)}});
    } else if (*sel || *base) {
      const bool is_sel = static_cast<bool>(*sel);
      const auto& o = is_sel ? sel_o : base_o;
      const auto t = read_table(o);
      const auto c = resolve_config(o);
      const auto& art_dir = is_sel ? sel_artifacts : base_artifacts;
      Artifacts a;
      if (!art_dir.empty()) a = load_artifacts(art_dir);
      else if (const char* env = std::getenv("SUBTAB_DATA_DIR"); env && *env) {
        try {
          a = load_artifacts(std::filesystem::path(env) / cache_key(t, c));
        } catch (const NotPreprocessedError&) {
        }
      }
      SelectOptions so;
      so.method = method_from_string(is_sel ? sel_method : base_method);
      // Score-driven methods need rules; mine them here when no artifacts carry any.
      if (!a.rules && (so.method == Method::random || so.method == Method::mab || so.method == Method::greedy)) {
        const auto nt = normalize_values(t);
        if (!a.binning) a.binning = std::make_shared<const BinningMap>(compute_binning(nt, c.bins));
        a.rules = std::make_shared<const RuleSet>(rules_for(apply_binning(nt, a.binning), c, std::nullopt));
      }
      so.highlight = !(is_sel && sel_no_highlight);
      so.request.k = c.k;
      so.request.l = c.l;
      so.request.alpha = c.alpha;
      so.request.seed = c.seed;
      so.request.targets = split_list(is_sel ? sel_targets : base_targets);
      so.request.query = resolve_query(is_sel ? sel_q : base_q);
      const auto& iters = is_sel ? sel_iterations : base_iterations;
      const auto& ms = is_sel ? sel_budget_ms : base_budget_ms;
      if (ms) so.random_budget = {std::nullopt, std::chrono::milliseconds(*ms)};
      if (iters) {
        so.random_budget = {*iters, std::nullopt};
        so.mab.iterations = *iters;
      }
      const auto r = run_selection(t, a, so, c, std::filesystem::path(o.table).filename().string());
      auto j = to_json(r, a.binning.get());
      j["method"] = to_string(so.method);
      print(j);
    } else if (*rules) {
      const auto a = load_artifacts(rules_artifacts);
      if (!a.rules) throw NotPreprocessedError("rules were not mined for these artifacts");
      std::vector<const AssociationRule*> order;
      for (const auto& r : *a.rules) order.push_back(&r);
      std::stable_sort(order.begin(), order.end(), [](auto* x, auto* y) {
        if (x->support() != y->support()) return x->support() > y->support();
        return x->confidence() > y->confidence();
      });
      json page = json::array();
      for (std::size_t i = rules_offset; i < order.size() && i - rules_offset < rules_limit; ++i)
        page.push_back(rule_to_json(*order[i], *a.binning));
      print({{"total", order.size()}, {"offset", rules_offset}, {"limit", rules_limit}, {"rules", page}});
    } else if (*opt) {
      const auto t = normalize_values(read_table(opt_o));
      const auto c = resolve_config(opt_o);
      std::optional<Artifacts> a;
      if (!opt_artifacts.empty()) a = load_artifacts(opt_artifacts);
      const auto binning =
          a ? a->binning : std::make_shared<const BinningMap>(compute_binning(t, c.bins));
      const auto bt = apply_binning(t, binning, std::filesystem::path(opt_o.table).filename().string());
      const auto targets = split_list(opt_targets);
      const auto rs = active_rules(rules_for(bt, c, a), *binning, targets);
      json out;
      if (opt_method == "brute") {
        const auto r = brute_force_optimal(bt, c.k, c.l, rs, c.alpha);
        out = {{"subTable", to_json(r.subtable)}, {"score", to_json(r.score)}};
      } else {
        OptimizerResult r;
        if (opt_method == "greedy") {
          r = exact_column_selection(bt, c.k, c.l, rs, targets);
        } else {
          OptimizerBudget b;
          b.wall_clock = std::chrono::milliseconds(opt_budget_ms);
          b.max_combos = opt_combos;
          b.seed = c.seed;
          r = semi_greedy(bt, c.k, c.l, rs, targets, b);
        }
        out = to_json(r);
        out["score"] = to_json(combined_score(r.subtable, bt, rs, c.alpha));
      }
      out["rules"] = rs.size();
      print(out);
    } else if (*rep) {
      const auto t = read_table(rep_o);
      const auto c = resolve_config(rep_o);
      Artifacts a;
      if (!rep_artifacts.empty()) a = load_artifacts(rep_artifacts);
      ReplayOptions ro;
      ro.select.method = method_from_string(rep_method);
      ro.select.request.k = c.k;
      ro.select.request.l = c.l;
      ro.select.request.alpha = c.alpha;
      ro.select.request.seed = c.seed;
      ro.select.random_budget = {1000, std::nullopt};
      ro.targets_from_next_step = rep_force;
      const auto logs = parse_session_logs(read_file(rep_sessions));
      json per = json::array();
      CaptureStats total;
      for (const auto& log : logs) {
        const auto s = replay_session(t, log, a, ro, c);
        auto j = to_json(s);
        j["session"] = log.id;
        per.push_back(j);
        total += s;
      }
      auto j = to_json(total);
      j["sessions"] = per;
      print(j);
    } else if (*sw) {
      const auto t = read_table(sw_o);
      const auto c = resolve_config(sw_o);
      const std::string grid_text = std::filesystem::exists(sw_grid) ? read_file(sw_grid) : sw_grid;
      json grid_json;
      try {
        grid_json = json::parse(grid_text);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid grid JSON: ") + e.what());
      }
      SweepOptions so;
      so.methods.clear();
      for (const auto& m : split_list(sw_methods)) so.methods.push_back(method_from_string(m));
      so.seeds.clear();
      for (std::size_t i = 0; i < std::max<std::size_t>(1, sw_seeds); ++i) so.seeds.push_back(c.seed + i);
      so.random_equal_time = !sw_equal_iterations;
      so.random_iterations = sw_random_iterations;
      const auto report = sweep_parameters(t, sweep_grid_from_json(grid_json), so, c);
      if (!sw_csv.empty()) {
        std::ofstream out(sw_csv);
        write_report_csv(report, out);
      }
      const auto summary = summarize(report);
      if (!sw_summary.empty()) {
        std::ofstream out(sw_summary);
        write_summary_csv(summary, out);
      }
      write_summary_csv(summary, std::cout);
    } else if (*gen) {
      std::ofstream out(gen_out);
      if (!out) throw ConfigError("cannot write " + gen_out);
      if (gen_kind == "numeric") {
        write_csv(generate_numeric_table(gen_n, gen_m, gen_seed), out);
        print({{"out", gen_out}, {"n", gen_n}, {"m", gen_m}});
      } else {
        const auto p = generate_planted_table(gen_n, gen_m, gen_clusters, gen_rules, gen_noise, gen_seed);
        write_csv(p.table, out);
        json planted = json::array();
        for (const auto& r : p.rules) planted.push_back({{"cluster", r.cluster}, {"antecedent", r.antecedent},
                                                         {"consequent", r.consequent}});
        if (!gen_sessions.empty()) {
          std::ofstream s(gen_sessions);
          s << sessions_to_jsonl(generate_planted_sessions(p, gen_session_count, gen_steps, gen_seed));
        }
        print({{"out", gen_out}, {"n", gen_n}, {"m", gen_m}, {"plantedRules", planted}});
      }
    } else if (*serve) {
      ServiceOptions so;
      so.max_upload_bytes = max_upload_mb << 20;
      if (!data_dir.empty()) so.data_dir = data_dir;
      if (!serve_config.empty()) so.defaults = load_config_file(serve_config);
      Service service(so);
      httplib::Server http;
      service.install(http);
      std::cerr << "listening on " << host << ":" << port << "\n";
      if (!http.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
