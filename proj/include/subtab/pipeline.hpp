#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtab/baselines.hpp"
#include "subtab/binning.hpp"
#include "subtab/embedding.hpp"
#include "subtab/error.hpp"
#include "subtab/exact_opt.hpp"
#include "subtab/metrics.hpp"
#include "subtab/rules.hpp"
#include "subtab/selection.hpp"
#include "subtab/table.hpp"
#include "subtab/util.hpp"

namespace subtab {

// Every tunable knob of the system, with its documented default.
struct Config {
  std::size_t bins = 5;
  double support = 0.1;
  double confidence = 0.6;
  std::size_t min_rule_size = 3;
  std::size_t max_consequent_size = 2;
  double alpha = 0.5;
  std::size_t dim = 64;
  std::size_t epochs = 5;
  std::size_t negatives = 5;
  std::size_t corpus_cap = 100000;
  std::size_t chunk = 1000;
  std::size_t k = 10;
  std::size_t l = 10;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  bool mine_rules = true;
  std::size_t context_cap = 8;
  // "apriori", or "exhaustive" for small tables where every rule is wanted.
  std::string rule_mode = "apriori";
  std::vector<std::string> consequent_columns;  // exhaustive only; empty = any
  std::size_t min_antecedent_size = 1;          // exhaustive only
  std::size_t min_support_count = 1;            // exhaustive only
};

inline nlohmann::json to_json(const Config& c) {
  return {{"bins", c.bins},
          {"support", c.support},
          {"confidence", c.confidence},
          {"minRuleSize", c.min_rule_size},
          {"maxConsequentSize", c.max_consequent_size},
          {"alpha", c.alpha},
          {"dim", c.dim},
          {"epochs", c.epochs},
          {"negatives", c.negatives},
          {"corpusCap", c.corpus_cap},
          {"chunk", c.chunk},
          {"k", c.k},
          {"l", c.l},
          {"seed", c.seed},
          {"threads", c.threads},
          {"mineRules", c.mine_rules},
          {"contextCap", c.context_cap},
          {"ruleMode", c.rule_mode},
          {"consequentColumns", c.consequent_columns},
          {"minAntecedentSize", c.min_antecedent_size},
          {"minSupportCount", c.min_support_count}};
}

namespace detail {

template <class T>
T config_number(const nlohmann::json& v, const std::string& key) {
  try {
    if (v.is_string()) {
      auto d = parse_number(v.get<std::string>());
      if (!d) throw ConfigError("config key '" + key + "' expects a number");
      return static_cast<T>(*d);
    }
    if (!v.is_number()) throw ConfigError("config key '" + key + "' expects a number");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.get<double>() < 0) throw ConfigError("config key '" + key + "' must not be negative");
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' expects a number");
  }
}

}  // namespace detail

// Overlays known keys of `j` on `base`; unknown keys are rejected.
inline Config config_from_json(const nlohmann::json& j, Config c = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const auto& v = it.value();
    if (key == "bins") c.bins = detail::config_number<std::size_t>(v, key);
    else if (key == "support") c.support = detail::config_number<double>(v, key);
    else if (key == "confidence") c.confidence = detail::config_number<double>(v, key);
    else if (key == "minRuleSize") c.min_rule_size = detail::config_number<std::size_t>(v, key);
    else if (key == "maxConsequentSize") c.max_consequent_size = detail::config_number<std::size_t>(v, key);
    else if (key == "alpha") c.alpha = detail::config_number<double>(v, key);
    else if (key == "dim") c.dim = detail::config_number<std::size_t>(v, key);
    else if (key == "epochs") c.epochs = detail::config_number<std::size_t>(v, key);
    else if (key == "negatives") c.negatives = detail::config_number<std::size_t>(v, key);
    else if (key == "corpusCap") c.corpus_cap = detail::config_number<std::size_t>(v, key);
    else if (key == "chunk") c.chunk = detail::config_number<std::size_t>(v, key);
    else if (key == "k") c.k = detail::config_number<std::size_t>(v, key);
    else if (key == "l") c.l = detail::config_number<std::size_t>(v, key);
    else if (key == "seed") c.seed = detail::config_number<std::uint64_t>(v, key);
    else if (key == "threads") c.threads = detail::config_number<unsigned>(v, key);
    else if (key == "contextCap") c.context_cap = detail::config_number<std::size_t>(v, key);
    else if (key == "minAntecedentSize") c.min_antecedent_size = detail::config_number<std::size_t>(v, key);
    else if (key == "minSupportCount") c.min_support_count = detail::config_number<std::size_t>(v, key);
    else if (key == "ruleMode") {
      if (!v.is_string()) throw ConfigError("config key 'ruleMode' expects a string");
      c.rule_mode = v.get<std::string>();
    } else if (key == "consequentColumns") {
      c.consequent_columns.clear();
      if (v.is_array()) {
        for (const auto& x : v) {
          if (!x.is_string()) throw ConfigError("config key 'consequentColumns' expects column names");
          c.consequent_columns.push_back(x.get<std::string>());
        }
      } else if (v.is_string()) {
        std::istringstream in(v.get<std::string>());
        std::string part;
        while (std::getline(in, part, ','))
          if (auto name = trim(part); !name.empty()) c.consequent_columns.emplace_back(name);
      } else {
        throw ConfigError("config key 'consequentColumns' expects a list");
      }
    } else if (key == "mineRules") {
      if (v.is_boolean()) c.mine_rules = v.get<bool>();
      else if (v.is_string()) c.mine_rules = v == "true" || v == "1";
      else throw ConfigError("config key 'mineRules' expects a boolean");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return c;
}

// `key = value` lines; '#' starts a comment.
inline Config config_from_text(std::string_view text, Config base = {}) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    j[std::string(trim(t.substr(0, eq)))] = std::string(trim(t.substr(eq + 1)));
  }
  return config_from_json(j, base);
}

inline Config load_config_file(const std::string& path, Config base = {}) {
  return config_from_text(read_file(path), base);
}

inline void validate_config(const Config& c) {
  if (c.bins < 1) throw ConfigError("bins must be at least 1");
  if (!(c.support >= 0 && c.support <= 1)) throw ConfigError("support must lie in [0,1]");
  if (!(c.confidence >= 0 && c.confidence <= 1)) throw ConfigError("confidence must lie in [0,1]");
  if (c.min_rule_size < 2) throw ConfigError("minRuleSize must be at least 2");
  if (c.rule_mode != "apriori" && c.rule_mode != "exhaustive")
    throw ConfigError("ruleMode must be 'apriori' or 'exhaustive'");
  if (!(c.alpha >= 0 && c.alpha <= 1)) throw ConfigError("alpha must lie in [0,1]");
  if (c.dim < 1 || c.epochs < 1) throw ConfigError("dim and epochs must be at least 1");
  if (c.corpus_cap < 1 || c.chunk < 1) throw ConfigError("corpusCap and chunk must be at least 1");
  if (c.k < 1 || c.l < 1) throw ConfigError("k and l must be at least 1");
}

struct Artifacts {
  std::shared_ptr<const BinningMap> binning;
  std::shared_ptr<const EmbeddingModel> model;
  std::shared_ptr<const RuleSet> rules;  // null when mining was skipped
  nlohmann::json timings = nlohmann::json::object();

  bool ready() const noexcept { return binning && model; }
};

using ProgressFn = std::function<void(const std::string& phase)>;

// The one-time pipeline: normalize, bin, build the corpus, train the
// embedding and (optionally) mine rules.
inline Artifacts preprocess(const Table& t, const Config& c, const ProgressFn& progress = {}) {
  validate_config(c);
  if (t.rows() == 0) throw EmptyTableError("cannot preprocess an empty table");
  Artifacts a;
  auto phase = [&](const char* name, auto&& fn) {
    if (progress) progress(name);
    const auto start = std::chrono::steady_clock::now();
    fn();
    a.timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  Table normalized;
  BinnedTable bt;
  SentenceCorpus corpus;
  phase("normalize", [&] { normalized = normalize_values(t); });
  phase("bin", [&] {
    a.binning = std::make_shared<const BinningMap>(compute_binning(normalized, c.bins));
    bt = apply_binning(normalized, a.binning);
  });
  phase("corpus", [&] { corpus = build_corpus(bt, {c.corpus_cap, c.chunk, c.seed}); });
  phase("embed", [&] {
    TrainingOptions o;
    o.dimension = c.dim;
    o.epochs = c.epochs;
    o.negatives = c.negatives;
    o.seed = c.seed;
    o.threads = c.threads;
    o.context_cap = c.context_cap;
    a.model = std::make_shared<const EmbeddingModel>(train_embedding(corpus, o));
  });
  if (c.mine_rules) {
    phase("mine", [&] {
      if (c.rule_mode == "exhaustive") {
        ExhaustiveConstraints e;
        e.consequent_columns = c.consequent_columns;
        e.min_antecedent_size = c.min_antecedent_size;
        e.min_absolute_support = std::max(c.min_support_count, min_count_for(c.support, bt.rows()));
        e.min_confidence = c.confidence;
        e.min_rule_size = c.min_rule_size;
        e.max_consequent_size = c.max_consequent_size;
        a.rules = std::make_shared<const RuleSet>(enumerate_rules_exhaustive(bt, e));
        return;
      }
      AprioriParams p;
      p.min_support = c.support;
      p.min_confidence = c.confidence;
      p.min_rule_size = c.min_rule_size;
      p.max_consequent_size = c.max_consequent_size;
      a.rules = std::make_shared<const RuleSet>(mine_rules_apriori(bt, p));
    });
  }
  return a;
}

// Content hash of a table (schema and cells) for artifact cache keys.
inline std::uint64_t table_hash(const Table& t) {
  std::ostringstream out;
  for (std::size_t j = 0; j < t.cols(); ++j) out << t.schema()[j].name << ':' << to_string(t.schema()[j].kind) << ';';
  out << '\n';
  write_csv(t, out);
  std::uint64_t h = fnv1a(out.str());
  for (auto id : t.row_ids()) h = fnv1a(std::to_string(id) + ",", h);
  return h;
}

// Parameters that influence preprocessing output.
inline std::string cache_key(const Table& t, const Config& c) {
  nlohmann::json j{{"bins", c.bins},        {"support", c.support},       {"confidence", c.confidence},
                   {"minRuleSize", c.min_rule_size}, {"maxConsequentSize", c.max_consequent_size},
                   {"dim", c.dim},          {"epochs", c.epochs},         {"negatives", c.negatives},
                   {"corpusCap", c.corpus_cap}, {"chunk", c.chunk},       {"seed", c.seed},
                   {"threads", c.threads},  {"mineRules", c.mine_rules},  {"contextCap", c.context_cap},
                   {"ruleMode", c.rule_mode}, {"consequentColumns", c.consequent_columns},
                   {"minAntecedentSize", c.min_antecedent_size}, {"minSupportCount", c.min_support_count}};
  return hex64(fnv1a(j.dump(), table_hash(t)));
}

// Directory layout: binning.json, model.bin (+ model.bin.json), rules.jsonl
// when mined, and config.json.
inline void save_artifacts(const Artifacts& a, const Config& c, const std::filesystem::path& dir) {
  if (!a.ready()) throw NotPreprocessedError("nothing to save");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "binning.json");
    out << binning_to_json(*a.binning).dump(2) << "\n";
    if (!out) throw ValidationError("cannot write " + (dir / "binning.json").string());
  }
  save_model(*a.model, (dir / "model.bin").string());
  if (a.rules) {
    std::ofstream out(dir / "rules.jsonl");
    out << rules_to_jsonl(*a.rules, *a.binning);
  } else {
    std::filesystem::remove(dir / "rules.jsonl");
  }
  std::ofstream cfg(dir / "config.json");
  cfg << to_json(c).dump(2) << "\n";
}

inline Artifacts load_artifacts(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "binning.json") || !std::filesystem::exists(dir / "model.bin"))
    throw NotPreprocessedError("no artifacts in " + dir.string());
  Artifacts a;
  a.binning = std::make_shared<const BinningMap>(
      binning_from_json(nlohmann::ordered_json::parse(read_file((dir / "binning.json").string()))));
  a.model = std::make_shared<const EmbeddingModel>(load_model((dir / "model.bin").string()));
  if (std::filesystem::exists(dir / "rules.jsonl"))
    a.rules = std::make_shared<const RuleSet>(rules_from_jsonl(read_file((dir / "rules.jsonl").string()), *a.binning));
  return a;
}

enum class Method { embedding, random, naive, greedy, mab };

inline const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::embedding: return "embedding";
    case Method::random: return "random";
    case Method::naive: return "naive";
    case Method::greedy: return "greedy";
    case Method::mab: return "mab";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "embedding") return Method::embedding;
  if (s == "random") return Method::random;
  if (s == "naive") return Method::naive;
  if (s == "greedy") return Method::greedy;
  if (s == "mab") return Method::mab;
  throw ParameterError("unknown method '" + std::string(s) + "'");
}

struct SelectOptions {
  Method method = Method::embedding;
  SelectionRequest request;
  bool highlight = true;
  SearchBudget random_budget{std::nullopt, std::chrono::milliseconds(1000)};
  MabOptions mab;
};

// Rules active for a request: with targets, only those touching a target.
inline RuleSet active_rules(const RuleSet& rs, const BinningMap& b, const std::vector<std::string>& targets) {
  return targets.empty() ? rs : filter_rules_by_targets(rs, b, targets);
}

// Runs any selector on Q(T) and packages the common result. Baselines that
// need no artifacts bin the query result on the fly when none exist.
inline SubTableResult run_selection(const Table& t, const Artifacts& a, const SelectOptions& o, const Config& c = {},
                                    const std::string& base_ref = {}) {
  const auto& req = o.request;
  if (o.method == Method::embedding) {
    if (!a.ready()) throw NotPreprocessedError("the embedding method needs preprocessing first");
    std::optional<RuleSet> rs;
    if (a.rules) rs = active_rules(*a.rules, *a.binning, req.targets);
    auto r = select_subtable(t, req, *a.model, a.binning, rs ? &*rs : nullptr, base_ref);
    if (!o.highlight) r.highlights.clear();
    return r;
  }

  if (req.k == 0 || req.l == 0) throw ParameterError("k and l must be at least 1");
  if (!(req.alpha >= 0 && req.alpha <= 1)) throw ConfigError("alpha must lie in [0,1]");
  if (o.method == Method::greedy && !a.rules) throw NotPreprocessedError("the greedy method needs mined rules");
  SubTableResult res;
  const Table q = req.query ? apply_query(t, *req.query) : t;
  if (q.rows() == 0) throw SelectionError("the query selects no rows");
  for (const auto& target : req.targets)
    if (!q.schema().index_of(target)) throw ValidationError("target column '" + target + "' is not in the query result");
  std::size_t k = req.k, l = req.l;
  if (k > q.rows()) {
    res.warnings.push_back("k=" + std::to_string(k) + " exceeds the " + std::to_string(q.rows()) + " rows; using " +
                           std::to_string(q.rows()));
    k = q.rows();
  }
  if (l > q.cols()) {
    res.warnings.push_back("l=" + std::to_string(l) + " exceeds the " + std::to_string(q.cols()) + " columns; using " +
                           std::to_string(q.cols()));
    l = q.cols();
  }
  std::vector<std::string> targets;
  for (const auto& x : req.targets)
    if (std::find(targets.begin(), targets.end(), x) == targets.end()) targets.push_back(x);
  if (targets.size() > l) throw ParameterError("more target columns than l");

  const Table nq = normalize_values(q);
  const auto binning = a.binning ? a.binning : std::make_shared<const BinningMap>(compute_binning(nq, c.bins));
  const BinnedTable bt = apply_binning(nq, binning, base_ref);
  const RuleSet rs = a.rules ? active_rules(*a.rules, *binning, targets) : RuleSet{};

  switch (o.method) {
    case Method::random:
      res.subtable = random_best(bt, k, l, rs, req.alpha, o.random_budget, req.seed, targets).subtable;
      break;
    case Method::naive:
      res.subtable = naive_clustering(q, k, l, req.seed, targets, base_ref);
      break;
    case Method::greedy:
      res.subtable = exact_column_selection(bt, k, l, rs, targets).subtable;
      break;
    case Method::mab: {
      auto m = o.mab;
      m.seed = req.seed;
      res.subtable = mab_ucb(bt, k, l, rs, req.alpha, m, targets).subtable;
      break;
    }
    case Method::embedding: break;
  }
  res.subtable.base_ref = base_ref;
  std::sort(res.subtable.row_ids.begin(), res.subtable.row_ids.end());
  // Columns in schema order.
  std::vector<std::size_t> col_idx;
  for (std::size_t j = 0; j < q.cols(); ++j)
    if (std::find(res.subtable.columns.begin(), res.subtable.columns.end(), q.schema()[j].name) != res.subtable.columns.end())
      col_idx.push_back(j);
  res.subtable.columns.clear();
  for (auto j : col_idx) res.subtable.columns.push_back(q.schema()[j].name);
  std::vector<std::size_t> positions;
  for (auto id : res.subtable.row_ids) positions.push_back(*q.position_of(id));
  res.values = take(q, positions, col_idx);
  if (a.rules) {
    CoverageEvaluator ev(bt, rs);
    if (o.highlight) res.highlights = attach_highlights(res.subtable, ev);
    res.score = combined_score(ev, res.subtable, req.alpha);
  }
  return res;
}

}  // namespace subtab
