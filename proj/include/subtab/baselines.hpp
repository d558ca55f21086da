#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtab/binning.hpp"
#include "subtab/error.hpp"
#include "subtab/kmeans.hpp"
#include "subtab/metrics.hpp"
#include "subtab/rules.hpp"
#include "subtab/table.hpp"

namespace subtab {

struct BaselineResult {
  SubTable subtable;
  ScoreReport score;
  std::size_t evaluations = 0;
};

inline nlohmann::json to_json(const BaselineResult& r) {
  return {{"subTable", to_json(r.subtable)}, {"score", to_json(r.score)}, {"evaluations", r.evaluations}};
}

// Either bound may be set; with neither a single candidate is drawn.
struct SearchBudget {
  std::optional<std::size_t> iterations;
  std::optional<std::chrono::milliseconds> wall_clock;
};

namespace detail {

// Row positions and local column indices of a candidate, with its score.
struct Candidate {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  ScoreReport score;
};

inline ScoreReport score_positions(const CoverageEvaluator& ev, const std::vector<std::size_t>& rows,
                                   const std::vector<std::size_t>& cols, double alpha) {
  const BinnedTable& bt = ev.table();
  std::vector<std::uint32_t> global;
  for (auto c : cols) global.push_back(bt.column_ids()[c]);
  std::sort(global.begin(), global.end());
  ScoreReport rep;
  rep.alpha = alpha;
  rep.covered_rule_ids = ev.covered(rows, global);
  rep.covered_cell_count = ev.union_cells(rep.covered_rule_ids);
  rep.upcov = ev.upcov();
  rep.cell_coverage = ev.coverage_of(rep.covered_cell_count);
  rep.diversity = diversity_at(bt, rows, cols);
  rep.combined = alpha * rep.cell_coverage + (1.0 - alpha) * rep.diversity;
  return rep;
}

inline SubTable to_subtable(const BinnedTable& bt, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  std::sort(cols.begin(), cols.end());
  SubTable s;
  s.base_ref = bt.base_ref();
  for (auto p : rows) s.row_ids.push_back(bt.row_ids()[p]);
  std::sort(s.row_ids.begin(), s.row_ids.end());
  for (auto c : cols) s.columns.push_back(bt.column_name(c));
  return s;
}

// Local indices of the target columns and of the remaining (free) columns.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_targets(
    const BinnedTable& bt, const std::vector<std::string>& targets, std::size_t l) {
  std::vector<std::size_t> fixed, free;
  for (const auto& t : targets) {
    auto c = bt.local_index(t);
    if (!c) throw ValidationError("target column '" + t + "' is not in the table");
    if (std::find(fixed.begin(), fixed.end(), *c) == fixed.end()) fixed.push_back(*c);
  }
  if (fixed.size() > l) throw ParameterError("more target columns than l");
  for (std::size_t j = 0; j < bt.cols(); ++j)
    if (std::find(fixed.begin(), fixed.end(), j) == fixed.end()) free.push_back(j);
  return {fixed, free};
}

inline void check_shape(const BinnedTable& bt, std::size_t k, std::size_t l) {
  if (k == 0 || l == 0) throw ParameterError("k and l must be at least 1");
  if (k > bt.rows()) throw ParameterError("k exceeds the number of rows");
  if (l > bt.cols()) throw ParameterError("l exceeds the number of columns");
}

}  // namespace detail

// Best of repeated uniform k-row, l-column draws (targets always included).
inline BaselineResult random_best(const BinnedTable& bt, std::size_t k, std::size_t l, const RuleSet& rs, double alpha,
                                  const SearchBudget& budget, std::uint64_t seed = 42,
                                  const std::vector<std::string>& targets = {}) {
  detail::check_shape(bt, k, l);
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0,1]");
  if (budget.wall_clock && budget.wall_clock->count() <= 0) throw ConfigError("wall-clock budget must be positive");
  const CoverageEvaluator ev(bt, rs);
  auto [fixed, free] = detail::split_targets(bt, targets, l);
  const std::size_t draw_cols = l - fixed.size();

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> row_pool(bt.rows());
  std::iota(row_pool.begin(), row_pool.end(), 0);
  auto sample = [&](std::vector<std::size_t>& pool, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
      std::swap(pool[i], pool[std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng)]);
    return std::vector<std::size_t>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  };

  const auto start = std::chrono::steady_clock::now();
  BaselineResult best;
  best.score.combined = -1;
  std::size_t done = 0;
  while (true) {
    auto rows = sample(row_pool, k);
    auto cols = fixed;
    for (auto c : sample(free, draw_cols)) cols.push_back(c);
    auto score = detail::score_positions(ev, rows, cols, alpha);
    ++done;
    if (score.combined > best.score.combined) {
      best.score = std::move(score);
      best.subtable = detail::to_subtable(bt, rows, cols);
    }
    if (budget.iterations && done >= *budget.iterations) break;
    if (budget.wall_clock && std::chrono::steady_clock::now() - start >= *budget.wall_clock) break;
    if (!budget.iterations && !budget.wall_clock) break;
  }
  best.evaluations = done;
  return best;
}

// Numeric encoding used by the naive clustering baseline: categorical columns
// become one-hot blocks (the most frequent values, the rest pooled), continuous
// columns are min-max scaled; missing cells encode as all zeros.
struct OneHotEncoding {
  std::size_t width = 0;
  std::vector<float> rows;     // rows() x width
  std::vector<float> columns;  // cols() x rows(), one scalar per cell
};

inline OneHotEncoding one_hot_encode(const Table& t, std::size_t max_levels = 50) {
  const std::size_t n = t.rows(), m = t.cols();
  std::vector<std::size_t> offset(m + 1, 0);
  std::vector<std::map<std::string, std::size_t>> level(m);
  std::vector<std::pair<double, double>> range(m, {0, 0});
  for (std::size_t j = 0; j < m; ++j) {
    const auto& col = t.column(j);
    std::size_t width = 1;
    if (t.schema()[j].kind == ColumnKind::continuous) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < n; ++i)
        if (!col.missing[i]) lo = std::min(lo, col.numbers[i]), hi = std::max(hi, col.numbers[i]);
      range[j] = {lo, hi};
    } else {
      std::map<std::string, std::size_t> freq;
      for (std::size_t i = 0; i < n; ++i)
        if (!col.missing[i]) ++freq[col.strings[i]];
      std::vector<std::pair<std::size_t, std::string>> ranked;
      for (const auto& [v, c] : freq) ranked.emplace_back(c, v);
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      const std::size_t keep = std::min(ranked.size(), max_levels);
      for (std::size_t r = 0; r < keep; ++r) level[j][ranked[r].second] = r;
      width = keep + (ranked.size() > keep ? 1 : 0);
      width = std::max<std::size_t>(width, 1);
    }
    offset[j + 1] = offset[j] + width;
  }

  OneHotEncoding e;
  e.width = offset[m];
  e.rows.assign(n * e.width, 0.0f);
  e.columns.assign(m * n, 0.0f);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& col = t.column(j);
    const std::size_t levels = offset[j + 1] - offset[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (col.missing[i]) continue;
      if (t.schema()[j].kind == ColumnKind::continuous) {
        const auto [lo, hi] = range[j];
        const float v = hi > lo ? static_cast<float>((col.numbers[i] - lo) / (hi - lo)) : 0.0f;
        e.rows[i * e.width + offset[j]] = v;
        e.columns[j * n + i] = v;
      } else {
        auto it = level[j].find(col.strings[i]);
        const std::size_t idx = it == level[j].end() ? levels - 1 : it->second;
        e.rows[i * e.width + offset[j] + idx] = 1.0f;
        e.columns[j * n + i] = levels > 1 ? static_cast<float>(idx) / static_cast<float>(levels - 1) : 0.0f;
      }
    }
  }
  return e;
}

// k-means on one-hot rows and on per-column cell encodings, keeping the
// representatives. Needs no preprocessing artifacts.
inline SubTable naive_clustering(const Table& t, std::size_t k, std::size_t l, std::uint64_t seed = 42,
                                 const std::vector<std::string>& targets = {}, const std::string& base_ref = {}) {
  if (t.rows() == 0) throw EmptyTableError("cannot select from an empty table");
  if (k == 0 || l == 0) throw ParameterError("k and l must be at least 1");
  k = std::min(k, t.rows());
  l = std::min(l, t.cols());
  std::vector<std::size_t> fixed;
  for (const auto& name : targets) {
    auto j = t.schema().index_of(name);
    if (!j) throw ValidationError("target column '" + name + "' is not in the table");
    if (std::find(fixed.begin(), fixed.end(), *j) == fixed.end()) fixed.push_back(*j);
  }
  if (fixed.size() > l) throw ParameterError("more target columns than l");

  const auto enc = one_hot_encode(t);
  KMeansOptions km;
  km.seed = seed;
  SubTable s;
  s.base_ref = base_ref;
  s.row_ids = centroid_representatives(t.row_ids(), enc.rows, enc.width, k, km);

  std::vector<std::size_t> cols = fixed;
  if (l > fixed.size()) {
    std::vector<std::int64_t> ids;
    std::vector<float> vec;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (std::find(fixed.begin(), fixed.end(), j) != fixed.end()) continue;
      ids.push_back(static_cast<std::int64_t>(j));
      vec.insert(vec.end(), enc.columns.begin() + static_cast<std::ptrdiff_t>(j * t.rows()),
                 enc.columns.begin() + static_cast<std::ptrdiff_t>((j + 1) * t.rows()));
    }
    km.seed = seed + 1;
    for (auto j : centroid_representatives(ids, vec, t.rows(), l - fixed.size(), km))
      cols.push_back(static_cast<std::size_t>(j));
  }
  std::sort(cols.begin(), cols.end());
  for (auto j : cols) s.columns.push_back(t.schema()[j].name);
  return s;
}

struct MabOptions {
  std::size_t iterations = 1000;
  double ucb_c = std::sqrt(2.0);
  std::uint64_t seed = 42;
};

struct MabResult : BaselineResult {
  std::vector<std::size_t> row_pulls;  // by row position
  std::vector<std::size_t> col_pulls;  // by local column index
};

// UCB bandit over independent row-arms and column-arms. Each iteration pulls
// the k rows and l columns with the highest index, scores that sub-table and
// credits the reward to every participating arm. Unpulled arms rank first,
// in a seeded random order.
inline MabResult mab_ucb(const BinnedTable& bt, std::size_t k, std::size_t l, const RuleSet& rs, double alpha,
                         const MabOptions& opt = {}, const std::vector<std::string>& targets = {}) {
  detail::check_shape(bt, k, l);
  if (opt.iterations == 0) throw ParameterError("iterations must be at least 1");
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0,1]");
  const CoverageEvaluator ev(bt, rs);
  auto [fixed, free] = detail::split_targets(bt, targets, l);
  const std::size_t pick_cols = l - fixed.size();

  std::mt19937_64 rng(opt.seed);
  struct Arms {
    std::vector<std::size_t> pulls;
    std::vector<double> reward;
    std::vector<std::size_t> priority;  // tie order among equal indices
  };
  auto make_arms = [&](std::size_t count) {
    Arms a{std::vector<std::size_t>(count, 0), std::vector<double>(count, 0.0), std::vector<std::size_t>(count)};
    std::iota(a.priority.begin(), a.priority.end(), 0);
    std::shuffle(a.priority.begin(), a.priority.end(), rng);
    return a;
  };
  Arms rows = make_arms(bt.rows()), cols = make_arms(free.size());

  auto top = [&](const Arms& a, std::size_t count, std::size_t t) {
    std::vector<double> index(a.pulls.size());
    for (std::size_t i = 0; i < index.size(); ++i)
      index[i] = a.pulls[i] == 0 ? std::numeric_limits<double>::infinity()
                                 : a.reward[i] / static_cast<double>(a.pulls[i]) +
                                       opt.ucb_c * std::sqrt(std::log(static_cast<double>(t)) / static_cast<double>(a.pulls[i]));
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), 0);
    auto better = [&](std::size_t x, std::size_t y) {
      if (index[x] != index[y]) return index[x] > index[y];
      return a.priority[x] < a.priority[y];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), better);
    order.resize(count);
    return order;
  };

  MabResult best;
  best.score.combined = -1;
  for (std::size_t t = 1; t <= opt.iterations; ++t) {
    const auto r = top(rows, k, t);
    const auto c = top(cols, pick_cols, t);
    std::vector<std::size_t> chosen_cols = fixed;
    for (auto i : c) chosen_cols.push_back(free[i]);
    auto score = detail::score_positions(ev, r, chosen_cols, alpha);
    for (auto i : r) ++rows.pulls[i], rows.reward[i] += score.combined;
    for (auto i : c) ++cols.pulls[i], cols.reward[i] += score.combined;
    if (score.combined > best.score.combined) {
      best.score = std::move(score);
      best.subtable = detail::to_subtable(bt, r, chosen_cols);
    }
  }
  best.evaluations = opt.iterations;
  best.row_pulls = rows.pulls;
  best.col_pulls.assign(bt.cols(), 0);
  for (std::size_t i = 0; i < free.size(); ++i) best.col_pulls[free[i]] = cols.pulls[i];
  for (auto f : fixed) best.col_pulls[f] = opt.iterations;
  return best;
}

}  // namespace subtab
