#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <limits>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "subtab/error.hpp"
#include "subtab/metrics.hpp"
#include "subtab/util.hpp"

namespace subtab {

inline constexpr std::uint64_t kExactColumnGuard = 1'000'000;
inline constexpr std::uint64_t kBruteForceGuard = 2'000'000;

struct GreedyResult {
  std::vector<std::int64_t> row_ids;  // in pick order
  std::size_t covered_cells = 0;
  double coverage = 0;
  std::vector<std::size_t> gains;  // marginal cells added by each pick
};

// Greedy row selection for a fixed column set: k rounds, each adding the row
// with the largest cell gain (smallest rowId on ties). Uses lazy evaluation:
// by submodularity a stale gain is an upper bound, so a candidate whose
// recomputed gain still tops the heap is the true argmax.
inline GreedyResult greedy_row_selection(const CoverageEvaluator& ev, const std::vector<std::uint32_t>& columns,
                                         std::size_t k) {
  const BinnedTable& bt = ev.table();
  const std::size_t n = bt.rows();
  if (k > n) throw ParameterError("k=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " available rows");
  std::vector<std::uint32_t> cols = columns;
  std::sort(cols.begin(), cols.end());

  const RuleSet& rs = ev.rules();
  std::vector<char> relevant(rs.size(), 0);
  for (std::size_t r = 0; r < rs.size(); ++r) relevant[r] = ev.columns_fit(r, cols);
  std::vector<char> covered(rs.size(), 0);
  std::vector<RowBitset> col_cover(bt.binning().size());
  for (auto c : cols) col_cover[c] = RowBitset(n);
  std::vector<char> chosen(n, 0);

  std::vector<std::size_t> fresh_rules;
  std::vector<RowBitset> scratch(bt.binning().size());
  auto gain_of = [&](std::size_t pos) {
    fresh_rules.clear();
    for (auto r : ev.rules_at(pos))
      if (relevant[r] && !covered[r]) fresh_rules.push_back(r);
    if (fresh_rules.empty()) return std::size_t{0};
    if (fresh_rules.size() == 1) {
      std::size_t g = 0;
      for (auto c : rs[fresh_rules[0]].columns()) g += RowBitset::andnot_count(ev.rows_of(fresh_rules[0]), col_cover[c]);
      return g;
    }
    std::vector<std::uint32_t> touched;
    for (auto r : fresh_rules) {
      for (auto c : rs[r].columns()) {
        if (scratch[c].size() != n) scratch[c] = RowBitset(n);
        if (std::find(touched.begin(), touched.end(), c) == touched.end()) {
          touched.push_back(c);
          scratch[c].clear();
        }
        scratch[c] |= ev.rows_of(r);
      }
    }
    std::size_t g = 0;
    for (auto c : touched) g += RowBitset::andnot_count(scratch[c], col_cover[c]);
    return g;
  };

  // Heap entries: (bound, -rowId, position, round when computed).
  struct Entry {
    std::size_t bound;
    std::int64_t row_id;
    std::size_t pos;
    std::size_t round;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.row_id > b.row_id;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (std::size_t p = 0; p < n; ++p) heap.push({std::numeric_limits<std::size_t>::max(), bt.row_ids()[p], p, SIZE_MAX});

  GreedyResult out;
  for (std::size_t round = 0; round < k; ++round) {
    while (true) {
      Entry top = heap.top();
      heap.pop();
      if (top.round == round) {
        chosen[top.pos] = 1;
        out.row_ids.push_back(top.row_id);
        out.gains.push_back(top.bound);
        for (auto r : ev.rules_at(top.pos)) {
          if (!relevant[r] || covered[r]) continue;
          covered[r] = 1;
          for (auto c : rs[r].columns()) col_cover[c] |= ev.rows_of(r);
        }
        out.covered_cells += top.bound;
        break;
      }
      top.bound = gain_of(top.pos);
      top.round = round;
      heap.push(top);
    }
  }
  out.coverage = ev.coverage_of(out.covered_cells);
  return out;
}

struct OptimizerResult {
  SubTable subtable;
  std::size_t covered_cells = 0;
  double coverage = 0;
  std::vector<std::size_t> gains;
  std::uint64_t combos_visited = 0;
  std::uint64_t combos_total = 0;
  bool exhaustive = true;  // false when a budget cut the search short
};

inline nlohmann::json to_json(const OptimizerResult& r) {
  return {{"subTable", to_json(r.subtable)}, {"coveredCells", r.covered_cells}, {"coverage", r.coverage},
          {"combosVisited", r.combos_visited}, {"combosTotal", r.combos_total}, {"exhaustive", r.exhaustive}};
}

namespace detail {

struct ColumnSpace {
  std::vector<std::uint32_t> targets;  // global ids
  std::vector<std::uint32_t> free;     // global ids, schema order
  std::size_t choose = 0;
  std::uint64_t total = 0;
};

inline ColumnSpace column_space(const BinnedTable& bt, std::size_t l, const std::vector<std::string>& targets) {
  if (l == 0) throw ParameterError("l must be at least 1");
  if (l > bt.cols())
    throw ParameterError("l=" + std::to_string(l) + " exceeds the " + std::to_string(bt.cols()) + " available columns");
  ColumnSpace s;
  std::vector<char> is_target(bt.cols(), 0);
  for (const auto& t : targets) {
    auto local = bt.local_index(t);
    if (!local) throw ValidationError("unknown target column '" + t + "'");
    if (!is_target[*local]) s.targets.push_back(bt.column_ids()[*local]);
    is_target[*local] = 1;
  }
  if (s.targets.size() > l) throw ParameterError("more target columns than l");
  for (std::size_t j = 0; j < bt.cols(); ++j)
    if (!is_target[j]) s.free.push_back(bt.column_ids()[j]);
  s.choose = l - s.targets.size();
  s.total = binomial(s.free.size(), s.choose);
  return s;
}

// The rank-th (0-based) size-k combination of {0..n-1} in lexicographic order.
inline std::vector<std::size_t> unrank_combination(std::uint64_t rank, std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  out.reserve(k);
  std::size_t next = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t v = next;; ++v) {
      const std::uint64_t block = binomial(n - v - 1, k - i - 1);
      if (rank < block) {
        out.push_back(v);
        next = v + 1;
        break;
      }
      rank -= block;
    }
  }
  return out;
}

// Advances `c` to the next lexicographic combination of {0..n-1}; false at the end.
inline bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  for (std::size_t i = k; i-- > 0;) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

inline std::vector<std::uint32_t> assemble(const ColumnSpace& s, const std::vector<std::size_t>& pick) {
  std::vector<std::uint32_t> cols = s.targets;
  for (auto i : pick) cols.push_back(s.free[i]);
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline SubTable make_subtable(const BinnedTable& bt, std::vector<std::int64_t> rows,
                              const std::vector<std::uint32_t>& sorted_cols) {
  SubTable s;
  s.base_ref = bt.base_ref();
  std::sort(rows.begin(), rows.end());
  s.row_ids = std::move(rows);
  for (auto c : sorted_cols) s.columns.push_back(bt.binning()[c].column());
  return s;
}

// Reducer order: higher coverage, then lexicographically smaller column set.
inline bool better(std::size_t cells, const std::vector<std::uint32_t>& cols, std::size_t best_cells,
                   const std::vector<std::uint32_t>& best_cols, bool have_best) {
  if (!have_best) return true;
  if (cells != best_cells) return cells > best_cells;
  return cols < best_cols;
}

}  // namespace detail

// Algorithm 1: every column set of size l containing the targets, each
// filled by greedy row selection; the best coverage wins.
inline OptimizerResult exact_column_selection(const BinnedTable& bt, std::size_t k, std::size_t l, const RuleSet& rs,
                                              const std::vector<std::string>& targets = {}) {
  auto space = detail::column_space(bt, l, targets);
  if (space.total > kExactColumnGuard)
    throw SizeGuardError("exact column selection would visit " + std::to_string(space.total) +
                         " column sets (limit " + std::to_string(kExactColumnGuard) + "); use semi-greedy instead");
  if (k > bt.rows()) throw ParameterError("k exceeds the number of rows");
  CoverageEvaluator ev(bt, rs);
  OptimizerResult best;
  std::vector<std::uint32_t> best_cols;
  GreedyResult best_g;
  bool have = false;
  std::vector<std::size_t> pick(space.choose);
  std::iota(pick.begin(), pick.end(), 0);
  do {
    auto cols = detail::assemble(space, pick);
    auto g = greedy_row_selection(ev, cols, k);
    ++best.combos_visited;
    if (detail::better(g.covered_cells, cols, best_g.covered_cells, best_cols, have)) {
      best_g = std::move(g);
      best_cols = std::move(cols);
      have = true;
    }
  } while (detail::next_combination(pick, space.free.size()));
  best.subtable = detail::make_subtable(bt, best_g.row_ids, best_cols);
  best.covered_cells = best_g.covered_cells;
  best.coverage = best_g.coverage;
  best.gains = best_g.gains;
  best.combos_total = space.total;
  return best;
}

struct OptimizerBudget {
  std::chrono::milliseconds wall_clock{std::chrono::hours(5)};
  std::optional<std::uint64_t> max_combos;  // unset = unlimited
  std::uint64_t seed = 42;
  unsigned threads = 1;
};

// Same inner loop as exact_column_selection, with the column sets visited in
// a seeded random order and the search cut at the budget.
inline OptimizerResult semi_greedy(const BinnedTable& bt, std::size_t k, std::size_t l, const RuleSet& rs,
                                   const std::vector<std::string>& targets, const OptimizerBudget& budget) {
  if (budget.wall_clock.count() <= 0) throw ConfigError("wall-clock budget must be positive");
  auto space = detail::column_space(bt, l, targets);
  if (k > bt.rows()) throw ParameterError("k exceeds the number of rows");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t limit = budget.max_combos ? std::min(*budget.max_combos, space.total) : space.total;

  // Visiting order: a full shuffle when it fits in memory, otherwise distinct
  // random ranks drawn on the fly.
  std::mt19937_64 rng(budget.seed);
  std::vector<std::uint64_t> order;
  constexpr std::uint64_t kShuffleLimit = 4'000'000;
  if (space.total <= kShuffleLimit) {
    order.resize(space.total);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(limit);
  } else {
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint64_t> dist(0, space.total - 1);
    const std::uint64_t want = std::min<std::uint64_t>(limit, kShuffleLimit);
    while (order.size() < want) {
      const auto r = dist(rng);
      if (seen.insert(r).second) order.push_back(r);
    }
  }

  CoverageEvaluator ev(bt, rs);
  std::atomic<std::uint64_t> next{0}, visited{0};
  std::mutex mu;
  bool have = false;
  GreedyResult best_g;
  std::vector<std::uint32_t> best_cols;
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= order.size()) return;
      // Always evaluate at least one combination so the result is a real sub-table.
      if (i > 0 && std::chrono::steady_clock::now() - start >= budget.wall_clock) return;
      auto cols = detail::assemble(space, detail::unrank_combination(order[i], space.free.size(), space.choose));
      auto g = greedy_row_selection(ev, cols, k);
      ++visited;
      std::lock_guard lock(mu);
      if (detail::better(g.covered_cells, cols, best_g.covered_cells, best_cols, have)) {
        best_g = std::move(g);
        best_cols = std::move(cols);
        have = true;
      }
    }
  };
  const unsigned threads = std::max(1u, budget.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  OptimizerResult out;
  out.subtable = detail::make_subtable(bt, best_g.row_ids, best_cols);
  out.covered_cells = best_g.covered_cells;
  out.coverage = best_g.coverage;
  out.gains = best_g.gains;
  out.combos_visited = visited.load();
  out.combos_total = space.total;
  out.exhaustive = out.combos_visited == space.total;
  return out;
}

struct BruteForceResult {
  SubTable subtable;
  ScoreReport score;
};

// Exact optimum of the combined score over every k x l sub-table. Column
// sets are the outer loop and row sets the inner one, both lexicographic; a
// candidate replaces the incumbent only when strictly better.
inline BruteForceResult brute_force_optimal(const BinnedTable& bt, std::size_t k, std::size_t l, const RuleSet& rs,
                                            double alpha = 0.5) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (k == 0 || k > bt.rows()) throw ParameterError("k must lie in [1, rows]");
  if (l == 0 || l > bt.cols()) throw ParameterError("l must lie in [1, columns]");
  const std::uint64_t work = saturating_mul(binomial(bt.rows(), k), binomial(bt.cols(), l));
  if (work > kBruteForceGuard)
    throw SizeGuardError("brute force would score " + std::to_string(work) + " sub-tables (limit " +
                         std::to_string(kBruteForceGuard) + ")");
  CoverageEvaluator ev(bt, rs);

  std::vector<std::size_t> by_id(bt.rows());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return bt.row_ids()[a] < bt.row_ids()[b]; });

  double best_score = -1;
  std::vector<std::size_t> best_rows, best_local;
  std::vector<std::size_t> cpick(l);
  std::iota(cpick.begin(), cpick.end(), 0);
  do {
    std::vector<std::uint32_t> global;
    for (auto c : cpick) global.push_back(bt.column_ids()[c]);
    std::sort(global.begin(), global.end());
    std::vector<std::size_t> rpick(k);
    std::iota(rpick.begin(), rpick.end(), 0);
    std::vector<std::size_t> rows(k);
    do {
      for (std::size_t i = 0; i < k; ++i) rows[i] = by_id[rpick[i]];
      const double cov = ev.coverage_of(ev.union_cells(ev.covered(rows, global)));
      const double div = detail::diversity_at(bt, rows, cpick);
      const double score = alpha * cov + (1.0 - alpha) * div;
      if (score > best_score + 1e-12) {
        best_score = score;
        best_rows = rows;
        best_local = cpick;
      }
    } while (detail::next_combination(rpick, bt.rows()));
  } while (detail::next_combination(cpick, bt.cols()));

  BruteForceResult out;
  std::vector<std::int64_t> ids;
  for (auto p : best_rows) ids.push_back(bt.row_ids()[p]);
  std::vector<std::uint32_t> global;
  for (auto c : best_local) global.push_back(bt.column_ids()[c]);
  std::sort(global.begin(), global.end());
  out.subtable = detail::make_subtable(bt, ids, global);
  out.score = combined_score(ev, out.subtable, alpha);
  return out;
}

}  // namespace subtab
