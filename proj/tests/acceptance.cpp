// Acceptance run: one PASS/FAIL line per criterion. Tolerances and workload
// sizes are fixed below. Exit status is 0 once every check has run; --strict
// turns any FAIL into exit 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subtab/subtab.hpp"

using namespace subtab;

namespace {

constexpr double kOneMinusInvE = 1.0 - 1.0 / 2.718281828459045;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << x;
  return o.str();
}

// Random categorical table with values drawn from `levels` symbols per column.
Table random_table(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t levels) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m; ++j) names.push_back("c" + std::to_string(j));
  std::vector<std::vector<std::string>> rows(n, std::vector<std::string>(m));
  for (auto& r : rows)
    for (auto& c : r) c = "v" + std::to_string(rng() % levels);
  return table_from_rows(names, rows);
}

BinnedTable bin(const Table& t, std::size_t bins) {
  return apply_binning(t, std::make_shared<const BinningMap>(compute_binning(t, bins)), "t");
}

// ---------------------------------------------------------------------------

Outcome golden_example(const std::string& samples) {
  const auto t0 = std::chrono::steady_clock::now();
  const Table t = load_csv_file(samples + "/flights_fixture.csv");
  const auto map = std::make_shared<const BinningMap>(compute_binning(t, 5));
  const BinnedTable bt = apply_binning(t, map, "flights");
  ExhaustiveConstraints c;
  c.consequent_columns = {"CANCELLED"};
  c.min_antecedent_size = 2;
  c.min_absolute_support = 2;
  const RuleSet rs = enumerate_rules_exhaustive(bt, c);

  std::size_t first_half = 0, second_half = 0;
  for (const auto& r : rs) {
    const auto ids = matching_rows(r, bt);
    if (std::all_of(ids.begin(), ids.end(), [](auto id) { return id < 4; })) ++first_half;
    else if (std::all_of(ids.begin(), ids.end(), [](auto id) { return id >= 4; })) ++second_half;
  }

  const CoverageEvaluator ev(bt, rs);
  const std::vector<std::int64_t> rows{0, 4, 6};
  const std::vector<std::vector<std::string>> cols{{"CANCELLED", "DEP_TIME", "YEAR", "DISTANCE"},
                                                   {"CANCELLED", "DEP_TIME", "YEAR", "SCHED_DEP"},
                                                   {"CANCELLED", "DEP_TIME", "SCHED_DEP", "DISTANCE"}};
  auto sub = [&](std::size_t i) {
    SubTable s;
    s.row_ids = rows;
    // Schema order, as every selector reports them.
    for (std::size_t j = 0; j < t.cols(); ++j)
      if (std::count(cols[i].begin(), cols[i].end(), t.schema()[j].name)) s.columns.push_back(t.schema()[j].name);
    return s;
  };
  const std::size_t want_cells[] = {28, 26, 24};
  bool ok = rs.size() == 21 && first_half == 13 && second_half == 8 && ev.upcov() == 36;
  std::ostringstream d;
  d << "rules=" << rs.size() << " (" << first_half << "+" << second_half << ") upcov=" << ev.upcov();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto cov = cell_coverage(ev, sub(i));
    ok = ok && cov.covered_cells == want_cells[i];
    d << " T" << i + 1 << "=" << cov.covered_cells << "/36";
  }
  const auto s1 = combined_score(ev, sub(0)), s3 = combined_score(ev, sub(2));
  ok = ok && std::abs(s1.diversity - 0.8333) <= 1e-4 && std::abs(s3.diversity - 0.9167) <= 1e-4;
  ok = ok && std::abs(s1.combined - 0.806) <= 1e-3 && std::abs(s3.combined - 0.792) <= 1e-3;
  d << " div=" << fmt(s1.diversity) << "/" << fmt(s3.diversity) << " combined=" << fmt(s1.combined, 3) << "/"
    << fmt(s3.combined, 3);

  const auto bf = brute_force_optimal(bt, 3, 4, rs, 0.5);
  auto got = bf.subtable;
  std::sort(got.row_ids.begin(), got.row_ids.end());
  auto want = sub(0);
  std::set<std::string> gc(got.columns.begin(), got.columns.end()), wc(want.columns.begin(), want.columns.end());
  const bool bf_ok = got.row_ids == want.row_ids && gc == wc;
  ok = ok && bf_ok;
  const double secs = seconds_since(t0);
  ok = ok && secs < 1.0;
  d << " brute-force=" << (bf_ok ? "T1" : "other") << " time=" << fmt(secs, 3) << "s";
  return {ok, d.str()};
}

Outcome greedy_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  const std::size_t instances = 200;
  std::size_t violations = 0, with_rules = 0;
  double worst = 1.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = 4 + rng() % 9, m = 3 + rng() % 4, levels = 2 + rng() % 2;
    const std::size_t k = 1 + rng() % 3, l = 1 + rng() % 3;
    const BinnedTable bt = bin(random_table(rng, n, m, levels), 3);
    ExhaustiveConstraints c;
    c.min_absolute_support = 1 + rng() % 2;
    const RuleSet rs = enumerate_rules_exhaustive(bt, c);
    const auto g = exact_column_selection(bt, k, l, rs);
    const auto bf = brute_force_optimal(bt, k, l, rs, 1.0);
    const double opt = static_cast<double>(bf.score.covered_cell_count);
    if (opt > 0) {
      ++with_rules;
      worst = std::min(worst, static_cast<double>(g.covered_cells) / opt);
    }
    if (static_cast<double>(g.covered_cells) + 1e-9 < kOneMinusInvE * opt) ++violations;
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 300,
          std::to_string(instances) + " instances (" + std::to_string(with_rules) + " with rules), violations=" +
              std::to_string(violations) + " worst ratio=" + fmt(worst) + " bound=" + fmt(kOneMinusInvE) +
              " time=" + fmt(secs, 1) + "s"};
}

Outcome metric_properties(const std::string& samples) {
  std::mt19937_64 rng(77);
  // Rows: every S subset T and x outside T, on a random column subset.
  std::size_t instances = 0, checks = 0, row_failures = 0;
  for (; instances < 100; ++instances) {
    const std::size_t n = 4 + rng() % 7, m = 3 + rng() % 3;
    const BinnedTable bt = bin(random_table(rng, n, m, 2 + rng() % 2), 3);
    ExhaustiveConstraints c;
    c.min_absolute_support = 1 + rng() % 2;
    const RuleSet rs = enumerate_rules_exhaustive(bt, c);
    const CoverageEvaluator ev(bt, rs);
    std::vector<std::uint32_t> cols;
    for (std::size_t j = 0; j < m; ++j)
      if (j < 2 || rng() % 3) cols.push_back(bt.column_ids()[j]);
    std::sort(cols.begin(), cols.end());
    const std::uint32_t full = (1u << n) - 1;
    std::vector<long> f(full + 1);
    for (std::uint32_t mask = 0; mask <= full; ++mask) {
      std::vector<std::size_t> pos;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) pos.push_back(i);
      f[mask] = static_cast<long>(ev.union_cells(ev.covered(pos, cols)));
    }
    for (std::uint32_t b = 0; b <= full; ++b)
      for (std::uint32_t a = b;; a = (a - 1) & b) {
        if (f[a] > f[b]) ++row_failures;
        for (std::size_t x = 0; x < n; ++x) {
          if (b & (1u << x)) continue;
          ++checks;
          const long ga = f[a | (1u << x)] - f[a], gb = f[b | (1u << x)] - f[b];
          if (ga < 0 || ga < gb) ++row_failures;
        }
        if (a == 0) break;
      }
  }

  // Columns are not submodular: CANCELLED adds nothing next to DEP_TIME alone,
  // but completes rules once YEAR is present too.
  const Table t = load_csv_file(samples + "/flights_fixture.csv");
  const BinnedTable fb = bin(t, 5);
  ExhaustiveConstraints fc;
  fc.consequent_columns = {"CANCELLED"};
  fc.min_antecedent_size = 2;
  fc.min_absolute_support = 2;
  const RuleSet frs = enumerate_rules_exhaustive(fb, fc);
  const CoverageEvaluator fev(fb, frs);
  std::vector<std::size_t> all_rows(fb.rows());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  auto fcov = [&](std::vector<std::string> names) {
    std::vector<std::uint32_t> g;
    for (const auto& nm : names) g.push_back(static_cast<std::uint32_t>(*fb.binning().index_of(nm)));
    std::sort(g.begin(), g.end());
    return static_cast<long>(fev.union_cells(fev.covered(all_rows, g)));
  };
  const long gain_small = fcov({"DEP_TIME", "CANCELLED"}) - fcov({"DEP_TIME"});
  const long gain_large = fcov({"DEP_TIME", "YEAR", "CANCELLED"}) - fcov({"DEP_TIME", "YEAR"});
  const bool witness = gain_large > gain_small;

  // Fuzzing: random tables, rules, sub-tables and alpha.
  std::size_t fuzz = 0, fuzz_failures = 0;
  for (; fuzz < 1000; ++fuzz) {
    const std::size_t n = 2 + rng() % 19, m = 2 + rng() % 5;
    const BinnedTable bt = bin(random_table(rng, n, m, 1 + rng() % 4), 1 + rng() % 5);
    RuleSet rs;
    if (rng() % 2) {
      ExhaustiveConstraints c;
      c.min_absolute_support = 1 + rng() % 3;
      rs = enumerate_rules_exhaustive(bt, c);
    } else {
      AprioriParams p;
      p.min_support = 0.05 * static_cast<double>(1 + rng() % 8);
      p.min_confidence = 0.1 * static_cast<double>(rng() % 10);
      p.min_rule_size = 2 + rng() % 2;
      rs = mine_rules_apriori(bt, p);
    }
    const std::size_t k = 1 + rng() % n, l = 1 + rng() % m;
    std::vector<std::size_t> rows(n), cols(m);
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    std::shuffle(cols.begin(), cols.end(), rng);
    rows.resize(k);
    cols.resize(l);
    const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto s = combined_score(detail::to_subtable(bt, rows, cols), bt, rs, alpha);
    auto in01 = [](double x) { return std::isfinite(x) && x >= 0 && x <= 1; };
    if (!in01(s.cell_coverage) || !in01(s.diversity) || !in01(s.combined) ||
        std::abs(s.combined - (alpha * s.cell_coverage + (1 - alpha) * s.diversity)) > 1e-12)
      ++fuzz_failures;
  }

  return {row_failures == 0 && witness && fuzz_failures == 0,
          "row checks=" + std::to_string(checks) + " over " + std::to_string(instances) +
              " instances, failures=" + std::to_string(row_failures) + "; column witness gain " +
              std::to_string(gain_small) + " -> " + std::to_string(gain_large) + (witness ? " (violation shown)" : "") +
              "; fuzz cases=" + std::to_string(fuzz) + " out of range=" + std::to_string(fuzz_failures)};
}

Outcome apriori_correctness() {
  using Key = std::pair<std::vector<Item>, std::vector<Item>>;
  auto keys = [](const RuleSet& rs) {
    std::set<Key> out;
    for (const auto& r : rs) out.emplace(r.antecedent(), r.consequent());
    return out;
  };
  std::mt19937_64 rng(4242);
  std::size_t tables = 0, mismatches = 0, compared = 0;
  for (; tables < 60; ++tables) {
    const std::size_t n = 5 + rng() % 26, m = 2 + rng() % 5;
    const BinnedTable bt = bin(random_table(rng, n, m, 2 + rng() % 3), 4);
    for (std::size_t cap : {std::size_t{0}, std::size_t{2}}) {
      AprioriParams p;
      p.min_support = 0.1 + 0.1 * static_cast<double>(rng() % 3);
      p.min_confidence = 0.3 + 0.2 * static_cast<double>(rng() % 3);
      p.min_rule_size = 2 + rng() % 2;
      p.max_consequent_size = cap;
      ExhaustiveConstraints c;
      c.min_absolute_support = min_count_for(p.min_support, n);
      c.min_confidence = p.min_confidence;
      c.min_rule_size = p.min_rule_size;
      c.max_consequent_size = cap;
      const auto a = mine_rules_apriori(bt, p);
      const auto e = enumerate_rules_exhaustive(bt, c);
      compared += e.size();
      if (keys(a) != keys(e)) ++mismatches;
    }
  }

  std::size_t planted = 0, recovered = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const std::size_t clusters = 2 + seed % 3;
    const auto p = generate_planted_table(600 + 100 * seed, 12, clusters, 2, 0.0, seed);
    const auto map = std::make_shared<const BinningMap>(compute_binning(p.table, 8));
    const BinnedTable bt = apply_binning(p.table, map);
    AprioriParams ap;
    ap.min_support = 0.8 / static_cast<double>(clusters);
    ap.min_confidence = 0.9;
    const auto rs = mine_rules_apriori(bt, ap);
    for (const auto& r : p.rules) {
      ++planted;
      if (contains_planted(rs, *map, r)) ++recovered;
    }
  }
  return {mismatches == 0 && recovered == planted,
          std::to_string(tables) + " tables x 2 consequent caps, " + std::to_string(compared) +
              " rules compared, mismatches=" + std::to_string(mismatches) + "; planted recovered " +
              std::to_string(recovered) + "/" + std::to_string(planted) + " at noise 0"};
}

Outcome embedding_sanity() {
  std::size_t separated = 0;
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    // Two row groups with disjoint values in every column.
    std::mt19937_64 rng(seed);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < 6; ++j) names.push_back("c" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < 400; ++i) {
      const char group = (i % 2) ? 'b' : 'a';
      std::vector<std::string> r;
      for (std::size_t j = 0; j < 6; ++j) r.push_back(std::string(1, group) + std::to_string(rng() % 2));
      rows.push_back(std::move(r));
    }
    const BinnedTable bt = bin(table_from_rows(names, rows), 5);
    TrainingOptions o;
    o.dimension = 16;
    o.epochs = 5;
    o.seed = seed;
    const auto m = train_embedding(build_corpus(bt, {100000, 1000, seed}), o);
    double intra = 0, inter = 0;
    std::size_t ni = 0, nx = 0;
    auto group = [](const std::string& t) { return t[t.size() - 2]; };
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        const auto& a = m.vocabulary()[i];
        const auto& b = m.vocabulary()[j];
        const double cs = cosine(m.vector(a), m.vector(b));
        if (group(a) == group(b)) intra += cs, ++ni;
        else inter += cs, ++nx;
      }
    if (ni && nx && intra / static_cast<double>(ni) > inter / static_cast<double>(nx)) ++separated;
  }

  const auto p = generate_planted_table(1000, 12, 3, 2, 0.05, 9);
  const BinnedTable bt = bin(normalize_values(p.table), 8);
  TrainingOptions o;
  o.dimension = 32;
  o.seed = 9;
  o.threads = 1;
  const auto corpus = build_corpus(bt);
  const auto a = train_embedding(corpus, o), b = train_embedding(corpus, o);
  const bool identical = a.vocabulary() == b.vocabulary() && a.matrix().size() == b.matrix().size() &&
                         std::memcmp(a.matrix().data(), b.matrix().data(), a.matrix().size() * sizeof(float)) == 0;
  return {separated >= 19 && identical, "intra > inter in " + std::to_string(separated) + "/" +
                                            std::to_string(seeds) + " seeds; single-worker rerun " +
                                            (identical ? "bit-identical" : "differs")};
}

Outcome effectiveness() {
  const std::size_t seeds = 20;
  std::size_t win_r = 0, loss_r = 0, win_n = 0, loss_n = 0;
  double sum_e = 0, sum_r = 0, sum_n = 0;
  Config c;
  c.k = 10;
  c.l = 10;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto p = generate_planted_table(10000, 20, 4, 2, 0.05, seed);
    c.seed = seed;
    const Artifacts a = preprocess(p.table, c);
    const BinnedTable bt = apply_binning(normalize_values(p.table), a.binning);
    const CoverageEvaluator ev(bt, *a.rules);
    SelectionRequest req;
    req.k = c.k;
    req.l = c.l;
    req.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const auto emb = select_subtable(p.table, req, *a.model, a.binning).subtable;
    const auto ms = std::max<long long>(1, std::llround(seconds_since(t0) * 1000));
    SearchBudget budget;
    budget.wall_clock = std::chrono::milliseconds(ms);
    const auto ran = random_best(bt, c.k, c.l, *a.rules, c.alpha, budget, seed).subtable;
    const auto nai = naive_clustering(p.table, c.k, c.l, seed);
    const double se = combined_score(ev, emb, c.alpha).combined;
    const double sr = combined_score(ev, ran, c.alpha).combined;
    const double sn = combined_score(ev, nai, c.alpha).combined;
    sum_e += se, sum_r += sr, sum_n += sn;
    if (se > sr) ++win_r;
    else if (se < sr) ++loss_r;
    if (se > sn) ++win_n;
    else if (se < sn) ++loss_n;
  }
  const double pr = sign_test_p(win_r, loss_r), pn = sign_test_p(win_n, loss_n);
  const double d = static_cast<double>(seeds);
  const bool ok = sum_e >= sum_r && sum_e >= sum_n && pr < 0.05 && pn < 0.05;
  return {ok, "mean combined embedding=" + fmt(sum_e / d) + " random=" + fmt(sum_r / d) + " naive=" +
                  fmt(sum_n / d) + "; vs random " + std::to_string(win_r) + "W/" + std::to_string(loss_r) +
                  "L p=" + fmt(pr) + "; vs naive " + std::to_string(win_n) + "W/" + std::to_string(loss_n) +
                  "L p=" + fmt(pn)};
}

Outcome performance() {
  const Table t = generate_numeric_table(250000, 31, 7);
  Config c;
  c.mine_rules = false;
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts a = preprocess(t, c);
  const double pre = seconds_since(t0);

  // Threshold on x0 keeping the top 100,000 rows.
  const auto jx = *t.schema().index_of("x0");
  std::vector<double> x0;
  for (std::size_t i = 0; i < t.rows(); ++i) x0.push_back(std::get<double>(t.value(i, jx)));
  std::nth_element(x0.begin(), x0.begin() + 100000 - 1, x0.end(), std::greater<>());
  SPQuery q;
  q.predicates.push_back({"x0", Comparator::ge, {Value{x0[100000 - 1]}}});
  const std::size_t result_rows = apply_query(t, q).rows();

  // Sizes from 5x5 to the 10x10 default are pinned for the ratio; the
  // extremes are reported alongside.
  const std::vector<std::size_t> pinned{5, 7, 10}, extra{3, 15, 20};
  std::map<std::size_t, double> secs;
  for (auto sz : {3, 5, 7, 10, 15, 20}) {
    SelectionRequest req;
    req.k = req.l = static_cast<std::size_t>(sz);
    req.query = q;
    const auto s0 = std::chrono::steady_clock::now();
    (void)select_subtable(t, req, *a.model, a.binning);
    secs[static_cast<std::size_t>(sz)] = seconds_since(s0);
  }
  double lo = 1e300, hi = 0;
  for (auto sz : pinned) lo = std::min(lo, secs[sz]), hi = std::max(hi, secs[sz]);
  const double ratio = hi / lo;
  const bool ok = pre <= 300 && secs[10] <= 5 && ratio < 2.0;
  std::ostringstream d;
  d << "preprocess 250000x31 (no mining) " << fmt(pre, 1) << "s; query rows=" << result_rows << "; selection";
  for (auto [sz, s] : secs) d << " " << sz << "x" << sz << "=" << fmt(s, 2) << "s";
  d << "; ratio over 5..10=" << fmt(ratio, 2) << " (3..20=" << fmt(secs[20] / secs[3], 2) << ")";
  return {ok, d.str()};
}

Outcome sweep_trends() {
  const std::size_t seeds = 10;
  SweepGrid grid;
  grid.axes["bins"] = {2, 3, 5, 8, 12, 20};
  grid.axes["support"] = {0.05, 0.1, 0.15, 0.2, 0.3};
  grid.axes["confidence"] = {0.5, 0.6, 0.7, 0.8, 0.9};
  Config defaults;
  defaults.k = 10;
  defaults.l = 5;
  defaults.dim = 32;
  // (axis, value, method) -> sums over seeds
  std::map<std::tuple<std::string, double, std::string>, std::pair<double, double>> sums;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto p = generate_planted_table(2000, 10, 3, 2, 0.05, seed);
    SweepOptions o;
    o.seeds = {seed};
    const auto report = sweep_parameters(p.table, grid, o, defaults);
    for (const auto& r : report.rows) {
      auto& s = sums[{r.axis, r.value, r.method}];
      s.first += r.cell_coverage;
      s.second += r.combined;
    }
  }
  constexpr double kTrendSlack = 0.02;  // allowed rise between neighbouring grid values
  std::size_t trend_breaks = 0, rank_breaks = 0, points = 0;
  std::ostringstream d;
  for (const auto& [axis, values] : grid.axes) {
    for (const std::string method : {"embedding", "random", "naive"}) {
      std::vector<double> cov;
      for (double v : values) cov.push_back(sums[{axis, v, method}].first / static_cast<double>(seeds));
      bool ok = cov.back() <= cov.front() + 1e-12;
      for (std::size_t i = 1; i < cov.size(); ++i) ok = ok && cov[i] <= cov[i - 1] + kTrendSlack;
      if (!ok) {
        ++trend_breaks;
        d << " " << axis << "/" << method << " coverage";
        for (double x : cov) d << " " << fmt(x, 3);
        d << ";";
      }
    }
    for (double v : values) {
      ++points;
      const double e = sums[{axis, v, "embedding"}].second;
      if (e < sums[{axis, v, "random"}].second || e < sums[{axis, v, "naive"}].second) ++rank_breaks;
    }
  }
  return {trend_breaks == 0 && rank_breaks == 0,
          "coverage curves breaking the weak decrease=" + std::to_string(trend_breaks) + "/9, grid points where embedding " +
              "ranks below another method=" + std::to_string(rank_breaks) + "/" + std::to_string(points) + ";" +
              d.str()};
}

Outcome session_replay() {
  const auto p = generate_planted_table(1500, 12, 3, 2, 0.05, 11);
  const auto logs = generate_planted_sessions(p, 20, 5, 11);
  Config c;
  c.bins = 8;
  c.seed = 11;
  const Artifacts a = preprocess(p.table, c);

  ReplayOptions forced;
  forced.select.request.k = 10;
  forced.select.request.l = 5;
  forced.targets_from_next_step = true;
  const auto fs = replay_sessions(p.table, logs, a, forced, c);

  std::vector<double> rates;
  for (std::size_t l = 3; l <= 7; ++l) {
    ReplayOptions o;
    o.select.request.k = 10;
    o.select.request.l = l;
    rates.push_back(replay_sessions(p.table, logs, a, o, c).rate());
  }
  bool monotone = rates.back() > rates.front();
  for (std::size_t i = 1; i < rates.size(); ++i) monotone = monotone && rates[i] >= rates[i - 1];
  std::ostringstream d;
  // Targets force columns into view; a literal of the next step may not occur
  // in the current query result at all, so forcing is judged on columns.
  d << "forced column capture=" << fmt(fs.column_rate()) << " (" << fs.column_captured << "/" << fs.column_total
    << ", value fragments " << fs.value_captured << "/" << fs.value_total << "); capture by l 3..7:";
  for (double r : rates) d << " " << fmt(r, 3);
  return {fs.column_rate() == 1.0 && monotone, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string samples = SUBTAB_SAMPLES_DIR;
  bool strict = false;
  std::vector<std::string> only;
  app.add_option("--samples", samples, "directory holding flights_fixture.csv");
  app.add_flag("--strict", strict, "exit 1 when any check fails");
  app.add_option("--only", only, "run only the named checks");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"golden-example", [&] { return golden_example(samples); }},
      {"greedy-bound", greedy_bound},
      {"metric-properties", [&] { return metric_properties(samples); }},
      {"apriori-correctness", apriori_correctness},
      {"embedding-sanity", embedding_sanity},
      {"effectiveness", effectiveness},
      {"performance", performance},
      {"sweep-trends", sweep_trends},
      {"session-replay", session_replay},
  };
  std::size_t passed = 0, run = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++run;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    passed += o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << passed << "/" << run << " checks passed" << std::endl;
  return strict && passed != run ? 1 : 0;
}
