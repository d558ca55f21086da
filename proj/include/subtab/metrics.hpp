#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "subtab/binning.hpp"
#include "subtab/bitset.hpp"
#include "subtab/error.hpp"
#include "subtab/rules.hpp"

namespace subtab {

// A k x l selection from a (possibly query-result) table.
struct SubTable {
  std::string base_ref;
  std::vector<std::int64_t> row_ids;
  std::vector<std::string> columns;

  bool operator==(const SubTable&) const = default;
};

inline nlohmann::json to_json(const SubTable& s) {
  return {{"baseRef", s.base_ref}, {"rowIds", s.row_ids}, {"columns", s.columns}};
}

inline SubTable subtable_from_json(const nlohmann::json& j) {
  SubTable s;
  s.base_ref = j.value("baseRef", std::string{});
  s.row_ids = j.at("rowIds").get<std::vector<std::int64_t>>();
  s.columns = j.at("columns").get<std::vector<std::string>>();
  return s;
}

// Row positions and local column indices of `s` inside `bt`; throws on any
// invariant violation.
struct ResolvedSubTable {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;            // local indices
  std::vector<std::uint32_t> global_cols;   // sorted
};

inline ResolvedSubTable resolve(const SubTable& s, const BinnedTable& bt, const std::vector<std::string>& targets = {}) {
  ResolvedSubTable r;
  std::set<std::int64_t> seen_rows;
  for (auto id : s.row_ids) {
    auto pos = bt.position_of(id);
    if (!pos) throw ValidationError("rowId " + std::to_string(id) + " is not in the base table");
    if (!seen_rows.insert(id).second) throw ValidationError("duplicate rowId " + std::to_string(id));
    r.rows.push_back(*pos);
  }
  std::set<std::string> seen_cols;
  for (const auto& c : s.columns) {
    auto local = bt.local_index(c);
    if (!local) throw ValidationError("column '" + c + "' is not in the base table");
    if (!seen_cols.insert(c).second) throw ValidationError("duplicate column '" + c + "'");
    r.cols.push_back(*local);
    r.global_cols.push_back(bt.column_ids()[*local]);
  }
  for (const auto& t : targets)
    if (!seen_cols.count(t)) throw ValidationError("target column '" + t + "' missing from sub-table");
  std::sort(r.global_cols.begin(), r.global_cols.end());
  return r;
}

inline void validate(const SubTable& s, const BinnedTable& bt, const std::vector<std::string>& targets = {}) {
  (void)resolve(s, bt, targets);
}

struct ScoreReport {
  double cell_coverage = 0;
  double diversity = 0;
  double combined = 0;
  double alpha = 0.5;
  std::size_t upcov = 0;
  std::size_t covered_cell_count = 0;
  std::vector<std::size_t> covered_rule_ids;
};

inline nlohmann::json to_json(const ScoreReport& r) {
  return {{"cellCoverage", r.cell_coverage}, {"diversity", r.diversity}, {"combined", r.combined},
          {"alpha", r.alpha},                {"upcov", r.upcov},         {"coveredCellCount", r.covered_cell_count},
          {"coveredRuleIds", r.covered_rule_ids}};
}

// cell(R, T) = T_R x U_R, as (rowId, column name) pairs.
inline std::vector<std::pair<std::int64_t, std::string>> cell_set(const AssociationRule& r, const BinnedTable& bt) {
  std::vector<std::pair<std::int64_t, std::string>> out;
  const auto rows = matching_rows(r, bt);
  for (auto id : rows)
    for (auto c : r.columns()) out.emplace_back(id, bt.binning()[c].column());
  return out;
}

// Precomputes T_R for every rule so coverage of any sub-table is a handful of
// bitset unions. Rule ids are positions in the RuleSet.
class CoverageEvaluator {
 public:
  CoverageEvaluator(const BinnedTable& bt, const RuleSet& rs) : bt_(&bt), rules_(&rs) {
    rule_rows_.reserve(rs.size());
    rules_at_.resize(bt.rows());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      rule_rows_.push_back(rule_rows(rs[i], bt));
      cell_counts_.push_back(rule_rows_.back().count() * rs[i].size());
      rule_rows_.back().for_each([&](std::size_t row) { rules_at_[row].push_back(i); });
    }
    std::vector<std::size_t> all(rs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    upcov_ = union_cells(all);
  }

  const BinnedTable& table() const noexcept { return *bt_; }
  const RuleSet& rules() const noexcept { return *rules_; }
  std::size_t upcov() const noexcept { return upcov_; }
  const RowBitset& rows_of(std::size_t rule) const { return rule_rows_[rule]; }
  // |cell(R, T)|
  std::size_t cell_count(std::size_t rule) const { return cell_counts_[rule]; }
  // Rules holding at a row position.
  const std::vector<std::size_t>& rules_at(std::size_t position) const { return rules_at_[position]; }

  // Whether U_R is inside the sorted global column set.
  bool columns_fit(std::size_t rule, const std::vector<std::uint32_t>& sorted_cols) const {
    const auto& rc = (*rules_)[rule].columns();
    return std::includes(sorted_cols.begin(), sorted_cols.end(), rc.begin(), rc.end());
  }

  std::vector<std::size_t> covered(const std::vector<std::size_t>& row_positions,
                                   const std::vector<std::uint32_t>& sorted_cols) const {
    std::vector<char> hit(rules_->size(), 0);
    for (auto p : row_positions)
      for (auto r : rules_at_[p])
        if (!hit[r] && columns_fit(r, sorted_cols)) hit[r] = 1;
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < hit.size(); ++r)
      if (hit[r]) out.push_back(r);
    return out;
  }

  // |union of cell(R,T)| over the given rules.
  std::size_t union_cells(const std::vector<std::size_t>& rule_ids) const {
    std::vector<std::vector<std::size_t>> by_col(bt_->binning().size());
    for (auto r : rule_ids)
      for (auto c : (*rules_)[r].columns()) by_col[c].push_back(r);
    std::size_t total = 0;
    RowBitset acc(bt_->rows());
    for (const auto& list : by_col) {
      if (list.empty()) continue;
      if (list.size() == 1) {
        total += rule_rows_[list.front()].count();
        continue;
      }
      acc.clear();
      for (auto r : list) acc |= rule_rows_[r];
      total += acc.count();
    }
    return total;
  }

  double coverage_of(std::size_t cells) const {
    return upcov_ == 0 ? 0.0 : static_cast<double>(cells) / static_cast<double>(upcov_);
  }

 private:
  const BinnedTable* bt_;
  const RuleSet* rules_;
  std::vector<RowBitset> rule_rows_;
  std::vector<std::size_t> cell_counts_;
  std::vector<std::vector<std::size_t>> rules_at_;
  std::size_t upcov_ = 0;
};

inline RuleSet covered_rules(const SubTable& s, const RuleSet& rs, const BinnedTable& bt) {
  const auto r = resolve(s, bt);
  std::vector<AssociationRule> out;
  for (const auto& rule : rs) {
    if (!std::includes(r.global_cols.begin(), r.global_cols.end(), rule.columns().begin(), rule.columns().end()))
      continue;
    if (std::any_of(r.rows.begin(), r.rows.end(), [&](std::size_t p) { return rule_holds_at(rule, bt, p); }))
      out.push_back(rule);
  }
  return RuleSet(std::move(out), rs.provenance());
}

struct CoverageResult {
  double coverage = 0;
  std::size_t covered_cells = 0;
  std::size_t upcov = 0;
  std::vector<std::size_t> covered_rule_ids;
};

inline CoverageResult cell_coverage(const CoverageEvaluator& ev, const SubTable& s) {
  const auto r = resolve(s, ev.table());
  CoverageResult out;
  out.covered_rule_ids = ev.covered(r.rows, r.global_cols);
  out.covered_cells = ev.union_cells(out.covered_rule_ids);
  out.upcov = ev.upcov();
  out.coverage = ev.coverage_of(out.covered_cells);
  return out;
}

inline CoverageResult cell_coverage(const BinnedTable& bt, const SubTable& s, const RuleSet& rs) {
  return cell_coverage(CoverageEvaluator(bt, rs), s);
}

namespace detail {

inline double jaccard_at(const BinnedTable& bt, std::size_t a, std::size_t b, const std::vector<std::size_t>& cols) {
  if (cols.empty()) return 1.0;
  std::size_t same = 0;
  for (auto c : cols)
    if (bt.bin(a, c) == bt.bin(b, c)) ++same;
  return static_cast<double>(same) / static_cast<double>(cols.size());
}

inline double diversity_at(const BinnedTable& bt, const std::vector<std::size_t>& rows,
                           const std::vector<std::size_t>& cols) {
  if (rows.size() <= 1) return 1.0;
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      sum += jaccard_at(bt, rows[i], rows[j], cols);
      ++pairs;
    }
  return 1.0 - sum / static_cast<double>(pairs);
}

}  // namespace detail

inline double jaccard(std::int64_t t, std::int64_t u, const SubTable& s, const BinnedTable& bt) {
  const auto r = resolve(s, bt);
  auto pt = bt.position_of(t), pu = bt.position_of(u);
  if (std::find(s.row_ids.begin(), s.row_ids.end(), t) == s.row_ids.end() ||
      std::find(s.row_ids.begin(), s.row_ids.end(), u) == s.row_ids.end())
    throw ValidationError("jaccard: both rows must belong to the sub-table");
  return detail::jaccard_at(bt, *pt, *pu, r.cols);
}

inline double diversity(const SubTable& s, const BinnedTable& bt) {
  if (s.row_ids.empty()) throw ValidationError("diversity needs at least one row");
  const auto r = resolve(s, bt);
  return detail::diversity_at(bt, r.rows, r.cols);
}

inline ScoreReport combined_score(const CoverageEvaluator& ev, const SubTable& s, double alpha = 0.5) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (s.row_ids.empty()) throw ValidationError("sub-table has no rows");
  const auto r = resolve(s, ev.table());
  ScoreReport rep;
  rep.alpha = alpha;
  rep.covered_rule_ids = ev.covered(r.rows, r.global_cols);
  rep.covered_cell_count = ev.union_cells(rep.covered_rule_ids);
  rep.upcov = ev.upcov();
  rep.cell_coverage = ev.coverage_of(rep.covered_cell_count);
  rep.diversity = detail::diversity_at(ev.table(), r.rows, r.cols);
  rep.combined = alpha * rep.cell_coverage + (1.0 - alpha) * rep.diversity;
  return rep;
}

inline ScoreReport combined_score(const SubTable& s, const BinnedTable& bt, const RuleSet& rs, double alpha = 0.5) {
  return combined_score(CoverageEvaluator(bt, rs), s, alpha);
}

}  // namespace subtab
