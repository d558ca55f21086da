#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "subtab/binning.hpp"
#include "subtab/bitset.hpp"
#include "subtab/error.hpp"

namespace subtab {

// A (column, bin) pair. `column` is the global column id of the BinningMap.
struct Item {
  std::uint32_t column = 0;
  std::uint32_t bin = 0;
  auto operator<=>(const Item&) const = default;
};

class AssociationRule {
 public:
  AssociationRule() = default;
  AssociationRule(std::vector<Item> antecedent, std::vector<Item> consequent, double support = 0.0,
                  double confidence = 0.0)
      : antecedent_(std::move(antecedent)), consequent_(std::move(consequent)), support_(support), confidence_(confidence) {
    if (antecedent_.empty()) throw RuleError("rule antecedent must not be empty");
    if (consequent_.empty()) throw RuleError("rule consequent must not be empty");
    if (!(support_ >= 0.0 && support_ <= 1.0) || !(confidence_ >= 0.0 && confidence_ <= 1.0))
      throw RuleError("support and confidence must lie in [0,1]");
    std::sort(antecedent_.begin(), antecedent_.end());
    std::sort(consequent_.begin(), consequent_.end());
    for (const auto& i : antecedent_) columns_.push_back(i.column);
    for (const auto& i : consequent_) columns_.push_back(i.column);
    std::sort(columns_.begin(), columns_.end());
    if (std::adjacent_find(columns_.begin(), columns_.end()) != columns_.end())
      throw RuleError("a column appears twice in one rule");
  }

  const std::vector<Item>& antecedent() const noexcept { return antecedent_; }
  const std::vector<Item>& consequent() const noexcept { return consequent_; }
  double support() const noexcept { return support_; }
  double confidence() const noexcept { return confidence_; }
  // U_R, sorted.
  const std::vector<std::uint32_t>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }

  std::vector<Item> items() const {
    std::vector<Item> all = antecedent_;
    all.insert(all.end(), consequent_.begin(), consequent_.end());
    std::sort(all.begin(), all.end());
    return all;
  }

  // Deduplication key: sorted antecedent and consequent items.
  bool same_rule(const AssociationRule& o) const {
    return antecedent_ == o.antecedent_ && consequent_ == o.consequent_;
  }
  bool operator<(const AssociationRule& o) const {
    if (antecedent_ != o.antecedent_) return antecedent_ < o.antecedent_;
    return consequent_ < o.consequent_;
  }

 private:
  std::vector<Item> antecedent_, consequent_;
  double support_ = 0, confidence_ = 0;
  std::vector<std::uint32_t> columns_;
};

struct RuleProvenance {
  std::string mode = "apriori";  // apriori | apriori-per-target | exhaustive | filtered | external
  nlohmann::json parameters = nlohmann::json::object();
};

class RuleSet {
 public:
  RuleSet() = default;
  explicit RuleSet(std::vector<AssociationRule> rules, RuleProvenance provenance = {})
      : provenance_(std::move(provenance)) {
    std::set<std::pair<std::vector<Item>, std::vector<Item>>> seen;
    for (auto& r : rules)
      if (seen.emplace(r.antecedent(), r.consequent()).second) rules_.push_back(std::move(r));
  }

  std::size_t size() const noexcept { return rules_.size(); }
  bool empty() const noexcept { return rules_.empty(); }
  const AssociationRule& operator[](std::size_t i) const { return rules_[i]; }
  const std::vector<AssociationRule>& rules() const noexcept { return rules_; }
  const RuleProvenance& provenance() const noexcept { return provenance_; }
  auto begin() const noexcept { return rules_.begin(); }
  auto end() const noexcept { return rules_.end(); }

 private:
  std::vector<AssociationRule> rules_;
  RuleProvenance provenance_;
};

// Rows of a binned table at which all items hold, as a bitset over row positions.
inline RowBitset rule_rows(const AssociationRule& r, const BinnedTable& bt) {
  RowBitset out(bt.rows());
  std::vector<std::pair<const std::vector<std::uint32_t>*, std::uint32_t>> checks;
  for (const auto& it : r.items()) {
    const int local = bt.local_index(it.column);
    if (local < 0) return out;
    checks.emplace_back(&bt.column_bins(static_cast<std::size_t>(local)), it.bin);
  }
  for (std::size_t i = 0; i < bt.rows(); ++i) {
    bool ok = true;
    for (const auto& [bins, b] : checks) {
      if ((*bins)[i] != b) {
        ok = false;
        break;
      }
    }
    if (ok) out.set(i);
  }
  return out;
}

// Whether the rule holds on the row at `position`.
inline bool rule_holds_at(const AssociationRule& r, const BinnedTable& bt, std::size_t position) {
  for (const auto* side : {&r.antecedent(), &r.consequent()}) {
    for (const auto& it : *side) {
      const int local = bt.local_index(it.column);
      if (local < 0 || bt.bin(position, static_cast<std::size_t>(local)) != it.bin) return false;
    }
  }
  return true;
}

inline bool rule_holds(const AssociationRule& r, const BinnedTable& bt, std::int64_t row_id) {
  auto pos = bt.position_of(row_id);
  if (!pos) throw ValidationError("rowId " + std::to_string(row_id) + " is not in the table");
  return rule_holds_at(r, bt, *pos);
}

// T_R as rowIds, ascending by position.
inline std::vector<std::int64_t> matching_rows(const AssociationRule& r, const BinnedTable& bt) {
  std::vector<std::int64_t> out;
  rule_rows(r, bt).for_each([&](std::size_t i) { out.push_back(bt.row_ids()[i]); });
  return out;
}

inline std::size_t min_count_for(double fraction, std::size_t n) {
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::max<std::size_t>(1, raw <= 0 ? 0 : static_cast<std::size_t>(raw));
}

struct AprioriParams {
  double min_support = 0.1;
  double min_confidence = 0.6;
  std::size_t min_rule_size = 3;      // r_R + p_R
  std::size_t max_consequent_size = 2;  // 0 = unlimited
};

inline nlohmann::json to_json(const AprioriParams& p) {
  return {{"minSupport", p.min_support},
          {"minConfidence", p.min_confidence},
          {"minRuleSize", p.min_rule_size},
          {"maxConsequentSize", p.max_consequent_size}};
}

namespace detail {

using ItemsetKey = std::vector<std::uint64_t>;

struct ItemsetKeyHash {
  std::size_t operator()(const ItemsetKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto w : k) {
      h ^= w;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

inline std::uint64_t encode(const Item& i) { return (std::uint64_t{i.column} << 32) | i.bin; }
inline Item decode(std::uint64_t w) {
  return {static_cast<std::uint32_t>(w >> 32), static_cast<std::uint32_t>(w & 0xffffffffu)};
}

// Frequent-itemset search aborts with SizeGuardError beyond these limits
// rather than exhausting memory on dense, low-threshold tables.
inline constexpr std::size_t kMaxFrequentItemsets = 2'000'000;
inline constexpr std::size_t kMaxLevelBitsetBytes = std::size_t{1} << 31;

struct FrequentItemsets {
  std::unordered_map<ItemsetKey, std::size_t, ItemsetKeyHash> counts;
  std::vector<ItemsetKey> itemsets;  // level order
};

// Level-wise frequent itemset search restricted to `universe` rows, skipping
// `excluded` global columns. At most one item per column.
inline FrequentItemsets frequent_itemsets(const BinnedTable& bt, const RowBitset& universe, std::size_t min_count,
                                          const std::vector<char>& excluded_local) {
  FrequentItemsets out;
  struct Entry {
    ItemsetKey key;
    RowBitset rows;
  };
  std::vector<Entry> level;
  for (std::size_t j = 0; j < bt.cols(); ++j) {
    if (!excluded_local.empty() && excluded_local[j]) continue;
    const auto& bins = bt.column_bins(j);
    std::map<std::uint32_t, RowBitset> by_bin;
    universe.for_each([&](std::size_t i) {
      auto [it, inserted] = by_bin.try_emplace(bins[i], bt.rows());
      it->second.set(i);
    });
    for (auto& [bin, rows] : by_bin) {
      const std::size_t c = rows.count();
      if (c < min_count) continue;
      ItemsetKey key{encode({bt.column_ids()[j], bin})};
      out.counts.emplace(key, c);
      out.itemsets.push_back(key);
      level.push_back({std::move(key), std::move(rows)});
    }
  }
  std::sort(level.begin(), level.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });

  while (level.size() > 1) {
    std::vector<Entry> next;
    std::unordered_set<ItemsetKey, ItemsetKeyHash> prev;
    for (const auto& e : level) prev.insert(e.key);
    const std::size_t k = level.front().key.size();
    for (std::size_t a = 0; a < level.size(); ++a) {
      for (std::size_t b = a + 1; b < level.size(); ++b) {
        const auto& ka = level[a].key;
        const auto& kb = level[b].key;
        if (!std::equal(ka.begin(), ka.end() - 1, kb.begin())) break;  // sorted: prefix block ended
        if ((ka.back() >> 32) == (kb.back() >> 32)) continue;           // same column
        ItemsetKey cand = ka;
        cand.push_back(kb.back());
        bool pruned = false;
        for (std::size_t drop = 0; drop + 2 < cand.size() && !pruned; ++drop) {
          ItemsetKey sub;
          sub.reserve(k);
          for (std::size_t i = 0; i < cand.size(); ++i)
            if (i != drop) sub.push_back(cand[i]);
          if (!prev.count(sub)) pruned = true;
        }
        if (pruned) continue;
        RowBitset rows = level[a].rows;
        rows &= level[b].rows;
        const std::size_t c = rows.count();
        if (c < min_count) continue;
        out.counts.emplace(cand, c);
        out.itemsets.push_back(cand);
        next.push_back({std::move(cand), std::move(rows)});
        if (out.itemsets.size() > kMaxFrequentItemsets || next.size() * (bt.rows() / 8 + 8) > kMaxLevelBitsetBytes)
          throw SizeGuardError("frequent itemset search exceeds " + std::to_string(out.itemsets.size()) +
                               " itemsets; raise the support threshold or lower the bin count");
      }
    }
    level = std::move(next);
  }
  return out;
}

// Nonempty proper subsets of `n` positions with size <= cap (0 = unlimited),
// as index lists.
inline std::vector<std::vector<std::size_t>> consequent_choices(std::size_t n, std::size_t cap) {
  std::vector<std::vector<std::size_t>> out;
  const std::size_t limit = cap == 0 ? n - 1 : std::min(cap, n - 1);
  std::vector<std::size_t> cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (!cur.empty()) out.push_back(cur);
    if (cur.size() == limit) return;
    for (std::size_t i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

inline std::vector<Item> items_of(const ItemsetKey& key) {
  std::vector<Item> out;
  out.reserve(key.size());
  for (auto w : key) out.push_back(decode(w));
  return out;
}

}  // namespace detail

// Apriori: frequent itemsets level-wise with subset pruning, then every split
// of each itemset of size >= minRuleSize into antecedent -> consequent that
// passes the confidence threshold.
inline RuleSet mine_rules_apriori(const BinnedTable& bt, const AprioriParams& p = {}) {
  if (p.min_rule_size < 2) throw ConfigError("minRuleSize must be at least 2");
  if (!(p.min_support >= 0 && p.min_support <= 1) || !(p.min_confidence >= 0 && p.min_confidence <= 1))
    throw ConfigError("support and confidence thresholds must lie in [0,1]");
  if (bt.rows() == 0) throw EmptyTableError("cannot mine rules on an empty table");

  RowBitset all(bt.rows());
  for (std::size_t i = 0; i < bt.rows(); ++i) all.set(i);
  const std::size_t min_count = min_count_for(p.min_support, bt.rows());
  auto fi = detail::frequent_itemsets(bt, all, min_count, {});

  std::vector<AssociationRule> rules;
  const double n = static_cast<double>(bt.rows());
  for (const auto& key : fi.itemsets) {
    if (key.size() < p.min_rule_size) continue;
    const std::size_t count = fi.counts.at(key);
    for (const auto& cons : detail::consequent_choices(key.size(), p.max_consequent_size)) {
      detail::ItemsetKey ante, conseq;
      std::size_t ci = 0;
      for (std::size_t i = 0; i < key.size(); ++i) {
        if (ci < cons.size() && cons[ci] == i) {
          conseq.push_back(key[i]);
          ++ci;
        } else {
          ante.push_back(key[i]);
        }
      }
      const double conf = static_cast<double>(count) / static_cast<double>(fi.counts.at(ante));
      if (conf + 1e-12 < p.min_confidence) continue;
      rules.emplace_back(detail::items_of(ante), detail::items_of(conseq), static_cast<double>(count) / n,
                         std::min(1.0, conf));
    }
  }
  std::sort(rules.begin(), rules.end());
  return RuleSet(std::move(rules), {"apriori", to_json(p)});
}

struct ExhaustiveConstraints {
  std::vector<std::string> consequent_columns;  // empty = any column may appear on the right
  std::size_t min_antecedent_size = 1;
  std::size_t min_absolute_support = 1;
  double min_confidence = 0.0;
  std::size_t min_rule_size = 2;
  std::size_t max_consequent_size = 0;  // 0 = unlimited
};

inline constexpr std::size_t kExhaustiveColumnLimit = 12;

// Brute-force enumeration over every column subset and every value
// combination present in the data. Independent of the Apriori path; used as
// its oracle and for the small worked examples.
inline RuleSet enumerate_rules_exhaustive(const BinnedTable& bt, const ExhaustiveConstraints& c) {
  const std::size_t m = bt.cols();
  if (m > kExhaustiveColumnLimit)
    throw SizeGuardError("exhaustive rule enumeration refuses tables with more than " +
                         std::to_string(kExhaustiveColumnLimit) + " columns");
  std::uint32_t cons_mask = 0;
  for (const auto& name : c.consequent_columns) {
    auto local = bt.local_index(name);
    if (!local) throw ValidationError("unknown consequent column '" + name + "'");
    cons_mask |= 1u << *local;
  }
  if (c.consequent_columns.empty()) cons_mask = (m == 32 ? ~0u : ((1u << m) - 1));

  const std::size_t n = bt.rows();
  std::map<std::vector<std::pair<std::size_t, std::uint32_t>>, std::size_t> memo;
  auto count_rows = [&](const std::vector<std::pair<std::size_t, std::uint32_t>>& items) {
    auto it = memo.find(items);
    if (it != memo.end()) return it->second;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool ok = true;
      for (auto [col, bin] : items)
        if (bt.bin(i, col) != bin) {
          ok = false;
          break;
        }
      if (ok) ++cnt;
    }
    memo.emplace(items, cnt);
    return cnt;
  };

  std::vector<AssociationRule> rules;
  const std::size_t min_size = std::max<std::size_t>(2, c.min_rule_size);
  for (std::uint32_t subset = 1; subset < (1u << m); ++subset) {
    const auto size = static_cast<std::size_t>(std::popcount(subset));
    if (size < min_size) continue;
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < m; ++j)
      if (subset & (1u << j)) cols.push_back(j);
    std::map<std::vector<std::uint32_t>, std::size_t> tuples;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint32_t> t;
      for (auto j : cols) t.push_back(bt.bin(i, j));
      ++tuples[t];
    }
    for (const auto& [tuple, count] : tuples) {
      if (count < c.min_absolute_support) continue;
      for (std::uint32_t cons = subset; cons; cons = (cons - 1) & subset) {
        if (cons == subset) continue;
        if ((cons & ~cons_mask) != 0) continue;
        const auto csize = static_cast<std::size_t>(std::popcount(cons));
        if (size - csize < c.min_antecedent_size) continue;
        if (c.max_consequent_size && csize > c.max_consequent_size) continue;
        std::vector<std::pair<std::size_t, std::uint32_t>> ante_items;
        std::vector<Item> ante, conseq;
        for (std::size_t k = 0; k < cols.size(); ++k) {
          const Item item{bt.column_ids()[cols[k]], tuple[k]};
          if (cons & (1u << cols[k])) {
            conseq.push_back(item);
          } else {
            ante.push_back(item);
            ante_items.emplace_back(cols[k], tuple[k]);
          }
        }
        const double conf = static_cast<double>(count) / static_cast<double>(count_rows(ante_items));
        if (conf + 1e-12 < c.min_confidence) continue;
        rules.emplace_back(std::move(ante), std::move(conseq), static_cast<double>(count) / static_cast<double>(n),
                           std::min(1.0, conf));
      }
    }
  }
  std::sort(rules.begin(), rules.end());
  nlohmann::json params{{"consequentColumns", c.consequent_columns},
                        {"minAntecedentSize", c.min_antecedent_size},
                        {"minAbsoluteSupport", c.min_absolute_support},
                        {"minConfidence", c.min_confidence},
                        {"minRuleSize", c.min_rule_size},
                        {"maxConsequentSize", c.max_consequent_size}};
  return RuleSet(std::move(rules), {"exhaustive", params});
}

// R* : rules whose columns meet the targets; all rules when there are none.
inline RuleSet filter_rules_by_targets(const RuleSet& rs, const std::vector<std::uint32_t>& targets) {
  if (targets.empty()) return rs;
  std::vector<AssociationRule> kept;
  for (const auto& r : rs) {
    const auto& cols = r.columns();
    if (std::any_of(targets.begin(), targets.end(),
                    [&](std::uint32_t t) { return std::binary_search(cols.begin(), cols.end(), t); }))
      kept.push_back(r);
  }
  auto prov = rs.provenance();
  prov.parameters["targets"] = targets;
  return RuleSet(std::move(kept), prov);
}

inline std::vector<std::uint32_t> resolve_columns(const BinningMap& b, const std::vector<std::string>& names) {
  std::vector<std::uint32_t> out;
  for (const auto& n : names) {
    auto idx = b.index_of(n);
    if (!idx) throw ValidationError("unknown column '" + n + "'");
    out.push_back(static_cast<std::uint32_t>(*idx));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline RuleSet filter_rules_by_targets(const RuleSet& rs, const BinningMap& b, const std::vector<std::string>& targets) {
  return filter_rules_by_targets(rs, resolve_columns(b, targets));
}

// Splits rows by their joint target-bin assignment and mines each part on
// its own (support and confidence thresholds relative to the part). Every
// itemset I found over the non-target columns yields I -> targets, and each
// split A -> C of I yields A -> C + targets. Stored support/confidence are
// recomputed over the whole table.
inline RuleSet mine_rules_per_target_bin(const BinnedTable& bt, const std::vector<std::string>& targets,
                                         const AprioriParams& p = {}) {
  if (targets.empty()) throw ConfigError("per-target mining needs at least one target column");
  if (p.min_rule_size < 2) throw ConfigError("minRuleSize must be at least 2");
  std::vector<std::size_t> target_local;
  std::vector<char> excluded(bt.cols(), 0);
  for (const auto& t : targets) {
    auto l = bt.local_index(t);
    if (!l) throw ValidationError("unknown target column '" + t + "'");
    target_local.push_back(*l);
    excluded[*l] = 1;
  }
  std::sort(target_local.begin(), target_local.end());
  target_local.erase(std::unique(target_local.begin(), target_local.end()), target_local.end());

  std::map<std::vector<std::uint32_t>, RowBitset> parts;
  for (std::size_t i = 0; i < bt.rows(); ++i) {
    std::vector<std::uint32_t> key;
    for (auto j : target_local) key.push_back(bt.bin(i, j));
    parts.try_emplace(key, bt.rows()).first->second.set(i);
  }

  const double n = static_cast<double>(bt.rows());
  auto count_items = [&](const std::vector<Item>& items) {
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < bt.rows(); ++i) {
      bool ok = true;
      for (const auto& it : items)
        if (bt.bin(i, static_cast<std::size_t>(bt.local_index(it.column))) != it.bin) {
          ok = false;
          break;
        }
      if (ok) ++cnt;
    }
    return cnt;
  };

  const std::size_t min_items = p.min_rule_size > target_local.size() ? p.min_rule_size - target_local.size() : 1;
  std::vector<AssociationRule> rules;
  for (const auto& [key, rows] : parts) {
    const std::size_t part_size = rows.count();
    if (static_cast<double>(part_size) * p.min_support < 1.0 - 1e-12) continue;
    std::vector<Item> target_items;
    for (std::size_t t = 0; t < target_local.size(); ++t)
      target_items.push_back({bt.column_ids()[target_local[t]], key[t]});

    auto fi = detail::frequent_itemsets(bt, rows, min_count_for(p.min_support, part_size), excluded);
    for (const auto& itemset : fi.itemsets) {
      if (itemset.size() < min_items) continue;
      const std::size_t count = fi.counts.at(itemset);
      auto items = detail::items_of(itemset);
      {
        const double conf = static_cast<double>(count) / static_cast<double>(count_items(items));
        rules.emplace_back(items, target_items, static_cast<double>(count) / n, std::min(1.0, conf));
      }
      if (itemset.size() < 2) continue;
      for (const auto& cons : detail::consequent_choices(itemset.size(), p.max_consequent_size)) {
        detail::ItemsetKey ante;
        std::vector<Item> conseq = target_items;
        std::size_t ci = 0;
        for (std::size_t i = 0; i < itemset.size(); ++i) {
          if (ci < cons.size() && cons[ci] == i) {
            conseq.push_back(detail::decode(itemset[i]));
            ++ci;
          } else {
            ante.push_back(itemset[i]);
          }
        }
        const double part_conf = static_cast<double>(count) / static_cast<double>(fi.counts.at(ante));
        if (part_conf + 1e-12 < p.min_confidence) continue;
        auto ante_items = detail::items_of(ante);
        const double conf = static_cast<double>(count) / static_cast<double>(count_items(ante_items));
        rules.emplace_back(std::move(ante_items), std::move(conseq), static_cast<double>(count) / n, std::min(1.0, conf));
      }
    }
  }
  std::sort(rules.begin(), rules.end());
  auto params = to_json(p);
  params["targets"] = targets;
  return RuleSet(std::move(rules), {"apriori-per-target", params});
}

// ---------------------------------------------------------------------------
// JSON lines: {antecedent:[{col,bin,label}], consequent:[...], support, confidence}

inline nlohmann::json rule_to_json(const AssociationRule& r, const BinningMap& b) {
  auto side = [&](const std::vector<Item>& items) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : items)
      arr.push_back({{"col", b[it.column].column()}, {"bin", it.bin}, {"label", b.label(it.column, it.bin)}});
    return arr;
  };
  return {{"antecedent", side(r.antecedent())},
          {"consequent", side(r.consequent())},
          {"support", r.support()},
          {"confidence", r.confidence()}};
}

inline AssociationRule rule_from_json(const nlohmann::json& j, const BinningMap& b) {
  auto side = [&](const nlohmann::json& arr) {
    std::vector<Item> items;
    for (const auto& it : arr) {
      auto col = b.index_of(it.at("col").get<std::string>());
      if (!col) throw ValidationError("rule references unknown column " + it.at("col").dump());
      const auto bin = it.at("bin").get<std::uint32_t>();
      if (bin >= b[*col].size()) throw ValidationError("rule references unknown bin " + std::to_string(bin));
      items.push_back({static_cast<std::uint32_t>(*col), bin});
    }
    return items;
  };
  return AssociationRule(side(j.at("antecedent")), side(j.at("consequent")), j.value("support", 0.0),
                         j.value("confidence", 0.0));
}

inline std::string rules_to_jsonl(const RuleSet& rs, const BinningMap& b) {
  std::string out;
  for (const auto& r : rs) out += rule_to_json(r, b).dump() + "\n";
  return out;
}

inline RuleSet rules_from_jsonl(const std::string& text, const BinningMap& b) {
  std::vector<AssociationRule> rules;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rules.push_back(rule_from_json(nlohmann::json::parse(line), b));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed rule: ") + e.what(), lineno);
    }
  }
  return RuleSet(std::move(rules), {"external", {}});
}

}  // namespace subtab
