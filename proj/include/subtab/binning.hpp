#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "subtab/error.hpp"
#include "subtab/table.hpp"
#include "subtab/util.hpp"

namespace subtab {

// Unit separator (U+241F) joining column name and bin label in tokens.
inline constexpr std::string_view kTokenSeparator = "\xE2\x90\x9F";

inline std::string make_token(std::string_view column, std::string_view label) {
  std::string t;
  t.reserve(column.size() + kTokenSeparator.size() + label.size());
  t.append(column).append(kTokenSeparator).append(label);
  return t;
}

// Lower-cases ASCII, strips control characters and the token separator,
// trims, and collapses inner whitespace runs to one underscore.
inline std::string normalize_text(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.compare(i, kTokenSeparator.size(), kTokenSeparator) == 0) {
      i += kTokenSeparator.size() - 1;
      continue;
    }
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == '\t' || c == '\n' || c == '\r') {
      cleaned.push_back(' ');
    } else if (c < 0x20 || c == 0x7f) {
      continue;
    } else {
      cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  std::string out;
  out.reserve(cleaned.size());
  bool pending_space = false;
  for (char c : trim(cleaned)) {
    if (c == ' ') {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back('_');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline Table normalize_values(const Table& t) {
  std::vector<Column> cols;
  cols.reserve(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    Column c = t.column(j);
    for (auto& s : c.strings) s = normalize_text(s);
    cols.push_back(std::move(c));
  }
  return Table(t.schema(), t.row_ids(), std::move(cols));
}

enum class BinKind { interval, values, other, missing };

struct Bin {
  std::uint32_t id = 0;
  std::string label;
  BinKind kind = BinKind::values;
  double lo = 0, hi = 0;               // interval bins: [lo, hi)
  std::vector<std::string> values;     // value bins, as text
};

// Bins of one column. Ids are positions in `bins`; the missing-bin is last.
class ColumnBinning {
 public:
  ColumnBinning() = default;
  ColumnBinning(std::string column, ColumnKind kind, std::vector<Bin> bins)
      : column_(std::move(column)), kind_(kind), bins_(std::move(bins)) {
    for (std::uint32_t i = 0; i < bins_.size(); ++i) {
      auto& b = bins_[i];
      b.id = i;
      switch (b.kind) {
        case BinKind::interval:
          if (!intervals_.empty()) cuts_.push_back(b.lo);
          intervals_.push_back(i);
          break;
        case BinKind::values:
          for (const auto& v : b.values) {
            if (!value_index_.emplace(v, i).second)
              throw BinningError("value '" + v + "' in two bins of column '" + column_ + "'");
            if (kind_ == ColumnKind::continuous) {
              if (auto d = parse_number(v)) numeric_values_.emplace_back(*d, i);
            }
          }
          break;
        case BinKind::other: other_ = i; break;
        case BinKind::missing: missing_ = i; break;
      }
    }
    if (!missing_) throw BinningError("column '" + column_ + "' has no missing-bin");
    std::sort(numeric_values_.begin(), numeric_values_.end());
    std::set<std::string> labels;
    for (const auto& b : bins_)
      if (!labels.insert(b.label).second) throw BinningError("duplicate bin label '" + b.label + "'");
  }

  const std::string& column() const noexcept { return column_; }
  ColumnKind kind() const noexcept { return kind_; }
  const std::vector<Bin>& bins() const noexcept { return bins_; }
  std::size_t size() const noexcept { return bins_.size(); }
  std::uint32_t missing_bin() const noexcept { return *missing_; }

  std::uint32_t bin_of_number(double v) const {
    if (!intervals_.empty()) {
      const auto k = static_cast<std::size_t>(std::upper_bound(cuts_.begin(), cuts_.end(), v) - cuts_.begin());
      return intervals_[k];  // out-of-range values clamp to the boundary bins
    }
    if (!numeric_values_.empty()) {
      auto it = std::lower_bound(numeric_values_.begin(), numeric_values_.end(), std::make_pair(v, std::uint32_t{0}));
      if (it != numeric_values_.end() && it->first == v) return it->second;
      if (it == numeric_values_.end()) return std::prev(it)->second;
      if (it == numeric_values_.begin()) return it->second;
      auto lower = std::prev(it);
      return (v - lower->first) <= (it->first - v) ? lower->second : it->second;
    }
    return bin_of_text(format_number(v));
  }

  // Unseen categorical values fall into the "other" bin when there is one,
  // otherwise into the missing-bin.
  std::uint32_t bin_of_text(const std::string& v) const {
    if (auto it = value_index_.find(v); it != value_index_.end()) return it->second;
    if (kind_ == ColumnKind::continuous) {
      if (auto d = parse_number(v)) return bin_of_number(*d);
    }
    return other_ ? *other_ : *missing_;
  }

  std::uint32_t bin_of(const Value& v) const {
    if (is_missing(v)) return *missing_;
    if (auto d = std::get_if<double>(&v)) return bin_of_number(*d);
    return bin_of_text(std::get<std::string>(v));
  }

 private:
  std::string column_;
  ColumnKind kind_ = ColumnKind::categorical;
  std::vector<Bin> bins_;
  std::vector<double> cuts_;
  std::vector<std::uint32_t> intervals_;
  std::unordered_map<std::string, std::uint32_t> value_index_;
  std::vector<std::pair<double, std::uint32_t>> numeric_values_;
  std::optional<std::uint32_t> other_, missing_;
};

// The binning function: per column, an ordered list of bins. The column's
// position here is its global column id, shared by rules and tokens.
class BinningMap {
 public:
  BinningMap() = default;
  BinningMap(std::vector<ColumnBinning> columns, std::size_t bin_count)
      : columns_(std::move(columns)), bin_count_(bin_count) {
    for (std::size_t i = 0; i < columns_.size(); ++i) index_.emplace(columns_[i].column(), i);
  }

  std::size_t size() const noexcept { return columns_.size(); }
  std::size_t bin_count() const noexcept { return bin_count_; }
  const ColumnBinning& operator[](std::size_t i) const { return columns_[i]; }
  const std::vector<ColumnBinning>& columns() const noexcept { return columns_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& label(std::size_t col, std::uint32_t bin) const { return columns_[col].bins().at(bin).label; }

  std::string token(std::size_t col, std::uint32_t bin) const {
    return make_token(columns_[col].column(), label(col, bin));
  }

 private:
  std::vector<ColumnBinning> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t bin_count_ = 0;
};

struct BinningOptions {
  std::size_t grid_points = 512;
  // A density minimum counts as a cut candidate only if it lies at least this
  // fraction below the lower of the highest densities on either side.
  double min_relative_depth = 0.2;
};

namespace detail {

inline std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string unique_label(std::string label, const std::set<std::string>& used) {
  while (used.count(label)) label += "_";
  return label;
}

// Gaussian KDE (Scott's rule) on an evenly spaced grid, computed by linear
// binning of the sample onto the grid followed by a discrete convolution.
inline std::vector<double> kde_on_grid(const std::vector<double>& sorted, double lo, double hi, std::size_t grid) {
  const double n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double ss = 0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
  const double bw = sd * std::pow(n, -0.2);
  const double step = (hi - lo) / static_cast<double>(grid - 1);

  std::vector<double> weights(grid, 0.0);
  for (double v : sorted) {
    const double pos = (v - lo) / step;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= grid - 1) {
      weights[grid - 1] += 1.0;
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    weights[i] += 1.0 - frac;
    weights[i + 1] += frac;
  }
  std::vector<double> density(grid, 0.0);
  if (!(bw > 0)) return weights;
  const auto reach = static_cast<std::ptrdiff_t>(std::min<double>(static_cast<double>(grid - 1), std::ceil(4.0 * bw / step)));
  std::vector<double> kernel(static_cast<std::size_t>(reach) + 1);
  for (std::ptrdiff_t d = 0; d <= reach; ++d) {
    const double z = static_cast<double>(d) * step / bw;
    kernel[static_cast<std::size_t>(d)] = std::exp(-0.5 * z * z);
  }
  const auto g = static_cast<std::ptrdiff_t>(grid);
  for (std::ptrdiff_t i = 0; i < g; ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w == 0) continue;
    const std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, i - reach), b = std::min<std::ptrdiff_t>(g - 1, i + reach);
    for (std::ptrdiff_t j = a; j <= b; ++j)
      density[static_cast<std::size_t>(j)] += w * kernel[static_cast<std::size_t>(std::abs(j - i))];
  }
  return density;
}

// Interior local minima of the density with their relative depth.
inline std::vector<std::pair<double, std::size_t>> density_minima(const std::vector<double>& f, double min_depth) {
  std::vector<std::pair<double, std::size_t>> out;
  const std::size_t g = f.size();
  std::vector<double> left_max(g), right_max(g);
  double run = 0;
  for (std::size_t i = 0; i < g; ++i) left_max[i] = run = std::max(run, f[i]);
  run = 0;
  for (std::size_t i = g; i-- > 0;) right_max[i] = run = std::max(run, f[i]);
  std::size_t i = 1;
  while (i + 1 < g) {
    if (f[i] < f[i - 1]) {
      std::size_t j = i;
      while (j + 1 < g && f[j + 1] == f[i]) ++j;  // plateau
      if (j + 1 < g && f[j + 1] > f[i]) {
        const std::size_t mid = (i + j) / 2;
        const double ref = std::min(left_max[mid], right_max[mid]);
        const double depth = ref > 0 ? (ref - f[mid]) / ref : 0.0;
        if (depth >= min_depth) out.emplace_back(depth, mid);
      }
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

inline ColumnBinning bin_continuous(const std::string& name, std::vector<double> values, std::size_t bins,
                                    const BinningOptions& opts) {
  std::vector<Bin> out;
  std::set<std::string> used;
  std::sort(values.begin(), values.end());
  std::vector<double> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  if (!distinct.empty() && distinct.size() <= bins) {
    for (double v : distinct) {
      Bin b;
      b.kind = BinKind::values;
      b.label = format_number(v);
      b.values = {b.label};
      used.insert(b.label);
      out.push_back(std::move(b));
    }
  } else if (!distinct.empty()) {
    const double lo = distinct.front(), hi = distinct.back();
    std::vector<double> cuts;
    if (bins > 1) {
      auto density = kde_on_grid(values, lo, hi, opts.grid_points);
      auto minima = density_minima(density, opts.min_relative_depth);
      std::stable_sort(minima.begin(), minima.end(), [](auto& a, auto& b) { return a.first > b.first; });
      const double step = (hi - lo) / static_cast<double>(opts.grid_points - 1);
      for (std::size_t i = 0; i < minima.size() && cuts.size() + 1 < bins; ++i)
        cuts.push_back(lo + step * static_cast<double>(minima[i].second));
      std::sort(cuts.begin(), cuts.end());

      if (cuts.size() + 1 < bins) {
        // Too few density minima: distribute the remaining bins over the
        // segments in proportion to their population (largest quotient),
        // then cut each segment at equal-frequency quantiles.
        std::vector<std::size_t> seg_begin{0};
        for (double c : cuts)
          seg_begin.push_back(static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), c) - values.begin()));
        seg_begin.push_back(values.size());
        const std::size_t segs = seg_begin.size() - 1;
        std::vector<std::size_t> alloc(segs, 1);
        for (std::size_t extra = bins - segs; extra > 0; --extra) {
          std::size_t best = 0;
          double best_q = -1;
          for (std::size_t s = 0; s < segs; ++s) {
            const double q = static_cast<double>(seg_begin[s + 1] - seg_begin[s]) / static_cast<double>(alloc[s] + 1);
            if (q > best_q) best_q = q, best = s;
          }
          ++alloc[best];
        }
        std::vector<double> refined = cuts;
        for (std::size_t s = 0; s < segs; ++s) {
          const std::size_t b = seg_begin[s], e = seg_begin[s + 1], cnt = e - b;
          for (std::size_t q = 1; q < alloc[s]; ++q) {
            const double c = values[b + q * cnt / alloc[s]];
            if (c > values[b]) refined.push_back(c);
          }
        }
        std::sort(refined.begin(), refined.end());
        refined.erase(std::unique(refined.begin(), refined.end()), refined.end());
        cuts = std::move(refined);
      }
    }
    std::vector<double> edges{lo};
    for (double c : cuts)
      if (c > edges.back() && c <= hi) edges.push_back(c);
    edges.push_back(hi);
    const std::size_t nb = edges.size() - 1;
    for (std::size_t i = 0; i < nb; ++i) {
      Bin b;
      b.kind = BinKind::interval;
      b.lo = edges[i];
      b.hi = edges[i + 1];
      std::string label = "[" + short_number(b.lo) + ", " + short_number(b.hi) + (i + 1 == nb ? "]" : ")");
      if (used.count(label)) label = "[" + format_number(b.lo) + ", " + format_number(b.hi) + (i + 1 == nb ? "]" : ")");
      b.label = unique_label(label, used);
      used.insert(b.label);
      out.push_back(std::move(b));
    }
  }
  Bin missing;
  missing.kind = BinKind::missing;
  missing.label = unique_label("NaN", used);
  out.push_back(std::move(missing));
  return ColumnBinning(name, ColumnKind::continuous, std::move(out));
}

inline ColumnBinning bin_categorical(const std::string& name, const std::vector<const std::string*>& values, std::size_t bins) {
  std::map<std::string, std::size_t> counts;
  for (auto* v : values) ++counts[*v];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](auto& a, auto& b) { return a.second > b.second; });

  std::vector<Bin> out;
  std::set<std::string> used;
  const bool pooled = ordered.size() > bins;
  const std::size_t singles = pooled ? bins - 1 : ordered.size();
  for (std::size_t i = 0; i < singles; ++i) {
    Bin b;
    b.kind = BinKind::values;
    b.label = ordered[i].first;
    b.values = {ordered[i].first};
    used.insert(b.label);
    out.push_back(std::move(b));
  }
  if (pooled) {
    Bin other;
    other.kind = BinKind::other;
    for (std::size_t i = singles; i < ordered.size(); ++i) other.values.push_back(ordered[i].first);
    other.label = unique_label("other", used);
    used.insert(other.label);
    out.push_back(std::move(other));
  }
  Bin missing;
  missing.kind = BinKind::missing;
  missing.label = unique_label("NaN", used);
  out.push_back(std::move(missing));
  return ColumnBinning(name, ColumnKind::categorical, std::move(out));
}

}  // namespace detail

inline BinningMap compute_binning(const Table& t, std::size_t bins_per_column, const BinningOptions& opts = {}) {
  if (bins_per_column < 1) throw ConfigError("binsPerColumn must be at least 1");
  if (t.rows() == 0) throw EmptyTableError("cannot bin an empty table");
  std::vector<ColumnBinning> cols;
  cols.reserve(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    const auto& spec = t.schema()[j];
    const auto& col = t.column(j);
    if (spec.kind == ColumnKind::continuous) {
      std::vector<double> vals;
      vals.reserve(t.rows());
      for (std::size_t i = 0; i < t.rows(); ++i)
        if (!col.missing[i]) vals.push_back(col.numbers[i]);
      cols.push_back(detail::bin_continuous(spec.name, std::move(vals), bins_per_column, opts));
    } else {
      std::vector<const std::string*> vals;
      vals.reserve(t.rows());
      for (std::size_t i = 0; i < t.rows(); ++i)
        if (!col.missing[i]) vals.push_back(&col.strings[i]);
      cols.push_back(detail::bin_categorical(spec.name, vals, bins_per_column));
    }
  }
  return BinningMap(std::move(cols), bins_per_column);
}

// The table rewritten into bin ids. Columns keep their global id (position
// in the BinningMap) so rules mined on the full table apply to any query
// result binned with the same map.
class BinnedTable {
 public:
  BinnedTable() = default;
  BinnedTable(std::shared_ptr<const BinningMap> binning, std::vector<std::int64_t> row_ids,
              std::vector<std::uint32_t> column_ids, std::vector<std::vector<std::uint32_t>> cells,
              std::string base_ref = {})
      : binning_(std::move(binning)),
        row_ids_(std::move(row_ids)),
        column_ids_(std::move(column_ids)),
        cells_(std::move(cells)),
        base_ref_(std::move(base_ref)) {
    local_of_global_.assign(binning_->size(), -1);
    for (std::size_t j = 0; j < column_ids_.size(); ++j) local_of_global_[column_ids_[j]] = static_cast<int>(j);
    for (std::size_t i = 0; i < row_ids_.size(); ++i) position_.emplace(row_ids_[i], i);
  }

  std::size_t rows() const noexcept { return row_ids_.size(); }
  std::size_t cols() const noexcept { return column_ids_.size(); }
  const BinningMap& binning() const noexcept { return *binning_; }
  const std::shared_ptr<const BinningMap>& binning_ptr() const noexcept { return binning_; }
  const std::vector<std::int64_t>& row_ids() const noexcept { return row_ids_; }
  const std::vector<std::uint32_t>& column_ids() const noexcept { return column_ids_; }
  const std::string& base_ref() const noexcept { return base_ref_; }

  // Bin id at (row position, local column).
  std::uint32_t bin(std::size_t row, std::size_t col) const { return cells_[col][row]; }
  const std::vector<std::uint32_t>& column_bins(std::size_t col) const { return cells_[col]; }

  const std::string& column_name(std::size_t col) const { return (*binning_)[column_ids_[col]].column(); }
  std::string token(std::size_t col, std::uint32_t bin) const { return binning_->token(column_ids_[col], bin); }
  const std::string& label(std::size_t col, std::uint32_t bin) const { return binning_->label(column_ids_[col], bin); }

  int local_index(std::uint32_t global) const {
    return global < local_of_global_.size() ? local_of_global_[global] : -1;
  }
  std::optional<std::size_t> local_index(std::string_view name) const {
    auto g = binning_->index_of(name);
    if (!g) return std::nullopt;
    const int l = local_index(static_cast<std::uint32_t>(*g));
    if (l < 0) return std::nullopt;
    return static_cast<std::size_t>(l);
  }
  std::optional<std::size_t> position_of(std::int64_t row_id) const {
    auto it = position_.find(row_id);
    if (it == position_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const BinnedTable& o) const {
    return row_ids_ == o.row_ids_ && column_ids_ == o.column_ids_ && cells_ == o.cells_;
  }

 private:
  std::shared_ptr<const BinningMap> binning_;
  std::vector<std::int64_t> row_ids_;
  std::vector<std::uint32_t> column_ids_;
  std::vector<std::vector<std::uint32_t>> cells_;
  std::vector<int> local_of_global_;
  std::unordered_map<std::int64_t, std::size_t> position_;
  std::string base_ref_;
};

inline BinnedTable apply_binning(const Table& t, std::shared_ptr<const BinningMap> binning, std::string base_ref = {}) {
  std::vector<std::uint32_t> column_ids;
  std::vector<std::vector<std::uint32_t>> cells;
  column_ids.reserve(t.cols());
  cells.reserve(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    const auto& name = t.schema()[j].name;
    auto g = binning->index_of(name);
    if (!g) throw BinningError("column '" + name + "' has no binning");
    const auto& cb = (*binning)[*g];
    const auto& col = t.column(j);
    const bool cont = t.schema()[j].kind == ColumnKind::continuous;
    std::vector<std::uint32_t> ids(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) {
      if (col.missing[i]) ids[i] = cb.missing_bin();
      else if (cont) ids[i] = cb.bin_of_number(col.numbers[i]);
      else ids[i] = cb.bin_of_text(col.strings[i]);
    }
    column_ids.push_back(static_cast<std::uint32_t>(*g));
    cells.push_back(std::move(ids));
  }
  return BinnedTable(std::move(binning), t.row_ids(), std::move(column_ids), std::move(cells), std::move(base_ref));
}

// ---------------------------------------------------------------------------
// JSON: {column: [{binId, label, lo, hi} | {binId, label, values} | ...]}

inline nlohmann::ordered_json binning_to_json(const BinningMap& b) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& cb : b.columns()) {
    nlohmann::ordered_json bins = nlohmann::ordered_json::array();
    for (const auto& bin : cb.bins()) {
      nlohmann::ordered_json j;
      j["binId"] = bin.id;
      j["label"] = bin.label;
      switch (bin.kind) {
        case BinKind::interval:
          j["lo"] = bin.lo;
          j["hi"] = bin.hi;
          break;
        case BinKind::values: {
          nlohmann::ordered_json vals = nlohmann::ordered_json::array();
          for (const auto& v : bin.values) {
            if (cb.kind() == ColumnKind::continuous) vals.push_back(*parse_number(v));
            else vals.push_back(v);
          }
          j["values"] = vals;
          break;
        }
        case BinKind::other:
          j["other"] = true;
          j["values"] = bin.values;
          break;
        case BinKind::missing: j["missing"] = true; break;
      }
      bins.push_back(std::move(j));
    }
    out[cb.column()] = std::move(bins);
  }
  return out;
}

inline BinningMap binning_from_json(const nlohmann::ordered_json& j, std::size_t bin_count = 0) {
  std::vector<ColumnBinning> cols;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::vector<Bin> bins;
      ColumnKind kind = ColumnKind::categorical;
      for (const auto& bj : it.value()) {
        Bin b;
        b.label = bj.at("label").get<std::string>();
        if (bj.value("missing", false)) {
          b.kind = BinKind::missing;
        } else if (bj.value("other", false)) {
          b.kind = BinKind::other;
          b.values = bj.value("values", std::vector<std::string>{});
        } else if (bj.contains("lo")) {
          b.kind = BinKind::interval;
          b.lo = bj.at("lo").get<double>();
          b.hi = bj.at("hi").get<double>();
          kind = ColumnKind::continuous;
        } else {
          b.kind = BinKind::values;
          for (const auto& v : bj.at("values")) {
            if (v.is_number()) {
              kind = ColumnKind::continuous;
              b.values.push_back(format_number(v.get<double>()));
            } else {
              b.values.push_back(v.get<std::string>());
            }
          }
        }
        bins.push_back(std::move(b));
      }
      cols.emplace_back(it.key(), kind, std::move(bins));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BinningError(std::string("malformed binning JSON: ") + e.what());
  }
  return BinningMap(std::move(cols), bin_count);
}

}  // namespace subtab
