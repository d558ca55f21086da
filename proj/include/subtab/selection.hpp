#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtab/binning.hpp"
#include "subtab/embedding.hpp"
#include "subtab/error.hpp"
#include "subtab/kmeans.hpp"
#include "subtab/metrics.hpp"
#include "subtab/rules.hpp"
#include "subtab/table.hpp"

namespace subtab {

struct SelectionRequest {
  std::size_t k = 10;
  std::size_t l = 10;
  std::optional<SPQuery> query;
  std::vector<std::string> targets;
  double alpha = 0.5;
  std::uint64_t seed = 42;
};

struct Highlight {
  std::int64_t row_id = 0;
  std::size_t rule_id = 0;
  AssociationRule rule;
  std::vector<std::string> columns;  // the highlighted cells of this row
  std::size_t color_index = 0;
};

struct SubTableResult {
  SubTable subtable;
  Table values;  // raw (unbinned) cells of the selected rows and columns
  std::vector<Highlight> highlights;
  std::optional<ScoreReport> score;
  std::vector<std::string> warnings;
};

// Per-cell token vectors looked up once per (column, bin).
class TokenVectors {
 public:
  TokenVectors(const BinnedTable& bt, const EmbeddingModel& m) : dim_(m.dimension()), zero_(m.dimension(), 0.0f) {
    table_.resize(bt.cols());
    for (std::size_t j = 0; j < bt.cols(); ++j) {
      const auto nb = bt.binning()[bt.column_ids()[j]].size();
      table_[j].resize(nb);
      for (std::uint32_t b = 0; b < nb; ++b) {
        const float* v = m.find(bt.token(j, b));
        if (!v) {
          v = zero_.data();
          missing_.push_back(bt.token(j, b));
        }
        table_[j][b] = v;
      }
    }
  }
  const float* at(std::size_t col, std::uint32_t bin) const { return table_[col][bin]; }
  std::size_t dimension() const noexcept { return dim_; }
  // Tokens without a vector (zero vector substituted), for every bin of the
  // present columns, used or not.
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::size_t dim_;
  std::vector<float> zero_;
  std::vector<std::vector<const float*>> table_;
  std::vector<std::string> missing_;
};

// Mean cell vector of each row over the table's current columns, row-major.
inline std::vector<float> row_vectors(const BinnedTable& bt, const EmbeddingModel& m) {
  TokenVectors tv(bt, m);
  const std::size_t dim = m.dimension();
  std::vector<float> out(bt.rows() * dim, 0.0f);
  if (bt.cols() == 0) return out;
  std::vector<double> acc(dim);
  for (std::size_t i = 0; i < bt.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < bt.cols(); ++j) {
      const float* v = tv.at(j, bt.bin(i, j));
      for (std::size_t k = 0; k < dim; ++k) acc[k] += v[k];
    }
    for (std::size_t k = 0; k < dim; ++k) out[i * dim + k] = static_cast<float>(acc[k] / static_cast<double>(bt.cols()));
  }
  return out;
}

struct ColumnVectors {
  std::vector<std::string> columns;  // schema order, excluded columns dropped
  std::vector<float> vectors;        // row-major
};

// Mean cell vector of each non-excluded column over the current rows.
inline ColumnVectors column_vectors(const BinnedTable& bt, const EmbeddingModel& m,
                                    const std::vector<std::string>& exclude = {}) {
  TokenVectors tv(bt, m);
  const std::size_t dim = m.dimension();
  ColumnVectors out;
  std::vector<double> acc(dim);
  for (std::size_t j = 0; j < bt.cols(); ++j) {
    if (std::find(exclude.begin(), exclude.end(), bt.column_name(j)) != exclude.end()) continue;
    std::fill(acc.begin(), acc.end(), 0.0);
    // Sum per bin first; a column has few bins and many rows.
    std::vector<std::size_t> per_bin(bt.binning()[bt.column_ids()[j]].size(), 0);
    for (auto b : bt.column_bins(j)) ++per_bin[b];
    for (std::uint32_t b = 0; b < per_bin.size(); ++b) {
      if (!per_bin[b]) continue;
      const float* v = tv.at(j, b);
      for (std::size_t k = 0; k < dim; ++k) acc[k] += static_cast<double>(per_bin[b]) * v[k];
    }
    out.columns.push_back(bt.column_name(j));
    for (std::size_t k = 0; k < dim; ++k)
      out.vectors.push_back(static_cast<float>(acc[k] / static_cast<double>(std::max<std::size_t>(1, bt.rows()))));
  }
  return out;
}

// One highlight per selected row: among covered rules holding on the row, the
// one describing the most cells (smallest rule id on ties).
inline std::vector<Highlight> attach_highlights(const SubTable& s, const CoverageEvaluator& ev) {
  const auto resolved = resolve(s, ev.table());
  const auto covered = ev.covered(resolved.rows, resolved.global_cols);
  std::vector<char> is_covered(ev.rules().size(), 0);
  for (auto r : covered) is_covered[r] = 1;
  std::vector<Highlight> out;
  for (std::size_t i = 0; i < resolved.rows.size(); ++i) {
    std::size_t best = SIZE_MAX;
    for (auto r : ev.rules_at(resolved.rows[i])) {
      if (!is_covered[r]) continue;
      if (best == SIZE_MAX || ev.cell_count(r) > ev.cell_count(best) || (ev.cell_count(r) == ev.cell_count(best) && r < best))
        best = r;
    }
    if (best == SIZE_MAX) continue;
    Highlight h;
    h.row_id = s.row_ids[i];
    h.rule_id = best;
    h.rule = ev.rules()[best];
    for (auto c : h.rule.columns()) h.columns.push_back(ev.table().binning()[c].column());
    h.color_index = out.size() % 4;
    out.push_back(std::move(h));
  }
  return out;
}

inline std::vector<Highlight> attach_highlights(const SubTable& s, const RuleSet& rs, const BinnedTable& bt) {
  return attach_highlights(s, CoverageEvaluator(bt, rs));
}

// The embedding-based selector: query, bin with the stored map, cluster row
// vectors into k and non-target column vectors into l - |targets|, and keep
// the cluster representatives.
inline SubTableResult select_subtable(const Table& t, const SelectionRequest& req, const EmbeddingModel& model,
                                      const std::shared_ptr<const BinningMap>& binning, const RuleSet* rules = nullptr,
                                      const std::string& base_ref = {}) {
  if (!binning || model.size() == 0) throw NotPreprocessedError("table has no preprocessing artifacts");
  if (req.k == 0 || req.l == 0) throw ParameterError("k and l must be at least 1");
  if (!(req.alpha >= 0 && req.alpha <= 1)) throw ConfigError("alpha must lie in [0,1]");
  SubTableResult res;

  const Table q = req.query ? apply_query(t, *req.query) : t;
  if (q.rows() == 0) throw SelectionError("the query selects no rows");
  for (const auto& target : req.targets)
    if (!q.schema().index_of(target)) throw ValidationError("target column '" + target + "' is not in the query result");
  std::vector<std::string> targets;
  for (const auto& target : req.targets)
    if (std::find(targets.begin(), targets.end(), target) == targets.end()) targets.push_back(target);

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
  if (targets.size() > l) throw ParameterError("more target columns than l");

  const BinnedTable bt = apply_binning(normalize_values(q), binning, base_ref);
  TokenVectors tv(bt, model);
  if (!tv.missing().empty()) {
    // Only report tokens that actually occur in the result.
    std::size_t occurring = 0;
    for (std::size_t j = 0; j < bt.cols(); ++j) {
      std::vector<char> seen(bt.binning()[bt.column_ids()[j]].size(), 0);
      for (auto b : bt.column_bins(j)) seen[b] = 1;
      for (std::uint32_t b = 0; b < seen.size(); ++b)
        if (seen[b] && !model.contains(bt.token(j, b))) ++occurring;
    }
    if (occurring)
      res.warnings.push_back(std::to_string(occurring) + " cell tokens have no vector; zero vectors substituted");
  }

  KMeansOptions km;
  km.seed = req.seed;
  const auto rows = centroid_representatives(bt.row_ids(), row_vectors(bt, model), model.dimension(), k, km);

  std::vector<std::string> chosen = targets;
  if (l > targets.size()) {
    auto cv = column_vectors(bt, model, targets);
    std::vector<std::int64_t> col_ids(cv.columns.size());
    std::iota(col_ids.begin(), col_ids.end(), 0);
    km.seed = req.seed + 1;
    for (auto c : centroid_representatives(col_ids, cv.vectors, model.dimension(), l - targets.size(), km))
      chosen.push_back(cv.columns[static_cast<std::size_t>(c)]);
  }
  std::vector<std::size_t> col_idx;
  for (std::size_t j = 0; j < q.cols(); ++j)
    if (std::find(chosen.begin(), chosen.end(), q.schema()[j].name) != chosen.end()) col_idx.push_back(j);

  res.subtable.base_ref = base_ref;
  res.subtable.row_ids = rows;
  for (auto j : col_idx) res.subtable.columns.push_back(q.schema()[j].name);
  std::vector<std::size_t> positions;
  for (auto id : rows) positions.push_back(*q.position_of(id));
  res.values = take(q, positions, col_idx);

  if (rules) {
    CoverageEvaluator ev(bt, *rules);
    res.highlights = attach_highlights(res.subtable, ev);
    res.score = combined_score(ev, res.subtable, req.alpha);
  }
  return res;
}

inline nlohmann::json to_json(const Highlight& h, const BinningMap& b) {
  auto rule = rule_to_json(h.rule, b);
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : h.columns) cells.push_back({h.row_id, c});
  return {{"rowId", h.row_id},
          {"ruleId", h.rule_id},
          {"rule", {{"antecedent", rule["antecedent"]}, {"consequent", rule["consequent"]}}},
          {"cells", cells},
          {"colorIndex", h.color_index}};
}

// `b` may be null only when there are no highlights to render.
inline nlohmann::json to_json(const SubTableResult& r, const BinningMap* b) {
  if (!b && !r.highlights.empty()) throw ValidationError("highlights need the binning map to render");
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < r.values.rows(); ++i) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t j = 0; j < r.values.cols(); ++j) cells[r.values.schema()[j].name] = value_to_json(r.values.value(i, j));
    rows.push_back({{"rowId", r.values.row_ids()[i]}, {"cells", cells}});
  }
  nlohmann::json hl = nlohmann::json::array();
  for (const auto& h : r.highlights) hl.push_back(to_json(h, *b));
  nlohmann::json out{{"baseRef", r.subtable.base_ref},
                     {"columns", r.subtable.columns},
                     {"rows", rows},
                     {"highlights", hl},
                     {"warnings", r.warnings}};
  out["score"] = r.score ? to_json(*r.score) : nlohmann::json(nullptr);
  return out;
}

inline nlohmann::json to_json(const SubTableResult& r, const BinningMap& b) { return to_json(r, &b); }

inline SelectionRequest selection_request_from_json(const nlohmann::json& j) {
  SelectionRequest r;
  r.k = j.value("k", r.k);
  r.l = j.value("l", r.l);
  if (j.contains("query") && !j["query"].is_null()) r.query = query_from_json(j["query"]);
  r.targets = j.value("targets", std::vector<std::string>{});
  r.alpha = j.value("alpha", r.alpha);
  r.seed = j.value("seed", r.seed);
  return r;
}

}  // namespace subtab
