#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "subtab/error.hpp"
#include "subtab/util.hpp"

namespace subtab {

enum class ColumnKind { categorical, continuous };

inline const char* to_string(ColumnKind k) noexcept {
  return k == ColumnKind::continuous ? "continuous" : "categorical";
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (!index_.emplace(columns_[i].name, i).second)
        throw ValidationError("duplicate column name '" + columns_[i].name + "'");
    }
  }

  std::size_t size() const noexcept { return columns_.size(); }
  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  const ColumnSpec& operator[](std::size_t i) const { return columns_[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(std::string_view name) const {
    auto idx = index_of(name);
    if (!idx) throw QueryError("unknown column '" + std::string(name) + "'");
    return *idx;
  }

 private:
  std::vector<ColumnSpec> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A cell value. std::monostate is the missing value.
using Value = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Value& v) noexcept { return std::holds_alternative<std::monostate>(v); }

inline std::string value_text(const Value& v) {
  if (auto d = std::get_if<double>(&v)) return format_number(*d);
  if (auto s = std::get_if<std::string>(&v)) return *s;
  return {};
}

// Column storage. Continuous columns fill `numbers`, categorical ones fill
// `strings`; `missing` has one flag per row either way.
struct Column {
  std::vector<double> numbers;
  std::vector<std::string> strings;
  std::vector<std::uint8_t> missing;
};

// Immutable columnar table. Row identity is the source rowId, never the
// position, so query results keep the ids of the table they came from.
class Table {
 public:
  Table() = default;

  Table(Schema schema, std::vector<std::int64_t> row_ids, std::vector<Column> columns)
      : schema_(std::move(schema)), row_ids_(std::move(row_ids)), columns_(std::move(columns)) {
    if (columns_.size() != schema_.size())
      throw ValidationError("column count does not match schema");
    const std::size_t n = row_ids_.size();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& c = columns_[j];
      const bool cont = schema_[j].kind == ColumnKind::continuous;
      if (c.missing.size() != n || (cont ? c.numbers.size() : c.strings.size()) != n)
        throw ValidationError("column '" + schema_[j].name + "' does not have one cell per row");
    }
    position_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!position_.emplace(row_ids_[i], i).second)
        throw ValidationError("duplicate rowId " + std::to_string(row_ids_[i]));
    }
  }

  std::size_t rows() const noexcept { return row_ids_.size(); }
  std::size_t cols() const noexcept { return schema_.size(); }
  const Schema& schema() const noexcept { return schema_; }
  const std::vector<std::int64_t>& row_ids() const noexcept { return row_ids_; }
  const Column& column(std::size_t j) const { return columns_[j]; }

  std::optional<std::size_t> position_of(std::int64_t row_id) const {
    auto it = position_.find(row_id);
    if (it == position_.end()) return std::nullopt;
    return it->second;
  }

  bool missing(std::size_t row, std::size_t col) const { return columns_[col].missing[row] != 0; }

  Value value(std::size_t row, std::size_t col) const {
    const auto& c = columns_[col];
    if (c.missing[row]) return std::monostate{};
    if (schema_[col].kind == ColumnKind::continuous) return c.numbers[row];
    return c.strings[row];
  }

 private:
  Schema schema_;
  std::vector<std::int64_t> row_ids_;
  std::vector<Column> columns_;
  std::unordered_map<std::int64_t, std::size_t> position_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
  std::vector<std::string> missing_tokens{"", "NaN", "nan", "NULL"};
  // A column is continuous iff at least this fraction of its non-missing
  // sampled values parse as numbers.
  double numeric_threshold = 0.95;
  std::map<std::string, ColumnKind> kind_overrides;
  std::size_t inference_sample = 10000;
};

namespace detail {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the record starts
};

// RFC 4180 records: quoted fields, doubled quotes, CRLF or LF endings,
// newlines inside quotes.
inline std::vector<CsvRecord> parse_csv_records(std::string_view text, char delim) {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  std::size_t line = 1;
  rec.line = 1;
  bool in_quotes = false, field_started = false, record_has_content = false;
  const std::size_t len = text.size();

  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    out.push_back(std::move(rec));
    rec = CsvRecord{};
    record_has_content = false;
  };

  for (std::size_t i = 0; i < len; ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < len && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      record_has_content = true;
    } else if (c == delim) {
      end_field();
      record_has_content = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < len && text[i + 1] == '\n') ++i;
      if (record_has_content || !field.empty()) {
        end_record();
      } else {
        rec = CsvRecord{};  // blank line
      }
      ++line;
      rec.line = line;
    } else {
      field.push_back(c);
      field_started = true;
      record_has_content = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", rec.line);
  if (record_has_content || !field.empty()) end_record();
  return out;
}

inline bool is_missing_token(std::string_view raw, const std::vector<std::string>& tokens) {
  const auto t = trim(raw);
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& m) { return t == m; });
}

}  // namespace detail

// Classifies each column from sampled raw rows.
inline Schema infer_schema(const std::vector<std::string>& names,
                           const std::vector<std::vector<std::string>>& sampled_rows,
                           const CsvOptions& opts = {}) {
  if (sampled_rows.empty()) throw EmptyTableError("schema inference needs at least one data row");
  std::vector<ColumnSpec> specs;
  specs.reserve(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    ColumnSpec spec{names[j], ColumnKind::categorical};
    if (auto it = opts.kind_overrides.find(names[j]); it != opts.kind_overrides.end()) {
      spec.kind = it->second;
    } else {
      std::size_t present = 0, numeric = 0;
      for (const auto& row : sampled_rows) {
        if (detail::is_missing_token(row[j], opts.missing_tokens)) continue;
        ++present;
        if (parse_number(row[j])) ++numeric;
      }
      if (present > 0 && static_cast<double>(numeric) >= opts.numeric_threshold * static_cast<double>(present))
        spec.kind = ColumnKind::continuous;
    }
    specs.push_back(std::move(spec));
  }
  return Schema(std::move(specs));
}

// Builds a table from already-split rows; cells are classified against the
// inferred schema. Non-numeric cells of a continuous column become missing.
inline Table table_from_rows(const std::vector<std::string>& names,
                             const std::vector<std::vector<std::string>>& rows,
                             const CsvOptions& opts = {}) {
  if (rows.empty()) throw EmptyTableError("table has no data rows");
  std::vector<std::vector<std::string>> sample;
  const std::vector<std::vector<std::string>>* sampled = &rows;
  if (rows.size() > opts.inference_sample && opts.inference_sample > 0) {
    const std::size_t stride = (rows.size() + opts.inference_sample - 1) / opts.inference_sample;
    for (std::size_t i = 0; i < rows.size(); i += stride) sample.push_back(rows[i]);
    sampled = &sample;
  }
  Schema schema = infer_schema(names, *sampled, opts);

  const std::size_t n = rows.size(), m = names.size();
  std::vector<Column> columns(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto& col = columns[j];
    const bool cont = schema[j].kind == ColumnKind::continuous;
    col.missing.resize(n, 0);
    if (cont) col.numbers.resize(n, 0.0);
    else col.strings.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& raw = rows[i][j];
      if (detail::is_missing_token(raw, opts.missing_tokens)) {
        col.missing[i] = 1;
      } else if (cont) {
        if (auto v = parse_number(raw)) col.numbers[i] = *v;
        else col.missing[i] = 1;
      } else {
        col.strings[i] = raw;
      }
    }
  }
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  return Table(std::move(schema), std::move(ids), std::move(columns));
}

inline Table load_csv(std::string_view text, const CsvOptions& opts = {}) {
  auto records = detail::parse_csv_records(text, opts.delimiter);
  if (records.empty()) throw EmptyTableError("empty input");

  std::vector<std::string> names;
  std::size_t first = 0;
  if (opts.header) {
    for (auto& f : records[0].fields) names.emplace_back(trim(f));
    first = 1;
  } else {
    for (std::size_t j = 0; j < records[0].fields.size(); ++j) names.push_back("c" + std::to_string(j));
  }
  if (records.size() <= first) throw EmptyTableError("CSV has a header but no data rows");

  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size() - first);
  for (std::size_t r = first; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.fields.size() != names.size())
      throw ParseError("expected " + std::to_string(names.size()) + " cells, found " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    rows.push_back(std::move(rec.fields));
  }
  return table_from_rows(names, rows, opts);
}

inline Table load_csv(std::istream& in, const CsvOptions& opts = {}) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_csv(std::string_view(text), opts);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline Table load_csv_file(const std::string& path, const CsvOptions& opts = {}) {
  return load_csv(std::string_view(read_file(path)), opts);
}

// ---------------------------------------------------------------------------
// Selection-projection queries

enum class Comparator { eq, ne, lt, le, gt, ge, in };

inline const char* to_string(Comparator c) noexcept {
  switch (c) {
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
    case Comparator::in: return "in";
  }
  return "?";
}

inline Comparator comparator_from_string(std::string_view s) {
  if (s == "=" || s == "==") return Comparator::eq;
  if (s == "!=" || s == "<>" || s == "≠") return Comparator::ne;
  if (s == "<") return Comparator::lt;
  if (s == "<=" || s == "≤") return Comparator::le;
  if (s == ">") return Comparator::gt;
  if (s == ">=" || s == "≥") return Comparator::ge;
  if (s == "in") return Comparator::in;
  throw QueryError("unknown comparator '" + std::string(s) + "'");
}

struct Predicate {
  std::string column;
  Comparator op = Comparator::eq;
  std::vector<Value> literals;  // exactly one unless op == in
};

// Conjunctive selection plus projection. An empty projection keeps every column.
struct SPQuery {
  std::vector<Predicate> predicates;
  std::vector<std::string> projection;

  bool empty() const noexcept { return predicates.empty() && projection.empty(); }
};

namespace detail {

struct CompiledPredicate {
  std::size_t col;
  Comparator op;
  bool continuous;
  std::vector<std::optional<double>> numbers;        // nullopt = missing literal
  std::vector<std::optional<std::string>> strings;
};

inline CompiledPredicate compile_predicate(const Schema& schema, const Predicate& p) {
  CompiledPredicate cp{schema.require(p.column), p.op, false, {}, {}};
  cp.continuous = schema[cp.col].kind == ColumnKind::continuous;
  const bool ordered = p.op == Comparator::lt || p.op == Comparator::le || p.op == Comparator::gt ||
                       p.op == Comparator::ge;
  if (ordered && !cp.continuous)
    throw QueryError("comparator " + std::string(to_string(p.op)) + " needs a continuous column, '" +
                     p.column + "' is categorical");
  if (p.literals.empty()) throw QueryError("predicate on '" + p.column + "' has no literal");
  if (p.op != Comparator::in && p.literals.size() != 1)
    throw QueryError("predicate on '" + p.column + "' takes exactly one literal");
  for (const auto& lit : p.literals) {
    if (is_missing(lit)) {
      if (ordered) throw QueryError("ordered comparison against a missing literal on '" + p.column + "'");
      cp.numbers.emplace_back();
      cp.strings.emplace_back();
      continue;
    }
    if (cp.continuous) {
      std::optional<double> v;
      if (auto d = std::get_if<double>(&lit)) v = *d;
      else v = parse_number(std::get<std::string>(lit));
      if (!v) throw QueryError("type mismatch: '" + value_text(lit) + "' is not numeric for column '" + p.column + "'");
      cp.numbers.emplace_back(*v);
    } else {
      cp.strings.emplace_back(value_text(lit));
    }
  }
  return cp;
}

inline bool eval_predicate(const Table& t, std::size_t row, const CompiledPredicate& cp) {
  const bool miss = t.missing(row, cp.col);
  const std::size_t nlit = cp.continuous ? cp.numbers.size() : cp.strings.size();
  auto literal_missing = [&](std::size_t i) {
    return cp.continuous ? !cp.numbers[i].has_value() : !cp.strings[i].has_value();
  };
  auto equals = [&](std::size_t i) {
    if (literal_missing(i)) return miss;
    if (miss) return false;
    return cp.continuous ? t.column(cp.col).numbers[row] == *cp.numbers[i]
                         : t.column(cp.col).strings[row] == *cp.strings[i];
  };
  switch (cp.op) {
    case Comparator::eq: return equals(0);
    case Comparator::ne: return literal_missing(0) ? !miss : (!miss && !equals(0));
    case Comparator::in:
      for (std::size_t i = 0; i < nlit; ++i)
        if (equals(i)) return true;
      return false;
    default: break;
  }
  if (miss) return false;
  const double x = t.column(cp.col).numbers[row], lit = *cp.numbers[0];
  switch (cp.op) {
    case Comparator::lt: return x < lit;
    case Comparator::le: return x <= lit;
    case Comparator::gt: return x > lit;
    case Comparator::ge: return x >= lit;
    default: return false;
  }
}

}  // namespace detail

inline void validate_query(const Schema& schema, const SPQuery& q) {
  for (const auto& p : q.predicates) (void)detail::compile_predicate(schema, p);
  for (const auto& c : q.projection) (void)schema.require(c);
}

// Keeps the given rows (by position) and columns (by index, schema order).
inline Table take(const Table& t, const std::vector<std::size_t>& positions, const std::vector<std::size_t>& col_idx) {
  std::vector<ColumnSpec> specs;
  std::vector<Column> cols;
  for (std::size_t j : col_idx) {
    specs.push_back(t.schema()[j]);
    const auto& src = t.column(j);
    Column c;
    const bool cont = t.schema()[j].kind == ColumnKind::continuous;
    c.missing.reserve(positions.size());
    for (std::size_t p : positions) {
      c.missing.push_back(src.missing[p]);
      if (cont) c.numbers.push_back(src.numbers[p]);
      else c.strings.push_back(src.strings[p]);
    }
    cols.push_back(std::move(c));
  }
  std::vector<std::int64_t> ids;
  ids.reserve(positions.size());
  for (std::size_t p : positions) ids.push_back(t.row_ids()[p]);
  return Table(Schema(std::move(specs)), std::move(ids), std::move(cols));
}

inline Table apply_query(const Table& t, const SPQuery& q) {
  std::vector<detail::CompiledPredicate> preds;
  for (const auto& p : q.predicates) preds.push_back(detail::compile_predicate(t.schema(), p));

  std::vector<std::size_t> col_idx;
  if (q.projection.empty()) {
    for (std::size_t j = 0; j < t.cols(); ++j) col_idx.push_back(j);
  } else {
    std::vector<char> keep(t.cols(), 0);
    for (const auto& c : q.projection) keep[t.schema().require(c)] = 1;
    for (std::size_t j = 0; j < t.cols(); ++j)
      if (keep[j]) col_idx.push_back(j);
  }

  std::vector<std::size_t> positions;
  positions.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    bool ok = true;
    for (const auto& cp : preds) {
      if (!detail::eval_predicate(t, i, cp)) {
        ok = false;
        break;
      }
    }
    if (ok) positions.push_back(i);
  }
  return take(t, positions, col_idx);
}

// ---------------------------------------------------------------------------
// JSON / CSV export

inline nlohmann::json value_to_json(const Value& v) {
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto s = std::get_if<std::string>(&v)) return *s;
  return nullptr;
}

inline Value value_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>() ? 1.0 : 0.0;
  throw QueryError("unsupported literal " + j.dump());
}

inline nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns()) cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  return {{"columns", cols}};
}

inline nlohmann::json table_to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t j = 0; j < t.cols(); ++j) cells.push_back(value_to_json(t.value(i, j)));
    rows.push_back({{"rowId", t.row_ids()[i]}, {"cells", std::move(cells)}});
  }
  return {{"schema", schema_to_json(t.schema())}, {"rows", std::move(rows)}};
}

inline std::string csv_escape(const std::string& s, char delim = ',') {
  if (s.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline void write_csv(const Table& t, std::ostream& out, char delim = ',') {
  for (std::size_t j = 0; j < t.cols(); ++j) out << (j ? std::string(1, delim) : "") << csv_escape(t.schema()[j].name, delim);
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (j) out << delim;
      if (!t.missing(i, j)) out << csv_escape(value_text(t.value(i, j)), delim);
    }
    out << '\n';
  }
}

inline nlohmann::json query_to_json(const SPQuery& q) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : q.predicates) {
    nlohmann::json j{{"column", p.column}, {"op", to_string(p.op)}};
    if (p.op == Comparator::in) {
      nlohmann::json vals = nlohmann::json::array();
      for (const auto& v : p.literals) vals.push_back(value_to_json(v));
      j["values"] = vals;
    } else {
      j["value"] = value_to_json(p.literals.at(0));
    }
    preds.push_back(std::move(j));
  }
  return {{"predicates", preds}, {"projection", q.projection}};
}

inline SPQuery query_from_json(const nlohmann::json& j) {
  SPQuery q;
  if (j.is_null()) return q;
  if (!j.is_object()) throw QueryError("query must be a JSON object");
  try {
    if (j.contains("predicates")) {
      for (const auto& pj : j.at("predicates")) {
        Predicate p;
        p.column = pj.at("column").get<std::string>();
        p.op = comparator_from_string(pj.value("op", std::string("=")));
        if (p.op == Comparator::in) {
          for (const auto& v : pj.at("values")) p.literals.push_back(value_from_json(v));
        } else {
          p.literals.push_back(value_from_json(pj.at("value")));
        }
        q.predicates.push_back(std::move(p));
      }
    }
    if (j.contains("projection")) q.projection = j.at("projection").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw QueryError(std::string("malformed query: ") + e.what());
  }
  return q;
}

}  // namespace subtab
