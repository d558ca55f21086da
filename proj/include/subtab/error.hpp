#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace subtab {

// Base of every error raised by the library. `code()` is a stable machine
// readable tag used by the CLI and the HTTP layer.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("parse_error", what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct EmptyTableError : Error {
  explicit EmptyTableError(const std::string& what) : Error("empty_table", what) {}
};
struct QueryError : Error {
  explicit QueryError(const std::string& what) : Error("query_error", what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};
struct BinningError : Error {
  explicit BinningError(const std::string& what) : Error("binning_error", what) {}
};
struct RuleError : Error {
  explicit RuleError(const std::string& what) : Error("rule_error", what) {}
};
struct SizeGuardError : Error {
  explicit SizeGuardError(const std::string& what) : Error("size_guard", what) {}
};
struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error("parameter_error", what) {}
};
struct SelectionError : Error {
  explicit SelectionError(const std::string& what) : Error("selection_error", what) {}
};
struct NotPreprocessedError : Error {
  explicit NotPreprocessedError(const std::string& what) : Error("not_preprocessed", what) {}
};
struct MissingVectorError : Error {
  explicit MissingVectorError(const std::string& what) : Error("missing_vector", what) {}
};
struct EmbeddingError : Error {
  explicit EmbeddingError(const std::string& what) : Error("embedding_error", what) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation_error", what) {}
};

}  // namespace subtab
