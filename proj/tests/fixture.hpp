#pragma once

#include <memory>
#include <string>

#include "subtab/binning.hpp"
#include "subtab/rules.hpp"
#include "subtab/table.hpp"

namespace subtab::fixture {

inline std::string sample_path(const std::string& name) { return std::string(SUBTAB_SAMPLES_DIR) + "/" + name; }

// The 8x5 flights example. Row r of the printed table has rowId r-1.
struct Flights {
  Table table;
  std::shared_ptr<const BinningMap> binning;
  BinnedTable binned;
  RuleSet rules;

  Flights() {
    table = load_csv_file(sample_path("flights_fixture.csv"));
    binning = std::make_shared<const BinningMap>(compute_binning(table, 5));
    binned = apply_binning(table, binning, "flights");
    ExhaustiveConstraints c;
    c.consequent_columns = {"CANCELLED"};
    c.min_antecedent_size = 2;
    c.min_absolute_support = 2;
    rules = enumerate_rules_exhaustive(binned, c);
  }

  std::uint32_t col(const std::string& name) const { return static_cast<std::uint32_t>(*binning->index_of(name)); }

  std::uint32_t bin(const std::string& column, const std::string& label) const {
    const auto& cb = (*binning)[col(column)];
    for (const auto& b : cb.bins())
      if (b.label == label) return b.id;
    throw std::runtime_error("no bin " + label + " in " + column);
  }

  Item item(const std::string& column, const std::string& label) const { return {col(column), bin(column, label)}; }
};

}  // namespace subtab::fixture
