#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fixture.hpp"
#include "subtab/binning.hpp"

using namespace subtab;

namespace {

Table numeric_table(const std::string& name, const std::vector<double>& values) {
  Column c;
  c.numbers = values;
  c.missing.assign(values.size(), 0);
  std::vector<std::int64_t> ids(values.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
  return Table(Schema({{name, ColumnKind::continuous}}), ids, {c});
}

std::vector<std::size_t> bin_sizes(const BinnedTable& bt, std::size_t col) {
  std::vector<std::size_t> sizes(bt.binning()[bt.column_ids()[col]].size(), 0);
  for (auto b : bt.column_bins(col)) ++sizes[b];
  return sizes;
}

}  // namespace

TEST(Normalize, Text) {
  EXPECT_EQ(normalize_text(" Los  Angeles "), "los_angeles");
  EXPECT_EQ(normalize_text("A\xE2\x90\x9F" "B"), "ab");
  EXPECT_EQ(normalize_text("tab\there"), "tab_here");
  EXPECT_EQ(normalize_text("bell\x07"), "bell");
}

TEST(Normalize, NumbersUntouched) {
  auto t = load_csv("YEAR,CITY\n2015, New  York\n");
  auto n = normalize_values(t);
  EXPECT_DOUBLE_EQ(std::get<double>(n.value(0, 0)), 2015.0);
  EXPECT_EQ(std::get<std::string>(n.value(0, 1)), "new_york");
}

TEST(Binning, FixtureLabelsAreTheValues) {
  fixture::Flights f;
  const auto& canc = (*f.binning)[f.col("CANCELLED")];
  ASSERT_EQ(canc.size(), 3u);  // {0}, {1}, missing
  EXPECT_EQ(canc.bins()[0].label, "0");
  EXPECT_EQ(canc.bins()[1].label, "1");
  EXPECT_EQ(canc.bins()[2].kind, BinKind::missing);

  for (std::size_t i = 0; i < f.table.rows(); ++i) {
    for (std::size_t j = 0; j < f.table.cols(); ++j) {
      const auto v = f.table.value(i, j);
      const std::string printed = is_missing(v) ? "NaN" : value_text(v);
      EXPECT_EQ(f.binned.label(j, f.binned.bin(i, j)), printed);
      EXPECT_EQ(f.binned.token(j, f.binned.bin(i, j)), make_token(f.table.schema()[j].name, printed));
    }
  }
}

TEST(Binning, TokensUniqueAcrossColumns) {
  auto t = load_csv("DIST,AIR\nlong,long\nshort,long\n");
  auto map = std::make_shared<const BinningMap>(compute_binning(t, 5));
  auto bt = apply_binning(t, map);
  EXPECT_NE(bt.token(0, bt.bin(0, 0)), bt.token(1, bt.bin(0, 1)));
}

TEST(Binning, TrimodalDistanceGetsThreeIntervals) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> a(300, 60), b(900, 80), c(2100, 200);
  std::vector<double> v;
  for (int i = 0; i < 3000; ++i) v.push_back(i % 3 == 0 ? a(rng) : i % 3 == 1 ? b(rng) : c(rng));
  auto t = numeric_table("DISTANCE", v);
  auto map = compute_binning(t, 3);
  const auto& cb = map[0];
  ASSERT_EQ(cb.size(), 4u);
  double prev_hi = *std::min_element(v.begin(), v.end());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cb.bins()[i].kind, BinKind::interval);
    EXPECT_DOUBLE_EQ(cb.bins()[i].lo, prev_hi);
    prev_hi = cb.bins()[i].hi;
  }
  EXPECT_DOUBLE_EQ(prev_hi, *std::max_element(v.begin(), v.end()));
  // The cuts fall in the density valleys, so each mode lands in its own bin.
  EXPECT_EQ(cb.bin_of_number(300), 0u);
  EXPECT_EQ(cb.bin_of_number(900), 1u);
  EXPECT_EQ(cb.bin_of_number(2100), 2u);
}

TEST(Binning, UniformFallsBackToQuantiles) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(10000);
  for (auto& x : v) x = u(rng);
  auto t = numeric_table("u", v);
  auto map = std::make_shared<const BinningMap>(compute_binning(t, 5));
  auto bt = apply_binning(t, map);
  auto sizes = bin_sizes(bt, 0);
  ASSERT_EQ(sizes.size(), 6u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GE(sizes[i], 1500u);
    EXPECT_LE(sizes[i], 2500u);
  }
  EXPECT_EQ(sizes[5], 0u);
}

TEST(Binning, QuantileFallbackOnDistinctValues) {
  for (std::size_t b : {2u, 4u, 7u}) {
    std::vector<double> v(b * 1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) / static_cast<double>(v.size());
    auto t = numeric_table("x", v);
    auto bt = apply_binning(t, std::make_shared<const BinningMap>(compute_binning(t, b)));
    auto sizes = bin_sizes(bt, 0);
    ASSERT_EQ(sizes.size(), b + 1);
    for (std::size_t i = 0; i < b; ++i) {
      EXPECT_GE(sizes[i], 800u) << "b=" << b;
      EXPECT_LE(sizes[i], 1200u) << "b=" << b;
    }
  }
}

TEST(Binning, CategoricalPoolsRareValues) {
  std::string text = "c\n";
  for (int i = 0; i < 10; ++i) text += "a\n";
  for (int i = 0; i < 5; ++i) text += "b\n";
  text += "c\nd\ne\n";
  auto t = load_csv(text);
  auto map = compute_binning(t, 3);
  const auto& cb = map[0];
  ASSERT_EQ(cb.size(), 4u);
  EXPECT_EQ(cb.bins()[0].label, "a");
  EXPECT_EQ(cb.bins()[1].label, "b");
  EXPECT_EQ(cb.bins()[2].kind, BinKind::other);
  EXPECT_EQ(cb.bin_of_text("d"), 2u);
  EXPECT_EQ(cb.bin_of_text("never-seen"), 2u);
}

TEST(Binning, SingleValueColumnAndAllMissing) {
  auto t = load_csv("k,m\n7,\n7,\n7,\n");
  auto map = std::make_shared<const BinningMap>(compute_binning(t, 5));
  EXPECT_EQ((*map)[0].size(), 2u);
  auto bt = apply_binning(t, map);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(bt.bin(i, 1), (*map)[1].missing_bin());
}

TEST(Binning, ClampsOutOfRangeValues) {
  std::vector<double> v;
  for (int i = 0; i <= 1000; ++i) v.push_back(100.0 + i * 2.624);
  auto t = numeric_table("DISTANCE", v);
  auto map = compute_binning(t, 3);
  const auto& cb = map[0];
  const auto top = static_cast<std::uint32_t>(cb.size() - 2);
  EXPECT_EQ(cb.bin_of_number(v.back() + 0.5), top);
  EXPECT_EQ(cb.bin_of_number(-1e9), 0u);
}

TEST(Binning, ExactlyOneBinPerCell) {
  fixture::Flights f;
  auto t = load_csv("x,y\n1,a\n2.5,b\n,c\n9,\n4,a\n");
  auto map = compute_binning(t, 2);
  for (std::size_t j = 0; j < t.cols(); ++j) {
    const auto& cb = map[j];
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const auto v = t.value(i, j);
      std::size_t matches = 0;
      for (const auto& b : cb.bins()) {
        bool in = false;
        if (is_missing(v)) in = b.kind == BinKind::missing;
        else if (b.kind == BinKind::interval) {
          const double d = std::get<double>(v);
          in = d >= b.lo && (d < b.hi || (b.id + 2 == cb.size() && d <= b.hi));
        } else if (b.kind == BinKind::values || b.kind == BinKind::other) {
          in = std::find(b.values.begin(), b.values.end(), value_text(v)) != b.values.end();
        }
        matches += in;
      }
      EXPECT_EQ(matches, 1u) << i << "," << j;
      (void)f;
    }
  }
}

TEST(Binning, Deterministic) {
  fixture::Flights a, b;
  EXPECT_EQ(a.binned, b.binned);
  EXPECT_EQ(binning_to_json(*a.binning).dump(), binning_to_json(*b.binning).dump());
}

TEST(Binning, JsonRoundTrip) {
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(i * 0.37);
  auto t = numeric_table("x", v);
  auto map = compute_binning(t, 4);
  auto back = binning_from_json(binning_to_json(map), 4);
  EXPECT_EQ(binning_to_json(back).dump(), binning_to_json(map).dump());
  for (double x : {0.0, 10.0, 55.5, 184.6, 999.0}) EXPECT_EQ(back[0].bin_of_number(x), map[0].bin_of_number(x));

  fixture::Flights f;
  auto fb = binning_from_json(binning_to_json(*f.binning));
  EXPECT_EQ(binning_to_json(fb).dump(), binning_to_json(*f.binning).dump());
}

TEST(Binning, Errors) {
  fixture::Flights f;
  EXPECT_THROW(compute_binning(f.table, 0), ConfigError);
  auto other = load_csv("ZZZ\n1\n");
  EXPECT_THROW(apply_binning(other, f.binning), BinningError);
}

TEST(Binning, QueryResultReusesFullTableBins) {
  fixture::Flights f;
  SPQuery q;
  q.predicates.push_back({"CANCELLED", Comparator::eq, {0.0}});
  q.projection = {"CANCELLED", "DISTANCE"};
  auto r = apply_query(f.table, q);
  auto bt = apply_binning(r, f.binning);
  EXPECT_EQ(bt.column_ids(), (std::vector<std::uint32_t>{f.col("CANCELLED"), f.col("DISTANCE")}));
  EXPECT_EQ(bt.bin(0, 1), f.bin("DISTANCE", "medium"));
  EXPECT_EQ(bt.row_ids().front(), 4);
}
