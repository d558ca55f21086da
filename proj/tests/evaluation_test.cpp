#include <gtest/gtest.h>

#include <sstream>

#include "fixture.hpp"
#include "subtab/evaluation.hpp"

using namespace subtab;

namespace {

const fixture::Flights& flights() {
  static const fixture::Flights f;
  return f;
}

Artifacts fixture_artifacts() {
  Artifacts a;
  a.binning = flights().binning;
  a.rules = std::make_shared<const RuleSet>(flights().rules);
  return a;
}

RuleSet mine(const BinnedTable& bt, double support, double confidence = 0.9) {
  AprioriParams p;
  p.min_support = support;
  p.min_confidence = confidence;
  p.min_rule_size = 3;
  p.max_consequent_size = 1;
  return mine_rules_apriori(bt, p);
}

}  // namespace

TEST(SessionLog, ParsesAndRoundTrips) {
  const std::string text =
      "{\"session\":\"a\",\"query\":{\"predicates\":[{\"column\":\"CANCELLED\",\"op\":\"=\",\"value\":1}]},"
      "\"fragments\":[{\"column\":\"YEAR\"}]}\n"
      "{\"session\":\"a\",\"fragments\":[{\"column\":\"DISTANCE\",\"value\":1000}]}\n"
      "\n"
      "{\"session\":\"b\",\"fragments\":[]}\n";
  const auto logs = parse_session_logs(text);
  ASSERT_EQ(logs.size(), 2u);
  EXPECT_EQ(logs[0].steps.size(), 2u);
  EXPECT_TRUE(logs[0].steps[0].query);
  EXPECT_EQ(logs[0].steps[1].fragments[0].kind, Fragment::Kind::value);
  EXPECT_EQ(parse_session_logs(sessions_to_jsonl(logs)).size(), 2u);
  EXPECT_EQ(sessions_to_jsonl(parse_session_logs(sessions_to_jsonl(logs))), sessions_to_jsonl(logs));
}

TEST(SessionLog, ErrorsCarryLineNumbers) {
  try {
    parse_session_logs("{\"fragments\":[]}\nnot json\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_session_logs("{\"session\":\"x\"}"), ValidationError);
  EXPECT_THROW(parse_session_logs("{\"session\":\"a\",\"fragments\":[]}\n{\"session\":\"b\",\"fragments\":[]}\n"
                                  "{\"session\":\"a\",\"fragments\":[]}"),
               ValidationError);
}

TEST(Replay, UnknownColumnRejected) {
  SessionLog log{"x", {{std::nullopt, {{Fragment::Kind::column, "NOPE", {}}}}, {std::nullopt, {}}}};
  EXPECT_THROW(replay_session(flights().table, log, fixture_artifacts(), {}), ValidationError);
}

TEST(Replay, ForcedTargetsCaptureEveryColumn) {
  ReplayOptions o;
  o.select.method = Method::greedy;
  o.select.request.k = 3;
  o.select.request.l = 3;
  o.targets_from_next_step = true;
  SessionLog log{"s", {}};
  for (const char* c : {"YEAR", "DISTANCE", "DEP_TIME"})
    log.steps.push_back({std::nullopt, {{Fragment::Kind::column, c, {}}, {Fragment::Kind::column, "CANCELLED", {}}}});
  const auto s = replay_session(flights().table, log, fixture_artifacts(), o);
  EXPECT_EQ(s.column_total, 4u);
  EXPECT_DOUBLE_EQ(s.column_rate(), 1.0);
}

TEST(Replay, EmptyQueryResultCountsAsMissed) {
  SPQuery q;
  q.predicates.push_back({"YEAR", Comparator::eq, {Value{1999.0}}});
  SessionLog log{"s", {{q, {}}, {std::nullopt, {{Fragment::Kind::column, "YEAR", {}}}}}};
  ReplayOptions o;
  o.select.method = Method::naive;
  const auto s = replay_session(flights().table, log, fixture_artifacts(), o);
  EXPECT_EQ(s.column_total, 1u);
  EXPECT_EQ(s.column_captured, 0u);
}

TEST(Replay, CaptureRateMonotoneInL) {
  const auto p = generate_planted_table(400, 9, 3, 2, 0.05, 3);
  const auto logs = generate_planted_sessions(p, 4, 4, 5);
  Config c;
  c.bins = 8;
  const Artifacts none;
  double prev = -1;
  for (std::size_t l = 1; l <= 9; ++l) {
    ReplayOptions o;
    o.select.method = Method::naive;
    o.select.request.k = 5;
    o.select.request.l = l;
    const auto s = replay_sessions(p.table, logs, none, o, c);
    EXPECT_GE(s.column_rate(), prev - 1e-12) << "l=" << l;
    prev = s.column_rate();
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(Replay, ValueFragmentMatchedByBin) {
  // An unseen literal falls into a fallback bin; it counts only if a shown cell does too.
  ReplayOptions o;
  o.select.method = Method::greedy;
  o.select.request.k = 8;
  o.select.request.l = 5;
  SessionLog log{"s", {{std::nullopt, {}}, {std::nullopt, {{Fragment::Kind::value, "DISTANCE", Value{"nonsense"}}}}}};
  const auto s = replay_session(flights().table, log, fixture_artifacts(), o);
  EXPECT_EQ(s.value_total, 1u);
  const auto& b = (*flights().binning)[*flights().binning->index_of("DISTANCE")];
  bool any = false;
  for (std::size_t i = 0; i < flights().table.rows(); ++i)
    any = any || b.bin_of(flights().table.value(i, *flights().table.schema().index_of("DISTANCE"))) ==
                     b.bin_of(Value{"nonsense"});
  EXPECT_EQ(s.value_captured, any ? 1u : 0u);
}

TEST(Planted, RecoveredAtZeroNoise) {
  const auto p = generate_planted_table(800, 12, 4, 2, 0.0, 9);
  EXPECT_EQ(p.rules.size(), 8u);
  const auto bt = apply_binning(p.table, std::make_shared<const BinningMap>(compute_binning(p.table, 8)));
  const auto rs = mine(bt, 0.2);
  for (const auto& r : p.rules) EXPECT_TRUE(contains_planted(rs, bt.binning(), r));
}

TEST(Planted, NoiseLowersSupportAndValidation) {
  auto support = [](double noise) {
    const auto p = generate_planted_table(1000, 6, 2, 1, noise, 4);
    const auto bt = apply_binning(p.table, std::make_shared<const BinningMap>(compute_binning(p.table, 8)));
    std::size_t hits = 0;
    const auto& r = p.rules[0];
    for (std::size_t i = 0; i < p.table.rows(); ++i) {
      bool all = true;
      for (const auto* side : {&r.antecedent, &r.consequent})
        for (const auto& [col, val] : *side) {
          const auto j = *p.table.schema().index_of(col);
          all = all && std::get<std::string>(p.table.value(i, j)) == val;
        }
      hits += all;
    }
    return static_cast<double>(hits) / static_cast<double>(p.table.rows());
  };
  EXPECT_DOUBLE_EQ(support(0.0), 0.5);
  EXPECT_LT(support(0.3), support(0.0));
  EXPECT_THROW(generate_planted_table(0, 6, 2, 1, 0.0, 1), ParameterError);
  EXPECT_THROW(generate_planted_table(10, 6, 2, 1, 1.0, 1), ParameterError);
  EXPECT_THROW(generate_planted_table(10, 5, 2, 2, 0.0, 1), ParameterError);
}

TEST(Planted, GeneratorIsDeterministic) {
  const auto a = generate_planted_table(50, 6, 2, 1, 0.1, 7);
  const auto b = generate_planted_table(50, 6, 2, 1, 0.1, 7);
  std::ostringstream ca, cb;
  write_csv(a.table, ca);
  write_csv(b.table, cb);
  EXPECT_EQ(ca.str(), cb.str());
  const auto n = generate_numeric_table(100, 3, 1);
  EXPECT_EQ(n.rows(), 100u);
  EXPECT_EQ(n.schema()[0].kind, ColumnKind::continuous);
}

TEST(Sweep, SinglePointDeterministicAndCsv) {
  const auto p = generate_planted_table(300, 6, 2, 1, 0.05, 2);
  SweepGrid g;
  g.axes["support"] = {0.2};
  SweepOptions o;
  o.random_equal_time = false;
  o.random_iterations = 50;
  Config c;
  c.dim = 8;
  c.epochs = 2;
  c.k = 4;
  c.l = 3;
  const auto a = sweep_parameters(p.table, g, o, c);
  const auto b = sweep_parameters(p.table, g, o, c);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].method, b.rows[i].method);
    EXPECT_DOUBLE_EQ(a.rows[i].combined, b.rows[i].combined);
    EXPECT_GE(a.rows[i].cell_coverage, 0.0);
    EXPECT_LE(a.rows[i].cell_coverage, 1.0);
  }
  std::ostringstream csv;
  write_report_csv(a, csv);
  const auto text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  std::ostringstream sum;
  write_summary_csv(summarize(a), sum);
  EXPECT_EQ(sum.str().rfind("axis,method,value,runs", 0), 0u);
}

TEST(Sweep, GridParsing) {
  const auto g = sweep_grid_from_json(nlohmann::json::parse(R"({"bins":[3,5],"alpha":[0.2]})"));
  EXPECT_EQ(g.axes.at("bins").size(), 2u);
  EXPECT_THROW(sweep_grid_from_json(nlohmann::json::parse(R"({"speed":[1]})")), ConfigError);
  EXPECT_THROW(sweep_grid_from_json(nlohmann::json::parse(R"({"bins":[]})")), ConfigError);
  EXPECT_THROW(sweep_grid_from_json(nlohmann::json::parse("{}")), ConfigError);
}

TEST(SignTest, KnownValues) {
  EXPECT_NEAR(sign_test_p(15, 5), 0.0207, 1e-4);
  EXPECT_NEAR(sign_test_p(10, 10), 0.5881, 1e-4);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 0), 1.0);
  EXPECT_NEAR(sign_test_p(20, 0), std::pow(0.5, 20), 1e-12);
}
