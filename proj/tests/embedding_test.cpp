#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fixture.hpp"
#include "subtab/embedding.hpp"

using namespace subtab;

namespace {

// Two row clusters with disjoint categorical values in every column.
BinnedTable two_cluster_table(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m; ++j) names.push_back("c" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const char group = (i % 2) ? 'b' : 'a';
    std::vector<std::string> r;
    for (std::size_t j = 0; j < m; ++j) r.push_back(std::string(1, group) + std::to_string(rng() % 2));
    rows.push_back(std::move(r));
  }
  const auto t = table_from_rows(names, rows);
  return apply_binning(t, std::make_shared<const BinningMap>(compute_binning(t, 5)), "planted");
}

TrainingOptions small_options(std::uint64_t seed) {
  TrainingOptions o;
  o.dimension = 16;
  o.epochs = 5;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Corpus, FixtureHasThirteenSentences) {
  fixture::Flights f;
  const auto c = build_corpus(f.binned);
  EXPECT_EQ(c.size(), 13u);
  EXPECT_EQ(c.tuple_sentences, 8u);
  EXPECT_EQ(c.column_chunks, 5u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(c.sentence(i).size(), 5u);
  for (std::size_t i = 8; i < 13; ++i) EXPECT_EQ(c.sentence(i).size(), 8u);
  // First tuple-sentence is row 1 in column order.
  const auto s0 = c.sentence_tokens(0);
  EXPECT_EQ(s0.front(), f.binned.token(0, f.binned.bin(0, 0)));
}

TEST(Corpus, ChunkingSplitsColumns) {
  fixture::Flights f;
  CorpusOptions o;
  o.chunk = 3;
  const auto c = build_corpus(f.binned, o);
  EXPECT_EQ(c.column_chunks, 15u);
  EXPECT_EQ(c.size(), 23u);
  EXPECT_EQ(c.sentence(8).size(), 3u);
  EXPECT_EQ(c.sentence(9).size(), 3u);
  EXPECT_EQ(c.sentence(10).size(), 2u);
}

TEST(Corpus, CapBinds) {
  const auto bt = two_cluster_table(2000, 10, 1);
  CorpusOptions o;
  o.cap = 1000;
  o.chunk = 100;
  const auto c = build_corpus(bt, o);
  EXPECT_EQ(c.size(), 1000u);
  EXPECT_EQ(c.tuple_sentences + c.column_chunks, 1000u);
  EXPECT_EQ(c.hash(), build_corpus(bt, o).hash());
  o.seed = 7;
  EXPECT_NE(c.hash(), build_corpus(bt, o).hash());
}

TEST(Corpus, EmptyTableRejected) {
  fixture::Flights f;
  CorpusOptions o;
  o.chunk = 0;
  EXPECT_THROW(build_corpus(f.binned, o), ConfigError);
}

TEST(Embedding, PlantedCooccurrence) {
  // A and B always share a sentence, C never meets A.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SentenceCorpus c;
    c.vocabulary = {"A", "B", "C", "D", "E", "F"};
    std::mt19937_64 rng(seed);
    for (int s = 0; s < 400; ++s) {
      std::vector<std::uint32_t> sent = (s % 2) ? std::vector<std::uint32_t>{0, 1, 3} : std::vector<std::uint32_t>{2, 4, 5};
      std::shuffle(sent.begin(), sent.end(), rng);
      c.tokens.insert(c.tokens.end(), sent.begin(), sent.end());
      c.offsets.push_back(c.tokens.size());
    }
    const auto m = train_embedding(c, small_options(seed));
    if (cosine(m.vector("A"), m.vector("B")) > cosine(m.vector("A"), m.vector("C"))) ++wins;
  }
  EXPECT_GE(wins, 19);
}

TEST(Embedding, PlantedClustersSeparate) {
  const auto bt = two_cluster_table(400, 6, 3);
  const auto m = train_embedding(build_corpus(bt), small_options(3));
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  // Tokens end with the cell value ("a0", "b1", ...); group by its letter.
  auto group = [](const std::string& t) { return t[t.size() - 2]; };
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const auto& a = m.vocabulary()[i];
      const auto& b = m.vocabulary()[j];
      const double c = cosine(m.vector(a), m.vector(b));
      if (group(a) == group(b)) intra += c, ++ni;
      else inter += c, ++nx;
    }
  ASSERT_GT(ni, 0);
  ASSERT_GT(nx, 0);
  EXPECT_GT(intra / ni, inter / nx);
}

TEST(Embedding, DeterministicSingleWorker) {
  fixture::Flights f;
  const auto c = build_corpus(f.binned);
  const auto a = train_embedding(c, small_options(11));
  const auto b = train_embedding(c, small_options(11));
  EXPECT_EQ(a.vocabulary(), b.vocabulary());
  ASSERT_EQ(a.matrix().size(), b.matrix().size());
  EXPECT_EQ(std::memcmp(a.matrix().data(), b.matrix().data(), a.matrix().size() * sizeof(float)), 0);
  const auto other = train_embedding(c, small_options(12));
  EXPECT_NE(a.matrix(), other.matrix());
}

TEST(Embedding, ShapeAndFiniteness) {
  fixture::Flights f;
  const auto m = train_embedding(build_corpus(f.binned));
  EXPECT_EQ(m.dimension(), 64u);
  for (const auto& t : m.vocabulary()) {
    const auto v = m.vector(t);
    ASSERT_EQ(v.size(), 64u);
    for (float x : v) EXPECT_TRUE(std::isfinite(x));
  }
  // Every occurring cell token has a vector.
  for (std::size_t i = 0; i < f.binned.rows(); ++i)
    for (std::size_t j = 0; j < f.binned.cols(); ++j) EXPECT_TRUE(m.contains(f.binned.token(j, f.binned.bin(i, j))));
  EXPECT_TRUE(m.training_meta()["missingTokens"].empty());
  EXPECT_EQ(m.training_meta()["sentences"], 13);
}

TEST(Embedding, DegenerateVocabulary) {
  SentenceCorpus c;
  c.vocabulary = {"only"};
  c.tokens = {0, 0, 0};
  c.offsets = {0, 3};
  EXPECT_THROW(train_embedding(c), EmbeddingError);
  SentenceCorpus empty;
  EXPECT_THROW(train_embedding(empty), EmbeddingError);
}

TEST(Embedding, MissingTokensReported) {
  SentenceCorpus c;
  c.vocabulary = {"A", "B", "unused"};
  c.tokens = {0, 1, 1, 0};
  c.offsets = {0, 2, 4};
  const auto m = train_embedding(c, small_options(1));
  EXPECT_EQ(m.size(), 2u);
  EXPECT_FALSE(m.contains("unused"));
  EXPECT_EQ(m.training_meta()["missingTokens"], nlohmann::json::array({"unused"}));
  EXPECT_THROW(m.vector("unused"), MissingVectorError);
  EXPECT_EQ(m.find("unused"), nullptr);
}

TEST(Embedding, CellVectorSharedByBin) {
  fixture::Flights f;
  const auto m = train_embedding(build_corpus(f.binned), small_options(5));
  // Rows 2 and 3 of the printed table both have DISTANCE = medium.
  const auto dist = *f.binned.local_index(std::string("DISTANCE"));
  ASSERT_EQ(f.binned.bin(1, dist), f.binned.bin(2, dist));
  const auto a = cell_vector(m, *f.binning, "DISTANCE", f.binned.bin(1, dist));
  const auto b = cell_vector(m, *f.binning, "DISTANCE", f.binned.bin(2, dist));
  EXPECT_EQ(a.data(), b.data());
  EXPECT_THROW(cell_vector(m, *f.binning, "NOPE", 0), MissingVectorError);
  EXPECT_THROW(cell_vector(m, *f.binning, "DISTANCE", 99), MissingVectorError);
}

TEST(Embedding, ModelRoundTrip) {
  fixture::Flights f;
  const auto m = train_embedding(build_corpus(f.binned), small_options(9));
  const auto dir = std::filesystem::temp_directory_path() / "subtab_model_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.bin").string();
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.vocabulary(), m.vocabulary());
  EXPECT_EQ(back.matrix(), m.matrix());
  EXPECT_EQ(back.training_meta()["corpusHash"], m.training_meta()["corpusHash"]);

  std::stringstream bad("NOTAMODELFILE");
  EXPECT_THROW(read_model(bad), EmbeddingError);
  std::stringstream buf;
  write_model(m, buf);
  auto bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_model(truncated), EmbeddingError);
  std::filesystem::remove_all(dir);
}

TEST(Embedding, TrainingCounterCounts) {
  fixture::Flights f;
  const auto c = build_corpus(f.binned);
  const auto before = embedding_training_calls().load();
  (void)train_embedding(c, small_options(1));
  EXPECT_EQ(embedding_training_calls().load(), before + 1);
}

TEST(Embedding, ThreadedTrainingProducesFiniteVectors) {
  const auto bt = two_cluster_table(500, 6, 2);
  auto o = small_options(4);
  o.threads = 3;
  const auto m = train_embedding(build_corpus(bt), o);
  for (float x : m.matrix()) ASSERT_TRUE(std::isfinite(x));
}
