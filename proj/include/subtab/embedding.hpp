#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "subtab/binning.hpp"
#include "subtab/error.hpp"
#include "subtab/util.hpp"

namespace subtab {

// Tabular sentences over column-qualified bin tokens. Sentences are stored
// flat: sentence i is tokens[offsets[i] .. offsets[i+1]).
struct SentenceCorpus {
  std::vector<std::string> vocabulary;  // every token of the source table, by id
  std::vector<std::uint32_t> tokens;
  std::vector<std::size_t> offsets{0};
  std::size_t tuple_sentences = 0;  // after sampling
  std::size_t column_chunks = 0;
  std::size_t cap = 0;

  std::size_t size() const noexcept { return offsets.size() - 1; }
  std::span<const std::uint32_t> sentence(std::size_t i) const {
    return {tokens.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::vector<std::string> sentence_tokens(std::size_t i) const {
    std::vector<std::string> out;
    for (auto t : sentence(i)) out.push_back(vocabulary[t]);
    return out;
  }
  std::uint64_t hash() const {
    std::uint64_t h = fnv1a({});
    for (const auto& v : vocabulary) h = fnv1a(v + "\n", h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(tokens.data()), tokens.size() * sizeof(std::uint32_t)), h);
    return fnv1a(std::string_view(reinterpret_cast<const char*>(offsets.data()), offsets.size() * sizeof(std::size_t)), h);
  }
};

struct CorpusOptions {
  std::size_t cap = 100000;
  std::size_t chunk = 1000;
  std::uint64_t seed = 42;
};

// One tuple-sentence per row plus each column split into chunks of at most
// `chunk` tokens; when there are more than `cap` sentences, `cap` of them are
// drawn uniformly without replacement.
inline SentenceCorpus build_corpus(const BinnedTable& bt, const CorpusOptions& opt = {}) {
  if (bt.rows() == 0 || bt.cols() == 0) throw EmptyTableError("cannot build a corpus from an empty table");
  if (opt.cap == 0 || opt.chunk == 0) throw ConfigError("corpus cap and chunk size must be positive");
  const std::size_t n = bt.rows(), m = bt.cols();

  SentenceCorpus c;
  c.cap = opt.cap;
  // Token ids: per column, per bin that occurs.
  std::vector<std::vector<std::uint32_t>> id_of(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto nbins = bt.binning()[bt.column_ids()[j]].size();
    std::vector<char> seen(nbins, 0);
    for (auto b : bt.column_bins(j)) seen[b] = 1;
    id_of[j].assign(nbins, UINT32_MAX);
    for (std::uint32_t b = 0; b < nbins; ++b) {
      if (!seen[b]) continue;
      id_of[j][b] = static_cast<std::uint32_t>(c.vocabulary.size());
      c.vocabulary.push_back(bt.token(j, b));
    }
  }

  const std::size_t chunks_per_col = (n + opt.chunk - 1) / opt.chunk;
  const std::size_t total = n + m * chunks_per_col;
  std::vector<std::size_t> chosen(total);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (total > opt.cap) {
    std::mt19937_64 rng(opt.seed);
    for (std::size_t i = 0; i < opt.cap; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, total - 1);
      std::swap(chosen[i], chosen[d(rng)]);
    }
    chosen.resize(opt.cap);
    std::sort(chosen.begin(), chosen.end());
  }

  c.offsets.reserve(chosen.size() + 1);
  for (auto s : chosen) {
    if (s < n) {
      for (std::size_t j = 0; j < m; ++j) c.tokens.push_back(id_of[j][bt.bin(s, j)]);
      ++c.tuple_sentences;
    } else {
      const std::size_t j = (s - n) / chunks_per_col, part = (s - n) % chunks_per_col;
      const std::size_t b = part * opt.chunk, e = std::min(n, b + opt.chunk);
      const auto& bins = bt.column_bins(j);
      for (std::size_t i = b; i < e; ++i) c.tokens.push_back(id_of[j][bins[i]]);
      ++c.column_chunks;
    }
    c.offsets.push_back(c.tokens.size());
  }
  return c;
}

struct TrainingOptions {
  std::size_t dimension = 64;
  std::size_t epochs = 5;
  std::size_t negatives = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 42;
  // Contexts drawn per center token. Sentences no longer than this + 1 use
  // every ordered pair; longer ones use a fresh uniform sample each epoch.
  std::size_t context_cap = 8;
  unsigned threads = 1;
};

inline nlohmann::json to_json(const TrainingOptions& o) {
  return {{"dimension", o.dimension}, {"epochs", o.epochs},   {"negatives", o.negatives},
          {"learningRate", o.learning_rate}, {"seed", o.seed}, {"contextCap", o.context_cap},
          {"threads", o.threads}};
}

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(std::size_t dim, std::vector<std::string> vocab, std::vector<float> vectors,
                 nlohmann::json meta = nlohmann::json::object())
      : dim_(dim), vocab_(std::move(vocab)), vectors_(std::move(vectors)), meta_(std::move(meta)) {
    if (dim_ == 0) throw EmbeddingError("embedding dimension must be positive");
    if (vectors_.size() != vocab_.size() * dim_) throw EmbeddingError("vector matrix does not match vocabulary");
    for (std::size_t i = 0; i < vocab_.size(); ++i)
      if (!index_.emplace(vocab_[i], i).second) throw EmbeddingError("duplicate token in vocabulary");
  }

  std::size_t dimension() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vocab_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  const nlohmann::json& training_meta() const noexcept { return meta_; }
  nlohmann::json& training_meta() noexcept { return meta_; }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::span<const float> vector(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw MissingVectorError("no vector for token '" + token + "'");
    return {vectors_.data() + it->second * dim_, dim_};
  }
  const float* find(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? nullptr : vectors_.data() + it->second * dim_;
  }
  const std::vector<float>& matrix() const noexcept { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> vocab_;
  std::vector<float> vectors_;
  nlohmann::json meta_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Number of train_embedding calls in this process; lets tests assert that
// query-time selection reuses the trained model.
inline std::atomic<std::uint64_t>& embedding_training_calls() {
  static std::atomic<std::uint64_t> calls{0};
  return calls;
}

namespace detail {

class SigmoidTable {
 public:
  static constexpr int kSize = 1000;
  static constexpr float kMax = 6.0f;
  SigmoidTable() {
    for (int i = 0; i < kSize; ++i) {
      const double x = (static_cast<double>(i) / kSize * 2.0 - 1.0) * kMax;
      table_[static_cast<std::size_t>(i)] = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
    }
  }
  float operator()(float x) const {
    if (x >= kMax) return 1.0f;
    if (x <= -kMax) return 0.0f;
    return table_[static_cast<std::size_t>((x + kMax) * (kSize / kMax / 2.0f))];
  }

 private:
  std::array<float, kSize> table_{};
};

// The classic linear congruential generator used by word2vec; cheap and
// reproducible per worker.
struct Lcg {
  std::uint64_t state;
  std::uint64_t next() {
    state = state * 25214903917ull + 11;
    return state;
  }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>((next() >> 16) % n); }
};

}  // namespace detail

// Skip-gram with negative sampling. For each center token every other token
// of the sentence is a context (capped by `context_cap`); the context's output
// vector and `negatives` unigram^0.75 samples are pushed towards or away from
// the center's input vector. Input vectors are returned.
inline EmbeddingModel train_embedding(const SentenceCorpus& corpus, const TrainingOptions& opt = {}) {
  ++embedding_training_calls();
  if (corpus.size() == 0) throw EmbeddingError("empty corpus");
  if (opt.dimension == 0 || opt.epochs == 0) throw ConfigError("dimension and epochs must be positive");
  const std::size_t V = corpus.vocabulary.size(), dim = opt.dimension;

  std::vector<std::uint64_t> counts(V, 0);
  for (auto t : corpus.tokens) ++counts[t];
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  if (present < 2) throw EmbeddingError("degenerate vocabulary: fewer than two distinct tokens in the corpus");

  std::vector<float> syn0(V * dim), syn1(V * dim, 0.0f);
  {
    detail::Lcg init{opt.seed};
    for (auto& w : syn0) w = (static_cast<float>(init.next() & 0xFFFF) / 65536.0f - 0.5f) / static_cast<float>(dim);
  }

  // Negative sampling table.
  std::vector<std::uint32_t> neg_table;
  {
    const std::size_t size = std::clamp<std::size_t>(present * 100, 100000, 10000000);
    double norm = 0;
    for (auto c : counts) norm += std::pow(static_cast<double>(c), 0.75);
    neg_table.reserve(size);
    std::uint32_t w = 0;
    while (w < V && counts[w] == 0) ++w;
    double acc = std::pow(static_cast<double>(counts[w]), 0.75) / norm;
    for (std::size_t i = 0; i < size; ++i) {
      neg_table.push_back(w);
      if (static_cast<double>(i + 1) / static_cast<double>(size) > acc) {
        do ++w;
        while (w < V && counts[w] == 0);
        if (w >= V) w = neg_table.back();
        else acc += std::pow(static_cast<double>(counts[w]), 0.75) / norm;
      }
    }
  }

  const detail::SigmoidTable sigmoid;
  const std::uint64_t total_work = static_cast<std::uint64_t>(opt.epochs) * corpus.tokens.size();
  std::atomic<std::uint64_t> done{0};
  const float lr0 = static_cast<float>(opt.learning_rate);

  auto train_range = [&](std::size_t first, std::size_t last, std::uint64_t seed) {
    detail::Lcg rng{seed};
    std::vector<float> grad(dim);
    std::uint64_t local_done = 0;
    float lr = lr0;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
      for (std::size_t s = first; s < last; ++s) {
        auto sent = corpus.sentence(s);
        const std::size_t len = sent.size();
        if (len < 2) continue;
        for (std::size_t pos = 0; pos < len; ++pos) {
          if ((++local_done & 1023) == 0) {
            const auto now = done.fetch_add(1024) + 1024;
            lr = std::max(lr0 * 1e-4f, lr0 * (1.0f - static_cast<float>(now) / static_cast<float>(total_work + 1)));
          }
          const std::uint32_t center = sent[pos];
          float* in = syn0.data() + std::size_t{center} * dim;
          const bool all = len - 1 <= opt.context_cap;
          const std::size_t contexts = all ? len - 1 : opt.context_cap;
          for (std::size_t ci = 0; ci < contexts; ++ci) {
            std::size_t cpos;
            if (all) {
              cpos = ci < pos ? ci : ci + 1;
            } else {
              cpos = rng.below(len - 1);
              if (cpos >= pos) ++cpos;
            }
            const std::uint32_t context = sent[cpos];
            std::fill(grad.begin(), grad.end(), 0.0f);
            for (std::size_t d = 0; d <= opt.negatives; ++d) {
              std::uint32_t target;
              float label;
              if (d == 0) {
                target = context;
                label = 1.0f;
              } else {
                target = neg_table[rng.below(neg_table.size())];
                if (target == context) continue;
                label = 0.0f;
              }
              float* out = syn1.data() + std::size_t{target} * dim;
              float dot = 0;
              for (std::size_t k = 0; k < dim; ++k) dot += in[k] * out[k];
              const float g = (label - sigmoid(dot)) * lr;
              for (std::size_t k = 0; k < dim; ++k) grad[k] += g * out[k];
              for (std::size_t k = 0; k < dim; ++k) out[k] += g * in[k];
            }
            for (std::size_t k = 0; k < dim; ++k) in[k] += grad[k];
          }
        }
      }
    }
  };

  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    train_range(0, corpus.size(), opt.seed ^ 0x9E3779B97F4A7C15ull);
  } else {
    // Lock-free shared updates; results then depend on scheduling.
    std::vector<std::thread> pool;
    const std::size_t per = (corpus.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t a = std::min(corpus.size(), t * per), b = std::min(corpus.size(), a + per);
      pool.emplace_back(train_range, a, b, opt.seed ^ (0x9E3779B97F4A7C15ull * (t + 1)));
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::string> vocab;
  std::vector<float> vectors;
  nlohmann::json missing = nlohmann::json::array();
  for (std::size_t w = 0; w < V; ++w) {
    if (counts[w] == 0) {
      missing.push_back(corpus.vocabulary[w]);
      continue;
    }
    vocab.push_back(corpus.vocabulary[w]);
    vectors.insert(vectors.end(), syn0.begin() + static_cast<std::ptrdiff_t>(w * dim),
                   syn0.begin() + static_cast<std::ptrdiff_t>((w + 1) * dim));
  }
  nlohmann::json meta = to_json(opt);
  meta["corpusHash"] = hex64(corpus.hash());
  meta["sentences"] = corpus.size();
  meta["tupleSentences"] = corpus.tuple_sentences;
  meta["columnChunks"] = corpus.column_chunks;
  meta["missingTokens"] = std::move(missing);
  return EmbeddingModel(dim, std::move(vocab), std::move(vectors), std::move(meta));
}

// The vector of the cell token (column, bin). Throws MissingVectorError when
// the token never made it into the model.
inline std::span<const float> cell_vector(const EmbeddingModel& m, const BinningMap& b, const std::string& column,
                                          std::uint32_t bin) {
  auto col = b.index_of(column);
  if (!col) throw MissingVectorError("unknown column '" + column + "'");
  if (bin >= b[*col].size()) throw MissingVectorError("unknown bin " + std::to_string(bin) + " in '" + column + "'");
  return m.vector(b.token(*col, bin));
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------
// Model file: "SUBTABM1", u32 version, u32 dim, u32 vocab, then per token a
// u32 byte length and the bytes, then the row-major float32 matrix.

inline constexpr char kModelMagic[8] = {'S', 'U', 'B', 'T', 'A', 'B', 'M', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void write_model(const EmbeddingModel& m, std::ostream& out) {
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kModelMagic, sizeof kModelMagic);
  u32(kModelVersion);
  u32(static_cast<std::uint32_t>(m.dimension()));
  u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& t : m.vocabulary()) {
    u32(static_cast<std::uint32_t>(t.size()));
    out.write(t.data(), static_cast<std::streamsize>(t.size()));
  }
  out.write(reinterpret_cast<const char*>(m.matrix().data()),
            static_cast<std::streamsize>(m.matrix().size() * sizeof(float)));
  if (!out) throw EmbeddingError("failed to write model");
}

inline EmbeddingModel read_model(std::istream& in, nlohmann::json meta = nlohmann::json::object()) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0) throw EmbeddingError("not a model file (bad magic)");
  auto u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw EmbeddingError("truncated model file");
    return v;
  };
  const auto version = u32();
  if (version != kModelVersion) throw EmbeddingError("unsupported model version " + std::to_string(version));
  const auto dim = u32(), count = u32();
  std::vector<std::string> vocab(count);
  for (auto& t : vocab) {
    const auto len = u32();
    t.resize(len);
    in.read(t.data(), len);
  }
  std::vector<float> vectors(std::size_t{count} * dim);
  in.read(reinterpret_cast<char*>(vectors.data()), static_cast<std::streamsize>(vectors.size() * sizeof(float)));
  if (!in) throw EmbeddingError("truncated model file");
  return EmbeddingModel(dim, std::move(vocab), std::move(vectors), std::move(meta));
}

inline void save_model(const EmbeddingModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmbeddingError("cannot open '" + path + "' for writing");
  write_model(m, out);
  std::ofstream meta(path + ".json");
  meta << m.training_meta().dump(2) << "\n";
}

inline EmbeddingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingError("cannot open '" + path + "'");
  nlohmann::json meta = nlohmann::json::object();
  if (std::ifstream mj(path + ".json"); mj) meta = nlohmann::json::parse(mj, nullptr, false);
  if (meta.is_discarded()) meta = nlohmann::json::object();
  return read_model(in, std::move(meta));
}

}  // namespace subtab
