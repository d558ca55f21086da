#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "subtab/error.hpp"
#include "subtab/pipeline.hpp"
#include "subtab/table.hpp"

namespace subtab {

// HTTP status for a library error code.
inline int http_status(const std::string& code) {
  if (code == "parse_error" || code == "empty_table" || code == "query_error" || code == "bad_request") return 400;
  if (code == "too_large") return 413;
  if (code == "not_found") return 404;
  if (code == "not_preprocessed" || code == "conflict") return 409;
  if (code == "config_error" || code == "parameter_error" || code == "validation_error" || code == "size_guard" ||
      code == "selection_error" || code == "binning_error" || code == "rule_error")
    return 422;
  return 500;
}

struct ServiceOptions {
  std::size_t max_upload_bytes = std::size_t{512} << 20;
  std::optional<std::filesystem::path> data_dir;  // artifact cache; SUBTAB_DATA_DIR when unset
  Config defaults;
};

enum class SessionStatus { loaded, preprocessing, ready, failed };

inline const char* to_string(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::loaded: return "loaded";
    case SessionStatus::preprocessing: return "preprocessing";
    case SessionStatus::ready: return "ready";
    case SessionStatus::failed: return "failed";
  }
  return "?";
}

struct TableSession {
  std::string id;
  std::shared_ptr<const Table> table;
  mutable std::mutex mutex;
  SessionStatus status = SessionStatus::loaded;
  Artifacts artifacts;
  Config config;
  std::string error;
};

struct Job {
  std::string id;
  std::string table_id;
  mutable std::mutex mutex;
  std::string state = "running";  // running | done | failed
  std::vector<std::string> phases;
  bool cached = false;
  std::string error;
  nlohmann::json timings = nlohmann::json::object();
};

class Service {
 public:
  explicit Service(ServiceOptions o = {}) : opt_(std::move(o)) {
    if (!opt_.data_dir)
      if (const char* env = std::getenv("SUBTAB_DATA_DIR"); env && *env) opt_.data_dir = env;
  }
  ~Service() { join_workers(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void install(httplib::Server& srv) {
    srv.set_payload_max_length(opt_.max_upload_bytes);
    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });
    srv.Post("/tables", wrap([this](const httplib::Request& req, httplib::Response& res) { upload(req, res); }));
    srv.Get("/tables/:id", wrap([this](const httplib::Request& req, httplib::Response& res) { describe(req, res); }));
    srv.Post("/tables/:id/preprocess",
             wrap([this](const httplib::Request& req, httplib::Response& res) { start_preprocess(req, res); }));
    srv.Get("/jobs/:id", wrap([this](const httplib::Request& req, httplib::Response& res) { job_status(req, res); }));
    srv.Post("/tables/:id/subtable",
             wrap([this](const httplib::Request& req, httplib::Response& res) { subtable(req, res); }));
    srv.Get("/tables/:id/rules", wrap([this](const httplib::Request& req, httplib::Response& res) { rules(req, res); }));
  }

  // Blocks until every preprocessing job has finished.
  void join_workers() {
    std::vector<std::thread> ws;
    {
      std::lock_guard lock(mutex_);
      ws.swap(workers_);
    }
    for (auto& w : ws)
      if (w.joinable()) w.join();
  }

  const std::optional<std::filesystem::path>& data_dir() const noexcept { return opt_.data_dir; }

 private:
  struct HttpError : Error {
    HttpError(std::string code, const std::string& what) : Error(std::move(code), what) {}
  };

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    reply(res, status, {{"error", {{"code", code}, {"message", message}}}});
  }

  template <class F>
  static httplib::Server::Handler wrap(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        reply_error(res, http_status(e.code()), e.code(), e.what());
      } catch (const nlohmann::json::exception& e) {
        reply_error(res, 400, "bad_request", e.what());
      } catch (const std::exception& e) {
        reply_error(res, 500, "internal", e.what());
      }
    };
  }

  std::string fresh_id(char prefix) {
    std::lock_guard lock(mutex_);
    static constexpr char hex[] = "0123456789abcdef";
    std::string id(1, prefix);
    auto x = rng_();
    for (int i = 0; i < 12; ++i, x >>= 4) id += hex[x & 15];
    return id;
  }

  std::shared_ptr<TableSession> session(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = tables_.find(id);
    if (it == tables_.end()) throw HttpError("not_found", "no table '" + id + "'");
    return it->second;
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw HttpError("bad_request", "request body must be a JSON object");
    return j;
  }

  static nlohmann::json describe(const TableSession& s) {
    std::lock_guard lock(s.mutex);
    nlohmann::json j{{"tableId", s.id},
                     {"status", to_string(s.status)},
                     {"n", s.table->rows()},
                     {"m", s.table->cols()},
                     {"schema", schema_to_json(s.table->schema())}};
    if (s.status == SessionStatus::ready) {
      j["config"] = to_json(s.config);
      j["rulesMined"] = static_cast<bool>(s.artifacts.rules);
    }
    if (!s.error.empty()) j["error"] = s.error;
    return j;
  }

  // Raw CSV body, or multipart with a "file" part and optional "delimiter".
  void upload(const httplib::Request& req, httplib::Response& res) {
    CsvOptions csv;
    std::string text;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) throw HttpError("bad_request", "multipart upload needs a 'file' part");
      text = req.get_file_value("file").content;
      if (req.has_file("delimiter")) {
        const auto d = req.get_file_value("delimiter").content;
        if (d.size() != 1) throw HttpError("bad_request", "delimiter must be one character");
        csv.delimiter = d[0];
      }
    } else {
      text = req.body;
      if (req.has_param("delimiter")) {
        const auto d = req.get_param_value("delimiter");
        if (d.size() != 1) throw HttpError("bad_request", "delimiter must be one character");
        csv.delimiter = d[0];
      }
    }
    if (text.size() > opt_.max_upload_bytes) {
      reply_error(res, 413, "too_large", "upload exceeds " + std::to_string(opt_.max_upload_bytes) + " bytes");
      return;
    }
    if (trim(text).empty()) throw EmptyTableError("empty upload");
    auto s = std::make_shared<TableSession>();
    s->table = std::make_shared<const Table>(load_csv(text, csv));
    s->id = fresh_id('t');
    s->config = opt_.defaults;
    {
      std::lock_guard lock(mutex_);
      tables_[s->id] = s;
    }
    reply(res, 201, describe(*s));
  }

  void describe(const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, describe(*session(req.path_params.at("id"))));
  }

  // Body: config keys, optionally with rule keys nested under "ruleParams".
  void start_preprocess(const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.path_params.at("id"));
    auto body = parse_body(req);
    if (body.contains("ruleParams")) {
      const auto rp = body["ruleParams"];
      body.erase("ruleParams");
      if (!rp.is_object()) throw ConfigError("ruleParams must be an object");
      for (auto it = rp.begin(); it != rp.end(); ++it) body[it.key()] = it.value();
    }
    const Config c = config_from_json(body, opt_.defaults);
    validate_config(c);

    auto job = std::make_shared<Job>();
    job->id = fresh_id('j');
    job->table_id = s->id;
    {
      std::lock_guard lock(s->mutex);
      if (s->status == SessionStatus::preprocessing) throw HttpError("conflict", "a preprocessing job is already running");
      s->status = SessionStatus::preprocessing;
      s->error.clear();
    }
    {
      std::lock_guard lock(mutex_);
      jobs_[job->id] = job;
      workers_.emplace_back([this, s, job, c] { run_job(*s, *job, c); });
    }
    reply(res, 202, {{"jobId", job->id}, {"tableId", s->id}, {"state", "running"}});
  }

  void run_job(TableSession& s, Job& job, const Config& c) {
    try {
      Artifacts a;
      std::optional<std::filesystem::path> dir;
      if (opt_.data_dir) dir = *opt_.data_dir / cache_key(*s.table, c);
      bool cached = false;
      if (dir) {
        try {
          a = load_artifacts(*dir);
          cached = !c.mine_rules || a.rules;
        } catch (const NotPreprocessedError&) {
        }
      }
      if (!cached) {
        a = preprocess(*s.table, c, [&](const std::string& phase) {
          std::lock_guard lock(job.mutex);
          job.phases.push_back(phase);
        });
        if (dir) save_artifacts(a, c, *dir);
      }
      {
        std::lock_guard lock(s.mutex);
        s.artifacts = a;
        s.config = c;
        s.status = SessionStatus::ready;
      }
      std::lock_guard lock(job.mutex);
      job.cached = cached;
      job.timings = a.timings;
      job.state = "done";
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(s.mutex);
        s.status = SessionStatus::failed;
        s.error = e.what();
      }
      std::lock_guard lock(job.mutex);
      job.state = "failed";
      job.error = e.what();
    }
  }

  void job_status(const httplib::Request& req, httplib::Response& res) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(mutex_);
      auto it = jobs_.find(req.path_params.at("id"));
      if (it == jobs_.end()) throw HttpError("not_found", "no job '" + req.path_params.at("id") + "'");
      job = it->second;
    }
    std::lock_guard lock(job->mutex);
    nlohmann::json j{{"jobId", job->id},   {"tableId", job->table_id}, {"state", job->state},
                     {"phases", job->phases}, {"cached", job->cached},   {"timings", job->timings}};
    if (!job->error.empty()) j["error"] = job->error;
    reply(res, 200, j);
  }

  void subtable(const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.path_params.at("id"));
    const auto body = parse_body(req);
    SelectOptions o;
    o.method = method_from_string(body.value("method", std::string("embedding")));
    o.highlight = body.value("highlight", true);
    for (const char* key : {"k", "l"})
      if (body.contains(key) && !(body[key].is_number_integer() && body[key].get<long long>() > 0))
        throw ParameterError(std::string(key) + " must be a positive integer");
    if (body.contains("targets") && !body["targets"].is_array()) throw ParameterError("targets must be a list");
    try {
      o.request = selection_request_from_json(body);
    } catch (const nlohmann::json::exception& e) {
      throw QueryError(std::string("invalid request: ") + e.what());
    }
    if (body.contains("budgetMs")) o.random_budget = {std::nullopt, std::chrono::milliseconds(body["budgetMs"].get<long>())};
    if (body.contains("iterations")) {
      o.random_budget = {body["iterations"].get<std::size_t>(), std::nullopt};
      o.mab.iterations = body["iterations"].get<std::size_t>();
    }

    Artifacts a;
    Config c;
    {
      std::lock_guard lock(s->mutex);
      if (s->status == SessionStatus::ready) {
        a = s->artifacts;
        c = s->config;
      } else if (o.method == Method::embedding || o.method == Method::greedy) {
        throw NotPreprocessedError(std::string("table is ") + to_string(s->status) + ", not ready");
      } else {
        c = s->config;
      }
    }
    if (!body.contains("alpha")) o.request.alpha = c.alpha;
    if (o.request.query) validate_query(s->table->schema(), *o.request.query);
    const auto r = run_selection(*s->table, a, o, c, s->id);
    auto j = to_json(r, a.binning.get());
    j["method"] = to_string(o.method);
    reply(res, 200, j);
  }

  void rules(const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.path_params.at("id"));
    std::shared_ptr<const RuleSet> rs;
    std::shared_ptr<const BinningMap> b;
    {
      std::lock_guard lock(s->mutex);
      rs = s->artifacts.rules;
      b = s->artifacts.binning;
    }
    if (!rs) throw HttpError("not_found", "rules have not been mined for this table");
    auto count = [&](const char* key, std::size_t dflt) -> std::size_t {
      if (!req.has_param(key)) return dflt;
      const auto v = parse_number(req.get_param_value(key));
      if (!v || *v < 0 || *v != std::floor(*v)) throw HttpError("bad_request", std::string(key) + " must be a count");
      return static_cast<std::size_t>(*v);
    };
    const std::size_t offset = count("offset", 0), limit = count("limit", 100);
    std::vector<const AssociationRule*> order;
    for (const auto& r : *rs) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(), [](auto* x, auto* y) {
      if (x->support() != y->support()) return x->support() > y->support();
      return x->confidence() > y->confidence();
    });
    nlohmann::json page = nlohmann::json::array();
    for (std::size_t i = offset; i < order.size() && i - offset < limit; ++i) page.push_back(rule_to_json(*order[i], *b));
    reply(res, 200, {{"total", order.size()}, {"offset", offset}, {"limit", limit}, {"rules", page}});
  }

  ServiceOptions opt_;
  std::mutex mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
  std::map<std::string, std::shared_ptr<TableSession>> tables_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::thread> workers_;
};

}  // namespace subtab
