#pragma once

// Local HTTP/JSON review service over one workspace directory.
//
//   GET  /api/fcis?min_support=&sort=&page=&page_size=
//   GET  /api/fcis/{id}
//   GET  /api/fcis/{id}/examples
//   GET  /api/rules
//   GET  /api/rules/{id}
//   POST /api/rules                  create a rule from an FCI
//   POST /api/rules/{id}/decision    edit, accept, reject or reopen
//   POST /api/solve
//   GET  /                           static UI assets
//
// Mutations carry the etag from the last read and are persisted before the
// response is sent.

#include <httplib.h>

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "akd/pipeline.hpp"

namespace akd {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 7474;
  std::filesystem::path static_dir;  // empty: no static assets
  bool hide_empty_fci = true;
  std::optional<std::size_t> default_k;  // empty: every case
  std::size_t default_page_size = 50;
};

class ReviewService {
 public:
  ReviewService(std::filesystem::path dir, ServiceOptions opts)
      : dir_(std::move(dir)), opts_(std::move(opts)), w_(load_workspace(dir_)), manifest_(manifest_hash(dir_)) {
    routes();
  }

  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  // Blocks until stop().
  bool listen() { return server_.listen(opts_.host, opts_.port); }
  int bind_to_any_port() { return server_.bind_to_any_port(opts_.host); }
  bool bind(int port) { return server_.bind_to_port(opts_.host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  Workspace snapshot() const {
    std::shared_lock lock(mu_);
    return w_;
  }

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  static std::optional<std::uint64_t> parse_uint(const std::string& s) {
    try {
      return detail::parse_u64(s, "integer");
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  json fci_json(const Fci& f, const std::vector<std::optional<RuleId>>& rule_of) const {
    auto j = to_json(f, w_.dictionary);
    j["rule"] = rule_of[f.id] ? json(*rule_of[f.id]) : json(nullptr);
    return j;
  }

  const TransactionDb& transactions() {
    std::call_once(db_once_, [&] { db_ = rebuild_transactions(w_); });
    return db_;
  }

  void routes() {
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });

    server_.Get("/api/fcis", [this](const httplib::Request& req, httplib::Response& res) { list_fcis(req, res); });
    server_.Get(R"(/api/fcis/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu_);
      const auto id = parse_uint(req.matches[1]);
      if (!id || *id >= w_.fcis.size()) return send_error(res, 404, "unknown FCI id");
      send_json(res, 200, fci_json(w_.fcis[*id], rule_of_fci(w_)));
    });
    server_.Get(R"(/api/fcis/(\d+)/examples)",
                [this](const httplib::Request& req, httplib::Response& res) { examples(req, res); });
    server_.Get("/api/rules", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu_);
      json rules = json::array();
      for (const auto& r : w_.rules) rules.push_back(to_json(r));
      const auto tag = events_etag(w_);
      res.set_header("ETag", "\"" + tag + "\"");
      send_json(res, 200, {{"etag", tag}, {"rules", std::move(rules)}});
    });
    server_.Get(R"(/api/rules/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu_);
      const auto id = parse_uint(req.matches[1]);
      const auto* r = id ? w_.rule(static_cast<RuleId>(*id)) : nullptr;
      if (!r) return send_error(res, 404, "unknown rule id");
      const auto tag = events_etag(w_);
      res.set_header("ETag", "\"" + tag + "\"");
      send_json(res, 200, {{"etag", tag}, {"rule", to_json(*r)}});
    });
    server_.Post("/api/rules", [this](const httplib::Request& req, httplib::Response& res) {
      mutate(req, res, std::nullopt);
    });
    server_.Post(R"(/api/rules/(\d+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_uint(req.matches[1]);
      if (!id) return send_error(res, 404, "unknown rule id");
      mutate(req, res, static_cast<RuleId>(*id));
    });
    server_.Post("/api/solve", [this](const httplib::Request& req, httplib::Response& res) { solve(req, res); });

    if (!opts_.static_dir.empty() && std::filesystem::is_directory(opts_.static_dir))
      server_.set_mount_point("/", opts_.static_dir.string());
  }

  void list_fcis(const httplib::Request& req, httplib::Response& res) {
    Rational min_support{0, 1};
    std::string sort = "support-desc";
    std::uint64_t page = 1, page_size = opts_.default_page_size;
    try {
      if (req.has_param("min_support")) min_support = SupportThreshold::parse(req.get_param_value("min_support")).value();
    } catch (const Error& e) {
      return send_error(res, 400, std::string("bad min_support: ") + e.what());
    }
    if (req.has_param("sort")) sort = req.get_param_value("sort");
    if (sort != "support-desc" && sort != "support-asc" && sort != "id")
      return send_error(res, 400, "sort must be support-desc, support-asc or id");
    if (req.has_param("page")) {
      const auto p = parse_uint(req.get_param_value("page"));
      if (!p || *p == 0) return send_error(res, 400, "page must be a positive integer");
      page = *p;
    }
    if (req.has_param("page_size")) {
      const auto p = parse_uint(req.get_param_value("page_size"));
      if (!p || *p == 0 || *p > 10'000) return send_error(res, 400, "page_size must be in 1..10000");
      page_size = *p;
    }

    std::shared_lock lock(mu_);
    std::vector<const Fci*> hits;
    for (const auto& f : w_.fcis)
      if (shown(f, opts_.hide_empty_fci) && !(f.support < min_support)) hits.push_back(&f);
    // Stored order is descending count then canonical items, ids ascending.
    if (sort == "support-asc")
      std::stable_sort(hits.begin(), hits.end(), [](const Fci* a, const Fci* b) { return a->count < b->count; });
    const auto rule_of = rule_of_fci(w_);
    json items = json::array();
    const auto start = (page - 1) * page_size;
    for (auto k = start; k < hits.size() && k < start + page_size; ++k) items.push_back(fci_json(*hits[k], rule_of));
    res.set_header("X-Total-Count", std::to_string(hits.size()));
    send_json(res, 200,
              {{"total", hits.size()}, {"page", page}, {"page_size", page_size}, {"fcis", std::move(items)}});
  }

  void examples(const httplib::Request& req, httplib::Response& res) {
    std::shared_lock lock(mu_);
    const auto id = parse_uint(req.matches[1]);
    if (!id || *id >= w_.fcis.size()) return send_error(res, 404, "unknown FCI id");
    const auto& db = transactions();
    const auto& fci = w_.fcis[*id];
    std::vector<ItemCode> wanted;
    for (auto c : fci.items) {
      const auto code = db.dictionary().find(w_.dictionary.item(c));
      if (!code) return send_json(res, 200, {{"fci", *id}, {"count", 0}, {"transactions", json::array()}});
      wanted.push_back(*code);
    }
    std::sort(wanted.begin(), wanted.end());
    json out = json::array();
    for (std::size_t row = 0; row < db.size(); ++row) {
      const auto& t = db.rows()[row].items;
      if (!std::includes(t.begin(), t.end(), wanted.begin(), wanted.end())) continue;
      const auto decoded = db.decode(row);
      json items = json::array();
      for (const auto& i : decoded.items) items.push_back(i.str());
      out.push_back({{"first", decoded.first}, {"second", decoded.second}, {"items", std::move(items)}});
    }
    const auto n = out.size();
    send_json(res, 200, {{"fci", *id}, {"count", n}, {"transactions", std::move(out)}});
  }

  // Create (id empty) or decide on rule `id`.
  void mutate(const httplib::Request& req, httplib::Response& res, std::optional<RuleId> id) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("malformed JSON: ") + e.what());
    }
    if (!body.is_object()) return send_error(res, 400, "body must be an object");

    ReviewAction action = ReviewAction::Created;
    if (id) {
      const auto a = body.find("action");
      if (a == body.end() || !a->is_string()) return send_error(res, 400, "missing action");
      try {
        action = parse_review_action(a->get<std::string>());
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      if (action == ReviewAction::Created) return send_error(res, 400, "use POST /api/rules to create a rule");
    }
    json edits = json::object();
    if (auto r = body.find("rule"); r != body.end() && !r->is_null()) {
      if (!r->is_object()) return send_error(res, 400, "rule must be an object");
      edits = *r;
    }
    if (auto e = body.find("explanation"); e != body.end()) edits["explanation"] = *e;
    if (!id) {
      if (auto s = body.find("source_fci"); s != body.end()) edits["source_fci"] = *s;
    }
    std::string etag = req.get_header_value("If-Match");
    if (etag.size() >= 2 && etag.front() == '"') etag = etag.substr(1, etag.size() - 2);
    if (auto t = body.find("etag"); t != body.end() && t->is_string()) etag = t->get<std::string>();
    std::string actor = "analyst";
    if (auto a = body.find("actor"); a != body.end() && a->is_string()) actor = a->get<std::string>();

    std::unique_lock lock(mu_);
    if (etag != events_etag(w_)) return send_error(res, 409, "stale etag; reload and retry");
    if (id && !w_.rule(*id)) return send_error(res, 404, "unknown rule id");
    Workspace next;
    ReviewEvent event;
    try {
      event = make_event(w_, id.value_or(0), action, edits, actor);
      next = record_event(w_, event);
    } catch (const StaleSequenceError& e) {
      return send_error(res, 409, e.what());
    } catch (const ParseError& e) {
      return send_error(res, 400, e.what());
    } catch (const Error& e) {
      return send_error(res, 422, e.what());
    }
    try {
      manifest_ = save_workspace(next, dir_, manifest_);
    } catch (const IntegrityError& e) {
      return send_error(res, 409, e.what());
    }
    w_ = std::move(next);
    const auto tag = events_etag(w_);
    res.set_header("ETag", "\"" + tag + "\"");
    send_json(res, 200, {{"rule", to_json(*w_.rule(event.rule_id))}, {"etag", tag}, {"sequence", event.sequence}});
  }

  void solve(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("malformed JSON: ") + e.what());
    }
    std::optional<std::size_t> k = opts_.default_k;
    if (auto kk = body.find("k"); body.is_object() && kk != body.end()) {
      if (!kk->is_number_unsigned() || kk->get<std::size_t>() == 0)
        return send_error(res, 400, "k must be a positive integer");
      k = kk->get<std::size_t>();
    }
    std::shared_lock lock(mu_);
    try {
      const auto tgt = target_from_json(body);
      const auto payload = solve_payload(solve_in_workspace(w_, tgt, k.value_or(w_.case_base.size())));
      res.status = 200;
      res.set_content(payload, "application/json");
    } catch (const UnknownPropertyError& e) {
      send_error(res, 422, e.what());
    } catch (const Error& e) {
      send_error(res, 400, e.what());
    }
  }

  std::filesystem::path dir_;
  ServiceOptions opts_;
  mutable std::shared_mutex mu_;
  Workspace w_;
  std::string manifest_;
  std::once_flag db_once_;
  TransactionDb db_;
  httplib::Server server_;
};

}  // namespace akd
