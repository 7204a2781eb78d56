#pragma once

// HTTP + JSON API over a Platform.
//
// Mutations take the writer lock; reads take a shared lock. Errors come back
// as {"code": ..., "message": ...} with a status from http_status().
//
// Requires cpp-httplib (httplib.h) on the include path.

#include "drillforge/error.hpp"
#include "drillforge/platform.hpp"
#include "drillforge/random.hpp"
#include "drillforge/stats.hpp"
#include "drillforge/storage.hpp"

#include <httplib.h>

#include <array>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <utility>

namespace drillforge {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::syntax:
    case ErrorCode::unbound_variable:
    case ErrorCode::division_by_zero:
    case ErrorCode::degenerate_template:
      return 400;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::forbidden: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::out_of_order:
    case ErrorCode::already_sold:
    case ErrorCode::insufficient_funds:
      return 409;
    case ErrorCode::corrupt_log:
    case ErrorCode::io:
      return 500;
  }
  return 500;
}

inline Json to_json(const GradeState& g) {
  return Json{{"grade", g.grade}, {"taper_len", g.taper_len}, {"complete", g.complete}, {"aced", g.aced}};
}

inline Json to_json(const PurchaseReceipt& r) {
  return Json{{"tablet_id", r.tablet_id},
              {"library_id", r.library_id},
              {"student_id", r.student_id},
              {"price", r.price},
              {"transaction_seq", r.transaction_seq},
              {"tablet_count_after", r.tablet_count_after},
              {"first_sale_bonus", r.first_sale_bonus}};
}

inline Json to_json(const AnswerOutcome& o) {
  Json rewards = Json::array();
  for (const auto& r : o.rewards) rewards.push_back({{"rule", to_string(r.rule)}, {"scope", r.scope}, {"amount", r.amount}});
  Json j{{"correct", o.correct},
         {"correct_index", o.correct_index},
         {"explanation", o.explanation},
         {"grade_state", to_json(o.grade_state)},
         {"rewards", std::move(rewards)}};
  if (o.exam) {
    j["exam"] = Json{{"exam_id", o.exam->exam_id},
                     {"answered", o.exam->answered},
                     {"total", o.exam->total},
                     {"grade_so_far", o.exam->grade_so_far},
                     {"finished", o.exam->finished}};
  }
  return j;
}

/// 128-bit random bearer token.
inline std::string issue_token() {
  std::random_device rd;
  std::array<std::uint32_t, 4> words{};
  for (auto& w : words) w = rd();
  std::string out;
  static constexpr char digits[] = "0123456789abcdef";
  for (auto w : words) {
    for (int shift = 28; shift >= 0; shift -= 4) out += digits[(w >> shift) & 0xf];
  }
  return out;
}

struct ServiceConfig {
  std::int64_t stats_ttl = 600;
  std::string librarian_token;
  std::optional<std::string> static_dir;
  std::uint64_t seed = 0;
  std::function<Timestamp()> clock = [] {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
  std::function<std::string()> token_source = issue_token;
};

class Service {
 public:
  Service(Platform platform, ServiceConfig cfg)
      : platform_(std::move(platform)), cfg_(std::move(cfg)), rng_(cfg_.seed), cache_{cfg_.stats_ttl, {}} {
    if (cfg_.librarian_token.empty()) throw Error(ErrorCode::invalid_argument, "a librarian token is required");
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& server) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (cfg_.static_dir && !server.set_mount_point("/", *cfg_.static_dir)) {
      throw Error(ErrorCode::io, "cannot serve static files from " + *cfg_.static_dir);
    }

    server.Get("/api/drillsets", wrap([this](const auto&) { return list_drill_sets(); }));
    server.Get(R"(/api/drillsets/([^/]+)/next)", wrap([this](const auto& req) { return next(req); }));
    server.Post("/api/answers", wrap([this](const auto& req) { return answer(req); }));
    server.Post("/api/exams", wrap([this](const auto& req) { return start_exam(req); }));
    server.Get(R"(/api/exams/([^/]+))", wrap([this](const auto& req) { return exam_status(req); }));
    server.Post(R"(/api/exams/([^/]+)/answers)", wrap([this](const auto& req) { return exam_answer(req); }));
    server.Get(R"(/api/grades/([^/]+))", wrap([this](const auto& req) { return grade(req); }));
    server.Get("/api/balance", wrap([this](const auto& req) { return balance(req); }));
    server.Post("/api/purchase", wrap([this](const auto& req) { return purchase(req); }));
    server.Get(R"(/api/tablets/([^/]+))", wrap([this](const auto& req) { return tablet(req); }));
    server.Get("/api/stats/libraries", wrap([this](const auto&) { return stats(); }));
    server.Post("/api/accounts", wrap([this](const auto& req) { return create_account(req); }));
  }

  /// Read access for tests and tooling.
  template <typename F>
  auto with_state(F&& f) const {
    std::shared_lock lock(mutex_);
    return f(platform_);
  }

 private:
  struct Reply {
    Reply(Json b, int s = 200) : status(s), body(std::move(b)) {}
    int status;
    Json body;
  };

  using Handler = std::function<Reply(const httplib::Request&)>;

  static httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      Reply reply(nullptr);
      try {
        reply = h(req);
      } catch (const Error& e) {
        reply = {Json{{"code", to_string(e.code())}, {"message", e.what()}}, http_status(e.code())};
      } catch (const Json::exception& e) {
        reply = {Json{{"code", to_string(ErrorCode::invalid_argument)}, {"message", e.what()}}, 400};
      } catch (const std::exception& e) {
        reply = {Json{{"code", "internal_error"}, {"message", e.what()}}, 500};
      }
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    };
  }

  static Json body_of(const httplib::Request& req) {
    Json j = codec::parse_json(req.body, "request body");
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
    return j;
  }

  static std::size_t index_field(const Json& body, const char* key) {
    const auto v = codec::get<std::int64_t>(body, key, "");
    if (v < 0) throw Error(ErrorCode::invalid_argument, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  static std::optional<std::string> bearer(const httplib::Request& req) {
    const std::string header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
    return header.substr(prefix.size());
  }

  /// Account id behind the request's bearer token. Caller holds a lock.
  std::string authenticate(const httplib::Request& req) const {
    const auto token = bearer(req);
    if (!token) throw Error(ErrorCode::unauthorized, "missing bearer token");
    if (*token == cfg_.librarian_token) throw Error(ErrorCode::forbidden, "librarian token cannot act as a student");
    const auto account = platform_.account_for_token(*token);
    if (!account) throw Error(ErrorCode::unauthorized, "unknown token");
    return *account;
  }

  /// Answer timestamps never run backwards even if the wall clock does.
  Timestamp now() {
    last_ts_ = std::max(last_ts_, cfg_.clock());
    return last_ts_;
  }

  Json list_drill_sets() const {
    std::shared_lock lock(mutex_);
    Json out = Json::array();
    for (const auto& [id, set] : platform_.state().drill_sets) {
      out.push_back({{"id", id}, {"title", set.title}, {"n_items", set.items.size()}});
    }
    return out;
  }

  Json next(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const std::string student = authenticate(req);
    const std::string set_id = req.matches[1];
    auto key = std::pair{student, set_id};
    auto it = sessions_.find(key);
    if (it == sessions_.end()) it = sessions_.emplace(key, platform_.open_drill_session(student, set_id)).first;
    const Item& item = platform_.next_item(it->second, rng_);
    return Json{{"drillset_id", set_id}, {"item", codec::encode_public(item, platform_.state().drill_set(set_id).header)}};
  }

  Json answer(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const std::string student = authenticate(req);
    const Json body = body_of(req);
    const auto set_id = codec::get<std::string>(body, "drillset_id", "");
    const auto item_id = codec::get<std::string>(body, "item_id", "");
    const std::size_t selected = index_field(body, "selected_index");
    auto it = sessions_.find({student, set_id});
    if (it == sessions_.end() || !it->second.pending) {
      throw Error(ErrorCode::conflict, "no item awaiting an answer for drill set '" + set_id + "'");
    }
    const AnswerOutcome outcome = platform_.submit_answer(it->second, item_id, selected, now());
    Json j = to_json(outcome);
    j["balance"] = platform_.state().ledger.balance(student);
    return j;
  }

  Reply start_exam(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const std::string student = authenticate(req);
    const Json body = body_of(req);
    const auto set_id = codec::get<std::string>(body, "drillset_id", "");
    const std::size_t n = index_field(body, "n");
    const SessionState exam = platform_.start_exam(student, set_id, n, rng_, now());
    const DrillSet& set = platform_.state().drill_set(set_id);
    return {Json{{"exam_id", exam.exam_id},
                 {"drillset_id", set_id},
                 {"n", exam.exam_sequence->size()},
                 {"cursor", 0},
                 {"item", codec::encode_public(*set.find_item(exam.exam_sequence->front()), set.header)}},
            201};
  }

  const ExamRecord& own_exam(const std::string& student, const std::string& exam_id) const {
    const ExamRecord& exam = platform_.exam_record(exam_id);
    if (exam.student_id != student) throw Error(ErrorCode::forbidden, "exam belongs to another student");
    return exam;
  }

  Json exam_status(const httplib::Request& req) const {
    std::shared_lock lock(mutex_);
    const std::string student = authenticate(req);
    const ExamRecord& exam = own_exam(student, req.matches[1]);
    Json j{{"exam_id", exam.id},
           {"drillset_id", exam.drillset_id},
           {"answered", exam.responses.size()},
           {"total", exam.sequence.size()},
           {"finished", exam.finished()}};
    if (exam.finished()) {
      j["grade"] = exam_grade(exam.responses);
    } else {
      const DrillSet& set = platform_.state().drill_set(exam.drillset_id);
      j["item"] = codec::encode_public(*set.find_item(exam.sequence[exam.responses.size()]), set.header);
    }
    return j;
  }

  Json exam_answer(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const std::string student = authenticate(req);
    const ExamRecord& exam = own_exam(student, req.matches[1]);
    const Json body = body_of(req);
    const auto item_id = codec::get<std::string>(body, "item_id", "");
    const std::size_t selected = index_field(body, "selected_index");
    SessionState session = platform_.resume_exam(exam.id);
    const AnswerOutcome outcome = platform_.submit_answer(session, item_id, selected, now());
    Json j = to_json(outcome);
    const ExamRecord& after = platform_.exam_record(session.exam_id);
    if (!after.finished()) {
      const DrillSet& set = platform_.state().drill_set(after.drillset_id);
      j["next_item"] = codec::encode_public(*set.find_item(after.sequence[after.responses.size()]), set.header);
    }
    return j;
  }

  Json grade(const httplib::Request& req) const {
    std::shared_lock lock(mutex_);
    const std::string student = authenticate(req);
    const std::string set_id = req.matches[1];
    platform_.state().drill_set(set_id);
    const AnswerHistory* h = platform_.history_of(student, set_id);
    Json j = to_json(platform_.grade_of(student, set_id));
    j["drillset_id"] = set_id;
    j["n_answers"] = h == nullptr ? 0 : h->size();
    return j;
  }

  Json balance(const httplib::Request& req) const {
    std::shared_lock lock(mutex_);
    const std::string account = authenticate(req);
    return Json{{"account_id", account}, {"balance", platform_.state().ledger.balance(account)}};
  }

  Json purchase(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const std::string student = authenticate(req);
    const Json body = body_of(req);
    const PurchaseReceipt receipt = platform_.purchase(student, codec::get<std::string>(body, "payload", ""), now());
    Json j = to_json(receipt);
    j["balance"] = platform_.state().ledger.balance(student);
    return j;
  }

  Json tablet(const httplib::Request& req) const {
    std::shared_lock lock(mutex_);
    const Tablet& t = platform_.state().tablets.tablet(req.matches[1].str());
    return Json{{"tablet_id", t.id},
                {"library_id", t.library_id},
                {"price", t.price},
                {"status", to_string(t.status)},
                {"payload", payment_payload(t)}};
  }

  Json stats() {
    // serve_stats refreshes the cache, which has its own lock.
    std::shared_lock lock(mutex_);
    std::lock_guard cache_lock(cache_mutex_);
    Json out = Json::array();
    for (const auto& s : serve_stats(cache_, platform_.state(), cfg_.clock())) out.push_back(to_json(s));
    return out;
  }

  Reply create_account(const httplib::Request& req) {
    std::unique_lock lock(mutex_);
    const Json body = body_of(req);
    const AccountKind kind = parse_account_kind(codec::get<std::string>(body, "kind", ""));
    const auto library = body.contains("library_id") && !body.at("library_id").is_null()
                             ? std::optional(codec::get<std::string>(body, "library_id", ""))
                             : std::nullopt;
    if (kind != AccountKind::self_registered) {
      const auto token = bearer(req);
      if (!token) throw Error(ErrorCode::unauthorized, "librarian token required");
      if (*token != cfg_.librarian_token) throw Error(ErrorCode::forbidden, "only the librarian may create this account");
      if (kind != AccountKind::pre_registered) {
        throw Error(ErrorCode::invalid_argument, "only student accounts can be created here");
      }
    }
    std::string id = codec::get_or<std::string>(body, "account_id", "", "");
    if (id.empty()) {
      do {
        id = (kind == AccountKind::pre_registered ? "P" : "U") + std::to_string(++account_counter_);
      } while (platform_.state().ledger.has_account(id));
    }
    const std::string token = cfg_.token_source();
    platform_.create_account(id, kind, library, token, now());
    Json j{{"account_id", id}, {"kind", to_string(kind)}, {"token", token}};
    if (library) j["library_id"] = *library;
    return {std::move(j), 201};
  }

  Platform platform_;
  ServiceConfig cfg_;
  Rng rng_;
  StatsCache cache_;
  std::map<std::pair<std::string, std::string>, SessionState> sessions_;
  Timestamp last_ts_ = 0;
  std::uint64_t account_counter_ = 0;
  mutable std::shared_mutex mutex_;
  std::mutex cache_mutex_;
};

}  // namespace drillforge
