#pragma once

// Event-sourced platform state.
//
// Every mutation is an EventRecord. Live operations validate, append their
// records to the log and then fold them through `apply`, the same transition
// function replay uses, so a replayed log reproduces the live state exactly.

#include "drillforge/error.hpp"
#include "drillforge/grading.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/ledger.hpp"
#include "drillforge/random.hpp"
#include "drillforge/session.hpp"
#include "drillforge/storage.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace drillforge {

struct Collection {
  std::string id;
  std::vector<std::string> drillsets;

  bool operator==(const Collection&) const = default;
};

struct ExamRecord {
  std::string id;
  std::string student_id;
  std::string drillset_id;
  std::vector<std::string> sequence;
  std::vector<bool> responses;

  bool finished() const { return responses.size() == sequence.size(); }
  bool operator==(const ExamRecord&) const = default;
};

struct StudentRecord {
  std::map<std::string, AnswerHistory> histories;  // drill set -> drill-mode answers
  std::map<std::string, GradeState> grades;        // derived from histories
  std::set<std::string> set_ace_rewarded;
  std::set<std::string> collection_ace_rewarded;

  std::size_t total_attempts() const {
    std::size_t n = 0;
    for (const auto& [_, h] : histories) n += h.size();
    return n;
  }

  bool operator==(const StudentRecord&) const = default;
};

struct PlatformState {
  std::map<std::string, DrillSet> drill_sets;
  std::map<std::string, Collection> collections;
  Ledger ledger;
  TabletRegistry tablets;
  std::map<std::string, std::string> tokens;  // bearer token -> account id
  std::map<std::string, StudentRecord> students;
  std::map<std::string, ExamRecord> exams;
  std::vector<PurchaseReceipt> purchases;
  std::uint64_t last_seq = 0;

  const DrillSet& drill_set(std::string_view id) const {
    auto it = drill_sets.find(std::string(id));
    if (it == drill_sets.end()) throw Error(ErrorCode::not_found, "unknown drill set '" + std::string(id) + "'");
    return it->second;
  }

  const StudentRecord* student(std::string_view id) const {
    auto it = students.find(std::string(id));
    return it == students.end() ? nullptr : &it->second;
  }

  bool operator==(const PlatformState&) const = default;
};

struct PlatformConfig {
  GradingConfig grading;
  RewardRuleSet rewards;
};

struct RewardLine {
  RewardEvent rule = RewardEvent::set_aced;
  std::string scope;  // drill set or collection id
  Smly amount = 0;

  bool operator==(const RewardLine&) const = default;
};

struct ExamProgress {
  std::string exam_id;
  std::size_t answered = 0;
  std::size_t total = 0;
  double grade_so_far = 0.0;
  bool finished = false;

  bool operator==(const ExamProgress&) const = default;
};

struct AnswerOutcome {
  bool correct = false;
  std::size_t correct_index = 0;
  std::string explanation;
  GradeState grade_state;
  std::vector<RewardLine> rewards;
  std::optional<ExamProgress> exam;
};

class Platform {
 public:
  explicit Platform(PlatformConfig cfg = {}, EventLog log = {}) : cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.grading.validate();
    cfg_.rewards.validate();
    for (const auto& r : log_.records()) apply(r);
  }

  /// Rebuilds state from a log prefix alone.
  static PlatformState replay(const EventLog& log, const PlatformConfig& cfg = {}) {
    Platform p(cfg);
    for (const auto& r : log.records()) p.apply(r);
    return std::move(p.state_);
  }

  const PlatformState& state() const { return state_; }
  const EventLog& log() const { return log_; }
  const PlatformConfig& config() const { return cfg_; }

  // -- administration -------------------------------------------------------

  void create_account(const std::string& id, AccountKind kind, std::optional<std::string> library_id,
                      std::optional<std::string> token, Timestamp ts) {
    if (state_.ledger.has_account(id)) throw Error(ErrorCode::conflict, "account '" + id + "' already exists");
    if (id.empty() || id == kMintAccount) throw Error(ErrorCode::invalid_argument, "invalid account id");
    if (library_id && !state_.tablets.inventories.contains(*library_id)) {
      throw Error(ErrorCode::not_found, "unknown library '" + *library_id + "'");
    }
    if (kind == AccountKind::pre_registered && !library_id) {
      throw Error(ErrorCode::invalid_argument, "pre-registered accounts belong to a library");
    }
    if (token && state_.tokens.contains(*token)) throw Error(ErrorCode::conflict, "token already issued");
    Json p{{"account", id}, {"kind", to_string(kind)}};
    if (library_id) p["library"] = *library_id;
    if (token) p["token"] = *token;
    commit({{EventKind::account_created, ts, std::move(p)}});
  }

  /// Registers a library with its initial stock and opens its escrow account.
  void create_library(const std::string& id, std::size_t tablet_count, Timestamp ts) {
    if (id.empty()) throw Error(ErrorCode::invalid_argument, "empty library id");
    if (state_.tablets.inventories.contains(id)) throw Error(ErrorCode::conflict, "library '" + id + "' exists");
    if (state_.ledger.has_account(escrow_account_id(id))) {
      throw Error(ErrorCode::conflict, "escrow account for '" + id + "' exists");
    }
    commit({{EventKind::library_created, ts, Json{{"library", id}, {"tablets", tablet_count}}}});
  }

  void register_tablet(const Tablet& tablet, Timestamp ts) {
    TabletRegistry probe = state_.tablets;
    probe.register_tablet(tablet);  // validation only
    const Tablet& t = probe.tablet(tablet.id);
    commit({{EventKind::tablet_registered, ts,
             Json{{"tablet", t.id}, {"library", t.library_id}, {"address", t.payment_address}, {"price", t.price}}}});
  }

  void upload_drill_set(const DrillSet& set, Timestamp ts) {
    validate_drill_set(set);
    if (state_.drill_sets.contains(set.id)) throw Error(ErrorCode::conflict, "drill set '" + set.id + "' exists");
    commit({{EventKind::set_uploaded, ts, codec::encode(set)}});
  }

  void define_collection(const std::string& id, const std::vector<std::string>& drillsets, Timestamp ts) {
    if (id.empty() || drillsets.empty()) throw Error(ErrorCode::invalid_argument, "collection needs an id and drill sets");
    if (state_.collections.contains(id)) throw Error(ErrorCode::conflict, "collection '" + id + "' exists");
    for (const auto& s : drillsets) state_.drill_set(s);
    commit({{EventKind::collection_defined, ts, Json{{"collection", id}, {"drillsets", drillsets}}}});
  }

  const Transaction& mint(const std::string& to, Smly amount, const std::string& memo, Timestamp ts) {
    state_.ledger.account(to);
    if (amount == 0) throw Error(ErrorCode::invalid_argument, "amount must be positive");
    commit({{EventKind::mint, ts, Json{{"to", to}, {"amount", amount}, {"memo", memo}}}});
    return state_.ledger.transactions().back();
  }

  const Transaction& transfer(const std::string& from, const std::string& to, Smly amount, const std::string& memo,
                              Timestamp ts) {
    if (amount == 0) throw Error(ErrorCode::invalid_argument, "amount must be positive");
    if (from == to) throw Error(ErrorCode::invalid_argument, "transfer to the same account");
    const Account& src = state_.ledger.account(from);
    state_.ledger.account(to);
    if (src.balance < amount) {
      throw Error(ErrorCode::insufficient_funds, "account '" + from + "' holds " + std::to_string(src.balance) + " SMLY");
    }
    commit({{EventKind::transfer, ts, Json{{"from", from}, {"to", to}, {"amount", amount}, {"memo", memo}}}});
    return state_.ledger.transactions().back();
  }

  PurchaseReceipt purchase(const std::string& student_id, const std::string& payload, Timestamp ts) {
    // Dry run on copies of the two affected books; the real mutation happens
    // in apply() once the record is durable.
    Ledger ledger = state_.ledger;
    TabletRegistry tablets = state_.tablets;
    purchase_tablet(ledger, tablets, student_id, payload, ts);
    commit({{EventKind::purchase, ts, Json{{"student", student_id}, {"payload", payload}}}});
    return state_.purchases.back();
  }

  // -- sessions -------------------------------------------------------------

  SessionState open_drill_session(const std::string& student_id, const std::string& drillset_id) const {
    require_student_account(student_id);
    state_.drill_set(drillset_id);
    SessionState s;
    s.student_id = student_id;
    s.drillset_id = drillset_id;
    return s;
  }

  const Item& next_item(SessionState& session, Rng& rng) const {
    return next_drill_item(session, state_.drill_set(session.drillset_id), rng);
  }

  SessionState start_exam(const std::string& student_id, const std::string& drillset_id, std::size_t n, Rng& rng,
                          Timestamp ts) {
    require_student_account(student_id);
    SessionState s = begin_exam(state_.drill_set(drillset_id), n, rng, student_id);
    s.exam_id = "exam-" + std::to_string(state_.exams.size() + 1);
    commit({{EventKind::exam_started, ts,
             Json{{"exam", s.exam_id}, {"student", student_id}, {"drillset", drillset_id},
                  {"sequence", *s.exam_sequence}}}});
    return s;
  }

  /// Session handle for an exam already in the log (e.g. after a restart).
  SessionState resume_exam(const std::string& exam_id) const {
    const ExamRecord& exam = exam_record(exam_id);
    SessionState s;
    s.student_id = exam.student_id;
    s.drillset_id = exam.drillset_id;
    s.mode = SessionMode::exam;
    s.exam_sequence = exam.sequence;
    s.cursor = exam.responses.size();
    s.exam_id = exam.id;
    return s;
  }

  const ExamRecord& exam_record(const std::string& exam_id) const {
    auto it = state_.exams.find(exam_id);
    if (it == state_.exams.end()) throw Error(ErrorCode::not_found, "unknown exam '" + exam_id + "'");
    return it->second;
  }

  /// Records one answer. Drill mode: the item must be the one last served
  /// and not yet answered. Exam mode: the item must sit at the cursor.
  /// Reward records for newly aced sets/collections are committed together
  /// with the answer.
  AnswerOutcome submit_answer(SessionState& session, const std::string& item_id, std::size_t selected_index,
                              Timestamp ts) {
    require_student_account(session.student_id);
    const DrillSet& set = state_.drill_set(session.drillset_id);
    const Item* item = set.find_item(item_id);
    if (item == nullptr) throw Error(ErrorCode::not_found, "item '" + item_id + "' not in drill set '" + set.id + "'");
    if (selected_index >= item->options.size()) {
      throw Error(ErrorCode::invalid_argument, "selected option " + std::to_string(selected_index) +
                                                   " out of range (item has " +
                                                   std::to_string(item->options.size()) + ")");
    }

    Json payload{{"student", session.student_id}, {"drillset", set.id}, {"item", item_id},
                 {"selected", selected_index}, {"correct", item->options[selected_index].is_correct}};
    AnswerOutcome outcome;
    outcome.correct = item->options[selected_index].is_correct;
    outcome.correct_index = item->correct_index();
    outcome.explanation = item->explanation;

    if (session.mode == SessionMode::exam) {
      const ExamRecord& exam = exam_record(session.exam_id);
      if (exam.student_id != session.student_id) throw Error(ErrorCode::forbidden, "exam belongs to another student");
      const std::size_t cursor = exam.responses.size();
      auto pos = std::find(exam.sequence.begin(), exam.sequence.end(), item_id);
      if (pos == exam.sequence.end()) throw Error(ErrorCode::invalid_argument, "item not part of this exam");
      const auto slot = static_cast<std::size_t>(pos - exam.sequence.begin());
      if (slot < cursor) throw Error(ErrorCode::conflict, "exam slot " + std::to_string(slot + 1) + " already answered");
      if (slot > cursor) {
        throw Error(ErrorCode::out_of_order, "exam item answered out of order (expected slot " +
                                                 std::to_string(cursor + 1) + ")");
      }
      payload["exam"] = exam.id;
      commit({{EventKind::answer, ts, std::move(payload)}});
      session.cursor = cursor + 1;
      const ExamRecord& after = exam_record(session.exam_id);
      outcome.exam = ExamProgress{after.id, after.responses.size(), after.sequence.size(), exam_grade(after.responses),
                                  after.finished()};
      outcome.grade_state = grade_of(session.student_id, set.id);
      return outcome;
    }

    if (session.pending && *session.pending != item_id) {
      throw Error(ErrorCode::conflict, "answer does not match the item served ('" + *session.pending + "')");
    }
    if (!session.pending) throw Error(ErrorCode::conflict, "no item awaiting an answer in this session");
    check_timestamp(session.student_id, set.id, ts);

    std::vector<PendingEvent> batch{{EventKind::answer, ts, std::move(payload)}};
    const GradeState after = prospective_grade(session.student_id, set.id, item_id, outcome.correct, ts);
    for (auto& line : pending_rewards(session.student_id, set.id, after)) {
      batch.push_back({EventKind::reward, ts,
                       Json{{"student", session.student_id}, {"rule", to_string(line.rule)},
                            {"scope", line.scope}, {"amount", line.amount}}});
      if (line.amount > 0) outcome.rewards.push_back(line);
    }
    commit(std::move(batch));
    session.pending.reset();
    outcome.grade_state = grade_of(session.student_id, set.id);
    return outcome;
  }

  GradeState grade_of(const std::string& student_id, const std::string& drillset_id) const {
    const StudentRecord* s = state_.student(student_id);
    if (s != nullptr) {
      auto it = s->grades.find(drillset_id);
      if (it != s->grades.end()) return it->second;
    }
    return drill_grade(AnswerHistory{}, cfg_.grading);
  }

  const AnswerHistory* history_of(const std::string& student_id, const std::string& drillset_id) const {
    const StudentRecord* s = state_.student(student_id);
    if (s == nullptr) return nullptr;
    auto it = s->histories.find(drillset_id);
    return it == s->histories.end() ? nullptr : &it->second;
  }

  std::optional<std::string> account_for_token(const std::string& token) const {
    auto it = state_.tokens.find(token);
    if (it == state_.tokens.end()) return std::nullopt;
    return it->second;
  }

  // -- transitions ----------------------------------------------------------

  /// Folds one record into the state. Used verbatim by replay.
  void apply(const EventRecord& r) {
    if (r.seq != state_.last_seq + 1) {
      throw Error(ErrorCode::corrupt_log, "event seq " + std::to_string(r.seq) + " follows " +
                                              std::to_string(state_.last_seq));
    }
    try {
      apply_payload(r);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::corrupt_log, "event " + std::to_string(r.seq) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::corrupt_log, "event " + std::to_string(r.seq) + ": " + e.what());
    }
    state_.last_seq = r.seq;
  }

 private:
  void commit(std::vector<PendingEvent> events) {
    const auto first = log_.last_seq() + 1;
    log_.append_batch(std::move(events));
    for (std::size_t i = first - 1; i < log_.records().size(); ++i) apply(log_.records()[i]);
  }

  void require_student_account(const std::string& id) const {
    const Account& a = state_.ledger.account(id);
    if (a.kind != AccountKind::pre_registered && a.kind != AccountKind::self_registered) {
      throw Error(ErrorCode::forbidden, "account '" + id + "' is not a student account");
    }
  }

  void check_timestamp(const std::string& student, const std::string& set, Timestamp ts) const {
    const AnswerHistory* h = history_of(student, set);
    if (h != nullptr && !h->empty() && ts < h->entries().back().timestamp) {
      throw Error(ErrorCode::out_of_order, "answer timestamp precedes the previous answer");
    }
  }

  /// Grade after appending one more answer; only the last `lookback`
  /// entries influence the grade, so only those are copied.
  GradeState prospective_grade(const std::string& student, const std::string& set, const std::string& item_id,
                               bool correct, Timestamp ts) const {
    AnswerHistory tail;
    if (const AnswerHistory* h = history_of(student, set)) {
      const auto entries = h->entries();
      const std::size_t keep = std::min(entries.size(), cfg_.grading.lookback);
      for (const auto& e : entries.last(keep)) tail.append(e);
    }
    tail.append({item_id, correct, ts});
    return drill_grade(tail, cfg_.grading);
  }

  /// Rewards triggered by a set reaching `after`: the per-set ace once ever,
  /// and any collection containing the set that becomes fully aced.
  std::vector<RewardLine> pending_rewards(const std::string& student_id, const std::string& set_id,
                                          const GradeState& after) const {
    std::vector<RewardLine> lines;
    if (!after.aced) return lines;
    const StudentRecord* s = state_.student(student_id);
    const AccountKind kind = state_.ledger.account(student_id).kind;
    const bool before = grade_of(student_id, set_id).aced;
    if (!before && (s == nullptr || !s->set_ace_rewarded.contains(set_id))) {
      lines.push_back({RewardEvent::set_aced, set_id, reward_for_event(RewardEvent::set_aced, kind, cfg_.rewards)});
    }
    for (const auto& [cid, collection] : state_.collections) {
      if (std::find(collection.drillsets.begin(), collection.drillsets.end(), set_id) == collection.drillsets.end()) {
        continue;
      }
      if (s != nullptr && s->collection_ace_rewarded.contains(cid)) continue;
      bool all = true;
      for (const auto& other : collection.drillsets) {
        if (other == set_id) continue;
        if (!grade_of(student_id, other).aced) {
          all = false;
          break;
        }
      }
      if (all) {
        lines.push_back({RewardEvent::collection_aced, cid,
                         reward_for_event(RewardEvent::collection_aced, kind, cfg_.rewards)});
      }
    }
    return lines;
  }

  void apply_payload(const EventRecord& r) {
    const Json& p = r.payload;
    switch (r.kind) {
      case EventKind::account_created: {
        std::optional<std::string> library;
        if (p.contains("library")) library = p.at("library").get<std::string>();
        const std::string id = p.at("account").get<std::string>();
        state_.ledger.open_account(id, parse_account_kind(p.at("kind").get<std::string>()), library);
        if (p.contains("token")) state_.tokens[p.at("token").get<std::string>()] = id;
        break;
      }
      case EventKind::library_created: {
        const std::string id = p.at("library").get<std::string>();
        state_.tablets.register_library(id, p.at("tablets").get<std::size_t>());
        state_.ledger.open_account(escrow_account_id(id), AccountKind::tablet_escrow, id);
        break;
      }
      case EventKind::tablet_registered:
        state_.tablets.register_tablet({p.at("tablet").get<std::string>(), p.at("library").get<std::string>(),
                                        p.at("address").get<std::string>(), p.at("price").get<Smly>(),
                                        TabletStatus::available});
        break;
      case EventKind::set_uploaded: {
        DrillSet set = codec::decode_drill_set(p);
        const std::string id = set.id;
        if (!state_.drill_sets.emplace(id, std::move(set)).second) {
          throw Error(ErrorCode::conflict, "drill set '" + id + "' uploaded twice");
        }
        break;
      }
      case EventKind::collection_defined: {
        Collection c{p.at("collection").get<std::string>(), p.at("drillsets").get<std::vector<std::string>>()};
        for (const auto& s : c.drillsets) state_.drill_set(s);
        const std::string id = c.id;
        state_.collections.emplace(id, std::move(c));
        break;
      }
      case EventKind::exam_started: {
        ExamRecord exam{p.at("exam").get<std::string>(), p.at("student").get<std::string>(),
                        p.at("drillset").get<std::string>(), p.at("sequence").get<std::vector<std::string>>(), {}};
        const DrillSet& set = state_.drill_set(exam.drillset_id);
        for (const auto& id : exam.sequence) {
          if (set.find_item(id) == nullptr) throw Error(ErrorCode::not_found, "exam item '" + id + "' unknown");
        }
        const std::string id = exam.id;
        if (!state_.exams.emplace(id, std::move(exam)).second) throw Error(ErrorCode::conflict, "exam id reused");
        break;
      }
      case EventKind::answer:
        apply_answer(r);
        break;
      case EventKind::reward: {
        const std::string student = p.at("student").get<std::string>();
        const RewardEvent rule = parse_reward_event(p.at("rule").get<std::string>());
        const std::string scope = p.at("scope").get<std::string>();
        const Smly amount = p.at("amount").get<Smly>();
        StudentRecord& s = state_.students[student];
        auto& paid = rule == RewardEvent::set_aced ? s.set_ace_rewarded : s.collection_ace_rewarded;
        if (!paid.insert(scope).second) throw Error(ErrorCode::conflict, "reward for '" + scope + "' paid twice");
        if (amount > 0) state_.ledger.mint(student, amount, std::string(to_string(rule)) + " " + scope, r.timestamp);
        break;
      }
      case EventKind::mint:
        state_.ledger.mint(p.at("to").get<std::string>(), p.at("amount").get<Smly>(),
                           p.value("memo", std::string("mint")), r.timestamp);
        break;
      case EventKind::transfer:
        state_.ledger.transfer(p.at("from").get<std::string>(), p.at("to").get<std::string>(),
                               p.at("amount").get<Smly>(), p.value("memo", std::string()), r.timestamp);
        break;
      case EventKind::purchase:
        state_.purchases.push_back(purchase_tablet(state_.ledger, state_.tablets, p.at("student").get<std::string>(),
                                                   p.at("payload").get<std::string>(), r.timestamp));
        break;
    }
  }

  void apply_answer(const EventRecord& r) {
    const Json& p = r.payload;
    const std::string student = p.at("student").get<std::string>();
    const std::string set_id = p.at("drillset").get<std::string>();
    const std::string item_id = p.at("item").get<std::string>();
    const auto selected = p.at("selected").get<std::size_t>();
    const Item* item = state_.drill_set(set_id).find_item(item_id);
    if (item == nullptr || selected >= item->options.size()) {
      throw Error(ErrorCode::invalid_argument, "answer refers to an unknown item or option");
    }
    const bool correct = item->options[selected].is_correct;

    if (p.contains("exam")) {
      auto it = state_.exams.find(p.at("exam").get<std::string>());
      if (it == state_.exams.end()) throw Error(ErrorCode::not_found, "answer to unknown exam");
      ExamRecord& exam = it->second;
      if (exam.finished() || exam.sequence[exam.responses.size()] != item_id || exam.student_id != student) {
        throw Error(ErrorCode::out_of_order, "exam answer does not match the exam cursor");
      }
      exam.responses.push_back(correct);
      return;
    }

    StudentRecord& s = state_.students[student];
    AnswerHistory& history = s.histories[set_id];
    history.append({item_id, correct, r.timestamp});
    s.grades[set_id] = drill_grade(history, cfg_.grading);
  }

  PlatformConfig cfg_;
  EventLog log_;
  PlatformState state_;
};

}  // namespace drillforge
