#pragma once

// Small platform builders shared by the test binaries.

#include "drillforge/platform.hpp"
#include "drillforge/simulation.hpp"

#include <map>
#include <string>
#include <vector>

namespace drillforge::testing {

inline const Item& item_of(const Platform& p, const std::string& set, const std::string& item) {
  return *p.state().drill_set(set).find_item(item);
}

inline std::size_t wrong_index(const Item& item) { return item.correct_index() == 0 ? 1 : 0; }

/// One library "L1" with two students and `n_sets` synthetic drill sets
/// grouped into collection "C1".
inline Platform small_platform(std::size_t n_sets = 2, std::size_t items_per_set = 20, PlatformConfig cfg = {},
                               EventLog log = {}) {
  Platform p(std::move(cfg), std::move(log));
  p.create_library("L1", 10, 0);
  p.create_account("S1", AccountKind::pre_registered, "L1", "tok-s1", 0);
  p.create_account("S2", AccountKind::pre_registered, "L1", "tok-s2", 0);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_sets; ++i) {
    ids.push_back(sim_set_id(i));
    p.upload_drill_set(synthetic_drill_set(ids.back(), items_per_set, 100 + i), 0);
  }
  p.define_collection("C1", ids, 0);
  return p;
}

/// Serves and answers one drill item, correctly or not.
inline AnswerOutcome drill_once(Platform& p, SessionState& session, Rng& rng, bool correct, Timestamp ts) {
  const Item& item = p.next_item(session, rng);
  const std::size_t pick = correct ? item.correct_index() : wrong_index(item);
  return p.submit_answer(session, item.id, pick, ts);
}

/// Random mix of drill answers, exams, mints, transfers, purchases and new
/// accounts until the log holds at least `min_events` records.
inline void random_workload(Platform& p, std::size_t min_events, std::uint64_t seed) {
  Rng rng(seed);
  Timestamp ts = 1;
  std::vector<std::string> students{"S1", "S2"};
  for (int i = 1; i <= 6; ++i) {
    p.register_tablet({"TBL-" + std::to_string(i), "L1", "", 30'000, TabletStatus::lent}, 0);
  }
  std::vector<std::string> sets;
  for (const auto& [id, _] : p.state().drill_sets) sets.push_back(id);
  std::map<std::pair<std::string, std::string>, SessionState> sessions;
  std::vector<SessionState> exams;

  while (p.log().size() < min_events) {
    const std::string& who = students[rng.uniform_index(students.size())];
    const std::uint64_t op = rng.uniform_index(100);
    try {
      if (op < 80) {
        const std::string& set = sets[rng.uniform_index(sets.size())];
        auto key = std::pair{who, set};
        auto it = sessions.find(key);
        if (it == sessions.end()) it = sessions.emplace(key, p.open_drill_session(who, set)).first;
        drill_once(p, it->second, rng, rng.bernoulli(0.85), ts++);
      } else if (op < 86) {
        if (exams.empty() || rng.bernoulli(0.3)) {
          exams.push_back(p.start_exam(who, sets[rng.uniform_index(sets.size())], 5, rng, ts++));
        } else {
          SessionState& exam = exams[rng.uniform_index(exams.size())];
          if (exam.cursor < exam.exam_sequence->size()) {
            p.submit_answer(exam, (*exam.exam_sequence)[exam.cursor], rng.uniform_index(2), ts++);
          }
        }
      } else if (op < 90) {
        p.mint(who, 1 + rng.uniform_index(20'000), "bonus", ts++);
      } else if (op < 95) {
        p.transfer(who, students[rng.uniform_index(students.size())], 1 + rng.uniform_index(30'000), "gift", ts++);
      } else if (op < 98) {
        const std::string tablet = "TBL-" + std::to_string(1 + rng.uniform_index(6));
        p.purchase(who, payment_payload(p.state().tablets.tablet(tablet)), ts++);
      } else {
        const std::string id = "S" + std::to_string(students.size() + 1);
        p.create_account(id, AccountKind::pre_registered, "L1", "tok-" + id, ts++);
        students.push_back(id);
      }
    } catch (const Error&) {
      // rejected operations leave no trace; the workload keeps going
    }
  }
}

}  // namespace drillforge::testing
