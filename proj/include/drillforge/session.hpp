#pragma once

// Item selection for drill and exam sessions. Answer submission needs the
// platform state and lives in platform.hpp.

#include "drillforge/error.hpp"
#include "drillforge/grading.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/random.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace drillforge {

enum class SessionMode { drill, exam };

struct SessionState {
  std::string student_id;
  std::string drillset_id;
  SessionMode mode = SessionMode::drill;
  std::vector<std::string> served;
  std::optional<std::string> pending;  // served in drill mode, not yet answered
  std::optional<std::vector<std::string>> exam_sequence;
  std::size_t cursor = 0;
  std::string exam_id;
  std::size_t recent_window = 10;

  bool operator==(const SessionState&) const = default;
};

struct StoppingCriteria {
  std::optional<std::size_t> min_answers;
  std::optional<double> min_grade;
};

/// Uniform draw among items outside the last min(recent_window, |set| - 1)
/// served. Drill mode has no upper bound on requests.
inline const Item& next_drill_item(SessionState& state, const DrillSet& set, Rng& rng) {
  if (state.mode != SessionMode::drill) throw Error(ErrorCode::invalid_argument, "session is not in drill mode");
  if (set.items.empty()) throw Error(ErrorCode::invalid_argument, "drill set '" + set.id + "' has no items");

  const std::size_t window = std::min(state.recent_window, set.items.size() - 1);
  const std::size_t from = state.served.size() > window ? state.served.size() - window : 0;
  const std::set<std::string> recent(state.served.begin() + static_cast<std::ptrdiff_t>(from), state.served.end());

  std::vector<const Item*> candidates;
  candidates.reserve(set.items.size());
  for (const auto& item : set.items) {
    if (!recent.contains(item.id)) candidates.push_back(&item);
  }
  const Item& chosen = *candidates[rng.uniform_index(candidates.size())];
  state.served.push_back(chosen.id);
  state.pending = chosen.id;
  return chosen;
}

/// Fixed exam of n distinct items drawn without replacement.
inline SessionState begin_exam(const DrillSet& set, std::size_t n, Rng& rng, std::string student_id = {}) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "an exam needs at least one item");
  if (n > set.items.size()) {
    throw Error(ErrorCode::invalid_argument, "exam of " + std::to_string(n) + " items from a set of " +
                                                 std::to_string(set.items.size()));
  }
  std::vector<std::string> ids;
  ids.reserve(set.items.size());
  for (const auto& item : set.items) ids.push_back(item.id);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(ids[i], ids[i + rng.uniform_index(ids.size() - i)]);
  }
  ids.resize(n);

  SessionState state;
  state.student_id = std::move(student_id);
  state.drillset_id = set.id;
  state.mode = SessionMode::exam;
  state.exam_sequence = std::move(ids);
  return state;
}

inline bool stopping_satisfied(const AnswerHistory& history, const StoppingCriteria& criteria,
                               const GradingConfig& cfg = {}) {
  if (criteria.min_answers && history.size() < *criteria.min_answers) return false;
  if (criteria.min_grade && drill_grade(history, cfg).grade < *criteria.min_grade) return false;
  return true;
}

}  // namespace drillforge
