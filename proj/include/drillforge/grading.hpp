#pragma once

#include "drillforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drillforge {

using Timestamp = std::int64_t;  // UTC seconds

struct AnswerEntry {
  std::string item_id;
  bool correct = false;
  Timestamp timestamp = 0;

  bool operator==(const AnswerEntry&) const = default;
};

/// Append-only correctness record for one (student, drill set), oldest first.
class AnswerHistory {
 public:
  AnswerHistory() = default;

  void append(AnswerEntry entry) {
    if (!entries_.empty() && entry.timestamp < entries_.back().timestamp) {
      throw Error(ErrorCode::out_of_order, "answer timestamp precedes the previous entry");
    }
    entries_.push_back(std::move(entry));
  }

  /// Convenience for tests and simulations: bits only, timestamps 0.
  static AnswerHistory from_bits(std::span<const int> bits) {
    AnswerHistory h;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      h.append({"i" + std::to_string(i), bits[i] != 0, 0});
    }
    return h;
  }
  static AnswerHistory from_bits(std::initializer_list<int> bits) {
    return from_bits(std::span<const int>(bits.begin(), bits.size()));
  }

  std::span<const AnswerEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool operator==(const AnswerHistory&) const = default;

 private:
  std::vector<AnswerEntry> entries_;
};

/// Taper parameters. The window starts at `base_window` answers and grows by
/// `error_growth` per incorrect answer among the last `lookback`, capped at
/// `max_window`.
struct GradingConfig {
  std::size_t base_window = 7;
  std::size_t max_window = 30;
  std::size_t error_growth = 2;
  std::size_t lookback = 30;
  double ace_epsilon = 1e-9;

  void validate() const {
    if (base_window < 1 || base_window > max_window) {
      throw Error(ErrorCode::invalid_argument, "grading config requires 1 <= base_window <= max_window");
    }
    if (lookback < max_window) {
      throw Error(ErrorCode::invalid_argument, "grading config requires lookback >= max_window");
    }
    if (!(ace_epsilon >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "ace_epsilon must be non-negative");
    }
  }

  bool operator==(const GradingConfig&) const = default;
};

struct GradeState {
  double grade = 0.0;          // in [0, 1]
  std::size_t taper_len = 0;   // target window length for the current history
  bool complete = false;       // history has reached taper_len answers
  bool aced = false;

  bool operator==(const GradeState&) const = default;
};

namespace detail {

inline std::size_t taper_length_bits(std::span<const AnswerEntry> entries, const GradingConfig& cfg) {
  const std::size_t window = std::min(entries.size(), cfg.lookback);
  const auto recent = entries.last(window);
  const auto errors = static_cast<std::size_t>(
      std::count_if(recent.begin(), recent.end(), [](const AnswerEntry& e) { return !e.correct; }));
  // Saturating: error_growth * errors may be large for odd configs.
  const std::size_t room = cfg.max_window - cfg.base_window;
  if (cfg.error_growth != 0 && errors > room / cfg.error_growth) return cfg.max_window;
  return std::min(cfg.max_window, cfg.base_window + cfg.error_growth * errors);
}

}  // namespace detail

inline std::size_t taper_length(const AnswerHistory& history, const GradingConfig& cfg = {}) {
  cfg.validate();
  return detail::taper_length_bits(history.entries(), cfg);
}

/// Tapered grade: the most recent answer carries weight L, the one before it
/// L-1, down to 1 for the oldest answer inside the effective window of L.
inline GradeState drill_grade(const AnswerHistory& history, const GradingConfig& cfg = {}) {
  cfg.validate();
  const auto entries = history.entries();
  GradeState state;
  state.taper_len = detail::taper_length_bits(entries, cfg);
  state.complete = entries.size() >= state.taper_len;
  const std::size_t window = std::min(entries.size(), state.taper_len);
  if (window == 0) return state;

  // Integer sums keep the grade exact for every window up to max_window.
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  for (std::size_t i = 1; i <= window; ++i) {
    const std::uint64_t weight = window - i + 1;
    denominator += weight;
    if (entries[entries.size() - i].correct) numerator += weight;
  }
  state.grade = static_cast<double>(numerator) / static_cast<double>(denominator);
  state.aced = state.complete && state.grade >= 1.0 - cfg.ace_epsilon;
  return state;
}

/// Unweighted fraction correct over a fixed exam sequence.
inline double exam_grade(const std::vector<bool>& responses) {
  if (responses.empty()) {
    throw Error(ErrorCode::invalid_argument, "no exam answers to grade");
  }
  const auto correct = std::count(responses.begin(), responses.end(), true);
  return static_cast<double>(correct) / static_cast<double>(responses.size());
}

// ---------------------------------------------------------------------------
// Course grade with the pass/fail exit option.

struct CourseGradeConfig {
  double final_weight = 0.5;
  double pass_threshold = 5.0;                   // 0-10 scale
  std::map<std::string, double> interim_weights;  // component id -> weight, sums to 1

  void validate() const {
    if (!(final_weight >= 0.0 && final_weight <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "final_weight must be in [0, 1]");
    }
    if (interim_weights.empty()) {
      throw Error(ErrorCode::invalid_argument, "interim component weights are empty");
    }
    double sum = 0.0;
    for (const auto& [id, w] : interim_weights) {
      if (!(w >= 0.0 && w <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "interim weight for '" + id + "' outside [0, 1]");
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::invalid_argument, "interim weights must sum to 1");
    }
  }
};

struct CourseOutcome {
  enum class Verdict { pass, fail, numeric };
  Verdict verdict = Verdict::fail;
  double grade = 0.0;  // meaningful for Verdict::numeric only

  static CourseOutcome pass() { return {Verdict::pass, 0.0}; }
  static CourseOutcome fail() { return {Verdict::fail, 0.0}; }
  static CourseOutcome numeric(double g) { return {Verdict::numeric, g}; }

  bool operator==(const CourseOutcome&) const = default;
};

inline double interim_grade(const std::map<std::string, double>& components, const CourseGradeConfig& cfg) {
  cfg.validate();
  for (const auto& [id, g] : components) {
    if (!cfg.interim_weights.contains(id)) {
      throw Error(ErrorCode::invalid_argument, "unknown interim component '" + id + "'");
    }
    if (!(g >= 0.0 && g <= 10.0)) {
      throw Error(ErrorCode::invalid_argument, "component grade for '" + id + "' outside [0, 10]");
    }
  }
  double interim = 0.0;
  for (const auto& [id, w] : cfg.interim_weights) {
    auto it = components.find(id);
    if (it == components.end()) {
      throw Error(ErrorCode::invalid_argument, "missing interim component '" + id + "'");
    }
    interim += w * it->second;
  }
  return interim;
}

inline CourseOutcome course_grade(const std::map<std::string, double>& components,
                                  std::optional<double> final_exam,
                                  const CourseGradeConfig& cfg, bool opted_out) {
  const double interim = interim_grade(components, cfg);
  if (opted_out) {
    return interim >= cfg.pass_threshold ? CourseOutcome::pass() : CourseOutcome::fail();
  }
  if (!final_exam) {
    throw Error(ErrorCode::invalid_argument, "final exam grade required when not opting out");
  }
  if (!(*final_exam >= 0.0 && *final_exam <= 10.0)) {
    throw Error(ErrorCode::invalid_argument, "final exam grade outside [0, 10]");
  }
  return CourseOutcome::numeric(cfg.final_weight * *final_exam + (1.0 - cfg.final_weight) * interim);
}

// ---------------------------------------------------------------------------

struct CollectionProgress {
  std::size_t sets_aced = 0;
  std::size_t total_attempts = 0;
  bool collection_aced = false;

  bool operator==(const CollectionProgress&) const = default;
};

inline CollectionProgress collection_progress(const std::map<std::string, AnswerHistory>& histories,
                                              std::span<const std::string> collection,
                                              const GradingConfig& cfg = {}) {
  if (collection.empty()) {
    throw Error(ErrorCode::invalid_argument, "collection has no drill sets");
  }
  CollectionProgress progress;
  for (const auto& set_id : collection) {
    auto it = histories.find(set_id);
    if (it == histories.end()) continue;
    progress.total_attempts += it->second.size();
    if (drill_grade(it->second, cfg).aced) ++progress.sets_aced;
  }
  progress.collection_aced = progress.sets_aced == collection.size();
  return progress;
}

}  // namespace drillforge
