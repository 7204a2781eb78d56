#pragma once

// Synthetic cohorts driven through the real platform: accounts, drill
// sessions, grading and rewards all go through Platform's public API.
// Students answer each item correctly with probability `ability`.

#include "drillforge/error.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/platform.hpp"
#include "drillforge/random.hpp"
#include "drillforge/storage.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace drillforge {

enum class AnswerPolicy { until_ace, fixed };

struct CohortSpec {
  std::size_t n_students = 1;
  double ability = 1.0;
  std::size_t sets = 50;
  AnswerPolicy policy = AnswerPolicy::until_ace;
  std::size_t answers_per_set = 0;       // for AnswerPolicy::fixed
  std::size_t max_answers_per_set = 500; // safety cap for until_ace
  std::size_t items_per_set = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(ability >= 0.0 && ability <= 1.0)) throw Error(ErrorCode::invalid_argument, "ability must be in [0, 1]");
    if (sets == 0) throw Error(ErrorCode::invalid_argument, "simulation needs at least one drill set");
    if (items_per_set == 0) throw Error(ErrorCode::invalid_argument, "items_per_set must be positive");
    if (policy == AnswerPolicy::fixed && answers_per_set == 0) {
      throw Error(ErrorCode::invalid_argument, "fixed policy needs answers_per_set > 0");
    }
  }
};

struct SetReport {
  std::string drillset_id;
  std::size_t attempts = 0;
  double final_grade = 0.0;
  bool aced = false;
  std::optional<double> mean_grade;  // mean grade after warm-up (answers beyond the lookback)
};

struct StudentReport {
  std::string student_id;
  std::size_t attempts = 0;
  std::size_t sets_aced = 0;
  bool collection_aced = false;
  Smly smly = 0;
  std::vector<SetReport> sets;
};

struct SimulationReport {
  CohortSpec spec;
  std::vector<StudentReport> students;
  std::size_t total_attempts = 0;
  std::size_t total_sets_aced = 0;
  std::size_t collections_aced = 0;
  Smly total_smly = 0;
  Smly total_minted = 0;
};

inline constexpr std::string_view kSimLibrary = "SIM-LIBRARY";
inline constexpr std::string_view kSimCollection = "SIM-COLLECTION";

inline std::string sim_set_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "SET-%02zu", index + 1);
  return buf;
}

inline std::string sim_student_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%04zu", index + 1);
  return buf;
}

/// Synthetic pool-generated drill set used by simulations and tests.
inline DrillSet synthetic_drill_set(const std::string& id, std::size_t n_items, std::uint64_t seed) {
  OptionPools pools;
  for (int i = 0; i < 12; ++i) {
    pools.correct.push_back({id + " correct " + std::to_string(i), "Because " + id + " fact " + std::to_string(i) + "."});
  }
  for (int i = 0; i < 20; ++i) pools.distractors.push_back({id + " distractor " + std::to_string(i), ""});
  GenConfig cfg;
  cfg.n_items = n_items;
  cfg.seed = seed;
  return generate_drill_set(pools, "Check the most appropriate box.", cfg, id, id);
}

/// When `events` is given it receives the full event log of the run.
inline SimulationReport run_simulation(const CohortSpec& spec, const GradingConfig& grading = {},
                                       const RewardRuleSet& rewards = {}, EventLog* events = nullptr) {
  spec.validate();
  Platform platform(PlatformConfig{grading, rewards});
  Timestamp clock = 0;

  platform.create_library(std::string(kSimLibrary), 10, clock);
  std::vector<std::string> set_ids;
  for (std::size_t s = 0; s < spec.sets; ++s) {
    set_ids.push_back(sim_set_id(s));
    platform.upload_drill_set(synthetic_drill_set(set_ids.back(), spec.items_per_set, splitmix64(spec.seed + s)), clock);
  }
  platform.define_collection(std::string(kSimCollection), set_ids, clock);

  SimulationReport report;
  report.spec = spec;
  for (std::size_t st = 0; st < spec.n_students; ++st) {
    const std::string student = sim_student_id(st);
    platform.create_account(student, AccountKind::pre_registered, std::string(kSimLibrary), std::nullopt, clock);
    Rng rng = Rng::derive(spec.seed, st);

    StudentReport sr;
    sr.student_id = student;
    for (const auto& set_id : set_ids) {
      SessionState session = platform.open_drill_session(student, set_id);
      SetReport set_report;
      set_report.drillset_id = set_id;
      double grade_sum = 0.0;
      std::size_t grade_n = 0;
      GradeState grade = platform.grade_of(student, set_id);
      const std::size_t limit =
          spec.policy == AnswerPolicy::fixed ? spec.answers_per_set : spec.max_answers_per_set;

      while (set_report.attempts < limit && !(spec.policy == AnswerPolicy::until_ace && grade.aced)) {
        const Item& item = platform.next_item(session, rng);
        const std::size_t key = item.correct_index();
        std::size_t pick = key;
        if (!rng.bernoulli(spec.ability)) {
          pick = rng.uniform_index(item.options.size() - 1);
          if (pick >= key) ++pick;
        }
        const AnswerOutcome outcome = platform.submit_answer(session, item.id, pick, ++clock);
        grade = outcome.grade_state;
        ++set_report.attempts;
        if (set_report.attempts > grading.lookback) {
          grade_sum += grade.grade;
          ++grade_n;
        }
      }
      set_report.final_grade = grade.grade;
      set_report.aced = grade.aced;
      if (grade_n > 0) set_report.mean_grade = grade_sum / static_cast<double>(grade_n);
      sr.attempts += set_report.attempts;
      if (grade.aced) ++sr.sets_aced;
      sr.sets.push_back(std::move(set_report));
    }
    sr.smly = platform.state().ledger.balance(student);
    sr.collection_aced = sr.sets_aced == set_ids.size();

    report.total_attempts += sr.attempts;
    report.total_sets_aced += sr.sets_aced;
    report.collections_aced += sr.collection_aced ? 1 : 0;
    report.total_smly += sr.smly;
    report.students.push_back(std::move(sr));
  }
  report.total_minted = platform.state().ledger.total_minted();
  if (events != nullptr) *events = platform.log();
  return report;
}

inline Json to_json(const SimulationReport& r) {
  Json students = Json::array();
  for (const auto& s : r.students) {
    Json sets = Json::array();
    for (const auto& set : s.sets) {
      Json j{{"drillset", set.drillset_id}, {"attempts", set.attempts}, {"final_grade", set.final_grade},
             {"aced", set.aced}};
      j["mean_grade"] = set.mean_grade ? Json(*set.mean_grade) : Json(nullptr);
      sets.push_back(std::move(j));
    }
    students.push_back({{"student", s.student_id}, {"attempts", s.attempts}, {"sets_aced", s.sets_aced},
                        {"collection_aced", s.collection_aced}, {"smly", s.smly}, {"sets", std::move(sets)}});
  }
  const double n = r.students.empty() ? 1.0 : static_cast<double>(r.students.size());
  return Json{
      {"spec",
       {{"students", r.spec.n_students}, {"ability", r.spec.ability}, {"sets", r.spec.sets},
        {"policy", r.spec.policy == AnswerPolicy::until_ace ? "until_ace" : "fixed"},
        {"answers_per_set", r.spec.answers_per_set}, {"max_answers_per_set", r.spec.max_answers_per_set},
        {"items_per_set", r.spec.items_per_set}, {"seed", r.spec.seed}}},
      {"aggregate",
       {{"total_attempts", r.total_attempts}, {"mean_attempts", static_cast<double>(r.total_attempts) / n},
        {"total_sets_aced", r.total_sets_aced}, {"collections_aced", r.collections_aced},
        {"total_smly", r.total_smly}, {"total_minted", r.total_minted}}},
      {"students", std::move(students)}};
}

}  // namespace drillforge
