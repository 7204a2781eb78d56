#pragma once

// Anonymous per-library aggregates for the public monitoring page.

#include "drillforge/error.hpp"
#include "drillforge/platform.hpp"
#include "drillforge/storage.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace drillforge {

struct LibraryStats {
  std::string library_id;
  std::size_t n_students = 0;       // accounts of the library with at least one answer
  std::size_t total_attempts = 0;   // drill answers
  std::size_t sets_aced_total = 0;  // (student, set) pairs currently aced
  std::size_t collections_aced = 0; // students with at least one fully aced collection
  Timestamp as_of = 0;

  bool operator==(const LibraryStats&) const = default;
};

inline Json to_json(const LibraryStats& s) {
  return Json{{"library_id", s.library_id},       {"n_students", s.n_students},
              {"total_attempts", s.total_attempts}, {"sets_aced_total", s.sets_aced_total},
              {"collections_aced", s.collections_aced}, {"as_of", s.as_of}};
}

inline bool collection_aced_by(const StudentRecord& student, const Collection& collection) {
  for (const auto& set_id : collection.drillsets) {
    auto it = student.grades.find(set_id);
    if (it == student.grades.end() || !it->second.aced) return false;
  }
  return true;
}

inline LibraryStats compute_library_stats(const PlatformState& state, const std::string& library_id, Timestamp now) {
  if (!state.tablets.inventories.contains(library_id)) {
    throw Error(ErrorCode::not_found, "unknown library '" + library_id + "'");
  }
  LibraryStats stats;
  stats.library_id = library_id;
  stats.as_of = now;
  for (const auto& [id, account] : state.ledger.accounts()) {
    if (account.library_id != library_id) continue;
    if (account.kind != AccountKind::pre_registered && account.kind != AccountKind::self_registered) continue;
    const StudentRecord* student = state.student(id);
    if (student == nullptr) continue;
    const std::size_t attempts = student->total_attempts();
    if (attempts == 0) continue;
    ++stats.n_students;
    stats.total_attempts += attempts;
    for (const auto& [_, grade] : student->grades) {
      if (grade.aced) ++stats.sets_aced_total;
    }
    for (const auto& [_, collection] : state.collections) {
      if (collection_aced_by(*student, collection)) {
        ++stats.collections_aced;
        break;
      }
    }
  }
  return stats;
}

/// Per-library cache: an entry is served while younger than `ttl` seconds.
struct StatsCache {
  std::int64_t ttl = 600;
  std::map<std::string, LibraryStats> entries;
};

inline std::vector<LibraryStats> serve_stats(StatsCache& cache, const PlatformState& state, Timestamp now) {
  std::vector<LibraryStats> out;
  for (const auto& [library_id, _] : state.tablets.inventories) {
    auto it = cache.entries.find(library_id);
    if (it == cache.entries.end() || now - it->second.as_of >= cache.ttl || now < it->second.as_of) {
      it = cache.entries.insert_or_assign(library_id, compute_library_stats(state, library_id, now)).first;
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace drillforge
