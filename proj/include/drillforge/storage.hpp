#pragma once

// File formats and the append-only event log.
//
// Documents are canonical JSON (sorted keys, no insignificant whitespace,
// UTF-8); the event log and transaction log are JSON Lines. Encoding the same
// value twice yields the same bytes.

#include "drillforge/error.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/ledger.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace drillforge {

using Json = nlohmann::json;

inline constexpr int kDrillSetSchemaVersion = 1;

namespace codec {

inline Json parse_json(std::string_view bytes, std::string_view what) {
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    // nlohmann counts bytes read; report the zero-based offset of the failure
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw Error(ErrorCode::syntax,
                std::string(what) + ": malformed JSON at byte " + std::to_string(offset) + ": " + e.what(), offset);
  }
}

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::invalid_argument, "at " + (path.empty() ? std::string("/") : path) + ": " + what);
}

inline const Json& require(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(path, std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T get(const Json& j, const char* key, const std::string& path) {
  const Json& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const Json::exception& e) {
    schema_error(path + "/" + key, e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, const std::string& path, T fallback) {
  if (!j.is_object()) schema_error(path, "expected an object");
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, path);
}

inline std::string_view to_string(OptionKind kind) {
  switch (kind) {
    case OptionKind::plain: return "plain";
    case OptionKind::nota: return "nota";
    case OptionKind::aota: return "aota";
  }
  return "plain";
}

inline OptionKind parse_option_kind(const std::string& text, const std::string& path) {
  if (text == "plain") return OptionKind::plain;
  if (text == "nota") return OptionKind::nota;
  if (text == "aota") return OptionKind::aota;
  schema_error(path, "unknown option kind '" + text + "'");
}

inline Json encode(const GenConfig& c) {
  return Json{{"n_items", c.n_items},   {"lambda", c.lambda},   {"k_min", c.k_min},
              {"k_max", c.k_max},       {"p_nota", c.p_nota},   {"p_aota", c.p_aota},
              {"p_nota_correct", c.p_nota_correct}, {"p_aota_correct", c.p_aota_correct},
              {"seed", c.seed}};
}

/// Missing fields keep their defaults, so a config file may set only a few.
inline GenConfig decode_gen_config(const Json& j, const std::string& path) {
  GenConfig c;
  c.n_items = get_or<std::size_t>(j, "n_items", path, c.n_items);
  c.lambda = get_or<double>(j, "lambda", path, c.lambda);
  c.k_min = get_or<std::size_t>(j, "k_min", path, c.k_min);
  c.k_max = get_or<std::size_t>(j, "k_max", path, c.k_max);
  c.p_nota = get_or<double>(j, "p_nota", path, c.p_nota);
  c.p_aota = get_or<double>(j, "p_aota", path, c.p_aota);
  c.p_nota_correct = get_or<double>(j, "p_nota_correct", path, c.p_nota_correct);
  c.p_aota_correct = get_or<double>(j, "p_aota_correct", path, c.p_aota_correct);
  c.seed = get_or<std::uint64_t>(j, "seed", path, c.seed);
  return c;
}

inline Json encode(const Item& item) {
  Json options = Json::array();
  for (const auto& o : item.options) {
    options.push_back({{"text", o.text}, {"is_correct", o.is_correct}, {"kind", to_string(o.kind)}});
  }
  return Json{{"id", item.id}, {"stem", item.stem}, {"options", std::move(options)}, {"explanation", item.explanation}};
}

/// Item as sent to a student before answering: no correctness marker and no
/// explanation.
inline Json encode_public(const Item& item, std::string_view header = {}) {
  Json options = Json::array();
  for (const auto& o : item.options) options.push_back({{"text", o.text}});
  Json j{{"id", item.id}, {"stem", item.stem}, {"options", std::move(options)}};
  if (!header.empty()) j["header"] = header;
  return j;
}

inline Item decode_item(const Json& j, const std::string& path) {
  Item item;
  item.id = get<std::string>(j, "id", path);
  item.stem = get_or<std::string>(j, "stem", path, "");
  item.explanation = get_or<std::string>(j, "explanation", path, "");
  const Json& options = require(j, "options", path);
  if (!options.is_array()) schema_error(path + "/options", "expected an array");
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string opath = path + "/options/" + std::to_string(i);
    Option o;
    o.text = get<std::string>(options[i], "text", opath);
    o.is_correct = get<bool>(options[i], "is_correct", opath);
    o.kind = parse_option_kind(get_or<std::string>(options[i], "kind", opath, "plain"), opath + "/kind");
    item.options.push_back(std::move(o));
  }
  return item;
}

inline Json encode(const Provenance& p) {
  Json j{{"method", p.method},
         {"correct_pool_size", p.correct_pool_size},
         {"distractor_pool_size", p.distractor_pool_size}};
  if (p.config) j["config"] = encode(*p.config);
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

inline Provenance decode_provenance(const Json& j, const std::string& path) {
  Provenance p;
  p.method = get_or<std::string>(j, "method", path, p.method);
  p.correct_pool_size = get_or<std::size_t>(j, "correct_pool_size", path, 0);
  p.distractor_pool_size = get_or<std::size_t>(j, "distractor_pool_size", path, 0);
  if (j.contains("config")) p.config = decode_gen_config(j.at("config"), path + "/config");
  if (j.contains("seed")) p.seed = get<std::uint64_t>(j, "seed", path);
  return p;
}

inline Json encode(const DrillSet& set) {
  Json items = Json::array();
  for (const auto& item : set.items) items.push_back(encode(item));
  return Json{{"schema_version", kDrillSetSchemaVersion},
              {"id", set.id},
              {"title", set.title},
              {"header", set.header},
              {"items", std::move(items)},
              {"provenance", encode(set.provenance)}};
}

inline DrillSet decode_drill_set(const Json& j, const std::string& path = "") {
  const int version = get<int>(j, "schema_version", path);
  if (version != kDrillSetSchemaVersion) {
    schema_error(path + "/schema_version", "unsupported schema_version " + std::to_string(version));
  }
  DrillSet set;
  set.id = get<std::string>(j, "id", path);
  set.title = get_or<std::string>(j, "title", path, set.id);
  set.header = get_or<std::string>(j, "header", path, "");
  const Json& items = require(j, "items", path);
  if (!items.is_array()) schema_error(path + "/items", "expected an array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    set.items.push_back(decode_item(items[i], path + "/items/" + std::to_string(i)));
  }
  if (j.contains("provenance")) set.provenance = decode_provenance(j.at("provenance"), path + "/provenance");
  validate_drill_set(set);
  return set;
}

inline Json encode(const Transaction& tx) {
  return Json{{"seq", tx.seq},   {"from", tx.from}, {"to", tx.to},
              {"amount", tx.amount}, {"memo", tx.memo}, {"timestamp", tx.timestamp}};
}

inline Transaction decode_transaction(const Json& j, const std::string& path) {
  Transaction tx;
  tx.seq = get<std::uint64_t>(j, "seq", path);
  tx.from = get<std::string>(j, "from", path);
  tx.to = get<std::string>(j, "to", path);
  tx.amount = get<Smly>(j, "amount", path);
  tx.memo = get_or<std::string>(j, "memo", path, "");
  tx.timestamp = get<Timestamp>(j, "timestamp", path);
  return tx;
}

}  // namespace codec

// ---------------------------------------------------------------------------
// Documents

inline std::string encode_drill_set(const DrillSet& set) { return codec::encode(set).dump() + "\n"; }

inline DrillSet decode_drill_set(std::string_view bytes) {
  return codec::decode_drill_set(codec::parse_json(bytes, "drill set"));
}

/// {"correct": [{"text", "explanation"}...], "distractors": [...]}
inline OptionPools decode_pools(std::string_view bytes) {
  const Json j = codec::parse_json(bytes, "pools");
  OptionPools pools;
  for (const auto& [key, target] : {std::pair{"correct", &pools.correct}, std::pair{"distractors", &pools.distractors}}) {
    const Json& list = codec::require(j, key, "");
    if (!list.is_array()) codec::schema_error(std::string("/") + key, "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = std::string("/") + key + "/" + std::to_string(i);
      if (list[i].is_string()) {
        target->push_back({list[i].get<std::string>(), ""});
      } else {
        target->push_back({codec::get<std::string>(list[i], "text", path),
                           codec::get_or<std::string>(list[i], "explanation", path, "")});
      }
    }
  }
  pools.validate();
  return pools;
}

inline std::string encode_pools(const OptionPools& pools) {
  Json j{{"correct", Json::array()}, {"distractors", Json::array()}};
  for (const auto& e : pools.correct) j["correct"].push_back({{"text", e.text}, {"explanation", e.explanation}});
  for (const auto& e : pools.distractors) j["distractors"].push_back({{"text", e.text}, {"explanation", e.explanation}});
  return j.dump(2) + "\n";
}

/// {"id", "title", "header", "body", "vars": {"a": [lo, hi]}, "answer",
///  "distractors": [...], "explanation", "n_items", "seed"}
inline Template decode_template(std::string_view bytes) {
  const Json j = codec::parse_json(bytes, "template");
  Template t;
  t.id = codec::get_or<std::string>(j, "id", "", t.id);
  t.title = codec::get_or<std::string>(j, "title", "", "");
  t.header = codec::get_or<std::string>(j, "header", "", "");
  t.body = codec::get<std::string>(j, "body", "");
  t.answer_expr = codec::get<std::string>(j, "answer", "");
  t.distractor_exprs = codec::get<std::vector<std::string>>(j, "distractors", "");
  t.explanation = codec::get_or<std::string>(j, "explanation", "", "");
  t.n_items = codec::get<std::size_t>(j, "n_items", "");
  t.seed = codec::get_or<std::uint64_t>(j, "seed", "", 0);
  t.max_retries = codec::get_or<std::size_t>(j, "max_retries", "", t.max_retries);
  const Json& vars = codec::require(j, "vars", "");
  if (!vars.is_object()) codec::schema_error("/vars", "expected an object");
  for (const auto& [name, range] : vars.items()) {
    if (!range.is_array() || range.size() != 2 || !range[0].is_number_integer() || !range[1].is_number_integer()) {
      codec::schema_error("/vars/" + name, "expected [lo, hi] integers");
    }
    t.vars[name] = {range[0].get<std::int64_t>(), range[1].get<std::int64_t>()};
  }
  return t;
}

// ---------------------------------------------------------------------------
// Event log

enum class EventKind {
  account_created,
  library_created,
  tablet_registered,
  set_uploaded,
  collection_defined,
  answer,
  exam_started,
  reward,
  mint,
  transfer,
  purchase,
};

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::account_created: return "account_created";
    case EventKind::library_created: return "library_created";
    case EventKind::tablet_registered: return "tablet_registered";
    case EventKind::set_uploaded: return "set_uploaded";
    case EventKind::collection_defined: return "collection_defined";
    case EventKind::answer: return "answer";
    case EventKind::exam_started: return "exam_started";
    case EventKind::reward: return "reward";
    case EventKind::mint: return "mint";
    case EventKind::transfer: return "transfer";
    case EventKind::purchase: return "purchase";
  }
  return "unknown";
}

inline EventKind parse_event_kind(std::string_view text) {
  for (int k = 0; k <= static_cast<int>(EventKind::purchase); ++k) {
    if (to_string(static_cast<EventKind>(k)) == text) return static_cast<EventKind>(k);
  }
  throw Error(ErrorCode::corrupt_log, "unknown event kind '" + std::string(text) + "'");
}

struct EventRecord {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::answer;
  Timestamp timestamp = 0;
  Json payload = Json::object();

  bool operator==(const EventRecord&) const = default;
};

inline std::string encode_event(const EventRecord& r) {
  return Json{{"seq", r.seq}, {"kind", to_string(r.kind)}, {"timestamp", r.timestamp}, {"payload", r.payload}}.dump();
}

inline EventRecord decode_event(std::string_view line) {
  const Json j = codec::parse_json(line, "event");
  EventRecord r;
  try {
    r.seq = codec::get<std::uint64_t>(j, "seq", "");
    r.kind = parse_event_kind(codec::get<std::string>(j, "kind", ""));
    r.timestamp = codec::get<Timestamp>(j, "timestamp", "");
    r.payload = codec::require(j, "payload", "");
  } catch (const Error& e) {
    throw Error(ErrorCode::corrupt_log, e.what());
  }
  return r;
}

struct PendingEvent {
  EventKind kind;
  Timestamp timestamp = 0;
  Json payload = Json::object();
};

/// Append-only, gapless, seq starting at 1. Optionally mirrored to a JSON
/// Lines file; each batch is written with a single write and flushed.
class EventLog {
 public:
  EventLog() = default;

  /// Parses JSON Lines. A final line without its terminating newline is a
  /// torn write and is dropped; `torn_bytes()` reports its length.
  static EventLog parse(std::string_view text) {
    EventLog log;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) {
        log.torn_bytes_ = text.size() - pos;
        break;
      }
      ++line_no;
      const std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      EventRecord r;
      try {
        r = decode_event(line);
      } catch (const Error& e) {
        throw Error(ErrorCode::corrupt_log, "event log line " + std::to_string(line_no) + ": " + e.what(), pos);
      }
      if (r.seq != log.last_seq() + 1) {
        throw Error(ErrorCode::corrupt_log, "event log seq gap: expected " + std::to_string(log.last_seq() + 1) +
                                                ", found " + std::to_string(r.seq));
      }
      log.records_.push_back(std::move(r));
    }
    log.valid_bytes_ = text.size() - log.torn_bytes_;
    return log;
  }

  /// Loads (or creates) a log file and attaches it for appending. A torn tail
  /// is cut off so the next append starts on a fresh line.
  static EventLog open(const std::filesystem::path& path) {
    std::string text;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    EventLog log = parse(text);
    if (log.torn_bytes_ > 0) std::filesystem::resize_file(path, log.valid_bytes_);
    if (!std::filesystem::exists(path)) std::ofstream(path, std::ios::binary);
    log.path_ = path;
    return log;
  }

  std::uint64_t append(EventKind kind, Timestamp ts, Json payload) {
    return append_batch({PendingEvent{kind, ts, std::move(payload)}}).front();
  }

  /// All records or none: the file write happens before the in-memory append.
  std::vector<std::uint64_t> append_batch(std::vector<PendingEvent> events) {
    std::vector<EventRecord> staged;
    std::string bytes;
    std::uint64_t seq = last_seq();
    for (auto& e : events) {
      staged.push_back({++seq, e.kind, e.timestamp, std::move(e.payload)});
      bytes += encode_event(staged.back());
      bytes += '\n';
    }
    if (path_) {
      std::ofstream out(*path_, std::ios::binary | std::ios::app);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      out.flush();
      if (!out) throw Error(ErrorCode::io, "cannot append to " + path_->string());
    }
    std::vector<std::uint64_t> seqs;
    for (auto& r : staged) {
      seqs.push_back(r.seq);
      records_.push_back(std::move(r));
    }
    return seqs;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& r : records_) {
      out += encode_event(r);
      out += '\n';
    }
    return out;
  }

  const std::vector<EventRecord>& records() const { return records_; }
  std::uint64_t last_seq() const { return records_.empty() ? 0 : records_.back().seq; }
  std::size_t size() const { return records_.size(); }
  std::size_t torn_bytes() const { return torn_bytes_; }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  std::vector<EventRecord> records_;
  std::optional<std::filesystem::path> path_;
  std::size_t torn_bytes_ = 0;
  std::size_t valid_bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Transaction log (JSON Lines)

inline std::string encode_transactions(std::span<const Transaction> txs) {
  std::string out;
  for (const auto& tx : txs) {
    out += codec::encode(tx).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Transaction> decode_transactions(std::string_view text) {
  std::vector<Transaction> txs;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    txs.push_back(codec::decode_transaction(codec::parse_json(line, "transaction"),
                                            "/line/" + std::to_string(line_no)));
  }
  return txs;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
}

}  // namespace drillforge
