// drillforge: authoring, simulation and operations tool.
//
// Exit codes: 0 success, 2 validation error, 3 I/O error.

#include "drillforge/anonymize.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/platform.hpp"
#include "drillforge/service.hpp"
#include "drillforge/simulation.hpp"
#include "drillforge/stats.hpp"
#include "drillforge/storage.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace drillforge;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

/// Reads `--config cfg.json`. Top-level keys set global options, nested
/// objects set options of the subcommand with that name.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    Json j = Json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? Json(opt->results().front()) : Json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::stringstream buf;
    buf << input.rdbuf();
    Json j;
    try {
      j = Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static void flatten(const Json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        flatten(value, next, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v, key));
      } else {
        item.inputs.push_back(scalar(value, key));
      }
      out.push_back(std::move(item));
    }
  }

  static std::string scalar(const Json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config value for '" + key + "' must be a scalar or a list of scalars");
  }
};

Timestamp wall_clock() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string read_text(const fs::path& path) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

void write_or_print(const std::string& out, const std::string& bytes) {
  if (out.empty() || out == "-") {
    std::cout << bytes;
  } else {
    write_file(out, bytes);
  }
}

struct GlobalOptions {
  std::string data_dir;
  GradingConfig grading;
  RewardRuleSet rewards;

  fs::path events_path() const { return fs::path(data_dir) / "events.jsonl"; }

  PlatformConfig platform_config() const { return {grading, rewards}; }

  /// Platform attached to the data directory's event log.
  Platform open_platform() const {
    fs::create_directories(data_dir);
    return Platform(platform_config(), EventLog::open(events_path()));
  }
};

void add_global_options(CLI::App& app, GlobalOptions& g) {
  const char* env = std::getenv("DRILLFORGE_DATA");
  g.data_dir = env != nullptr && *env != '\0' ? env : ".";
  app.add_option("--data", g.data_dir, "Data directory holding events.jsonl (env DRILLFORGE_DATA)")
      ->capture_default_str();
  app.add_option("--base-window", g.grading.base_window, "Shortest taper length")->capture_default_str();
  app.add_option("--max-window", g.grading.max_window, "Longest taper length")->capture_default_str();
  app.add_option("--error-growth", g.grading.error_growth, "Taper growth per recent error")->capture_default_str();
  app.add_option("--lookback", g.grading.lookback, "Answers scanned for recent errors")->capture_default_str();
  app.add_option("--per-set-ace", g.rewards.per_set_ace, "SMLY paid when a drill set is first aced")
      ->capture_default_str();
  app.add_option("--per-collection-ace", g.rewards.per_collection_ace, "SMLY paid when a collection is first aced")
      ->capture_default_str();
  app.add_option("--self-registered-multiplier", g.rewards.self_registered_multiplier,
                 "Reward fraction for self-registered accounts")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
}

void add_gen_options(CLI::App& cmd, GenConfig& cfg) {
  cmd.add_option("--lambda", cfg.lambda, "Mean of the truncated Poisson distractor count")->capture_default_str();
  cmd.add_option("--k-min", cfg.k_min, "Fewest distractors on a plain item")->capture_default_str();
  cmd.add_option("--k-max", cfg.k_max, "Most distractors on a plain item")->capture_default_str();
  cmd.add_option("--p-nota", cfg.p_nota, "Probability of a None-of-the-above item")->capture_default_str();
  cmd.add_option("--p-aota", cfg.p_aota, "Probability of an All-of-the-above item")->capture_default_str();
  cmd.add_option("--p-nota-correct", cfg.p_nota_correct, "Probability NOTA is the key")->capture_default_str();
  cmd.add_option("--p-aota-correct", cfg.p_aota_correct, "Probability AOTA is the key")->capture_default_str();
}

std::string describe(const DrillSet& set) {
  std::size_t nota = 0, aota = 0;
  for (const auto& item : set.items) {
    const OptionKind k = item.options.back().kind;
    nota += k == OptionKind::nota ? 1 : 0;
    aota += k == OptionKind::aota ? 1 : 0;
  }
  return set.id + ": " + std::to_string(set.items.size()) + " items, " + std::to_string(nota) + " NOTA, " +
         std::to_string(aota) + " AOTA";
}

Json grade_json(const Platform& p, const std::string& student, const std::string& set) {
  const AnswerHistory* h = p.history_of(student, set);
  Json j = to_json(p.grade_of(student, set));
  j["student"] = student;
  j["drillset"] = set;
  j["n_answers"] = h == nullptr ? 0 : h->size();
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drillforge: drill set authoring, simulation and operations"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; explicit flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GlobalOptions g;
  add_global_options(app, g);
  int exit_code = 0;

  // generate ---------------------------------------------------------------
  auto* generate = app.add_subcommand("generate", "Compile option pools into a drill set");
  std::string pools_path, header_path, gen_out, gen_id = "drillset", gen_title;
  GenConfig gen_cfg;
  gen_cfg.n_items = 300;
  generate->add_option("--pools", pools_path, "pools.json")->required();
  generate->add_option("--header", header_path, "Text file with the instruction shown above each item");
  generate->add_option("--n", gen_cfg.n_items, "Number of items (0: one per correct-pool entry)")->capture_default_str();
  generate->add_option("--seed", gen_cfg.seed, "Random seed")->capture_default_str();
  generate->add_option("--id", gen_id, "Drill set id")->capture_default_str();
  generate->add_option("--title", gen_title, "Drill set title (default: id)");
  generate->add_option("--out", gen_out, "Output file (default: stdout)");
  add_gen_options(*generate, gen_cfg);
  generate->callback([&] {
    const OptionPools pools = decode_pools(read_file(pools_path));
    const std::string header = header_path.empty() ? std::string() : read_text(header_path);
    const DrillSet set = generate_drill_set(pools, header, gen_cfg, gen_id, gen_title);
    write_or_print(gen_out, encode_drill_set(set));
    std::cerr << describe(set) << "\n";
  });

  // template ---------------------------------------------------------------
  auto* tmpl_cmd = app.add_subcommand("template", "Instantiate a parametric template into a drill set");
  std::string tmpl_in, tmpl_out;
  std::optional<std::size_t> tmpl_n;
  std::optional<std::uint64_t> tmpl_seed;
  tmpl_cmd->add_option("--in", tmpl_in, "template.json")->required();
  tmpl_cmd->add_option("--out", tmpl_out, "Output file (default: stdout)");
  tmpl_cmd->add_option("--n", tmpl_n, "Override n_items");
  tmpl_cmd->add_option("--seed", tmpl_seed, "Override seed");
  tmpl_cmd->callback([&] {
    Template t = decode_template(read_file(tmpl_in));
    if (tmpl_n) t.n_items = *tmpl_n;
    if (tmpl_seed) t.seed = *tmpl_seed;
    const DrillSet set = generate_from_template(t);
    write_or_print(tmpl_out, encode_drill_set(set));
    std::cerr << describe(set) << "\n";
  });

  // simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Run a synthetic cohort through the platform");
  CohortSpec spec;
  std::string sim_out, sim_events, policy = "until_ace";
  simulate->add_option("--students", spec.n_students, "Cohort size")->capture_default_str();
  simulate->add_option("--ability", spec.ability, "Per-answer probability of a correct pick")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--sets", spec.sets, "Drill sets in the collection")->capture_default_str();
  simulate->add_option("--policy", policy, "until_ace or fixed")
      ->capture_default_str()
      ->check(CLI::IsMember({"until_ace", "fixed"}));
  simulate->add_option("--answers-per-set", spec.answers_per_set, "Answers per set under the fixed policy");
  simulate->add_option("--max-answers-per-set", spec.max_answers_per_set, "Cap per set under until_ace")
      ->capture_default_str();
  simulate->add_option("--items-per-set", spec.items_per_set, "Items per synthetic drill set")->capture_default_str();
  simulate->add_option("--seed", spec.seed, "Master seed")->capture_default_str();
  simulate->add_option("--out", sim_out, "Report file (default: stdout)");
  simulate->add_option("--events", sim_events, "Also write the run's event log here");
  simulate->callback([&] {
    spec.policy = policy == "fixed" ? AnswerPolicy::fixed : AnswerPolicy::until_ace;
    EventLog log;
    const SimulationReport report = run_simulation(spec, g.grading, g.rewards, sim_events.empty() ? nullptr : &log);
    write_or_print(sim_out, to_json(report).dump(2) + "\n");
    if (!sim_events.empty()) write_file(sim_events, log.serialize());
    std::cerr << "students " << report.students.size() << ", attempts " << report.total_attempts << ", sets aced "
              << report.total_sets_aced << ", collections aced " << report.collections_aced << ", SMLY "
              << report.total_smly << "\n";
  });

  // grade ------------------------------------------------------------------
  auto* grade = app.add_subcommand("grade", "Replay an event log and report drill grades");
  std::string grade_log, grade_student, grade_set;
  grade->add_option("--log", grade_log, "Event log (default: <data>/events.jsonl)");
  grade->add_option("--student", grade_student, "Student account")->required();
  grade->add_option("--set", grade_set, "Drill set (default: every set the student answered)");
  grade->callback([&] {
    const fs::path path = grade_log.empty() ? g.events_path() : fs::path(grade_log);
    const Platform p(g.platform_config(), EventLog::parse(read_file(path)));
    if (!p.state().ledger.has_account(grade_student)) {
      throw Error(ErrorCode::not_found, "no account '" + grade_student + "' in " + path.string());
    }
    if (!grade_set.empty()) {
      p.state().drill_set(grade_set);
      std::cout << grade_json(p, grade_student, grade_set).dump() << "\n";
      return;
    }
    if (const StudentRecord* s = p.state().student(grade_student)) {
      for (const auto& [set, _] : s->histories) std::cout << grade_json(p, grade_student, set).dump() << "\n";
    }
  });

  // serve ------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "Run the HTTP API over the data directory");
  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  ServiceConfig service_cfg;
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--static", static_dir, "Directory served at / (web client build)")->check(CLI::ExistingDirectory);
  serve->add_option("--stats-ttl", service_cfg.stats_ttl, "Seconds a library stats entry stays fresh")
      ->capture_default_str();
  serve->add_option("--librarian-token", service_cfg.librarian_token,
                    "Token that may create pre-registered accounts (env DRILLFORGE_LIBRARIAN_TOKEN)")
      ->envname("DRILLFORGE_LIBRARIAN_TOKEN");
  serve->add_option("--seed", service_cfg.seed, "Seed for item selection")->capture_default_str();
  serve->callback([&] {
    if (service_cfg.librarian_token.empty()) {
      service_cfg.librarian_token = issue_token();
      std::cerr << "librarian token: " << service_cfg.librarian_token << "\n";
    }
    if (!static_dir.empty()) service_cfg.static_dir = static_dir;
    Service service(g.open_platform(), service_cfg);
    httplib::Server server;
    service.mount(server);
    std::cerr << "listening on http://" << host << ":" << port << " (data " << g.data_dir << ")\n";
    if (!server.listen(host, port)) throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
  });

  // ledger -----------------------------------------------------------------
  auto* ledger = app.add_subcommand("ledger", "Inspect and move SMLY");
  ledger->require_subcommand(1);

  auto* balance = ledger->add_subcommand("balance", "Print an account balance");
  std::string bal_account;
  balance->add_option("--account", bal_account, "Account id")->required();
  balance->callback([&] {
    const Platform p = g.open_platform();
    std::cout << p.state().ledger.balance(bal_account) << "\n";
  });

  auto* mint = ledger->add_subcommand("mint", "Credit newly minted SMLY to an account");
  std::string mint_to, mint_memo = "manual mint";
  Smly mint_amount = 0;
  mint->add_option("--to", mint_to, "Account id")->required();
  mint->add_option("--amount", mint_amount, "SMLY")->required();
  mint->add_option("--memo", mint_memo, "Memo")->capture_default_str();
  mint->callback([&] {
    Platform p = g.open_platform();
    const Transaction& tx = p.mint(mint_to, mint_amount, mint_memo, wall_clock());
    std::cout << codec::encode(tx).dump() << "\n";
  });

  auto* transfer = ledger->add_subcommand("transfer", "Move SMLY between accounts");
  std::string tr_from, tr_to, tr_memo = "transfer";
  Smly tr_amount = 0;
  transfer->add_option("--from", tr_from, "Source account")->required();
  transfer->add_option("--to", tr_to, "Destination account")->required();
  transfer->add_option("--amount", tr_amount, "SMLY")->required();
  transfer->add_option("--memo", tr_memo, "Memo")->capture_default_str();
  transfer->callback([&] {
    Platform p = g.open_platform();
    const Transaction& tx = p.transfer(tr_from, tr_to, tr_amount, tr_memo, wall_clock());
    std::cout << codec::encode(tx).dump() << "\n";
  });

  auto* open = ledger->add_subcommand("open", "Open an account and issue its bearer token");
  std::string open_id, open_kind = "pre_registered", open_library;
  open->add_option("--id", open_id, "Account id")->required();
  open->add_option("--kind", open_kind, "pre_registered, self_registered or charity")
      ->capture_default_str()
      ->check(CLI::IsMember({"pre_registered", "self_registered", "charity"}));
  open->add_option("--library", open_library, "Owning library (required for pre_registered)");
  open->callback([&] {
    Platform p = g.open_platform();
    const std::string token = issue_token();
    p.create_account(open_id, parse_account_kind(open_kind),
                     open_library.empty() ? std::nullopt : std::optional(open_library), token, wall_clock());
    std::cout << Json{{"account_id", open_id}, {"kind", open_kind}, {"token", token}}.dump() << "\n";
  });

  auto* log_cmd = ledger->add_subcommand("log", "Print all transactions as JSON Lines");
  log_cmd->callback([&] {
    const Platform p = g.open_platform();
    std::cout << encode_transactions(p.state().ledger.transactions());
  });

  // admin ------------------------------------------------------------------
  auto* admin = app.add_subcommand("admin", "Libraries, tablets, drill sets, collections and exports");
  admin->require_subcommand(1);

  auto* library = admin->add_subcommand("library", "Register a library and its tablet stock");
  std::string lib_id;
  std::size_t lib_tablets = 10;
  library->add_option("--id", lib_id, "Library id")->required();
  library->add_option("--tablets", lib_tablets, "Tablets in stock")->capture_default_str();
  library->callback([&] {
    Platform p = g.open_platform();
    p.create_library(lib_id, lib_tablets, wall_clock());
    std::cout << "library " << lib_id << " with " << lib_tablets << " tablets, escrow " << escrow_account_id(lib_id)
              << "\n";
  });

  auto* tablet = admin->add_subcommand("tablet", "Register a tablet for sale and print its payment payload");
  Tablet new_tablet{"", "", "", kDefaultTabletPrice, TabletStatus::lent};
  tablet->add_option("--id", new_tablet.id, "Tablet id")->required();
  tablet->add_option("--library", new_tablet.library_id, "Library id")->required();
  tablet->add_option("--price", new_tablet.price, "Price in SMLY")->capture_default_str();
  tablet->add_option("--address", new_tablet.payment_address, "Payment address (default ADDR-<id>)");
  tablet->callback([&] {
    Platform p = g.open_platform();
    p.register_tablet(new_tablet, wall_clock());
    std::cout << payment_payload(p.state().tablets.tablet(new_tablet.id)) << "\n";
  });

  auto* upload = admin->add_subcommand("upload", "Add a drill set document to the platform");
  std::string upload_file;
  upload->add_option("--file", upload_file, "drill set JSON")->required();
  upload->callback([&] {
    Platform p = g.open_platform();
    const DrillSet set = decode_drill_set(read_file(upload_file));
    p.upload_drill_set(set, wall_clock());
    std::cout << describe(set) << "\n";
  });

  auto* collection = admin->add_subcommand("collection", "Group drill sets into a collection");
  std::string coll_id;
  std::vector<std::string> coll_sets;
  collection->add_option("--id", coll_id, "Collection id")->required();
  collection->add_option("--sets", coll_sets, "Drill set ids")->required()->delimiter(',');
  collection->callback([&] {
    Platform p = g.open_platform();
    p.define_collection(coll_id, coll_sets, wall_clock());
    std::cout << "collection " << coll_id << " with " << coll_sets.size() << " drill sets\n";
  });

  auto* export_cmd = admin->add_subcommand("export", "Anonymized answer export (fresh salt per export)");
  std::string export_out;
  export_cmd->add_option("--out", export_out, "Output file (default: stdout)");
  export_cmd->callback([&] {
    const Platform p = g.open_platform();
    write_or_print(export_out, anonymized_export(p.log()));
  });

  auto* stats_cmd = admin->add_subcommand("stats", "Per-library aggregates as served by the API");
  stats_cmd->callback([&] {
    const Platform p = g.open_platform();
    Json out = Json::array();
    for (const auto& [id, _] : p.state().tablets.inventories) {
      out.push_back(to_json(compute_library_stats(p.state(), id, wall_clock())));
    }
    std::cout << out.dump(2) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    exit_code = e.code() == ErrorCode::io || e.code() == ErrorCode::corrupt_log ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io_error): " << e.what() << "\n";
    exit_code = kExitIo;
  }
  return exit_code;
}
